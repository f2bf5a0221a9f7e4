#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "desta/chat.hpp"
#include "desta/metadata.hpp"

namespace desta {

enum class EvalCategory { kCon, kSem, kPar, kDeg, kSpk, kChat };
enum class EvalProtocol { kJudgedAccuracy, kJudgedAgreement };

const char* eval_category_name(EvalCategory c);
std::optional<EvalCategory> eval_category_from_name(std::string_view name);

struct EvalInstance {
  std::string id;
  std::string instruction;
  std::string reference;
  std::string audio_ref;  // record id for cascade responders; optional
};

struct EvalTask {
  std::string task_id;
  EvalCategory category = EvalCategory::kCon;
  EvalProtocol protocol = EvalProtocol::kJudgedAccuracy;
  std::vector<EvalInstance> instances;

  void validate() const;  // non-empty instances; Chat <=> agreement
};

std::vector<EvalTask> load_tasks(const std::string& path);
void save_tasks(const std::vector<EvalTask>& tasks, const std::string& path);

struct CollectedResponse {
  std::string instance_id;
  std::string text;
  bool answered = true;  // responder failures count as incorrect / score 1
};

using Responder = std::function<std::string(const EvalInstance&)>;

// One response per instance, order preserved; responder exceptions mark the
// instance unanswered instead of aborting the task.
std::vector<CollectedResponse> collect_responses(const EvalTask& task,
                                                 const Responder& responder);

struct JudgeVerdict {
  std::string task_id;
  std::string instance_id;
  EvalProtocol protocol = EvalProtocol::kJudgedAccuracy;
  bool correct = false;  // accuracy protocol
  int score = 1;         // agreement protocol, 1..10
  std::string raw;       // judge text, persisted verbatim
};

// Verdict parsing used by the LLM judge; exposed for tests.
std::optional<bool> parse_accuracy_verdict(const std::string& reply);
std::optional<int> parse_agreement_verdict(const std::string& reply);

// Any completion backend (chat client, scripted responses in tests).
using JudgeCompleter =
    std::function<std::string(const std::vector<ChatMessage>&)>;

class Judge {
 public:
  virtual ~Judge() = default;
  virtual JudgeVerdict judge_one(const EvalInstance& instance,
                                 const CollectedResponse& response,
                                 EvalProtocol protocol) = 0;
};

// Deterministic judge for the bundled mini-benchmark: accuracy is a
// normalized containment check on the reference; agreement maps word
// overlap onto 1..10.
class RuleBasedJudge : public Judge {
 public:
  JudgeVerdict judge_one(const EvalInstance& instance,
                         const CollectedResponse& response,
                         EvalProtocol protocol) override;
};

// Prompts an LLM for the verdict: yes/no for accuracy, an integer 1..10 for
// agreement. Unparseable replies get one reprompt, then fall back to
// incorrect / score 1. Prompt texts are versioned assets whose digest lands
// in the report.
class LlmJudge : public Judge {
 public:
  explicit LlmJudge(JudgeCompleter completer);

  JudgeVerdict judge_one(const EvalInstance& instance,
                         const CollectedResponse& response,
                         EvalProtocol protocol) override;

  static std::string prompt_digest();

 private:
  JudgeCompleter completer_;
};

// Verdicts in instance order. Up to `parallelism` judge calls run at once
// (the backend must be thread-safe for parallelism > 1; both built-in
// judges are when their completer is).
std::vector<JudgeVerdict> judge(const EvalTask& task,
                                const std::vector<CollectedResponse>& responses,
                                Judge& judge_backend, int parallelism = 1);

void save_verdicts(const std::vector<JudgeVerdict>& verdicts,
                   const std::string& path);
std::vector<JudgeVerdict> load_verdicts(const std::string& path);

struct TaskScore {
  std::string task_id;
  EvalCategory category = EvalCategory::kCon;
  EvalProtocol protocol = EvalProtocol::kJudgedAccuracy;
  double score = 0.0;  // accuracy percent, or mean agreement
  size_t n_instances = 0;
};

struct EvalReport {
  std::vector<TaskScore> tasks;
  std::map<std::string, double> category_means;  // accuracy categories only
  double all = 0.0;              // unweighted mean over accuracy TASKS
  std::optional<double> chat;    // mean agreement, when present
  std::string judge_name;
  std::string prompt_digest;
};

// Task accuracy = 100 * correct / instances; category = unweighted mean of
// its tasks; ALL averages over tasks, not categories (the two disagree as
// soon as category sizes differ). Chat tasks aggregate separately as mean
// agreement.
EvalReport aggregate(const std::vector<EvalTask>& tasks,
                     const std::vector<JudgeVerdict>& verdicts);

std::string report_table(const EvalReport& report);
std::string report_json(const EvalReport& report);

enum class CascadeVariant { kTranscriptOnly, kSeedTranscript };

// Text-only baseline responder: transcript (or full seed transcript) plus
// the instruction goes to a text LLM. Instances resolve records through
// their audio_ref.
Responder make_cascade_responder(const Manifest& manifest,
                                 CascadeVariant variant,
                                 JudgeCompleter completer,
                                 const SeedOptions& seed_options = {});

// Bundled synthetic suite: 5 categories x 2 tasks x 10 instances with known
// answers, deterministic, no network anywhere.
std::vector<EvalTask> make_mini_benchmark();
// One agreement-protocol chat task for the 1..10 path.
EvalTask make_mini_chat_task();

}  // namespace desta
