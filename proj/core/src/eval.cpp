#include "desta/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "desta/error.hpp"
#include "desta/seed_transcript.hpp"
#include "desta/sha256.hpp"

namespace desta {

using nlohmann::json;

namespace {

constexpr const char* kCategoryNames[] = {"CON", "SEM", "PAR",
                                          "DEG", "SPK", "Chat"};

std::string lower(std::string s) {
  for (char& c : s) c = char(std::tolower((unsigned char)c));
  return s;
}

std::vector<std::string> lower_words(const std::string& s) {
  std::vector<std::string> out;
  std::string w;
  for (char c : s) {
    if (std::isalnum((unsigned char)c)) {
      w += char(std::tolower((unsigned char)c));
    } else if (!w.empty()) {
      out.push_back(w);
      w.clear();
    }
  }
  if (!w.empty()) out.push_back(w);
  return out;
}

}  // namespace

const char* eval_category_name(EvalCategory c) { return kCategoryNames[int(c)]; }

std::optional<EvalCategory> eval_category_from_name(std::string_view name) {
  for (int i = 0; i < 6; ++i) {
    if (name == kCategoryNames[i]) return EvalCategory(i);
  }
  return std::nullopt;
}

void EvalTask::validate() const {
  if (instances.empty())
    throw ValidationError("task " + task_id + " has no instances");
  bool is_chat = category == EvalCategory::kChat;
  bool is_agreement = protocol == EvalProtocol::kJudgedAgreement;
  if (is_chat != is_agreement)
    throw ValidationError("task " + task_id +
                          ": Chat category and agreement protocol go together");
}

std::vector<EvalTask> load_tasks(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open task file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("bad task file: ") + e.what());
  }
  std::vector<EvalTask> tasks;
  for (const auto& tj : j.at("tasks")) {
    EvalTask t;
    t.task_id = tj.at("task_id").get<std::string>();
    auto cat = eval_category_from_name(tj.at("category").get<std::string>());
    if (!cat) throw ValidationError("unknown category in task " + t.task_id);
    t.category = *cat;
    std::string proto = tj.at("protocol").get<std::string>();
    if (proto == "judged_accuracy")
      t.protocol = EvalProtocol::kJudgedAccuracy;
    else if (proto == "judged_agreement")
      t.protocol = EvalProtocol::kJudgedAgreement;
    else
      throw ValidationError("unknown protocol in task " + t.task_id);
    for (const auto& ij : tj.at("instances")) {
      EvalInstance inst;
      inst.id = ij.at("id").get<std::string>();
      inst.instruction = ij.at("instruction").get<std::string>();
      inst.reference = ij.at("reference").get<std::string>();
      inst.audio_ref = ij.value("audio_ref", std::string());
      t.instances.push_back(std::move(inst));
    }
    t.validate();
    tasks.push_back(std::move(t));
  }
  return tasks;
}

void save_tasks(const std::vector<EvalTask>& tasks, const std::string& path) {
  json out;
  out["tasks"] = json::array();
  for (const auto& t : tasks) {
    json tj;
    tj["task_id"] = t.task_id;
    tj["category"] = eval_category_name(t.category);
    tj["protocol"] = t.protocol == EvalProtocol::kJudgedAccuracy
                         ? "judged_accuracy"
                         : "judged_agreement";
    tj["instances"] = json::array();
    for (const auto& i : t.instances) {
      json ij{{"id", i.id},
              {"instruction", i.instruction},
              {"reference", i.reference}};
      if (!i.audio_ref.empty()) ij["audio_ref"] = i.audio_ref;
      tj["instances"].push_back(std::move(ij));
    }
    out["tasks"].push_back(std::move(tj));
  }
  std::ofstream f(path);
  if (!f) throw ValidationError("cannot write task file: " + path);
  f << out.dump(2) << "\n";
}

std::vector<CollectedResponse> collect_responses(const EvalTask& task,
                                                 const Responder& responder) {
  task.validate();
  std::vector<CollectedResponse> out;
  out.reserve(task.instances.size());
  for (const auto& inst : task.instances) {
    CollectedResponse r;
    r.instance_id = inst.id;
    try {
      r.text = responder(inst);
    } catch (const std::exception&) {
      r.answered = false;
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::optional<bool> parse_accuracy_verdict(const std::string& reply) {
  std::string l = lower(reply);
  if (l.find("incorrect") != std::string::npos) return false;
  if (l.find("correct") != std::string::npos) return true;
  auto words = lower_words(reply);
  for (const auto& w : words) {
    if (w == "yes") return true;
    if (w == "no" || w == "wrong") return false;
  }
  return std::nullopt;
}

std::optional<int> parse_agreement_verdict(const std::string& reply) {
  // first integer in [1, 10]; "Score: 7" and bare "7" both qualify
  for (size_t i = 0; i < reply.size(); ++i) {
    if (!std::isdigit((unsigned char)reply[i])) continue;
    size_t j = i;
    while (j < reply.size() && std::isdigit((unsigned char)reply[j])) ++j;
    int value = std::stoi(reply.substr(i, j - i));
    if (value >= 1 && value <= 10) return value;
    i = j;
  }
  return std::nullopt;
}

JudgeVerdict RuleBasedJudge::judge_one(const EvalInstance& instance,
                                       const CollectedResponse& response,
                                       EvalProtocol protocol) {
  JudgeVerdict v;
  v.instance_id = instance.id;
  v.protocol = protocol;
  if (!response.answered) {
    v.raw = "unanswered";
    return v;
  }
  if (protocol == EvalProtocol::kJudgedAccuracy) {
    bool hit =
        lower(response.text).find(lower(instance.reference)) != std::string::npos;
    v.correct = hit;
    v.raw = hit ? "CORRECT (rule: reference contained)"
                : "INCORRECT (rule: reference missing)";
  } else {
    auto ref = lower_words(instance.reference);
    auto got = lower_words(response.text);
    std::set<std::string> ref_set(ref.begin(), ref.end());
    std::set<std::string> got_set(got.begin(), got.end());
    size_t inter = 0;
    for (const auto& w : ref_set) inter += got_set.count(w);
    size_t uni = ref_set.size() + got_set.size() - inter;
    double jaccard = uni == 0 ? 0.0 : double(inter) / double(uni);
    v.score = 1 + int(std::lround(9.0 * jaccard));
    v.raw = "Score: " + std::to_string(v.score) + " (rule: overlap)";
  }
  return v;
}

namespace {

// versioned judge prompts; the digest of both goes into every report
constexpr const char* kAccuracyJudgePrompt =
    "You are grading a model answer against a reference.\n"
    "Instruction: {instruction}\n"
    "Reference answer: {reference}\n"
    "Model answer: {response}\n"
    "Reply with exactly one word: CORRECT or INCORRECT.";

constexpr const char* kAgreementJudgePrompt =
    "Rate the agreement between the reference and the model answer on a "
    "scale of 1 to 10.\n"
    "Instruction: {instruction}\n"
    "Reference answer: {reference}\n"
    "Model answer: {response}\n"
    "Reply in the form \"Score: <1-10>\".";

std::string fill(std::string text, const std::string& key,
                 const std::string& value) {
  size_t pos = text.find(key);
  if (pos != std::string::npos) text.replace(pos, key.size(), value);
  return text;
}

std::string judge_prompt(const EvalInstance& instance,
                         const CollectedResponse& response,
                         EvalProtocol protocol) {
  std::string p = protocol == EvalProtocol::kJudgedAccuracy
                      ? kAccuracyJudgePrompt
                      : kAgreementJudgePrompt;
  p = fill(p, "{instruction}", instance.instruction);
  p = fill(p, "{reference}", instance.reference);
  p = fill(p, "{response}", response.text);
  return p;
}

}  // namespace

LlmJudge::LlmJudge(JudgeCompleter completer) : completer_(std::move(completer)) {}

std::string LlmJudge::prompt_digest() {
  return sha256_hex(std::string(kAccuracyJudgePrompt) + "\n---\n" +
                    kAgreementJudgePrompt);
}

JudgeVerdict LlmJudge::judge_one(const EvalInstance& instance,
                                 const CollectedResponse& response,
                                 EvalProtocol protocol) {
  JudgeVerdict v;
  v.instance_id = instance.id;
  v.protocol = protocol;
  if (!response.answered) {
    v.raw = "unanswered";
    return v;
  }

  std::string prompt = judge_prompt(instance, response, protocol);
  for (int attempt = 0; attempt < 2; ++attempt) {
    std::string reply = completer_({{Role::kUser, prompt}});
    v.raw = attempt == 0 ? reply : v.raw + "\n--- reprompt ---\n" + reply;
    if (protocol == EvalProtocol::kJudgedAccuracy) {
      if (auto parsed = parse_accuracy_verdict(reply)) {
        v.correct = *parsed;
        return v;
      }
    } else {
      if (auto parsed = parse_agreement_verdict(reply)) {
        v.score = *parsed;
        return v;
      }
    }
  }
  // two unparseable replies: incorrect / score 1
  v.correct = false;
  v.score = 1;
  return v;
}

std::vector<JudgeVerdict> judge(const EvalTask& task,
                                const std::vector<CollectedResponse>& responses,
                                Judge& judge_backend, int parallelism) {
  if (responses.size() != task.instances.size())
    throw ValidationError("responses not aligned with task instances");
  std::vector<JudgeVerdict> verdicts(responses.size());

  auto judge_one = [&](size_t i) {
    JudgeVerdict v =
        judge_backend.judge_one(task.instances[i], responses[i], task.protocol);
    v.task_id = task.task_id;
    verdicts[i] = std::move(v);
  };

  int workers = std::max(1, std::min<int>(parallelism, int(responses.size())));
  if (workers == 1) {
    for (size_t i = 0; i < responses.size(); ++i) judge_one(i);
  } else {
    std::atomic<size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(size_t(workers));
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&]() {
        for (;;) {
          size_t i = next.fetch_add(1);
          if (i >= responses.size()) return;
          judge_one(i);
        }
      });
    }
    for (auto& t : pool) t.join();
  }
  return verdicts;
}

void save_verdicts(const std::vector<JudgeVerdict>& verdicts,
                   const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write verdicts: " + path);
  for (const auto& v : verdicts) {
    json j;
    j["task_id"] = v.task_id;
    j["instance_id"] = v.instance_id;
    j["protocol"] = v.protocol == EvalProtocol::kJudgedAccuracy
                        ? "judged_accuracy"
                        : "judged_agreement";
    if (v.protocol == EvalProtocol::kJudgedAccuracy)
      j["correct"] = v.correct;
    else
      j["score"] = v.score;
    j["raw"] = v.raw;
    out << j.dump() << "\n";
  }
}

std::vector<JudgeVerdict> load_verdicts(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open verdicts: " + path);
  std::vector<JudgeVerdict> verdicts;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) throw ValidationError("bad verdict line: " + line);
    JudgeVerdict v;
    v.task_id = j.at("task_id").get<std::string>();
    v.instance_id = j.at("instance_id").get<std::string>();
    v.protocol = j.at("protocol").get<std::string>() == "judged_accuracy"
                     ? EvalProtocol::kJudgedAccuracy
                     : EvalProtocol::kJudgedAgreement;
    if (v.protocol == EvalProtocol::kJudgedAccuracy)
      v.correct = j.at("correct").get<bool>();
    else
      v.score = j.at("score").get<int>();
    v.raw = j.value("raw", std::string());
    verdicts.push_back(std::move(v));
  }
  return verdicts;
}

EvalReport aggregate(const std::vector<EvalTask>& tasks,
                     const std::vector<JudgeVerdict>& verdicts) {
  std::map<std::string, std::vector<const JudgeVerdict*>> by_task;
  for (const auto& v : verdicts) by_task[v.task_id].push_back(&v);

  EvalReport report;
  std::map<std::string, std::vector<double>> category_scores;
  std::vector<double> accuracy_scores;
  std::vector<double> chat_scores;

  for (const auto& task : tasks) {
    auto it = by_task.find(task.task_id);
    if (it == by_task.end() || it->second.empty())
      throw ValidationError("no verdicts for task " + task.task_id);
    const auto& vs = it->second;

    TaskScore score;
    score.task_id = task.task_id;
    score.category = task.category;
    score.protocol = task.protocol;
    score.n_instances = vs.size();
    if (task.protocol == EvalProtocol::kJudgedAccuracy) {
      size_t correct = 0;
      for (const auto* v : vs) correct += v->correct ? 1 : 0;
      score.score = 100.0 * double(correct) / double(vs.size());
      accuracy_scores.push_back(score.score);
      category_scores[eval_category_name(task.category)].push_back(score.score);
    } else {
      double sum = 0.0;
      for (const auto* v : vs) sum += v->score;
      score.score = sum / double(vs.size());
      chat_scores.push_back(score.score);
    }
    report.tasks.push_back(std::move(score));
  }

  for (const auto& [cat, scores] : category_scores) {
    double sum = 0.0;
    for (double s : scores) sum += s;
    report.category_means[cat] = sum / double(scores.size());
  }
  if (!accuracy_scores.empty()) {
    double sum = 0.0;
    for (double s : accuracy_scores) sum += s;
    report.all = sum / double(accuracy_scores.size());
  }
  if (!chat_scores.empty()) {
    double sum = 0.0;
    for (double s : chat_scores) sum += s;
    report.chat = sum / double(chat_scores.size());
  }
  return report;
}

std::string report_table(const EvalReport& report) {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof(line), "%-28s %8s %8s %8s %8s %8s %8s\n", "", "CON",
                "SEM", "PAR", "DEG", "SPK", "ALL");
  out += line;
  auto cat = [&](const char* name) {
    auto it = report.category_means.find(name);
    return it == report.category_means.end() ? std::string("-")
                                             : [&] {
                                                 char b[32];
                                                 std::snprintf(b, sizeof(b),
                                                               "%.2f", it->second);
                                                 return std::string(b);
                                               }();
  };
  std::snprintf(line, sizeof(line), "%-28s %8s %8s %8s %8s %8s %8.2f\n",
                "accuracy", cat("CON").c_str(), cat("SEM").c_str(),
                cat("PAR").c_str(), cat("DEG").c_str(), cat("SPK").c_str(),
                report.all);
  out += line;
  if (report.chat) {
    std::snprintf(line, sizeof(line), "%-28s %8.2f\n", "chat agreement",
                  *report.chat);
    out += line;
  }
  return out;
}

std::string report_json(const EvalReport& report) {
  json j;
  j["tasks"] = json::array();
  for (const auto& t : report.tasks) {
    j["tasks"].push_back({{"task_id", t.task_id},
                          {"category", eval_category_name(t.category)},
                          {"protocol", t.protocol == EvalProtocol::kJudgedAccuracy
                                           ? "judged_accuracy"
                                           : "judged_agreement"},
                          {"score", t.score},
                          {"n_instances", t.n_instances}});
  }
  j["category_means"] = report.category_means;
  j["all"] = report.all;
  if (report.chat) j["chat"] = *report.chat;
  j["judge"] = report.judge_name;
  j["prompt_digest"] = report.prompt_digest;
  return j.dump(2);
}

Responder make_cascade_responder(const Manifest& manifest,
                                 CascadeVariant variant,
                                 JudgeCompleter completer,
                                 const SeedOptions& seed_options) {
  // the index borrows the manifest, which must outlive the responder
  auto index = std::make_shared<RecordIndex>(manifest);
  return [index, variant, completer,
          seed_options](const EvalInstance& instance) -> std::string {
    const UtteranceRecord& record = index->at(instance.audio_ref);
    std::string context;
    if (variant == CascadeVariant::kTranscriptOnly) {
      auto it = record.attributes.find(AttributeKey::kSpokenText);
      if (it != record.attributes.end()) {
        context = it->second;
      } else {
        for (const auto& seg : record.segments) {
          if (!context.empty()) context += " ";
          context += seg.text;
        }
      }
    } else {
      context = build_seed_transcript(record, seed_options).text;
    }
    return completer({{Role::kUser, context + "\n\n" + instance.instruction}});
  };
}

namespace {

struct MiniSpec {
  EvalCategory category;
  const char* suffix;
  const char* question;
  std::vector<const char*> answers;  // cycled over 10 instances
};

}  // namespace

std::vector<EvalTask> make_mini_benchmark() {
  const std::vector<MiniSpec> specs = {
      {EvalCategory::kCon, "keyword", "Does the utterance mention the keyword?",
       {"yes", "no"}},
      {EvalCategory::kCon, "language", "Which language is spoken?",
       {"english", "german", "french"}},
      {EvalCategory::kSem, "intent", "What is the speaker's intent?",
       {"question", "statement", "command"}},
      {EvalCategory::kSem, "topic", "What is the main topic?",
       {"weather", "travel", "food", "music"}},
      {EvalCategory::kPar, "emotion", "What is the emotion of the speaker?",
       {"happy", "sad", "angry", "neutral"}},
      {EvalCategory::kPar, "gender", "What is the speaker's gender?",
       {"female", "male"}},
      {EvalCategory::kDeg, "noise", "Is the recording noisy or clean?",
       {"noisy", "clean"}},
      {EvalCategory::kDeg, "reverb", "Is there reverberation?",
       {"yes", "no"}},
      {EvalCategory::kSpk, "age", "Is the speaker young or old?",
       {"young", "old"}},
      {EvalCategory::kSpk, "count", "How many speakers are there?",
       {"one", "two", "three"}},
  };

  std::vector<EvalTask> tasks;
  for (const auto& spec : specs) {
    EvalTask t;
    t.task_id = std::string(eval_category_name(spec.category)) + "_" + spec.suffix;
    for (char& c : t.task_id) c = char(std::tolower((unsigned char)c));
    t.category = spec.category;
    t.protocol = EvalProtocol::kJudgedAccuracy;
    for (int i = 0; i < 10; ++i) {
      EvalInstance inst;
      inst.id = t.task_id + "_" + std::to_string(i);
      inst.reference = spec.answers[size_t(i) % spec.answers.size()];
      inst.instruction = std::string("(sample ") + std::to_string(i) + ") " +
                         spec.question + " The correct answer is \"" +
                         inst.reference + "\".";
      t.instances.push_back(std::move(inst));
    }
    tasks.push_back(std::move(t));
  }
  return tasks;
}

EvalTask make_mini_chat_task() {
  EvalTask t;
  t.task_id = "chat_description";
  t.category = EvalCategory::kChat;
  t.protocol = EvalProtocol::kJudgedAgreement;
  const char* refs[] = {
      "a woman speaks happily about the weather",
      "a man reads the news in a quiet room",
      "a child asks a question with background noise",
      "an old man tells a story slowly",
      "a woman gives directions in a reverberant hall",
  };
  for (int i = 0; i < 5; ++i) {
    EvalInstance inst;
    inst.id = "chat_" + std::to_string(i);
    inst.instruction = "Describe what you hear in the audio.";
    inst.reference = refs[i];
    t.instances.push_back(std::move(inst));
  }
  return t;
}

}  // namespace desta
