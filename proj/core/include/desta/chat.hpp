#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "desta/seed_transcript.hpp"

namespace desta {

enum class Role { kSystem, kUser, kAssistant };

const char* role_name(Role role);
std::optional<Role> role_from_name(std::string_view name);

struct ChatMessage {
  Role role = Role::kUser;
  std::string content;
};

struct SamplingConfig {
  double temperature = 1.0;
  double top_p = 1.0;
  int max_tokens = 512;
  std::optional<int64_t> seed;

  // temperature >= 0, 0 < top_p <= 1, max_tokens >= 1
  void validate() const;
};

// The single fixed prompt used for descriptive construction.
inline constexpr const char* kDescriptivePrompt =
    "What can you hear from the audio?";

// Target construction modes. descriptive uses the fixed prompt with no
// system message; open_qa asks for k question-answer pairs; seed_copy uses
// the seed transcript itself as the target with no request at all;
// desta_caption is the captioning baseline driven by an external system
// prompt.
struct GenerationMode {
  enum class Kind { kDescriptive, kOpenQa, kSeedCopy, kDestaCaption };

  Kind kind = Kind::kDescriptive;
  int open_qa_k = 1;  // >= 1

  static GenerationMode descriptive() { return {Kind::kDescriptive, 1}; }
  static GenerationMode open_qa(int k);
  static GenerationMode seed_copy() { return {Kind::kSeedCopy, 1}; }
  static GenerationMode desta_caption() { return {Kind::kDestaCaption, 1}; }

  // "descriptive", "open_qa:3", "seed_copy", "desta_caption"
  std::string tag() const;
  static GenerationMode parse(const std::string& tag);
};

struct PromptConfig {
  // {seed} and {prompt} placeholders are mandatory for modes that render.
  std::string template_text = "{seed}\n\n{prompt}";
  // The captioning baseline's system prompt is configuration, not a constant.
  std::string desta_caption_system_prompt =
      "You are a helpful assistant that writes a concise natural-language "
      "caption describing the audio represented by the given transcript.";
};

// Fills {seed} and {prompt}; throws when a placeholder is missing.
std::string apply_prompt_template(const std::string& template_text,
                                  const std::string& seed_text,
                                  const std::string& prompt_text);

// Builds the request messages for a mode. seed_copy renders to an empty
// message list since no request is made.
std::vector<ChatMessage> render_context(const SeedTranscript& seed,
                                        const GenerationMode& mode,
                                        const PromptConfig& prompts = {});

// One training example: chat-formatted input context plus generated target.
struct TrainingPair {
  std::string record_id;
  std::string mode;  // GenerationMode tag
  int caption_index = 0;
  std::vector<ChatMessage> context;
  std::string target;
};

std::string training_pair_to_json_line(const TrainingPair& pair);
TrainingPair training_pair_from_json_line(const std::string& line);
std::vector<TrainingPair> load_training_pairs(const std::string& path);
void save_training_pairs(const std::vector<TrainingPair>& pairs,
                         const std::string& path);

struct ChatRequest {
  std::string model;
  std::vector<ChatMessage> messages;
  SamplingConfig sampling;
};

// Wire body: {model, messages[{role,content}], temperature, top_p,
// max_tokens, seed?}.
std::string chat_request_body(const ChatRequest& request);

// First choice's message content. Throws ValidationError on junk bodies.
std::string parse_chat_response_content(const std::string& body);

// Content-addressed key over (model, messages, sampling, caption_index);
// 64 hex digits, stable across runs.
std::string cache_key(const ChatRequest& request, int caption_index);

// "Q:"/"A:" blocks from an open_qa completion, in order. Malformed blocks
// are dropped, never repaired.
std::vector<std::pair<std::string, std::string>> split_qa_blocks(
    const std::string& completion);

}  // namespace desta
