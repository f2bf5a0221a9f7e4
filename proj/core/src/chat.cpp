#include "desta/chat.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "desta/error.hpp"
#include "desta/sha256.hpp"

namespace desta {

using nlohmann::json;

const char* role_name(Role role) {
  switch (role) {
    case Role::kSystem: return "system";
    case Role::kUser: return "user";
    case Role::kAssistant: return "assistant";
  }
  return "user";
}

std::optional<Role> role_from_name(std::string_view name) {
  if (name == "system") return Role::kSystem;
  if (name == "user") return Role::kUser;
  if (name == "assistant") return Role::kAssistant;
  return std::nullopt;
}

void SamplingConfig::validate() const {
  if (temperature < 0)
    throw ValidationError("sampling temperature must be >= 0");
  if (top_p <= 0 || top_p > 1)
    throw ValidationError("sampling top_p must be in (0, 1]");
  if (max_tokens < 1) throw ValidationError("max_tokens must be >= 1");
}

GenerationMode GenerationMode::open_qa(int k) {
  if (k < 1) throw ValidationError("open_qa requires k >= 1");
  return {Kind::kOpenQa, k};
}

std::string GenerationMode::tag() const {
  switch (kind) {
    case Kind::kDescriptive: return "descriptive";
    case Kind::kOpenQa: return "open_qa:" + std::to_string(open_qa_k);
    case Kind::kSeedCopy: return "seed_copy";
    case Kind::kDestaCaption: return "desta_caption";
  }
  return "descriptive";
}

GenerationMode GenerationMode::parse(const std::string& tag) {
  if (tag == "descriptive") return descriptive();
  if (tag == "seed_copy") return seed_copy();
  if (tag == "desta_caption") return desta_caption();
  if (tag.rfind("open_qa", 0) == 0) {
    int k = 1;
    if (tag.size() > 8 && tag[7] == ':') {
      try {
        k = std::stoi(tag.substr(8));
      } catch (const std::exception&) {
        throw ValidationError("bad open_qa mode tag: " + tag);
      }
    }
    return open_qa(k);
  }
  throw ValidationError("unknown generation mode: " + tag);
}

std::string apply_prompt_template(const std::string& template_text,
                                  const std::string& seed_text,
                                  const std::string& prompt_text) {
  auto replace_one = [](std::string s, const std::string& from,
                        const std::string& to) {
    size_t pos = s.find(from);
    if (pos == std::string::npos)
      throw ValidationError("prompt template is missing placeholder " + from);
    return s.replace(pos, from.size(), to);
  };
  return replace_one(replace_one(template_text, "{seed}", seed_text), "{prompt}",
                     prompt_text);
}

namespace {

std::string open_qa_instruction(int k) {
  std::ostringstream out;
  out << "Based on the audio described above, write exactly " << k
      << " open-ended question-answer pair" << (k == 1 ? "" : "s")
      << " about what can be heard. Format each pair as:\nQ: <question>\nA: "
         "<answer>";
  return out.str();
}

}  // namespace

std::vector<ChatMessage> render_context(const SeedTranscript& seed,
                                        const GenerationMode& mode,
                                        const PromptConfig& prompts) {
  switch (mode.kind) {
    case GenerationMode::Kind::kSeedCopy:
      return {};
    case GenerationMode::Kind::kDescriptive:
      return {{Role::kUser, apply_prompt_template(prompts.template_text,
                                                  seed.text, kDescriptivePrompt)}};
    case GenerationMode::Kind::kOpenQa:
      return {{Role::kUser,
               apply_prompt_template(prompts.template_text, seed.text,
                                     open_qa_instruction(mode.open_qa_k))}};
    case GenerationMode::Kind::kDestaCaption:
      return {{Role::kSystem, prompts.desta_caption_system_prompt},
              {Role::kUser, seed.text}};
  }
  return {};
}

namespace {

json messages_to_json(const std::vector<ChatMessage>& messages) {
  json arr = json::array();
  for (const auto& m : messages)
    arr.push_back({{"role", role_name(m.role)}, {"content", m.content}});
  return arr;
}

std::vector<ChatMessage> messages_from_json(const json& arr) {
  std::vector<ChatMessage> messages;
  for (const auto& m : arr) {
    auto role = role_from_name(m.at("role").get<std::string>());
    if (!role) throw ValidationError("unknown chat role in message");
    messages.push_back({*role, m.at("content").get<std::string>()});
  }
  return messages;
}

}  // namespace

std::string training_pair_to_json_line(const TrainingPair& pair) {
  json j;
  j["record_id"] = pair.record_id;
  j["mode"] = pair.mode;
  j["caption_index"] = pair.caption_index;
  j["context"] = messages_to_json(pair.context);
  j["target"] = pair.target;
  return j.dump();
}

TrainingPair training_pair_from_json_line(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
    TrainingPair p;
    p.record_id = j.at("record_id").get<std::string>();
    p.mode = j.at("mode").get<std::string>();
    p.caption_index = j.at("caption_index").get<int>();
    p.context = messages_from_json(j.at("context"));
    p.target = j.at("target").get<std::string>();
    if (p.target.empty()) throw ValidationError("training pair with empty target");
    return p;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("bad training pair line: ") + e.what());
  }
}

std::vector<TrainingPair> load_training_pairs(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open training pairs: " + path);
  std::vector<TrainingPair> pairs;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      pairs.push_back(training_pair_from_json_line(line));
    } catch (const ValidationError& e) {
      throw ValidationError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return pairs;
}

void save_training_pairs(const std::vector<TrainingPair>& pairs,
                         const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write training pairs: " + path);
  for (const auto& p : pairs) out << training_pair_to_json_line(p) << "\n";
}

std::string chat_request_body(const ChatRequest& request) {
  json j;
  j["model"] = request.model;
  j["messages"] = messages_to_json(request.messages);
  j["temperature"] = request.sampling.temperature;
  j["top_p"] = request.sampling.top_p;
  j["max_tokens"] = request.sampling.max_tokens;
  if (request.sampling.seed) j["seed"] = *request.sampling.seed;
  return j.dump();
}

std::string parse_chat_response_content(const std::string& body) {
  try {
    json j = json::parse(body);
    return j.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("unparseable chat response: ") + e.what());
  }
}

std::string cache_key(const ChatRequest& request, int caption_index) {
  json j;
  j["model"] = request.model;
  j["messages"] = messages_to_json(request.messages);
  j["temperature"] = request.sampling.temperature;
  j["top_p"] = request.sampling.top_p;
  j["max_tokens"] = request.sampling.max_tokens;
  j["seed"] = request.sampling.seed ? json(*request.sampling.seed) : json();
  j["caption_index"] = caption_index;
  return sha256_hex(j.dump());
}

std::vector<std::pair<std::string, std::string>> split_qa_blocks(
    const std::string& completion) {
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream in(completion);
  std::string line;
  std::string question, answer;
  bool in_answer = false;

  auto flush = [&]() {
    if (!question.empty() && !answer.empty()) out.emplace_back(question, answer);
    question.clear();
    answer.clear();
    in_answer = false;
  };

  auto strip = [](std::string s) {
    size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  };

  while (std::getline(in, line)) {
    std::string t = strip(line);
    if (t.rfind("Q:", 0) == 0) {
      flush();
      question = strip(t.substr(2));
    } else if (t.rfind("A:", 0) == 0) {
      answer = strip(t.substr(2));
      in_answer = true;
    } else if (!t.empty()) {
      // continuation of the current field
      if (in_answer && !answer.empty())
        answer += "\n" + t;
      else if (!in_answer && !question.empty())
        question += "\n" + t;
    }
  }
  flush();
  return out;
}

}  // namespace desta
