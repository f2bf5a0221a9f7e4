#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "desta/chat.hpp"
#include "desta/metadata.hpp"

namespace desta {

struct EndpointConfig {
  std::string base_url = "http://127.0.0.1:8080";
  std::string path = "/v1/chat/completions";
  std::string model = "llama3-8b-instruct";
  std::string api_key_env = "DESTA_API_KEY";  // key itself never in config files
  int parallelism = 4;
  int max_attempts = 5;
  double backoff_base_s = 1.0;
  double backoff_factor = 2.0;
  double jitter_frac = 0.2;
  int connect_timeout_s = 10;
  int read_timeout_s = 120;
  std::string cache_dir;  // empty disables the response cache
};

// One completion call with retry/backoff. Retries transport errors and 5xx
// with exponential backoff (base, factor, +/-jitter); jitter is derived from
// the request hash so runs are reproducible. Throws TransportError once the
// attempt budget is spent.
class ChatClient {
 public:
  explicit ChatClient(EndpointConfig config);

  // Raw response body of the first successful attempt.
  std::string post(const ChatRequest& request, int* attempts_out = nullptr);
  // Convenience: body -> first choice content.
  std::string complete(const ChatRequest& request);

  const EndpointConfig& config() const { return config_; }

 private:
  EndpointConfig config_;
  std::string api_key_;
};

struct RequestLogEntry {
  std::string record_id;
  int caption_index = 0;
  std::string request_sha256;
  std::string status;  // "ok" | "cached" | "failed" | "seed_copy"
  int attempts = 0;
  int64_t started_unix_ms = 0;
  int64_t finished_unix_ms = 0;
};

struct GenerationStats {
  size_t network_calls = 0;
  size_t cache_hits = 0;
  size_t requests_failed = 0;
};

struct GenerateOptions {
  GenerationMode mode = GenerationMode::descriptive();
  SamplingConfig sampling;
  int captions_per_audio = 1;
  PromptConfig prompts;
  SeedOptions seed_options;
};

struct GenerateResult {
  std::vector<TrainingPair> pairs;            // input record order
  std::vector<std::string> failed_record_ids;  // excluded from pairs entirely
  std::vector<std::string> warnings;           // e.g. dropped malformed QA blocks
  GenerationStats stats;
  std::vector<RequestLogEntry> request_log;
};

// Turns every record into captions_per_audio sampled targets (times k for
// open_qa). Up to parallelism requests are in flight at once; responses are
// cached by content-addressed key and results are emitted in input order.
// A record whose request exhausts the retry budget is marked failed and the
// run continues.
GenerateResult generate_targets(const Manifest& manifest,
                                const GenerateOptions& options,
                                const EndpointConfig& endpoint);

struct DryRunReport {
  size_t request_count = 0;
  size_t estimated_prompt_tokens = 0;
  size_t estimated_completion_tokens = 0;
};

// Request count and token volume estimate with zero network calls.
DryRunReport dry_run_generate(const Manifest& manifest,
                              const GenerateOptions& options);

void write_request_log(const std::vector<RequestLogEntry>& log,
                       const std::string& path);

}  // namespace desta
