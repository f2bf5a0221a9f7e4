#include "desta/gen_client.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "desta/error.hpp"
#include "desta/sha256.hpp"
#include "desta/tensor.hpp"

namespace desta {

namespace fs = std::filesystem;

namespace {

int64_t unix_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

// Deterministic jitter in [-1, 1] from the request identity and attempt.
double jitter_unit(const std::string& key, int attempt) {
  DetRng rng(mix64(fnv1a64(key), uint64_t(attempt)));
  return rng.next_uniform(-1.0, 1.0);
}

bool retryable_status(int status) { return status >= 500 && status < 600; }

}  // namespace

ChatClient::ChatClient(EndpointConfig config) : config_(std::move(config)) {
  if (const char* key = std::getenv(config_.api_key_env.c_str())) api_key_ = key;
}

std::string ChatClient::post(const ChatRequest& request, int* attempts_out) {
  const std::string body = chat_request_body(request);
  const std::string body_hash = sha256_hex(body);
  std::string last_error;

  for (int attempt = 1; attempt <= config_.max_attempts; ++attempt) {
    if (attempt > 1) {
      double delay_s = config_.backoff_base_s *
                       std::pow(config_.backoff_factor, attempt - 2);
      delay_s *= 1.0 + config_.jitter_frac * jitter_unit(body_hash, attempt);
      std::this_thread::sleep_for(std::chrono::duration<double>(delay_s));
    }

    httplib::Client cli(config_.base_url);
    cli.set_connection_timeout(config_.connect_timeout_s, 0);
    cli.set_read_timeout(config_.read_timeout_s, 0);
    httplib::Headers headers;
    if (!api_key_.empty())
      headers.emplace("Authorization", "Bearer " + api_key_);

    auto res = cli.Post(config_.path, headers, body, "application/json");
    if (attempts_out) *attempts_out = attempt;

    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (retryable_status(res->status)) {
      last_error = "server status " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) {
      throw TransportError("endpoint returned status " +
                           std::to_string(res->status) + ": " + res->body);
    }
    return res->body;
  }
  throw TransportError("request failed after " +
                       std::to_string(config_.max_attempts) +
                       " attempts; last error: " + last_error);
}

std::string ChatClient::complete(const ChatRequest& request) {
  return parse_chat_response_content(post(request));
}

namespace {

struct Job {
  size_t record_index = 0;
  int caption_index = 0;
  ChatRequest request;
  std::string key;
};

struct JobResult {
  bool ok = false;
  bool from_cache = false;
  std::string content;
  RequestLogEntry log;
};

ChatRequest make_request(const EndpointConfig& endpoint,
                         const GenerateOptions& options,
                         const std::vector<ChatMessage>& messages,
                         int caption_index) {
  ChatRequest req;
  req.model = endpoint.model;
  req.messages = messages;
  req.sampling = options.sampling;
  // a fixed upstream seed would collapse the sampled captions into copies,
  // so derive a per-caption seed from it
  if (req.sampling.seed) *req.sampling.seed += caption_index;
  return req;
}

class ResponseCache {
 public:
  explicit ResponseCache(std::string dir) : dir_(std::move(dir)) {
    if (!dir_.empty()) fs::create_directories(dir_);
  }

  bool enabled() const { return !dir_.empty(); }

  bool load(const std::string& key, std::string* body) const {
    if (!enabled()) return false;
    std::ifstream in(path_for(key), std::ios::binary);
    if (!in) return false;
    std::ostringstream ss;
    ss << in.rdbuf();
    *body = ss.str();
    return true;
  }

  void store(const std::string& key, const std::string& body) {
    if (!enabled()) return;
    std::lock_guard<std::mutex> lock(write_mutex_);
    std::string tmp = path_for(key) + ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary);
      out << body;
    }
    fs::rename(tmp, path_for(key));
  }

 private:
  std::string path_for(const std::string& key) const {
    return (fs::path(dir_) / (key + ".json")).string();
  }

  std::string dir_;
  std::mutex write_mutex_;
};

JobResult run_job(const Job& job, const Manifest& manifest, ChatClient& client,
                  ResponseCache& cache) {
  JobResult result;
  result.log.record_id = manifest.records[job.record_index].id;
  result.log.caption_index = job.caption_index;
  result.log.request_sha256 = job.key;
  result.log.started_unix_ms = unix_ms();

  std::string body;
  if (cache.load(job.key, &body)) {
    result.ok = true;
    result.from_cache = true;
    result.content = parse_chat_response_content(body);
    result.log.status = "cached";
    result.log.finished_unix_ms = unix_ms();
    return result;
  }

  try {
    int attempts = 0;
    body = client.post(job.request, &attempts);
    result.log.attempts = attempts;
    std::string content = parse_chat_response_content(body);
    if (content.empty()) {
      // empty completion: one extra attempt, then give up on the record
      body = client.post(job.request, &attempts);
      result.log.attempts += attempts;
      content = parse_chat_response_content(body);
      if (content.empty()) {
        result.log.status = "failed";
        result.log.finished_unix_ms = unix_ms();
        return result;
      }
    }
    cache.store(job.key, body);
    result.ok = true;
    result.content = std::move(content);
    result.log.status = "ok";
  } catch (const std::exception& e) {
    result.log.status = "failed";
    (void)e;
  }
  result.log.finished_unix_ms = unix_ms();
  return result;
}

}  // namespace

GenerateResult generate_targets(const Manifest& manifest,
                                const GenerateOptions& options,
                                const EndpointConfig& endpoint) {
  if (options.captions_per_audio < 1)
    throw ValidationError("captions_per_audio must be >= 1");
  options.sampling.validate();

  GenerateResult result;
  ResponseCache cache(endpoint.cache_dir);

  // seed transcripts and request jobs, in input order
  std::vector<SeedTranscript> seeds;
  seeds.reserve(manifest.records.size());
  std::vector<std::vector<ChatMessage>> contexts(manifest.records.size());
  std::vector<Job> jobs;
  for (size_t i = 0; i < manifest.records.size(); ++i) {
    seeds.push_back(build_seed_transcript(manifest.records[i], options.seed_options));
    contexts[i] = render_context(seeds[i], options.mode, options.prompts);
    if (options.mode.kind == GenerationMode::Kind::kSeedCopy) continue;
    for (int c = 0; c < options.captions_per_audio; ++c) {
      Job job;
      job.record_index = i;
      job.caption_index = c;
      job.request = make_request(endpoint, options, contexts[i], c);
      job.key = cache_key(job.request, c);
      jobs.push_back(std::move(job));
    }
  }

  std::vector<JobResult> job_results(jobs.size());
  if (!jobs.empty()) {
    ChatClient client(endpoint);
    std::atomic<size_t> next{0};
    int workers = std::max(1, std::min<int>(endpoint.parallelism, int(jobs.size())));
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&]() {
        for (;;) {
          size_t i = next.fetch_add(1);
          if (i >= jobs.size()) return;
          job_results[i] = run_job(jobs[i], manifest, client, cache);
        }
      });
    }
    for (auto& t : pool) t.join();
  }

  // assemble per-record outputs in input order
  std::vector<std::vector<const JobResult*>> per_record(manifest.records.size());
  for (size_t i = 0; i < jobs.size(); ++i)
    per_record[jobs[i].record_index].push_back(&job_results[i]);

  for (size_t i = 0; i < manifest.records.size(); ++i) {
    const auto& record = manifest.records[i];

    if (options.mode.kind == GenerationMode::Kind::kSeedCopy) {
      // the model learns to emit the transcript in response to the
      // descriptive prompt; no LLM call is involved
      for (int c = 0; c < options.captions_per_audio; ++c) {
        TrainingPair pair;
        pair.record_id = record.id;
        pair.mode = options.mode.tag();
        pair.caption_index = c;
        pair.context = {
            {Role::kUser, apply_prompt_template(options.prompts.template_text,
                                             seeds[i].text, kDescriptivePrompt)}};
        pair.target = seeds[i].text;
        result.pairs.push_back(std::move(pair));
        result.request_log.push_back({record.id, c, "", "seed_copy", 0, 0, 0});
      }
      continue;
    }

    bool failed = false;
    for (const JobResult* jr : per_record[i]) {
      if (!jr->ok) failed = true;
    }
    if (failed) {
      result.failed_record_ids.push_back(record.id);
      result.stats.requests_failed += per_record[i].size();
      for (const JobResult* jr : per_record[i]) result.request_log.push_back(jr->log);
      continue;
    }

    int emitted = 0;
    for (const JobResult* jr : per_record[i]) {
      result.request_log.push_back(jr->log);
      if (jr->from_cache)
        ++result.stats.cache_hits;
      else
        ++result.stats.network_calls;

      if (options.mode.kind == GenerationMode::Kind::kOpenQa) {
        auto blocks = split_qa_blocks(jr->content);
        if (int(blocks.size()) != options.mode.open_qa_k) {
          result.warnings.push_back(
              record.id + ": expected " + std::to_string(options.mode.open_qa_k) +
              " QA blocks, got " + std::to_string(blocks.size()));
        }
        for (const auto& [q, a] : blocks) {
          TrainingPair pair;
          pair.record_id = record.id;
          pair.mode = options.mode.tag();
          pair.caption_index = emitted++;
          pair.context = {
              {Role::kUser, apply_prompt_template(options.prompts.template_text,
                                                  seeds[i].text, q)}};
          pair.target = a;
          result.pairs.push_back(std::move(pair));
        }
      } else {
        TrainingPair pair;
        pair.record_id = record.id;
        pair.mode = options.mode.tag();
        pair.caption_index = emitted++;
        pair.context = contexts[i];
        pair.target = jr->content;
        result.pairs.push_back(std::move(pair));
      }
    }
  }
  return result;
}

DryRunReport dry_run_generate(const Manifest& manifest,
                              const GenerateOptions& options) {
  DryRunReport report;
  if (options.mode.kind == GenerationMode::Kind::kSeedCopy) return report;
  for (const auto& record : manifest.records) {
    SeedTranscript seed = build_seed_transcript(record, options.seed_options);
    auto messages = render_context(seed, options.mode, options.prompts);
    size_t chars = 0;
    for (const auto& m : messages) chars += m.content.size();
    report.request_count += size_t(options.captions_per_audio);
    // ~4 chars per token, the usual rough estimate
    report.estimated_prompt_tokens +=
        size_t(options.captions_per_audio) * ((chars + 3) / 4);
    report.estimated_completion_tokens +=
        size_t(options.captions_per_audio) * size_t(options.sampling.max_tokens);
  }
  return report;
}

void write_request_log(const std::vector<RequestLogEntry>& log,
                       const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write request log: " + path);
  for (const auto& e : log) {
    nlohmann::json j;
    j["record_id"] = e.record_id;
    j["caption_index"] = e.caption_index;
    j["request_sha256"] = e.request_sha256;
    j["status"] = e.status;
    j["attempts"] = e.attempts;
    j["started_unix_ms"] = e.started_unix_ms;
    j["finished_unix_ms"] = e.finished_unix_ms;
    out << j.dump() << "\n";
  }
}

}  // namespace desta
