// Subcommand front-end for the alignment pipeline. Stages compose through
// files only; every stage drops a run manifest next to its outputs.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "desta/chat.hpp"
#include "desta/checkpoint.hpp"
#include "desta/dataset.hpp"
#include "desta/error.hpp"
#include "desta/eval.hpp"
#include "desta/gen_client.hpp"
#include "desta/metadata.hpp"
#include "desta/run_manifest.hpp"
#include "desta/seed_transcript.hpp"
#include "desta/sha256.hpp"
#include "desta/tokenizer.hpp"
#include "desta/toy_lm.hpp"
#include "desta/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace desta;

namespace {

// Unified run configuration; flags override file values. Seeds are explicit
// constants, never wall-clock derived.
struct RunConfig {
  json raw = json::object();

  static RunConfig load(const std::string& path) {
    RunConfig cfg;
    if (path.empty()) return cfg;
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config: " + path);
    try {
      in >> cfg.raw;
    } catch (const json::exception& e) {
      throw ValidationError(std::string("bad config JSON: ") + e.what());
    }
    return cfg;
  }

  json section(const std::string& name) const {
    return raw.contains(name) ? raw.at(name) : json::object();
  }

  std::string digest() const { return sha256_hex(raw.dump()); }
};

uint64_t seed_of(const RunConfig& cfg, const std::string& name, uint64_t dflt) {
  json seeds = cfg.section("seeds");
  return seeds.contains(name) ? seeds.at(name).get<uint64_t>() : dflt;
}

EndpointConfig endpoint_from(const RunConfig& cfg) {
  EndpointConfig e;
  json j = cfg.section("endpoint");
  e.base_url = j.value("base_url", e.base_url);
  e.path = j.value("path", e.path);
  e.model = j.value("model", e.model);
  e.api_key_env = j.value("api_key_env", e.api_key_env);
  e.parallelism = j.value("parallelism", e.parallelism);
  e.max_attempts = j.value("max_attempts", e.max_attempts);
  e.backoff_base_s = j.value("backoff_base_s", e.backoff_base_s);
  e.backoff_factor = j.value("backoff_factor", e.backoff_factor);
  e.jitter_frac = j.value("jitter_frac", e.jitter_frac);
  e.connect_timeout_s = j.value("connect_timeout_s", e.connect_timeout_s);
  e.read_timeout_s = j.value("read_timeout_s", e.read_timeout_s);
  e.cache_dir = j.value("cache_dir", e.cache_dir);
  return e;
}

SamplingConfig sampling_from(const RunConfig& cfg) {
  SamplingConfig s;
  json j = cfg.section("sampling");
  s.temperature = j.value("temperature", s.temperature);
  s.top_p = j.value("top_p", s.top_p);
  s.max_tokens = j.value("max_tokens", s.max_tokens);
  if (j.contains("seed") && !j.at("seed").is_null())
    s.seed = j.at("seed").get<int64_t>();
  return s;
}

AdapterConfig adapter_from(const RunConfig& cfg) {
  AdapterConfig a;
  json j = cfg.section("adapter");
  a.n_queries = j.value("n_queries", a.n_queries);
  a.n_blocks = j.value("n_blocks", a.n_blocks);
  a.d_model = j.value("d_model", a.d_model);
  a.d_enc = j.value("d_enc", a.d_enc);
  a.d_llm = j.value("d_llm", a.d_llm);
  a.n_enc_layers = j.value("n_enc_layers", a.n_enc_layers);
  a.n_heads = j.value("n_heads", a.n_heads);
  a.ffn_mult = j.value("ffn_mult", a.ffn_mult);
  return a;
}

TrainConfig train_from(const RunConfig& cfg) {
  TrainConfig t;
  json j = cfg.section("train");
  t.lr = j.value("lr", t.lr);
  t.warmup_steps = j.value("warmup_steps", t.warmup_steps);
  t.total_steps = j.value("total_steps", t.total_steps);
  t.batch_size = j.value("batch_size", t.batch_size);
  t.epochs = j.value("epochs", t.epochs);
  t.min_lr = j.value("min_lr", t.min_lr);
  return t;
}

void ensure_out_dir(const std::string& out) {
  fs::create_directories(out);
  if (!fs::is_directory(out))
    throw ValidationError("cannot create output directory: " + out);
}

void require_file(const std::string& path, const std::string& what) {
  if (path.empty() || !fs::exists(path))
    throw ValidationError("missing " + what + ": " + path);
}

RunManifest base_manifest(const std::string& stage, const RunConfig& cfg) {
  RunManifest m;
  m.stage = stage;
  m.tool_version = kToolVersion;
  m.config_digest = cfg.digest();
  return m;
}

void finish_manifest(RunManifest& m, const std::string& out_dir) {
  write_run_manifest(m, (fs::path(out_dir) / "run_manifest.json").string());
}

std::string sanitize_filename(const std::string& id) {
  std::string out;
  for (char c : id) out += (isalnum((unsigned char)c) || c == '-' || c == '_') ? c : '_';
  return out;
}

std::string transcription_of(const UtteranceRecord& record,
                             const std::string& source) {
  if (source != "segments") {
    auto it = record.attributes.find(AttributeKey::kSpokenText);
    if (it != record.attributes.end()) return it->second;
  }
  std::string joined;
  for (const auto& seg : record.segments) {
    if (!joined.empty()) joined += " ";
    joined += seg.text;
  }
  return joined;
}

// ---------------------------------------------------------------- ingest --

int cmd_ingest(const std::string& config_path, const std::string& base_path,
               const std::vector<std::string>& overlays,
               const std::string& policy_name, const std::string& out) {
  RunConfig cfg = RunConfig::load(config_path);
  require_file(base_path, "base manifest");
  ensure_out_dir(out);

  MergePolicy policy;
  if (policy_name == "annotation-wins")
    policy = MergePolicy::kAnnotationWins;
  else if (policy_name == "extractor-wins")
    policy = MergePolicy::kExtractorWins;
  else
    throw ValidationError("unknown merge policy: " + policy_name);

  LoadReport report;
  Manifest manifest = load_manifest(base_path, &report);
  size_t total_skipped = report.skipped.size();
  for (const auto& s : report.skipped)
    std::fprintf(stderr, "skip %s:%zu: %s\n", base_path.c_str(), s.line_number,
                 s.reason.c_str());

  for (const auto& overlay_path : overlays) {
    require_file(overlay_path, "overlay manifest");
    LoadReport overlay_report;
    Manifest overlay = load_manifest(overlay_path, &overlay_report);
    total_skipped += overlay_report.skipped.size();
    for (const auto& s : overlay_report.skipped)
      std::fprintf(stderr, "skip %s:%zu: %s\n", overlay_path.c_str(),
                   s.line_number, s.reason.c_str());
    manifest = merge_extractor_outputs(manifest, overlay, policy);
  }

  std::string out_path = (fs::path(out) / "manifest.jsonl").string();
  save_manifest(manifest, out_path);

  RunManifest rm = base_manifest("ingest", cfg);
  rm.inputs[base_path] = sha256_file_hex(base_path);
  for (const auto& o : overlays) rm.inputs[o] = sha256_file_hex(o);
  rm.outputs[out_path] = sha256_file_hex(out_path);
  rm.extra["records"] = std::to_string(manifest.records.size());
  rm.extra["skipped_lines"] = std::to_string(total_skipped);
  finish_manifest(rm, out);

  std::printf("ingested %zu records (%zu lines skipped) -> %s\n",
              manifest.records.size(), total_skipped, out_path.c_str());
  return 0;
}

// ------------------------------------------------------------------ seed --

int cmd_seed(const std::string& config_path, const std::string& manifest_path,
             const std::string& out) {
  RunConfig cfg = RunConfig::load(config_path);
  require_file(manifest_path, "manifest");
  ensure_out_dir(out);

  Manifest manifest = load_manifest(manifest_path);
  SeedOptions options;

  RunManifest rm = base_manifest("seed", cfg);
  rm.inputs[manifest_path] = sha256_file_hex(manifest_path);
  for (const auto& record : manifest.records) {
    SeedTranscript seed = build_seed_transcript(record, options);
    std::string path =
        (fs::path(out) / (sanitize_filename(record.id) + ".txt")).string();
    std::ofstream f(path);
    if (!f) throw ValidationError("cannot write seed transcript: " + path);
    f << seed.text << "\n";
    f.close();
    rm.outputs[path] = sha256_file_hex(path);
  }
  rm.extra["records"] = std::to_string(manifest.records.size());
  finish_manifest(rm, out);

  std::printf("wrote %zu seed transcripts -> %s\n", manifest.records.size(),
              out.c_str());
  return 0;
}

// -------------------------------------------------------------- generate --

int cmd_generate(const std::string& config_path, const std::string& manifest_path,
                 const std::string& mode_tag, int captions,
                 const std::string& out, const std::string& cache_dir,
                 int parallelism, bool dry_run, const std::string& base_url,
                 const std::string& model) {
  RunConfig cfg = RunConfig::load(config_path);
  require_file(manifest_path, "manifest");

  EndpointConfig endpoint = endpoint_from(cfg);
  if (!base_url.empty()) endpoint.base_url = base_url;
  if (!model.empty()) endpoint.model = model;
  if (!cache_dir.empty()) endpoint.cache_dir = cache_dir;
  if (parallelism > 0) endpoint.parallelism = parallelism;

  GenerateOptions options;
  json gen = cfg.section("generation");
  options.mode = GenerationMode::parse(
      !mode_tag.empty() ? mode_tag : gen.value("mode", std::string("descriptive")));
  options.sampling = sampling_from(cfg);
  options.captions_per_audio =
      captions > 0 ? captions : gen.value("captions_per_audio", 1);
  options.prompts.template_text =
      gen.value("template", options.prompts.template_text);
  options.prompts.desta_caption_system_prompt = gen.value(
      "desta_caption_system_prompt", options.prompts.desta_caption_system_prompt);

  Manifest manifest = load_manifest(manifest_path);

  if (dry_run) {
    DryRunReport report = dry_run_generate(manifest, options);
    std::printf("dry run: %zu requests, ~%zu prompt tokens, <=%zu completion tokens\n",
                report.request_count, report.estimated_prompt_tokens,
                report.estimated_completion_tokens);
    return 0;
  }

  ensure_out_dir(out);
  GenerateResult result = generate_targets(manifest, options, endpoint);
  for (const auto& w : result.warnings)
    std::fprintf(stderr, "warning: %s\n", w.c_str());

  std::string pairs_path = (fs::path(out) / "pairs.jsonl").string();
  save_training_pairs(result.pairs, pairs_path);
  std::string log_path = (fs::path(out) / "request_log.jsonl").string();
  write_request_log(result.request_log, log_path);

  RunManifest rm = base_manifest("generate", cfg);
  rm.inputs[manifest_path] = sha256_file_hex(manifest_path);
  rm.outputs[pairs_path] = sha256_file_hex(pairs_path);
  rm.extra["mode"] = options.mode.tag();
  rm.extra["captions_per_audio"] = std::to_string(options.captions_per_audio);
  rm.extra["pairs"] = std::to_string(result.pairs.size());
  rm.extra["failed_records"] = std::to_string(result.failed_record_ids.size());
  rm.extra["network_calls"] = std::to_string(result.stats.network_calls);
  rm.extra["cache_hits"] = std::to_string(result.stats.cache_hits);
  finish_manifest(rm, out);

  std::printf("%zu pairs (%zu cache hits, %zu network calls) -> %s\n",
              result.pairs.size(), result.stats.cache_hits,
              result.stats.network_calls, pairs_path.c_str());
  if (!result.failed_record_ids.empty()) {
    std::fprintf(stderr, "%zu records failed after retry budget\n",
                 result.failed_record_ids.size());
    return 2;
  }
  return 0;
}

// --------------------------------------------------------------- balance --

int cmd_balance(const std::string& config_path, const std::string& pairs_path,
                const std::string& manifest_path, const std::string& out,
                std::optional<size_t> cap_flag,
                const std::vector<std::string>& per_source_caps,
                std::optional<uint64_t> seed_flag) {
  RunConfig cfg = RunConfig::load(config_path);
  require_file(pairs_path, "training pairs");
  require_file(manifest_path, "manifest");
  ensure_out_dir(out);

  BalancePolicy policy;
  json bal = cfg.section("balance");
  policy.default_cap = bal.value("default_cap", policy.default_cap);
  if (bal.contains("caps")) {
    for (const auto& [k, v] : bal.at("caps").items())
      policy.per_source_caption_cap[k] = v.get<size_t>();
  }
  policy.rng_seed = seed_of(cfg, "balance", 0);
  if (cap_flag) policy.default_cap = *cap_flag;
  if (seed_flag) policy.rng_seed = *seed_flag;
  for (const auto& spec : per_source_caps) {
    size_t eq = spec.find('=');
    if (eq == std::string::npos)
      throw ValidationError("--cap-for wants source=N, got: " + spec);
    policy.per_source_caption_cap[spec.substr(0, eq)] =
        std::stoull(spec.substr(eq + 1));
  }

  Manifest manifest = load_manifest(manifest_path);
  std::vector<TrainingPair> pairs = load_training_pairs(pairs_path);
  std::vector<TrainingPair> balanced = balance(pairs, manifest, policy);
  CorpusStats stats = compute_stats(balanced, manifest);

  std::string out_pairs = (fs::path(out) / "pairs.jsonl").string();
  save_training_pairs(balanced, out_pairs);

  json meta;
  meta["default_cap"] = policy.default_cap;
  meta["caps"] = policy.per_source_caption_cap;
  meta["rng_seed"] = policy.rng_seed;
  meta["stats_digest"] = sha256_hex(stats_json(stats));
  meta["n_pairs"] = balanced.size();
  std::string meta_path = (fs::path(out) / "balance_meta.json").string();
  std::ofstream(meta_path) << meta.dump(2) << "\n";

  RunManifest rm = base_manifest("balance", cfg);
  rm.inputs[pairs_path] = sha256_file_hex(pairs_path);
  rm.inputs[manifest_path] = sha256_file_hex(manifest_path);
  rm.outputs[out_pairs] = sha256_file_hex(out_pairs);
  rm.outputs[meta_path] = sha256_file_hex(meta_path);
  rm.extra["rng_seed"] = std::to_string(policy.rng_seed);
  finish_manifest(rm, out);

  std::printf("%zu -> %zu pairs after balancing\n", pairs.size(), balanced.size());
  return 0;
}

// ----------------------------------------------------------------- stats --

int cmd_stats(const std::string& config_path, const std::string& pairs_path,
              const std::string& manifest_path, const std::string& out) {
  RunConfig cfg = RunConfig::load(config_path);
  require_file(pairs_path, "training pairs");
  require_file(manifest_path, "manifest");

  Manifest manifest = load_manifest(manifest_path);
  std::vector<TrainingPair> pairs = load_training_pairs(pairs_path);
  CorpusStats stats = compute_stats(pairs, manifest);

  std::string table = stats_table(stats);
  std::fputs(table.c_str(), stdout);

  if (!out.empty()) {
    ensure_out_dir(out);
    std::string txt_path = (fs::path(out) / "stats.txt").string();
    std::ofstream(txt_path) << table;
    std::string json_path = (fs::path(out) / "stats.json").string();
    std::ofstream(json_path) << stats_json(stats) << "\n";

    RunManifest rm = base_manifest("stats", cfg);
    rm.inputs[pairs_path] = sha256_file_hex(pairs_path);
    rm.inputs[manifest_path] = sha256_file_hex(manifest_path);
    rm.outputs[txt_path] = sha256_file_hex(txt_path);
    rm.outputs[json_path] = sha256_file_hex(json_path);
    finish_manifest(rm, out);
  }
  return 0;
}

// ----------------------------------------------------------------- train --

int cmd_train(const std::string& config_path, const std::string& pairs_path,
              const std::string& manifest_path, const std::string& out,
              const std::string& resume_from) {
  RunConfig cfg = RunConfig::load(config_path);
  require_file(pairs_path, "training pairs");
  require_file(manifest_path, "manifest");
  ensure_out_dir(out);

  AdapterConfig adapter_config = adapter_from(cfg);
  TrainConfig train_config = train_from(cfg);
  json tj = cfg.section("train");
  const uint64_t train_seed = seed_of(cfg, "train", 0);
  const uint64_t lm_seed = seed_of(cfg, "toy_lm", 7);
  const uint64_t encoder_seed = seed_of(cfg, "encoder", 11);
  const uint64_t init_seed = seed_of(cfg, "adapter_init", 3);
  const double frames_per_s = cfg.section("adapter").value("frames_per_s", 50.0);
  const size_t d_hidden = tj.value("d_hidden", size_t(64));
  const size_t vocab_max_words = tj.value("vocab_max_words", size_t(4096));
  const std::string transcription_source =
      tj.value("transcription_source", std::string("spoken_text"));

  Manifest manifest = load_manifest(manifest_path);
  RecordIndex index(manifest);
  std::vector<TrainingPair> pairs = load_training_pairs(pairs_path);
  if (pairs.empty()) throw ValidationError("no training pairs in " + pairs_path);

  // deterministic tokenizer over everything the sequences will contain
  std::vector<std::string> corpus_texts;
  TrainOptions options;
  options.template_text = tj.value("template", std::string(kDefaultTrainTemplate));
  options.checkpoint_dir = (fs::path(out) / "checkpoints").string();
  options.checkpoint_every = tj.value("checkpoint_every", size_t(0));
  options.resume_from = resume_from;
  corpus_texts.push_back(options.template_text);
  for (const auto& p : pairs) {
    corpus_texts.push_back(p.target);
    corpus_texts.push_back(transcription_of(index.at(p.record_id),
                                            transcription_source));
  }
  Tokenizer tokenizer = Tokenizer::build(corpus_texts, vocab_max_words);
  FrozenToyLM lm = FrozenToyLM::make(tokenizer.vocab_size(),
                                     adapter_config.d_llm, d_hidden, lm_seed);

  std::vector<TrainItem> items;
  items.reserve(pairs.size());
  for (auto& p : pairs) {
    const UtteranceRecord& record = index.at(p.record_id);
    TrainItem item;
    item.states = mock_encoder(record.id, record.audio_duration_s,
                               adapter_config, encoder_seed, frames_per_s);
    item.transcription = transcription_of(record, transcription_source);
    item.pair = std::move(p);
    items.push_back(std::move(item));
  }

  AdapterParams params = init_adapter_params(adapter_config, init_seed);
  TrainResult result = train(items, params, adapter_config, lm, tokenizer,
                             train_config, train_seed, options);

  std::string trace_path = (fs::path(out) / "trace.csv").string();
  write_loss_trace_csv(result.trace, trace_path);
  std::string final_ckpt =
      (fs::path(options.checkpoint_dir) / "final.dstackpt").string();

  RunManifest rm = base_manifest("train", cfg);
  rm.inputs[pairs_path] = sha256_file_hex(pairs_path);
  rm.inputs[manifest_path] = sha256_file_hex(manifest_path);
  rm.outputs[trace_path] = sha256_file_hex(trace_path);
  rm.outputs[final_ckpt] = sha256_file_hex(final_ckpt);
  rm.extra["steps"] = std::to_string(result.steps_run);
  rm.extra["final_loss"] = std::to_string(result.final_loss);
  rm.extra["trainable_params"] =
      std::to_string(count_trainable_params(adapter_config));
  rm.extra["seeds"] = "train=" + std::to_string(train_seed) +
                      ",toy_lm=" + std::to_string(lm_seed) +
                      ",encoder=" + std::to_string(encoder_seed) +
                      ",adapter_init=" + std::to_string(init_seed);
  finish_manifest(rm, out);

  std::printf("trained %zu steps, final loss %.6f -> %s\n", result.steps_run,
              result.final_loss, final_ckpt.c_str());
  return 0;
}

// ------------------------------------------------------------------ eval --

Responder make_responder(const std::string& kind, const Manifest* manifest,
                         const RunConfig& cfg) {
  if (kind == "reference")
    return [](const EvalInstance& i) { return i.reference; };
  if (kind == "echo")
    return [](const EvalInstance& i) { return i.instruction; };
  if (kind.rfind("file:", 0) == 0) {
    std::string path = kind.substr(5);
    require_file(path, "response file");
    auto by_id = std::make_shared<std::map<std::string, std::string>>();
    std::ifstream in(path);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      json j = json::parse(line);
      (*by_id)[j.at("instance_id").get<std::string>()] =
          j.at("text").get<std::string>();
    }
    return [by_id](const EvalInstance& i) {
      auto it = by_id->find(i.id);
      if (it == by_id->end())
        throw ValidationError("no canned response for instance " + i.id);
      return it->second;
    };
  }
  if (kind == "cascade-transcript" || kind == "cascade-seed") {
    if (!manifest)
      throw ValidationError("cascade responders need --manifest");
    EndpointConfig endpoint = endpoint_from(cfg);
    auto client = std::make_shared<ChatClient>(endpoint);
    JudgeCompleter completer = [client](const std::vector<ChatMessage>& msgs) {
      ChatRequest req;
      req.model = client->config().model;
      req.messages = msgs;
      return client->complete(req);
    };
    return make_cascade_responder(*manifest,
                                  kind == "cascade-transcript"
                                      ? CascadeVariant::kTranscriptOnly
                                      : CascadeVariant::kSeedTranscript,
                                  completer);
  }
  throw ValidationError("unknown responder: " + kind);
}

int cmd_eval(const std::string& config_path, const std::string& tasks_path,
             const std::string& responder_kind, const std::string& judge_kind,
             const std::string& manifest_path, const std::string& out,
             bool with_chat) {
  RunConfig cfg = RunConfig::load(config_path);
  ensure_out_dir(out);

  std::vector<EvalTask> tasks;
  if (tasks_path == "builtin:mini") {
    tasks = make_mini_benchmark();
    if (with_chat) tasks.push_back(make_mini_chat_task());
  } else {
    require_file(tasks_path, "task file");
    tasks = load_tasks(tasks_path);
  }

  std::optional<Manifest> manifest;
  if (!manifest_path.empty()) manifest = load_manifest(manifest_path);
  Responder responder =
      make_responder(responder_kind, manifest ? &*manifest : nullptr, cfg);

  std::unique_ptr<Judge> judge_backend;
  std::string judge_name;
  std::string prompt_digest;
  int judge_parallelism = 1;
  if (judge_kind == "rule") {
    judge_backend = std::make_unique<RuleBasedJudge>();
    judge_name = "rule-based";
  } else if (judge_kind == "llm") {
    EndpointConfig endpoint = endpoint_from(cfg);
    auto client = std::make_shared<ChatClient>(endpoint);
    judge_backend = std::make_unique<LlmJudge>(
        [client](const std::vector<ChatMessage>& msgs) {
          ChatRequest req;
          req.model = client->config().model;
          req.messages = msgs;
          return client->complete(req);
        });
    judge_name = endpoint.model;
    prompt_digest = LlmJudge::prompt_digest();
    judge_parallelism = endpoint.parallelism;
  } else {
    throw ValidationError("unknown judge: " + judge_kind);
  }

  std::vector<JudgeVerdict> all_verdicts;
  std::ofstream responses_out((fs::path(out) / "responses.jsonl").string());
  for (const auto& task : tasks) {
    auto responses = collect_responses(task, responder);
    for (const auto& r : responses) {
      json j{{"task_id", task.task_id},
             {"instance_id", r.instance_id},
             {"text", r.text},
             {"answered", r.answered}};
      responses_out << j.dump() << "\n";
    }
    auto verdicts = judge(task, responses, *judge_backend, judge_parallelism);
    all_verdicts.insert(all_verdicts.end(), verdicts.begin(), verdicts.end());
  }
  responses_out.close();

  std::string verdicts_path = (fs::path(out) / "verdicts.jsonl").string();
  save_verdicts(all_verdicts, verdicts_path);

  EvalReport report = aggregate(tasks, all_verdicts);
  report.judge_name = judge_name;
  report.prompt_digest = prompt_digest;
  std::string report_json_path = (fs::path(out) / "report.json").string();
  std::ofstream(report_json_path) << report_json(report) << "\n";
  std::string report_txt_path = (fs::path(out) / "report.txt").string();
  std::ofstream(report_txt_path) << report_table(report);
  std::fputs(report_table(report).c_str(), stdout);

  RunManifest rm = base_manifest("eval", cfg);
  if (tasks_path != "builtin:mini")
    rm.inputs[tasks_path] = sha256_file_hex(tasks_path);
  rm.outputs[verdicts_path] = sha256_file_hex(verdicts_path);
  rm.outputs[report_json_path] = sha256_file_hex(report_json_path);
  rm.extra["judge"] = judge_name;
  rm.extra["tasks"] = std::to_string(tasks.size());
  finish_manifest(rm, out);
  return 0;
}

// ---------------------------------------------------------- judge-report --

int cmd_judge_report(const std::string& config_path, const std::string& tasks_path,
                     const std::string& verdicts_path, const std::string& out) {
  RunConfig cfg = RunConfig::load(config_path);
  require_file(verdicts_path, "verdicts");
  ensure_out_dir(out);

  std::vector<EvalTask> tasks;
  if (tasks_path == "builtin:mini") {
    tasks = make_mini_benchmark();
  } else {
    require_file(tasks_path, "task file");
    tasks = load_tasks(tasks_path);
  }
  std::vector<JudgeVerdict> verdicts = load_verdicts(verdicts_path);

  EvalReport report = aggregate(tasks, verdicts);
  std::string report_json_path = (fs::path(out) / "report.json").string();
  std::ofstream(report_json_path) << report_json(report) << "\n";
  std::string report_txt_path = (fs::path(out) / "report.txt").string();
  std::ofstream(report_txt_path) << report_table(report);
  std::fputs(report_table(report).c_str(), stdout);

  RunManifest rm = base_manifest("judge-report", cfg);
  rm.inputs[verdicts_path] = sha256_file_hex(verdicts_path);
  rm.outputs[report_json_path] = sha256_file_hex(report_json_path);
  finish_manifest(rm, out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"descriptive speech-text alignment pipeline"};
  app.require_subcommand(1);

  std::string config_path, out_dir, manifest_path, pairs_path;

  // ingest
  auto* ingest = app.add_subcommand("ingest", "validate and merge manifests");
  std::string base_path, policy = "annotation-wins";
  std::vector<std::string> overlays;
  ingest->add_option("--base", base_path, "base manifest (JSONL)")->required();
  ingest->add_option("--overlay", overlays, "extractor overlay manifest(s)");
  ingest->add_option("--policy", policy, "annotation-wins | extractor-wins");
  ingest->add_option("--config", config_path, "run config JSON");
  ingest->add_option("--out", out_dir, "output directory")->required();

  // seed
  auto* seed = app.add_subcommand("seed", "render seed transcripts");
  seed->add_option("--manifest", manifest_path, "manifest JSONL")->required();
  seed->add_option("--config", config_path, "run config JSON");
  seed->add_option("--out", out_dir, "output directory")->required();

  // generate
  auto* generate = app.add_subcommand("generate", "generate training targets");
  std::string mode_tag, cache_dir, base_url, model;
  int captions = 0, parallelism = 0;
  bool dry_run = false;
  generate->add_option("--manifest", manifest_path, "manifest JSONL")->required();
  generate->add_option("--mode", mode_tag,
                       "descriptive | open_qa:k | seed_copy | desta_caption");
  generate->add_option("--captions", captions, "captions per audio");
  generate->add_option("--cache-dir", cache_dir, "response cache directory");
  generate->add_option("--parallelism", parallelism, "max in-flight requests");
  generate->add_option("--base-url", base_url, "endpoint base url");
  generate->add_option("--model", model, "model name");
  generate->add_flag("--dry-run", dry_run, "count requests, no network");
  generate->add_option("--config", config_path, "run config JSON");
  generate->add_option("--out", out_dir, "output directory");

  // balance
  auto* balance_cmd = app.add_subcommand("balance", "cap captions per source");
  std::optional<size_t> cap_flag;
  std::optional<uint64_t> seed_flag;
  std::vector<std::string> caps_for;
  balance_cmd->add_option("--pairs", pairs_path, "training pairs JSONL")->required();
  balance_cmd->add_option("--manifest", manifest_path, "manifest JSONL")->required();
  balance_cmd->add_option("--cap", cap_flag, "default per-source caption cap");
  balance_cmd->add_option("--cap-for", caps_for, "per-source cap, source=N");
  balance_cmd->add_option("--seed", seed_flag, "sampling seed");
  balance_cmd->add_option("--config", config_path, "run config JSON");
  balance_cmd->add_option("--out", out_dir, "output directory")->required();

  // stats
  auto* stats_cmd = app.add_subcommand("stats", "corpus statistics table");
  stats_cmd->add_option("--pairs", pairs_path, "training pairs JSONL")->required();
  stats_cmd->add_option("--manifest", manifest_path, "manifest JSONL")->required();
  stats_cmd->add_option("--config", config_path, "run config JSON");
  stats_cmd->add_option("--out", out_dir, "output directory (optional)");

  // train
  auto* train_cmd = app.add_subcommand("train", "train the modality adapter");
  std::string resume_from;
  train_cmd->add_option("--pairs", pairs_path, "training pairs JSONL")->required();
  train_cmd->add_option("--manifest", manifest_path, "manifest JSONL")->required();
  train_cmd->add_option("--resume", resume_from, "checkpoint to resume from");
  train_cmd->add_option("--config", config_path, "run config JSON");
  train_cmd->add_option("--out", out_dir, "output directory")->required();

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "collect, judge and aggregate");
  std::string tasks_path, responder_kind = "reference", judge_kind = "rule";
  bool with_chat = false;
  eval_cmd->add_option("--tasks", tasks_path, "task JSON or builtin:mini")->required();
  eval_cmd->add_option("--responder", responder_kind,
                       "reference | echo | file:PATH | cascade-transcript | cascade-seed");
  eval_cmd->add_option("--judge", judge_kind, "rule | llm");
  eval_cmd->add_option("--manifest", manifest_path, "manifest (cascade responders)");
  eval_cmd->add_flag("--chat", with_chat, "include the agreement chat task");
  eval_cmd->add_option("--config", config_path, "run config JSON");
  eval_cmd->add_option("--out", out_dir, "output directory")->required();

  // judge-report
  auto* report_cmd =
      app.add_subcommand("judge-report", "regenerate report from verdicts");
  std::string verdicts_path;
  report_cmd->add_option("--tasks", tasks_path, "task JSON or builtin:mini")->required();
  report_cmd->add_option("--verdicts", verdicts_path, "verdicts JSONL")->required();
  report_cmd->add_option("--config", config_path, "run config JSON");
  report_cmd->add_option("--out", out_dir, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (ingest->parsed())
      return cmd_ingest(config_path, base_path, overlays, policy, out_dir);
    if (seed->parsed()) return cmd_seed(config_path, manifest_path, out_dir);
    if (generate->parsed())
      return cmd_generate(config_path, manifest_path, mode_tag, captions,
                          out_dir, cache_dir, parallelism, dry_run, base_url,
                          model);
    if (balance_cmd->parsed())
      return cmd_balance(config_path, pairs_path, manifest_path, out_dir,
                         cap_flag, caps_for, seed_flag);
    if (stats_cmd->parsed())
      return cmd_stats(config_path, pairs_path, manifest_path, out_dir);
    if (train_cmd->parsed())
      return cmd_train(config_path, pairs_path, manifest_path, out_dir,
                       resume_from);
    if (eval_cmd->parsed())
      return cmd_eval(config_path, tasks_path, responder_kind, judge_kind,
                      manifest_path, out_dir, with_chat);
    if (report_cmd->parsed())
      return cmd_judge_report(config_path, tasks_path, verdicts_path, out_dir);
  } catch (const TransportError& e) {
    std::fprintf(stderr, "transport error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
