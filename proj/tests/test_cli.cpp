#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "desta/dataset.hpp"
#include "desta/eval.hpp"
#include "desta/metadata.hpp"
#include "desta/sha256.hpp"
#include "testutil.hpp"

using namespace desta;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int run_cli(const std::string& args, std::string* stdout_text = nullptr) {
  testutil::TempDir tmp("cli-out");
  std::string out_file = tmp.file("stdout.txt");
  std::string cmd = std::string(DESTA_CLI_BIN) + " " + args + " > " + out_file +
                    " 2> " + tmp.file("stderr.txt");
  int status = std::system(cmd.c_str());
  if (stdout_text) *stdout_text = testutil::read_file(out_file);
  if (WIFEXITED(status)) return WEXITSTATUS(status);
  return -1;
}

std::string fixture(const std::string& name) {
  return std::string(DESTA_FIXTURES_DIR) + "/" + name;
}

}  // namespace

TEST_CASE("seed subcommand reproduces the golden transcripts") {
  testutil::TempDir tmp("seed");
  int rc = run_cli("seed --manifest " + fixture("sample_manifest.jsonl") +
                   " --out " + tmp.str());
  REQUIRE(rc == 0);
  for (const char* id : {"u1", "u2", "u3"}) {
    std::string got = testutil::read_file(tmp.file(std::string(id) + ".txt"));
    std::string want =
        testutil::read_file(fixture("golden_seed/" + std::string(id) + ".txt"));
    CHECK(got == want);
  }
  CHECK(fs::exists(tmp.file("run_manifest.json")));
}

TEST_CASE("stats subcommand prints the totals row") {
  testutil::TempDir tmp("stats");
  Manifest manifest;
  std::vector<TrainingPair> pairs;
  testutil::build_corpus(&manifest, &pairs);
  save_manifest(manifest, tmp.file("manifest.jsonl"));
  save_training_pairs(pairs, tmp.file("pairs.jsonl"));

  std::string out;
  int rc = run_cli("stats --pairs " + tmp.file("pairs.jsonl") + " --manifest " +
                       tmp.file("manifest.jsonl") + " --out " + tmp.file("st"),
                   &out);
  REQUIRE(rc == 0);
  CHECK(out.find("108238") != std::string::npos);
  CHECK(out.find("124088") != std::string::npos);
  CHECK(out.find("154.92") != std::string::npos);
  CHECK(fs::exists(tmp.file("st/stats.json")));
}

TEST_CASE("ingest reports skips and fails on duplicate ids") {
  testutil::TempDir tmp("ingest");

  SUBCASE("unknown key is skipped, not fatal") {
    testutil::write_file(
        tmp.file("base.jsonl"),
        R"({"id":"a","source_dataset":"s","audio_duration_s":1.0,"segments":[],"attributes":{}})"
        "\n"
        R"({"id":"b","source_dataset":"s","audio_duration_s":1.0,"segments":[],"attributes":{"timbre":"x"}})"
        "\n");
    int rc = run_cli("ingest --base " + tmp.file("base.jsonl") + " --out " +
                     tmp.file("out"));
    CHECK(rc == 0);
    Manifest m = load_manifest(tmp.file("out/manifest.jsonl"));
    CHECK(m.records.size() == 1);
  }

  SUBCASE("duplicate id exits 1") {
    std::string rec =
        R"({"id":"dup","source_dataset":"s","audio_duration_s":1.0,"segments":[],"attributes":{}})";
    testutil::write_file(tmp.file("base.jsonl"), rec + "\n" + rec + "\n");
    int rc = run_cli("ingest --base " + tmp.file("base.jsonl") + " --out " +
                     tmp.file("out"));
    CHECK(rc == 1);
  }

  SUBCASE("missing upstream file exits 1 and names it") {
    int rc = run_cli("ingest --base " + tmp.file("ghost.jsonl") + " --out " +
                     tmp.file("out"));
    CHECK(rc == 1);
  }

  SUBCASE("merge overlay with extractor-wins") {
    testutil::write_file(
        tmp.file("base.jsonl"),
        R"({"id":"a","source_dataset":"s","audio_duration_s":1.0,"segments":[],"attributes":{"emotion":"Sad"}})"
        "\n");
    testutil::write_file(
        tmp.file("ov.jsonl"),
        R"({"id":"a","source_dataset":"s","audio_duration_s":1.0,"segments":[],"attributes":{"emotion":"Happy","gender":"Male"}})"
        "\n");
    int rc = run_cli("ingest --base " + tmp.file("base.jsonl") + " --overlay " +
                     tmp.file("ov.jsonl") + " --policy extractor-wins --out " +
                     tmp.file("out"));
    REQUIRE(rc == 0);
    Manifest m = load_manifest(tmp.file("out/manifest.jsonl"));
    CHECK(m.records[0].attributes.at(AttributeKey::kEmotion) == "Happy");
    CHECK(m.records[0].attributes.at(AttributeKey::kGender) == "Male");
  }
}

TEST_CASE("generate --dry-run prints counts with no endpoint running") {
  std::string out;
  int rc = run_cli("generate --manifest " + fixture("sample_manifest.jsonl") +
                       " --mode descriptive --captions 5 --dry-run",
                   &out);
  REQUIRE(rc == 0);
  CHECK(out.find("15 requests") != std::string::npos);
}

TEST_CASE("generate exits 2 when the endpoint stays unreachable") {
  testutil::TempDir tmp("dead");
  json cfg;
  cfg["endpoint"] = {{"base_url", "http://127.0.0.1:9"},
                     {"max_attempts", 2},
                     {"backoff_base_s", 0.001},
                     {"connect_timeout_s", 1}};
  testutil::write_file(tmp.file("cfg.json"), cfg.dump());
  int rc = run_cli("generate --manifest " + fixture("sample_manifest.jsonl") +
                   " --config " + tmp.file("cfg.json") + " --out " +
                   tmp.file("out"));
  CHECK(rc == 2);
}

TEST_CASE("eval with a file-backed responder loads responses verbatim") {
  testutil::TempDir tmp("filedresp");
  // canned correct answers for two tasks, nothing for the rest
  auto tasks = desta::make_mini_benchmark();
  std::string lines;
  for (const auto& t : tasks) {
    for (const auto& i : t.instances) {
      json j{{"instance_id", i.id}, {"text", i.reference}};
      lines += j.dump() + "\n";
    }
  }
  testutil::write_file(tmp.file("responses.jsonl"), lines);
  std::string out;
  int rc = run_cli("eval --tasks builtin:mini --responder file:" +
                       tmp.file("responses.jsonl") + " --judge rule --out " +
                       tmp.file("e"),
                   &out);
  REQUIRE(rc == 0);
  CHECK(out.find("100.00") != std::string::npos);
}

TEST_CASE("balance writes sidecar metadata") {
  testutil::TempDir tmp("bal");
  Manifest m;
  std::vector<TrainingPair> pairs;
  for (int i = 0; i < 30; ++i) {
    UtteranceRecord r;
    r.id = "x" + std::to_string(i);
    r.source_dataset = "src";
    r.audio_duration_s = 1.0;
    m.records.push_back(r);
    TrainingPair p;
    p.record_id = r.id;
    p.mode = "descriptive";
    p.target = "t";
    pairs.push_back(p);
  }
  save_manifest(m, tmp.file("m.jsonl"));
  save_training_pairs(pairs, tmp.file("p.jsonl"));

  int rc = run_cli("balance --pairs " + tmp.file("p.jsonl") + " --manifest " +
                   tmp.file("m.jsonl") + " --cap 10 --seed 7 --out " +
                   tmp.file("out"));
  REQUIRE(rc == 0);
  auto balanced = load_training_pairs(tmp.file("out/pairs.jsonl"));
  CHECK(balanced.size() == 10);
  json meta = json::parse(testutil::read_file(tmp.file("out/balance_meta.json")));
  CHECK(meta.at("rng_seed") == 7);
  CHECK(meta.at("n_pairs") == 10);
  CHECK(meta.contains("stats_digest"));
}

TEST_CASE("train twice gives identical checkpoint digests") {
  testutil::TempDir tmp("train");
  // tiny corpus over the fixture manifest
  Manifest manifest = load_manifest(fixture("sample_manifest.jsonl"));
  std::vector<TrainingPair> pairs;
  for (const auto& r : manifest.records) {
    TrainingPair p;
    p.record_id = r.id;
    p.mode = "descriptive";
    p.caption_index = 0;
    p.target = "caption of " + r.id;
    pairs.push_back(p);
  }
  save_training_pairs(pairs, tmp.file("pairs.jsonl"));

  json cfg;
  cfg["adapter"] = {{"n_queries", 2}, {"n_blocks", 1}, {"d_model", 8},
                    {"d_enc", 8},     {"d_llm", 16},   {"n_enc_layers", 2},
                    {"n_heads", 2},   {"ffn_mult", 2}, {"frames_per_s", 10.0}};
  cfg["train"] = {{"lr", 1e-3}, {"warmup_steps", 2},  {"total_steps", 8},
                  {"batch_size", 2}, {"epochs", 1},   {"d_hidden", 16},
                  {"vocab_max_words", 64}};
  cfg["seeds"] = {{"train", 5}, {"toy_lm", 6}, {"encoder", 7}, {"adapter_init", 8}};
  testutil::write_file(tmp.file("cfg.json"), cfg.dump());

  auto train_once = [&](const std::string& out) {
    return run_cli("train --pairs " + tmp.file("pairs.jsonl") + " --manifest " +
                   fixture("sample_manifest.jsonl") + " --config " +
                   tmp.file("cfg.json") + " --out " + tmp.file(out));
  };
  REQUIRE(train_once("a") == 0);
  REQUIRE(train_once("b") == 0);

  std::string da = sha256_file_hex(tmp.file("a/checkpoints/final.dstackpt"));
  std::string db = sha256_file_hex(tmp.file("b/checkpoints/final.dstackpt"));
  CHECK(da == db);
  CHECK(fs::exists(tmp.file("a/trace.csv")));
  std::string trace = testutil::read_file(tmp.file("a/trace.csv"));
  CHECK(trace.rfind("step,lr,loss", 0) == 0);
}

TEST_CASE("eval on the builtin mini suite and judge-report regeneration") {
  testutil::TempDir tmp("eval");
  std::string out;
  int rc = run_cli("eval --tasks builtin:mini --responder reference "
                   "--judge rule --out " +
                       tmp.file("e"),
                   &out);
  REQUIRE(rc == 0);
  CHECK(out.find("100.00") != std::string::npos);
  CHECK(fs::exists(tmp.file("e/verdicts.jsonl")));

  int rc1 = run_cli("judge-report --tasks builtin:mini --verdicts " +
                    tmp.file("e/verdicts.jsonl") + " --out " + tmp.file("r1"));
  int rc2 = run_cli("judge-report --tasks builtin:mini --verdicts " +
                    tmp.file("e/verdicts.jsonl") + " --out " + tmp.file("r2"));
  REQUIRE(rc1 == 0);
  REQUIRE(rc2 == 0);
  CHECK(testutil::read_file(tmp.file("r1/report.json")) ==
        testutil::read_file(tmp.file("r2/report.json")));
  // scores agree with the original run's report
  json direct = json::parse(testutil::read_file(tmp.file("e/report.json")));
  json regen = json::parse(testutil::read_file(tmp.file("r1/report.json")));
  CHECK(direct.at("all") == regen.at("all"));
  CHECK(direct.at("category_means") == regen.at("category_means"));
}
