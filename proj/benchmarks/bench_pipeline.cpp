#include <benchmark/benchmark.h>

#include "desta/chat.hpp"
#include "desta/seed_transcript.hpp"
#include "desta/tensor.hpp"
#include "desta/tokenizer.hpp"
#include "desta/trainer.hpp"

using namespace desta;

namespace {

UtteranceRecord bench_record(size_t n_segments) {
  UtteranceRecord r;
  r.id = "bench";
  r.source_dataset = "bench";
  double t = 0;
  for (size_t i = 0; i < n_segments; ++i) {
    r.segments.push_back({t, t + 3.0, "a few words of spoken content here"});
    t += 3.5;
  }
  r.audio_duration_s = t;
  r.attributes[AttributeKey::kGender] = "Female";
  r.attributes[AttributeKey::kEmotion] = "Happy";
  r.attributes[AttributeKey::kSnrLevel] = "21.3";
  r.attributes[AttributeKey::kDuration] = std::to_string(t);
  return r;
}

void BM_BuildSeedTranscript(benchmark::State& state) {
  UtteranceRecord r = bench_record(size_t(state.range(0)));
  for (auto _ : state) {
    SeedTranscript seed = build_seed_transcript(r);
    benchmark::DoNotOptimize(seed.text.data());
  }
}
BENCHMARK(BM_BuildSeedTranscript)->Arg(1)->Arg(8)->Arg(64);

void BM_ParseSeedTranscript(benchmark::State& state) {
  std::string text = build_seed_transcript(bench_record(size_t(state.range(0)))).text;
  for (auto _ : state) {
    auto lines = parse_seed_transcript(text);
    benchmark::DoNotOptimize(lines.data());
  }
}
BENCHMARK(BM_ParseSeedTranscript)->Arg(1)->Arg(8)->Arg(64);

void BM_CacheKey(benchmark::State& state) {
  ChatRequest req;
  req.model = "llama3-8b-instruct";
  req.messages = {{Role::kUser, build_seed_transcript(bench_record(8)).text +
                                    "\n\nWhat can you hear from the audio?"}};
  for (auto _ : state) {
    std::string key = cache_key(req, 0);
    benchmark::DoNotOptimize(key.data());
  }
}
BENCHMARK(BM_CacheKey);

void BM_MaskedNll(benchmark::State& state) {
  const size_t s = size_t(state.range(0)), v = 512;
  DetRng rng(1);
  Matrix logits(s, v);
  for (double& x : logits.data) x = rng.next_normal();
  std::vector<int> ids(s, 3);
  std::vector<bool> mask(s, false);
  for (size_t i = s / 2; i < s; ++i) mask[i] = true;
  for (auto _ : state) {
    Matrix dlogits;
    double loss = masked_nll_with_grad(logits, ids, mask, &dlogits);
    benchmark::DoNotOptimize(loss);
  }
}
BENCHMARK(BM_MaskedNll)->Arg(32)->Arg(256);

}  // namespace
