#include <benchmark/benchmark.h>

#include "desta/adapter.hpp"

using namespace desta;

namespace {

AdapterConfig bench_config(size_t d_model, size_t n_queries) {
  AdapterConfig c;
  c.n_queries = n_queries;
  c.n_blocks = 2;
  c.d_model = d_model;
  c.d_enc = d_model;
  c.d_llm = d_model * 2;
  c.n_enc_layers = 4;
  c.n_heads = 4;
  c.ffn_mult = 4;
  return c;
}

void BM_AdapterForward(benchmark::State& state) {
  AdapterConfig config = bench_config(size_t(state.range(0)), 16);
  AdapterParams params = init_adapter_params(config, 1);
  EncoderStates states = mock_encoder("bench", 2.0, config, 2);
  for (auto _ : state) {
    SpeechFeatures out = adapter_forward(states, params, config);
    benchmark::DoNotOptimize(out.data.data());
  }
}
BENCHMARK(BM_AdapterForward)->Arg(32)->Arg(64)->Arg(128);

void BM_AdapterForwardBackward(benchmark::State& state) {
  AdapterConfig config = bench_config(size_t(state.range(0)), 16);
  AdapterParams params = init_adapter_params(config, 1);
  EncoderStates states = mock_encoder("bench", 2.0, config, 2);
  Matrix probe(config.n_queries, config.d_llm, 0.5);
  AdapterParams grads = make_adapter_params(config);
  for (auto _ : state) {
    AdapterCache cache;
    adapter_forward(states, params, config, cache.get());
    adapter_backward(probe, *cache.get(), params, config, grads);
    benchmark::DoNotOptimize(grads.queries.data.data());
  }
}
BENCHMARK(BM_AdapterForwardBackward)->Arg(32)->Arg(64);

void BM_LayerWeightedSum(benchmark::State& state) {
  AdapterConfig config = bench_config(64, 16);
  config.n_enc_layers = size_t(state.range(0));
  EncoderStates states = mock_encoder("bench", 10.0, config, 3);
  std::vector<double> logits(config.n_enc_layers, 0.1);
  for (auto _ : state) {
    Matrix out = layer_weighted_sum(states, logits);
    benchmark::DoNotOptimize(out.data.data());
  }
}
BENCHMARK(BM_LayerWeightedSum)->Arg(4)->Arg(13);

}  // namespace
