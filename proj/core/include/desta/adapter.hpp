#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "desta/tensor.hpp"

namespace desta {

// Modality adapter dimensions. Defaults follow the Whisper-small/8B-LLM
// setup: 64 queries, 2 decoder blocks, 4x feed-forward expansion.
struct AdapterConfig {
  size_t n_queries = 64;
  size_t n_blocks = 2;
  size_t d_model = 768;
  size_t d_enc = 768;
  size_t d_llm = 4096;
  size_t n_enc_layers = 13;  // encoder hidden states aggregated (incl. embedding)
  size_t n_heads = 12;
  size_t ffn_mult = 4;
  // degenerate configs for the parameter-count identities; both require the
  // adjacent dims to match so the map can be dropped entirely
  bool use_input_map = true;
  bool use_output_proj = true;

  void validate() const;  // throws ValidationError
};

// Frozen encoder hidden states, one [frames, d_enc] slab per layer.
struct EncoderStates {
  size_t n_layers = 0;
  size_t frames = 0;
  size_t d_enc = 0;
  std::vector<double> data;  // [layer][frame][dim] row-major

  EncoderStates() = default;
  EncoderStates(size_t l, size_t t, size_t e)
      : n_layers(l), frames(t), d_enc(e), data(l * t * e, 0.0) {}

  double& at(size_t l, size_t t, size_t e) {
    return data[(l * frames + t) * d_enc + e];
  }
  double at(size_t l, size_t t, size_t e) const {
    return data[(l * frames + t) * d_enc + e];
  }
};

struct LinearParams {
  Matrix w;               // [in, out]
  std::vector<double> b;  // [out]
};

struct LayerNormParams {
  std::vector<double> gain;
  std::vector<double> offset;
};

// One pre-norm decoder block: self-attention over the queries,
// cross-attention from queries to the mapped encoder frames, then the
// feed-forward, each behind its own LayerNorm with a residual.
struct BlockParams {
  LayerNormParams ln_self;
  LinearParams sa_q, sa_k, sa_v, sa_o;
  LayerNormParams ln_cross;
  LinearParams ca_q, ca_k, ca_v, ca_o;
  LayerNormParams ln_ffn;
  LinearParams ffn_in, ffn_out;
};

struct AdapterParams {
  Matrix queries;                    // [n_queries, d_model]
  std::vector<double> layer_logits;  // [n_enc_layers], softmax-normalized
  LinearParams input_map;            // d_enc -> d_model (may be absent)
  std::vector<BlockParams> blocks;
  LinearParams output_proj;          // d_model -> d_llm (may be absent)
};

// Flat view over every learnable tensor, in a fixed canonical order shared
// by the optimizer, the checkpoint format and the gradient checks.
struct TensorRef {
  std::string name;
  double* data = nullptr;
  size_t size = 0;
  std::vector<size_t> shape;
};

std::vector<TensorRef> tensor_refs(AdapterParams& params);

// (name, element count) per tensor, computed from shapes alone.
std::vector<std::pair<std::string, size_t>> param_tally(const AdapterConfig& config);
size_t count_trainable_params(const AdapterConfig& config);

// Zeroed parameter set with the shapes the config dictates.
AdapterParams make_adapter_params(const AdapterConfig& config);
// Scaled uniform fan-in init for maps, zero layer logits, sigma=0.02
// Gaussian queries; the input map starts as identity when d_enc == d_model.
AdapterParams init_adapter_params(const AdapterConfig& config, uint64_t seed);

// softmax(layer_logits)-weighted sum over encoder layers -> [frames, d_enc].
// Throws on non-finite input.
Matrix layer_weighted_sum(const EncoderStates& states,
                          const std::vector<double>& layer_logits);
std::vector<double> softmax(const std::vector<double>& logits);

// [n_queries, d_llm] speech features, one row per query, shape independent
// of the frame count.
using SpeechFeatures = Matrix;

struct AdapterForwardCache;  // opaque; defined in adapter.cpp

// Forward pass. When cache is non-null it is filled for adapter_backward;
// the cache borrows `states`, which must stay alive until backward runs.
// No positional encoding is applied to frames or queries, so the output is
// invariant to frame permutations.
SpeechFeatures adapter_forward(const EncoderStates& states,
                               const AdapterParams& params,
                               const AdapterConfig& config,
                               AdapterForwardCache* cache = nullptr);

// Analytic gradients for every tensor in AdapterParams, accumulated into
// `grads` (caller zeroes or accumulates across a batch as needed). Throws
// if the cache does not match (params, config, grad_out shape).
void adapter_backward(const Matrix& grad_out, const AdapterForwardCache& cache,
                      const AdapterParams& params, const AdapterConfig& config,
                      AdapterParams& grads);

// Cache must be heap-friendly for callers; expose create/destroy.
AdapterForwardCache* new_adapter_cache();
void free_adapter_cache(AdapterForwardCache* cache);

// RAII wrapper so call sites don't juggle the raw pointer.
class AdapterCache {
 public:
  AdapterCache() : cache_(new_adapter_cache()) {}
  ~AdapterCache() { free_adapter_cache(cache_); }
  AdapterCache(const AdapterCache&) = delete;
  AdapterCache& operator=(const AdapterCache&) = delete;
  AdapterForwardCache* get() { return cache_; }

 private:
  AdapterForwardCache* cache_;
};

// Deterministic stand-in for the frozen speech encoder: pseudo-random states
// keyed by (record_id, seed), frame count proportional to duration.
EncoderStates mock_encoder(const std::string& record_id,
                           double audio_duration_s, const AdapterConfig& config,
                           uint64_t seed, double frames_per_s = 50.0);

std::string encoder_states_digest(const EncoderStates& states);

}  // namespace desta
