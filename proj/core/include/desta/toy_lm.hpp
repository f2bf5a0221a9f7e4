#pragma once

#include <cstdint>
#include <string>

#include "desta/tensor.hpp"

namespace desta {

// Frozen causal scorer standing in for the frozen LLM at desk scale. Every
// tensor is fixed at construction; training only flows gradients *through*
// it into the embeddings handed in (and from there into the adapter).
//
// Scoring mixes three causal channels: the position's own embedding, a
// recency-weighted context and a uniform prefix mean (so distant positions
// keep an undamped path back to the speech rows),
//   ema_0 = 0,   ema_i = decay * ema_{i-1} + (1 - decay) * e_{i-1}
//   mean_0 = 0,  mean_i = (e_0 + ... + e_{i-1}) / i
//   h_i = tanh(e_i W_direct + ema_i W_recent + mean_i W_mean + b)
//   logits_i = h_i W_vocab
struct FrozenToyLM {
  size_t vocab = 0;
  size_t d_llm = 0;
  size_t d_hidden = 0;
  double context_decay = 0.8;

  Matrix embedding;             // [vocab, d_llm]
  Matrix w_direct;              // [d_llm, d_hidden]
  Matrix w_recent;              // [d_llm, d_hidden]
  Matrix w_mean;                // [d_llm, d_hidden]
  std::vector<double> b_hidden; // [d_hidden]
  Matrix w_vocab;               // [d_hidden, vocab]

  static FrozenToyLM make(size_t vocab, size_t d_llm, size_t d_hidden,
                          uint64_t seed);

  struct Cache {
    Matrix ema;     // [S, d_llm]
    Matrix mean;    // [S, d_llm]
    Matrix hidden;  // [S, d_hidden], post-tanh
  };

  // embeddings [S, d_llm] -> logits [S, vocab]
  Matrix forward(const Matrix& embeddings, Cache* cache = nullptr) const;

  // dlogits [S, vocab] -> dembeddings [S, d_llm]; the LM's own tensors are
  // frozen so no parameter gradients exist.
  Matrix backward(const Matrix& dlogits, const Matrix& embeddings,
                  const Cache& cache) const;

  std::string digest() const;
};

}  // namespace desta
