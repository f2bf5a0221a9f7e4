#include "desta/toy_lm.hpp"

#include <cmath>

#include "desta/error.hpp"
#include "desta/sha256.hpp"

namespace desta {

FrozenToyLM FrozenToyLM::make(size_t vocab, size_t d_llm, size_t d_hidden,
                              uint64_t seed) {
  FrozenToyLM lm;
  lm.vocab = vocab;
  lm.d_llm = d_llm;
  lm.d_hidden = d_hidden;

  DetRng rng(mix64(seed, 0x746f796cULL));
  auto fill = [&rng](Matrix& m, size_t r, size_t c, double scale) {
    m = Matrix(r, c);
    for (double& v : m.data) v = scale * rng.next_normal();
  };
  fill(lm.embedding, vocab, d_llm, 1.0 / std::sqrt(double(d_llm)));
  fill(lm.w_direct, d_llm, d_hidden, 1.0 / std::sqrt(double(d_llm)));
  fill(lm.w_recent, d_llm, d_hidden, 1.0 / std::sqrt(double(d_llm)));
  fill(lm.w_mean, d_llm, d_hidden, 1.0 / std::sqrt(double(d_llm)));
  lm.b_hidden.assign(d_hidden, 0.0);
  // the tanh keeps |h| <= 1, so this scale bounds the reachable logit
  // margin; 2.5 gives the frozen head enough headroom to be decisive
  fill(lm.w_vocab, d_hidden, vocab, 2.5 / std::sqrt(double(d_hidden)));
  return lm;
}

Matrix FrozenToyLM::forward(const Matrix& embeddings, Cache* cache) const {
  if (embeddings.cols != d_llm)
    throw ValidationError("toy LM: embeddings width " +
                          std::to_string(embeddings.cols) + " != d_llm " +
                          std::to_string(d_llm));
  const size_t s = embeddings.rows;

  Matrix ema(s, d_llm);
  Matrix mean(s, d_llm);
  std::vector<double> running_sum(d_llm, 0.0);
  for (size_t i = 1; i < s; ++i) {
    const double* prev_ema = ema.row(i - 1);
    const double* prev_e = embeddings.row(i - 1);
    double* ema_i = ema.row(i);
    double* mean_i = mean.row(i);
    for (size_t j = 0; j < d_llm; ++j) {
      ema_i[j] = context_decay * prev_ema[j] + (1.0 - context_decay) * prev_e[j];
      running_sum[j] += prev_e[j];
      mean_i[j] = running_sum[j] / double(i);
    }
  }

  Matrix pre = matmul(embeddings, w_direct);
  add_inplace(pre, matmul(ema, w_recent));
  add_inplace(pre, matmul(mean, w_mean));
  add_row_bias(pre, b_hidden);
  Matrix hidden(s, d_hidden);
  for (size_t i = 0; i < pre.data.size(); ++i)
    hidden.data[i] = std::tanh(pre.data[i]);

  Matrix logits = matmul(hidden, w_vocab);
  if (cache) {
    cache->ema = std::move(ema);
    cache->mean = std::move(mean);
    cache->hidden = std::move(hidden);
  }
  return logits;
}

Matrix FrozenToyLM::backward(const Matrix& dlogits, const Matrix& embeddings,
                             const Cache& cache) const {
  const size_t s = embeddings.rows;
  if (dlogits.rows != s || dlogits.cols != vocab)
    throw ValidationError("toy LM: dlogits shape mismatch");

  // through the vocab projection and tanh
  Matrix dhidden = matmul_nt(dlogits, w_vocab);
  for (size_t i = 0; i < dhidden.data.size(); ++i) {
    double h = cache.hidden.data[i];
    dhidden.data[i] *= 1.0 - h * h;
  }

  Matrix de = matmul_nt(dhidden, w_direct);
  Matrix dema = matmul_nt(dhidden, w_recent);
  Matrix dmean = matmul_nt(dhidden, w_mean);

  // reverse the EMA recurrence: ema_i = decay*ema_{i-1} + (1-decay)*e_{i-1}
  for (size_t i = s; i-- > 1;) {
    const double* dema_i = dema.row(i);
    double* dema_prev = dema.row(i - 1);
    double* de_prev = de.row(i - 1);
    for (size_t j = 0; j < d_llm; ++j) {
      dema_prev[j] += context_decay * dema_i[j];
      de_prev[j] += (1.0 - context_decay) * dema_i[j];
    }
  }

  // mean_i spreads 1/i to every earlier position: suffix-accumulate
  std::vector<double> acc(d_llm, 0.0);
  for (size_t j = s; j-- > 1;) {
    const double* dmean_j = dmean.row(j);
    double* de_prev = de.row(j - 1);
    for (size_t k = 0; k < d_llm; ++k) {
      acc[k] += dmean_j[k] / double(j);
      de_prev[k] += acc[k];
    }
  }
  return de;
}

std::string FrozenToyLM::digest() const {
  auto bytes = [](const Matrix& m) {
    return std::string(reinterpret_cast<const char*>(m.data.data()),
                       m.data.size() * sizeof(double));
  };
  std::string blob = std::to_string(vocab) + ":" + std::to_string(d_llm) + ":" +
                     std::to_string(d_hidden) + ":" +
                     std::to_string(context_decay) + ":";
  blob += bytes(embedding) + bytes(w_direct) + bytes(w_recent) +
          bytes(w_mean) + bytes(w_vocab);
  blob += std::string(reinterpret_cast<const char*>(b_hidden.data()),
                      b_hidden.size() * sizeof(double));
  return sha256_hex(blob);
}

}  // namespace desta
