#include "desta/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "desta/checkpoint.hpp"
#include "desta/error.hpp"

namespace desta {

double lr_at(size_t step, const TrainConfig& config) {
  const size_t total = config.total_steps;
  if (config.warmup_steps > total)
    throw ValidationError("warmup_steps exceeds total_steps");
  if (step > total)
    throw ValidationError("step " + std::to_string(step) +
                          " outside schedule of " + std::to_string(total));
  if (step < config.warmup_steps)
    return config.lr * double(step) / double(config.warmup_steps);
  if (total == config.warmup_steps) return config.lr;
  double t = double(step - config.warmup_steps) /
             double(total - config.warmup_steps);
  return config.min_lr +
         (config.lr - config.min_lr) * 0.5 * (1.0 + std::cos(M_PI * t));
}

AssembledSequence assemble(const TrainingPair& pair, const SpeechFeatures& speech,
                           const std::string& transcription,
                           const Tokenizer& tokenizer, const FrozenToyLM& lm,
                           const std::string& template_text) {
  size_t slot = template_text.find("{slot}");
  if (slot == std::string::npos)
    throw ValidationError("train template has no {slot} marker");
  if (speech.cols != lm.d_llm)
    throw ValidationError("speech feature width " + std::to_string(speech.cols) +
                          " != LM d_llm " + std::to_string(lm.d_llm));

  std::vector<int> prefix_ids = tokenizer.encode(template_text.substr(0, slot));
  std::vector<int> transcription_ids = tokenizer.encode(transcription);
  std::vector<int> suffix_ids = tokenizer.encode(template_text.substr(slot + 6));
  std::vector<int> target_ids = tokenizer.encode(pair.target);
  if (target_ids.empty())
    throw ValidationError("pair " + pair.record_id + " has an empty target");

  const size_t s = prefix_ids.size() + speech.rows + transcription_ids.size() +
                   suffix_ids.size() + target_ids.size();

  AssembledSequence seq;
  seq.embeddings = Matrix(s, lm.d_llm);
  seq.token_ids.assign(s, -1);
  seq.loss_mask.assign(s, false);

  size_t pos = 0;
  auto put_tokens = [&](const std::vector<int>& ids) {
    for (int id : ids) {
      seq.token_ids[pos] = id;
      const double* row = lm.embedding.row(size_t(id));
      std::copy(row, row + lm.d_llm, seq.embeddings.row(pos));
      ++pos;
    }
  };

  put_tokens(prefix_ids);
  seq.speech_begin = pos;
  seq.speech_len = speech.rows;
  for (size_t r = 0; r < speech.rows; ++r) {
    std::copy(speech.row(r), speech.row(r) + speech.cols,
              seq.embeddings.row(pos));
    ++pos;
  }
  put_tokens(transcription_ids);
  put_tokens(suffix_ids);
  seq.target_begin = pos;
  seq.target_len = target_ids.size();
  put_tokens(target_ids);
  for (size_t i = seq.target_begin; i < seq.target_begin + seq.target_len; ++i)
    seq.loss_mask[i] = true;
  return seq;
}

ShiftedTargets shifted_targets(const AssembledSequence& seq) {
  const size_t s = seq.token_ids.size();
  ShiftedTargets out;
  out.ids.assign(s, -1);
  out.mask.assign(s, false);
  for (size_t i = 0; i + 1 < s; ++i) {
    out.ids[i] = seq.token_ids[i + 1];
    out.mask[i] = seq.loss_mask[i + 1];
  }
  return out;
}

namespace {

// -log softmax(row)[target], numerically stable
double row_nll(const double* logits, size_t v, int target) {
  double maxv = logits[0];
  for (size_t j = 1; j < v; ++j) maxv = std::max(maxv, logits[j]);
  double sum = 0.0;
  for (size_t j = 0; j < v; ++j) sum += std::exp(logits[j] - maxv);
  return std::log(sum) + maxv - logits[size_t(target)];
}

size_t masked_count(const std::vector<bool>& mask) {
  size_t n = 0;
  for (bool b : mask) n += b ? 1 : 0;
  return n;
}

}  // namespace

double masked_nll(const Matrix& logits, const std::vector<int>& target_ids,
                  const std::vector<bool>& loss_mask) {
  return masked_nll_with_grad(logits, target_ids, loss_mask, nullptr);
}

double masked_nll_with_grad(const Matrix& logits,
                            const std::vector<int>& target_ids,
                            const std::vector<bool>& loss_mask,
                            Matrix* dlogits) {
  if (target_ids.size() != logits.rows || loss_mask.size() != logits.rows)
    throw ValidationError("masked_nll: targets/mask not aligned with logits");
  const size_t n = masked_count(loss_mask);
  if (n == 0) throw ValidationError("masked_nll: no masked positions");

  if (dlogits) *dlogits = Matrix(logits.rows, logits.cols);
  double total = 0.0;
  for (size_t i = 0; i < logits.rows; ++i) {
    if (!loss_mask[i]) continue;
    int target = target_ids[i];
    if (target < 0 || size_t(target) >= logits.cols)
      throw ValidationError("masked_nll: target id out of range at position " +
                            std::to_string(i));
    const double* row = logits.row(i);
    total += row_nll(row, logits.cols, target);
    if (dlogits) {
      // d(-log p_t)/dz = softmax(z) - onehot(t), averaged over masked count
      double maxv = row[0];
      for (size_t j = 1; j < logits.cols; ++j) maxv = std::max(maxv, row[j]);
      double sum = 0.0;
      for (size_t j = 0; j < logits.cols; ++j) sum += std::exp(row[j] - maxv);
      double* drow = dlogits->row(i);
      for (size_t j = 0; j < logits.cols; ++j)
        drow[j] = std::exp(row[j] - maxv) / sum / double(n);
      drow[size_t(target)] -= 1.0 / double(n);
    }
  }
  return total / double(n);
}

void adam_step(std::vector<TensorRef>& params, const std::vector<TensorRef>& grads,
               AdamState& state, double lr, const TrainConfig& config) {
  size_t total = 0;
  for (const auto& p : params) total += p.size;
  if (state.m.empty()) {
    state.m.assign(total, 0.0);
    state.v.assign(total, 0.0);
  }
  if (state.m.size() != total)
    throw ValidationError("adam state does not match parameter count");

  state.t += 1;
  const double b1 = config.adam_beta1;
  const double b2 = config.adam_beta2;
  const double bc1 = 1.0 - std::pow(b1, double(state.t));
  const double bc2 = 1.0 - std::pow(b2, double(state.t));

  size_t offset = 0;
  for (size_t i = 0; i < params.size(); ++i) {
    double* p = params[i].data;
    const double* g = grads[i].data;
    for (size_t j = 0; j < params[i].size; ++j) {
      double& m = state.m[offset + j];
      double& v = state.v[offset + j];
      m = b1 * m + (1.0 - b1) * g[j];
      v = b2 * v + (1.0 - b2) * g[j] * g[j];
      double mhat = m / bc1;
      double vhat = v / bc2;
      p[j] -= lr * mhat / (std::sqrt(vhat) + config.adam_eps);
    }
    offset += params[i].size;
  }
}

double batch_loss_and_grads(const std::vector<TrainItem>& corpus,
                            std::vector<size_t> batch_indices,
                            const AdapterParams& params,
                            const AdapterConfig& adapter_config,
                            const FrozenToyLM& lm, const Tokenizer& tokenizer,
                            const std::string& template_text,
                            AdapterParams& grads) {
  if (batch_indices.empty())
    throw ValidationError("empty batch");
  std::sort(batch_indices.begin(), batch_indices.end());

  double loss_sum = 0.0;
  const double inv_batch = 1.0 / double(batch_indices.size());
  for (size_t idx : batch_indices) {
    const TrainItem& item = corpus.at(idx);

    AdapterCache cache;
    SpeechFeatures speech =
        adapter_forward(item.states, params, adapter_config, cache.get());
    AssembledSequence seq = assemble(item.pair, speech, item.transcription,
                                     tokenizer, lm, template_text);
    FrozenToyLM::Cache lm_cache;
    Matrix logits = lm.forward(seq.embeddings, &lm_cache);
    ShiftedTargets shifted = shifted_targets(seq);

    Matrix dlogits;
    double loss = masked_nll_with_grad(logits, shifted.ids, shifted.mask, &dlogits);
    loss_sum += loss;

    // mean over the batch
    for (double& v : dlogits.data) v *= inv_batch;
    Matrix dembed = lm.backward(dlogits, seq.embeddings, lm_cache);

    Matrix dspeech(seq.speech_len, lm.d_llm);
    for (size_t r = 0; r < seq.speech_len; ++r) {
      const double* src = dembed.row(seq.speech_begin + r);
      std::copy(src, src + lm.d_llm, dspeech.row(r));
    }
    adapter_backward(dspeech, *cache.get(), params, adapter_config, grads);
  }
  return loss_sum * inv_batch;
}

TrainResult train(const std::vector<TrainItem>& corpus, AdapterParams& params,
                  const AdapterConfig& adapter_config, const FrozenToyLM& lm,
                  const Tokenizer& tokenizer, const TrainConfig& config,
                  uint64_t seed, const TrainOptions& options) {
  if (corpus.empty()) throw ValidationError("training corpus is empty");
  if (config.batch_size < 1) throw ValidationError("batch_size must be >= 1");

  const size_t n = corpus.size();
  const size_t steps_per_epoch = (n + config.batch_size - 1) / config.batch_size;
  TrainConfig cfg = config;
  if (cfg.total_steps == 0) cfg.total_steps = cfg.epochs * steps_per_epoch;
  if (cfg.warmup_steps > cfg.total_steps)
    throw ValidationError("warmup_steps exceeds total_steps");

  // frozen-ness guard: digest everything that must not move
  const std::string lm_digest_before = lm.digest();
  std::string states_digest_before;
  for (const auto& item : corpus)
    states_digest_before += encoder_states_digest(item.states);

  AdamState adam;
  size_t start_step = 0;
  if (!options.resume_from.empty()) {
    Checkpoint ckpt = load_checkpoint(options.resume_from);
    params = std::move(ckpt.params);
    auto it_m = ckpt.extra.find("adam.m");
    auto it_v = ckpt.extra.find("adam.v");
    auto it_t = ckpt.extra.find("adam.t");
    auto it_s = ckpt.extra.find("train.step");
    if (it_m == ckpt.extra.end() || it_v == ckpt.extra.end() ||
        it_t == ckpt.extra.end() || it_s == ckpt.extra.end())
      throw ValidationError("checkpoint lacks optimizer state, cannot resume");
    adam.m = it_m->second;
    adam.v = it_v->second;
    adam.t = size_t(it_t->second.at(0));
    start_step = size_t(it_s->second.at(0));
  }

  auto save = [&](const std::string& name, size_t step) {
    if (options.checkpoint_dir.empty()) return;
    std::filesystem::create_directories(options.checkpoint_dir);
    std::map<std::string, std::vector<double>> extra;
    extra["adam.m"] = adam.m;
    extra["adam.v"] = adam.v;
    extra["adam.t"] = {double(adam.t)};
    extra["train.step"] = {double(step)};
    save_checkpoint(
        (std::filesystem::path(options.checkpoint_dir) / name).string(),
        adapter_config, params, extra);
  };

  TrainResult result;
  AdapterParams grads = make_adapter_params(adapter_config);

  for (size_t step = start_step; step < cfg.total_steps; ++step) {
    const size_t epoch = step / steps_per_epoch;
    const size_t batch_in_epoch = step % steps_per_epoch;

    // per-epoch order, reshuffled deterministically
    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;
    DetRng rng(mix64(seed, epoch));
    for (size_t i = 0; i + 1 < n; ++i) {
      size_t j = i + rng.next_index(n - i);
      std::swap(order[i], order[j]);
    }

    const size_t begin = batch_in_epoch * config.batch_size;
    const size_t end = std::min(begin + config.batch_size, n);
    std::vector<size_t> batch(order.begin() + begin, order.begin() + end);

    for (auto& ref : tensor_refs(grads))
      std::fill(ref.data, ref.data + ref.size, 0.0);
    double loss =
        batch_loss_and_grads(corpus, batch, params, adapter_config, lm,
                             tokenizer, options.template_text, grads);
    if (!std::isfinite(loss))
      throw ValidationError("non-finite loss at step " + std::to_string(step + 1));

    const double lr = lr_at(step + 1, cfg);
    auto param_refs = tensor_refs(params);
    auto g_refs = tensor_refs(grads);
    adam_step(param_refs, g_refs, adam, lr, cfg);

    result.trace.push_back({step + 1, lr, loss});
    result.final_loss = loss;
    ++result.steps_run;

    if (options.checkpoint_every > 0 && (step + 1) % options.checkpoint_every == 0)
      save("ckpt_" + std::to_string(step + 1) + ".dstackpt", step + 1);
  }
  save("final.dstackpt", cfg.total_steps);

  if (lm.digest() != lm_digest_before)
    throw ValidationError("frozen toy LM drifted during training");
  std::string states_digest_after;
  for (const auto& item : corpus)
    states_digest_after += encoder_states_digest(item.states);
  if (states_digest_after != states_digest_before)
    throw ValidationError("frozen encoder states drifted during training");

  return result;
}

void write_loss_trace_csv(const std::vector<StepStat>& trace,
                          const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write loss trace: " + path);
  out << "step,lr,loss\n";
  char line[96];
  for (const auto& s : trace) {
    std::snprintf(line, sizeof(line), "%zu,%.10g,%.10g\n", s.step, s.lr, s.loss);
    out << line;
  }
}

}  // namespace desta
