#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "desta/adapter.hpp"
#include "desta/chat.hpp"
#include "desta/tokenizer.hpp"
#include "desta/toy_lm.hpp"

namespace desta {

struct TrainConfig {
  double lr = 1e-4;
  size_t warmup_steps = 2000;
  size_t total_steps = 0;  // 0: derived as epochs * ceil(corpus / batch_size)
  size_t batch_size = 16;
  size_t epochs = 10;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double min_lr = 0.0;
};

// Linear warm-up from 0 to lr over warmup_steps, then cosine annealing to
// min_lr at total_steps. Valid for 0 <= step <= total_steps.
double lr_at(size_t step, const TrainConfig& config);

// The training-time stand-in for the seed transcript: the template slot is
// replaced by the adapter's speech feature rows followed by the
// transcription token embeddings.
inline constexpr const char* kDefaultTrainTemplate =
    "{slot}\nWhat can you hear from the audio?";

struct AssembledSequence {
  Matrix embeddings;            // [S, d_llm]
  std::vector<int> token_ids;   // -1 on speech feature rows
  std::vector<bool> loss_mask;  // true exactly on target positions
  size_t speech_begin = 0;
  size_t speech_len = 0;
  size_t target_begin = 0;
  size_t target_len = 0;
};

// Builds [prefix][speech rows][transcription][suffix][target]. The embedding
// table comes from the frozen LM; the pair's target tokens are the only
// masked-in positions. Throws if the template lacks the {slot} marker or the
// target encodes to nothing.
AssembledSequence assemble(const TrainingPair& pair, const SpeechFeatures& speech,
                           const std::string& transcription,
                           const Tokenizer& tokenizer, const FrozenToyLM& lm,
                           const std::string& template_text = kDefaultTrainTemplate);

// Next-token alignment: entry i describes the token position i predicts
// (i.e. position i+1). mask is false at the last position.
struct ShiftedTargets {
  std::vector<int> ids;
  std::vector<bool> mask;
};
ShiftedTargets shifted_targets(const AssembledSequence& seq);

// Mean negative log-softmax over masked positions. logits[i] must already
// be aligned so position i predicts token i+1. Throws when no position is
// masked.
double masked_nll(const Matrix& logits, const std::vector<int>& target_ids,
                  const std::vector<bool>& loss_mask);
// Same, also writing dloss/dlogits (exactly zero at unmasked positions).
double masked_nll_with_grad(const Matrix& logits,
                            const std::vector<int>& target_ids,
                            const std::vector<bool>& loss_mask, Matrix* dlogits);

// Textbook Adam over the flat tensor list.
struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  size_t t = 0;
};
void adam_step(std::vector<TensorRef>& params, const std::vector<TensorRef>& grads,
               AdamState& state, double lr, const TrainConfig& config);

struct TrainItem {
  TrainingPair pair;
  EncoderStates states;       // frozen encoder output for this record
  std::string transcription;  // ground truth or decoder output, caller's pick
};

// Mean item loss over one batch, adapter gradients accumulated into grads.
// Items are processed in ascending index order no matter how the batch is
// given, so the reduction is order-independent.
double batch_loss_and_grads(const std::vector<TrainItem>& corpus,
                            std::vector<size_t> batch_indices,
                            const AdapterParams& params,
                            const AdapterConfig& adapter_config,
                            const FrozenToyLM& lm, const Tokenizer& tokenizer,
                            const std::string& template_text,
                            AdapterParams& grads);

struct StepStat {
  size_t step = 0;  // 1-based
  double lr = 0.0;
  double loss = 0.0;
};

struct TrainOptions {
  std::string template_text = kDefaultTrainTemplate;
  std::string checkpoint_dir;   // empty: no checkpoints written
  size_t checkpoint_every = 0;  // 0: only the final checkpoint
  std::string resume_from;      // checkpoint path to continue from
};

struct TrainResult {
  std::vector<StepStat> trace;
  size_t steps_run = 0;
  double final_loss = 0.0;
};

// Runs Adam with the warm-up + cosine schedule over the corpus. Only the
// adapter parameters move; the toy LM and the encoder states are digested
// before and after and any drift is fatal. Fully deterministic given seed.
TrainResult train(const std::vector<TrainItem>& corpus, AdapterParams& params,
                  const AdapterConfig& adapter_config, const FrozenToyLM& lm,
                  const Tokenizer& tokenizer, const TrainConfig& config,
                  uint64_t seed, const TrainOptions& options = {});

void write_loss_trace_csv(const std::vector<StepStat>& trace,
                          const std::string& path);

}  // namespace desta
