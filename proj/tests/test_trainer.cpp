#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "desta/error.hpp"
#include "desta/tokenizer.hpp"
#include "desta/toy_lm.hpp"
#include "desta/trainer.hpp"
#include "testutil.hpp"

using namespace desta;

TEST_CASE("tokenizer basics") {
  Tokenizer tok = Tokenizer::build({"the cat sat", "the cat ran", "a dog"});
  auto ids = tok.encode("the cat");
  REQUIRE(ids.size() == 2);
  CHECK(ids[0] >= Tokenizer::kWordBase);
  CHECK(tok.decode(ids) == "the cat");
  // out-of-vocabulary words fall back to bytes
  auto oov = tok.encode("zebra");
  CHECK(oov.size() == 5);
  for (int id : oov) {
    CHECK(id >= Tokenizer::kByteBase);
    CHECK(id < Tokenizer::kWordBase);
  }
  // deterministic across builds
  Tokenizer tok2 = Tokenizer::build({"the cat sat", "the cat ran", "a dog"});
  CHECK(tok2.encode("the cat sat ran a dog") == tok.encode("the cat sat ran a dog"));
}

TEST_CASE("lr schedule") {
  TrainConfig cfg;
  cfg.lr = 1e-4;
  cfg.warmup_steps = 2000;
  cfg.total_steps = 20000;
  cfg.min_lr = 0.0;

  CHECK(lr_at(0, cfg) == 0.0);
  CHECK(lr_at(2000, cfg) == doctest::Approx(1e-4).epsilon(1e-12));
  CHECK(lr_at(20000, cfg) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(lr_at(1000, cfg) == doctest::Approx(5e-5));

  SUBCASE("out of range is fatal") {
    CHECK_THROWS_AS(lr_at(20001, cfg), ValidationError);
    TrainConfig bad = cfg;
    bad.warmup_steps = 30000;
    CHECK_THROWS_AS(lr_at(0, bad), ValidationError);
  }

  SUBCASE("no jumps anywhere in a 20k sweep") {
    double bound = cfg.lr * (1.0 / double(cfg.warmup_steps) +
                             M_PI / double(cfg.total_steps - cfg.warmup_steps));
    for (size_t s = 0; s < cfg.total_steps; ++s) {
      CHECK(std::abs(lr_at(s + 1, cfg) - lr_at(s, cfg)) <= bound);
    }
  }

  SUBCASE("min_lr is the cosine floor") {
    cfg.min_lr = 1e-6;
    CHECK(lr_at(20000, cfg) == doctest::Approx(1e-6).epsilon(1e-12));
  }
}

TEST_CASE("masked_nll") {
  SUBCASE("uniform logits over V=10 cost ln 10") {
    Matrix logits(4, 10, 0.25);  // any constant row is uniform after softmax
    std::vector<int> ids = {1, 2, 3, 4};
    std::vector<bool> mask = {true, true, true, true};
    CHECK(std::abs(masked_nll(logits, ids, mask) - std::log(10.0)) < 1e-12);
  }

  SUBCASE("one-hot logits with margin 30 cost under 1e-9") {
    Matrix logits(1, 10, 0.0);
    logits.at(0, 3) = 30.0;
    CHECK(masked_nll(logits, {3}, {true}) < 1e-9);
  }

  SUBCASE("matches the per-position loop oracle") {
    DetRng rng(5);
    Matrix logits(6, 8);
    for (double& v : logits.data) v = rng.next_normal();
    std::vector<int> ids = {1, 7, 0, 3, 5, 2};
    std::vector<bool> mask = {true, false, true, true, false, true};

    double expected = 0;
    size_t n = 0;
    for (size_t i = 0; i < 6; ++i) {
      if (!mask[i]) continue;
      double denom = 0;
      for (size_t j = 0; j < 8; ++j) denom += std::exp(logits.at(i, j));
      expected += -std::log(std::exp(logits.at(i, size_t(ids[i]))) / denom);
      ++n;
    }
    expected /= double(n);
    CHECK(masked_nll(logits, ids, mask) == doctest::Approx(expected).epsilon(1e-12));
  }

  SUBCASE("no masked positions is fatal") {
    Matrix logits(3, 4, 0.0);
    CHECK_THROWS_AS(masked_nll(logits, {0, 0, 0}, {false, false, false}),
                    ValidationError);
  }

  SUBCASE("gradient is exactly zero at non-masked positions") {
    DetRng rng(6);
    Matrix logits(12, 10);
    for (double& v : logits.data) v = rng.next_normal();
    std::vector<int> ids(12, 4);
    std::vector<bool> mask(12, false);
    mask[5] = mask[6] = mask[11] = true;
    Matrix dlogits;
    masked_nll_with_grad(logits, ids, mask, &dlogits);
    for (size_t i = 0; i < 12; ++i) {
      for (size_t j = 0; j < 10; ++j) {
        if (mask[i]) continue;
        CHECK(dlogits.at(i, j) == 0.0);
      }
    }
    // masked rows sum to ~0 (softmax minus one-hot)
    for (size_t i : {size_t(5), size_t(6), size_t(11)}) {
      double sum = 0;
      for (size_t j = 0; j < 10; ++j) sum += dlogits.at(i, j);
      CHECK(std::abs(sum) < 1e-12);
    }
  }
}

TEST_CASE("toy LM backward agrees with finite differences") {
  FrozenToyLM lm = FrozenToyLM::make(7, 4, 6, 99);
  DetRng rng(7);
  Matrix embeddings(5, 4);
  for (double& v : embeddings.data) v = rng.next_normal();
  Matrix probe(5, 7);
  for (double& v : probe.data) v = rng.next_normal();

  FrozenToyLM::Cache cache;
  Matrix logits = lm.forward(embeddings, &cache);
  Matrix de = lm.backward(probe, embeddings, cache);

  auto loss = [&](const Matrix& e) {
    Matrix l = lm.forward(e);
    double acc = 0;
    for (size_t i = 0; i < l.data.size(); ++i) acc += l.data[i] * probe.data[i];
    return acc;
  };
  const double eps = 1e-6;
  for (size_t i = 0; i < embeddings.data.size(); ++i) {
    Matrix up = embeddings, down = embeddings;
    up.data[i] += eps;
    down.data[i] -= eps;
    double numeric = (loss(up) - loss(down)) / (2 * eps);
    CHECK(de.data[i] == doctest::Approx(numeric).epsilon(1e-5));
  }
  CHECK(lm.digest() == FrozenToyLM::make(7, 4, 6, 99).digest());
  CHECK(lm.digest() != FrozenToyLM::make(7, 4, 6, 100).digest());
}

namespace {

struct Rig {
  AdapterConfig config;
  Tokenizer tokenizer;
  FrozenToyLM lm;
  std::vector<TrainItem> corpus;
};

Rig make_rig(size_t n_items) {
  static const char* first[] = {"alpha", "bravo", "charlie", "delta",
                                "echo",  "foxtrot", "golf",  "hotel"};
  static const char* second[] = {"one", "two",  "three", "four",
                                 "five", "six", "seven", "eight"};
  Rig rig;
  rig.config.n_queries = 4;
  rig.config.n_blocks = 1;
  rig.config.d_model = 8;
  rig.config.d_enc = 8;
  rig.config.d_llm = 16;
  rig.config.n_enc_layers = 2;
  rig.config.n_heads = 2;
  rig.config.ffn_mult = 2;

  std::vector<std::string> texts = {kDefaultTrainTemplate};
  for (size_t i = 0; i < n_items; ++i) {
    texts.push_back(std::string(first[i % 8]) + " " + second[i % 8]);
    texts.push_back("word" + std::to_string(i));
  }
  rig.tokenizer = Tokenizer::build(texts, 64);
  rig.lm = FrozenToyLM::make(rig.tokenizer.vocab_size(), rig.config.d_llm, 32, 7);

  for (size_t i = 0; i < n_items; ++i) {
    TrainItem item;
    item.pair.record_id = "r" + std::to_string(i);
    item.pair.mode = "descriptive";
    item.pair.caption_index = 0;
    item.pair.target = std::string(first[i % 8]) + " " + second[i % 8];
    item.states = mock_encoder(item.pair.record_id, 0.2, rig.config, 11);
    item.transcription = "word" + std::to_string(i);
    rig.corpus.push_back(std::move(item));
  }
  return rig;
}

}  // namespace

TEST_CASE("assemble layout and mask") {
  Rig rig = make_rig(2);
  SpeechFeatures speech(rig.config.n_queries, rig.config.d_llm, 0.5);

  AssembledSequence seq = assemble(rig.corpus[0].pair, speech,
                                   rig.corpus[0].transcription, rig.tokenizer,
                                   rig.lm);
  size_t prefix = 0;  // template starts with {slot}
  size_t suffix = rig.tokenizer.encode("What can you hear from the audio?").size();
  size_t transcription = 1;
  size_t target = 2;
  CHECK(seq.embeddings.rows ==
        prefix + rig.config.n_queries + transcription + suffix + target);
  CHECK(seq.speech_len == rig.config.n_queries);
  size_t masked = 0;
  for (bool b : seq.loss_mask) masked += b ? 1 : 0;
  CHECK(masked == target);
  for (size_t i = seq.target_begin; i < seq.target_begin + seq.target_len; ++i)
    CHECK(seq.loss_mask[i]);

  SUBCASE("speech rows carry the adapter output") {
    CHECK(seq.embeddings.at(seq.speech_begin, 0) == 0.5);
  }

  SUBCASE("template without a slot is fatal") {
    CHECK_THROWS_AS(assemble(rig.corpus[0].pair, speech, "t", rig.tokenizer,
                             rig.lm, "no marker"),
                    ValidationError);
  }

  SUBCASE("empty target is rejected") {
    TrainingPair bad = rig.corpus[0].pair;
    bad.target = "";
    CHECK_THROWS_AS(assemble(bad, speech, "t", rig.tokenizer, rig.lm),
                    ValidationError);
  }

  SUBCASE("same context, different target: identical until the target region") {
    AssembledSequence other = assemble(rig.corpus[1].pair, speech,
                                       rig.corpus[0].transcription,
                                       rig.tokenizer, rig.lm);
    REQUIRE(other.target_begin == seq.target_begin);
    for (size_t i = 0; i < seq.target_begin; ++i) {
      for (size_t j = 0; j < seq.embeddings.cols; ++j)
        CHECK(seq.embeddings.at(i, j) == other.embeddings.at(i, j));
    }
  }

  SUBCASE("shifted targets align position i with token i+1") {
    ShiftedTargets shifted = shifted_targets(seq);
    REQUIRE(shifted.ids.size() == seq.token_ids.size());
    CHECK_FALSE(shifted.mask.back());
    size_t shifted_count = 0;
    for (size_t i = 0; i + 1 < seq.token_ids.size(); ++i) {
      CHECK(shifted.ids[i] == seq.token_ids[i + 1]);
      CHECK(shifted.mask[i] == seq.loss_mask[i + 1]);
      shifted_count += shifted.mask[i] ? 1 : 0;
    }
    CHECK(shifted_count == seq.target_len);
  }
}

TEST_CASE("adam matches the textbook update on a 1-parameter quadratic") {
  TrainConfig cfg;
  cfg.adam_beta1 = 0.9;
  cfg.adam_beta2 = 0.999;
  cfg.adam_eps = 1e-8;
  const double lr = 0.1;

  double theta = 1.0;
  std::vector<TensorRef> params = {{"theta", &theta, 1, {1}}};
  AdamState state;

  // independent replication of the update rule
  double expected = 1.0, m = 0, v = 0;
  for (int t = 1; t <= 3; ++t) {
    double grad_actual = theta;      // f = 0.5 theta^2
    double grad_expected = expected;
    double g[1] = {grad_actual};
    std::vector<TensorRef> grads = {{"theta", g, 1, {1}}};
    adam_step(params, grads, state, lr, cfg);

    m = 0.9 * m + 0.1 * grad_expected;
    v = 0.999 * v + 0.001 * grad_expected * grad_expected;
    double mhat = m / (1.0 - std::pow(0.9, t));
    double vhat = v / (1.0 - std::pow(0.999, t));
    expected -= lr * mhat / (std::sqrt(vhat) + 1e-8);
    CHECK(theta == doctest::Approx(expected).epsilon(1e-15));
  }
  // first step moves by almost exactly lr
  CHECK(std::abs((1.0 - lr / (1.0 + 1e-8)) -
                 (1.0 - 0.1 * 1.0 / (std::sqrt(1.0) + 1e-8))) < 1e-12);
}

TEST_CASE("batch loss is invariant to batch order") {
  Rig rig = make_rig(4);
  AdapterParams params = init_adapter_params(rig.config, 3);

  AdapterParams g1 = make_adapter_params(rig.config);
  double l1 = batch_loss_and_grads(rig.corpus, {0, 1, 2, 3}, params, rig.config,
                                   rig.lm, rig.tokenizer, kDefaultTrainTemplate,
                                   g1);
  AdapterParams g2 = make_adapter_params(rig.config);
  double l2 = batch_loss_and_grads(rig.corpus, {3, 1, 0, 2}, params, rig.config,
                                   rig.lm, rig.tokenizer, kDefaultTrainTemplate,
                                   g2);
  CHECK(l1 == l2);  // bitwise: the reduction order is canonical
  auto r1 = tensor_refs(g1);
  auto r2 = tensor_refs(g2);
  for (size_t t = 0; t < r1.size(); ++t) {
    for (size_t i = 0; i < r1[t].size; ++i)
      CHECK(r1[t].data[i] == r2[t].data[i]);
  }
}

TEST_CASE("train is deterministic and leaves frozen parts frozen") {
  Rig rig = make_rig(4);
  TrainConfig cfg;
  cfg.lr = 5e-3;
  cfg.warmup_steps = 5;
  cfg.total_steps = 40;
  cfg.batch_size = 4;
  cfg.min_lr = 1e-4;

  std::string lm_digest = rig.lm.digest();

  AdapterParams p1 = init_adapter_params(rig.config, 3);
  TrainResult r1 = train(rig.corpus, p1, rig.config, rig.lm, rig.tokenizer, cfg, 17);
  AdapterParams p2 = init_adapter_params(rig.config, 3);
  TrainResult r2 = train(rig.corpus, p2, rig.config, rig.lm, rig.tokenizer, cfg, 17);

  REQUIRE(r1.trace.size() == r2.trace.size());
  for (size_t i = 0; i < r1.trace.size(); ++i) {
    CHECK(r1.trace[i].loss == r2.trace[i].loss);
    CHECK(r1.trace[i].lr == r2.trace[i].lr);
  }
  CHECK(rig.lm.digest() == lm_digest);

  SUBCASE("losses trend down over the run") {
    CHECK(r1.trace.back().loss < r1.trace.front().loss);
  }

  SUBCASE("zero steps leave params bit-identical") {
    AdapterParams p3 = init_adapter_params(rig.config, 3);
    AdapterParams before = p3;
    TrainConfig none = cfg;
    none.total_steps = 0;
    none.epochs = 0;
    none.warmup_steps = 0;
    TrainResult r = train(rig.corpus, p3, rig.config, rig.lm, rig.tokenizer,
                          none, 17);
    CHECK(r.steps_run == 0);
    auto a = tensor_refs(before);
    auto b = tensor_refs(p3);
    for (size_t t = 0; t < a.size(); ++t) {
      for (size_t i = 0; i < a[t].size; ++i) CHECK(a[t].data[i] == b[t].data[i]);
    }
  }

  SUBCASE("empty corpus is fatal") {
    std::vector<TrainItem> empty;
    AdapterParams p = init_adapter_params(rig.config, 3);
    CHECK_THROWS_AS(
        train(empty, p, rig.config, rig.lm, rig.tokenizer, cfg, 17),
        ValidationError);
  }
}

TEST_CASE("checkpoint resume continues the same trajectory") {
  testutil::TempDir tmp("resume");
  Rig rig = make_rig(4);
  TrainConfig cfg;
  cfg.lr = 5e-3;
  cfg.warmup_steps = 4;
  cfg.total_steps = 20;
  cfg.batch_size = 4;

  TrainOptions options;
  options.checkpoint_dir = tmp.file("ckpts");
  options.checkpoint_every = 10;

  AdapterParams full = init_adapter_params(rig.config, 3);
  TrainResult full_run =
      train(rig.corpus, full, rig.config, rig.lm, rig.tokenizer, cfg, 17, options);

  // resume from step 10 and compare the tail of the trace
  TrainOptions resume_options;
  resume_options.resume_from = tmp.file("ckpts") + "/ckpt_10.dstackpt";
  AdapterParams resumed = make_adapter_params(rig.config);
  TrainResult tail = train(rig.corpus, resumed, rig.config, rig.lm,
                           rig.tokenizer, cfg, 17, resume_options);
  REQUIRE(tail.trace.size() == 10);
  for (size_t i = 0; i < 10; ++i) {
    CHECK(tail.trace[i].step == full_run.trace[10 + i].step);
    CHECK(tail.trace[i].loss == doctest::Approx(full_run.trace[10 + i].loss));
  }
}
