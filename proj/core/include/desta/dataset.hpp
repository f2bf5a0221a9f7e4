#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "desta/chat.hpp"
#include "desta/metadata.hpp"

namespace desta {

struct BalancePolicy {
  std::map<std::string, size_t> per_source_caption_cap;
  size_t default_cap = 20000;  // applied to sources without an explicit cap
  uint64_t rng_seed = 0;
};

// Caps captions per source dataset. Sources at or under their cap keep
// everything; larger ones are sampled uniformly without replacement with a
// per-source deterministic RNG stream (splitmix64 seeded from
// mix64(rng_seed, fnv1a64(source))), via a partial Fisher-Yates shuffle.
// Kept pairs preserve input order, which makes the operation idempotent.
std::vector<TrainingPair> balance(const std::vector<TrainingPair>& pairs,
                                  const Manifest& manifest,
                                  const BalancePolicy& policy);

struct SourceStats {
  std::string source;
  size_t n_audios = 0;    // distinct record ids
  size_t n_captions = 0;  // pair count
  double duration_hours = 0.0;  // each distinct audio counted once
};

struct CorpusStats {
  std::vector<SourceStats> per_source;  // sorted by source name
  SourceStats totals;                   // column sums
};

CorpusStats compute_stats(const std::vector<TrainingPair>& pairs,
                          const Manifest& manifest);

// Aligned plain-text table (durations to 2 decimals) and machine-readable
// JSON.
std::string stats_table(const CorpusStats& stats);
std::string stats_json(const CorpusStats& stats);

struct SplitResult {
  std::vector<TrainingPair> train;
  std::vector<TrainingPair> val;
};

// Splits by record id so all captions of one audio land on one side.
SplitResult split(const std::vector<TrainingPair>& pairs, double val_fraction,
                  uint64_t rng_seed);

}  // namespace desta
