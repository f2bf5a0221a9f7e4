#include "desta/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "desta/error.hpp"
#include "desta/tensor.hpp"

namespace desta {

namespace {

// indices of the pairs to keep for one source, ascending
std::vector<size_t> sample_without_replacement(std::vector<size_t> indices,
                                               size_t keep, uint64_t seed) {
  DetRng rng(seed);
  // partial Fisher-Yates: after i swaps, indices[0..i] is a uniform sample
  for (size_t i = 0; i < keep; ++i) {
    size_t j = i + rng.next_index(indices.size() - i);
    std::swap(indices[i], indices[j]);
  }
  indices.resize(keep);
  std::sort(indices.begin(), indices.end());
  return indices;
}

}  // namespace

std::vector<TrainingPair> balance(const std::vector<TrainingPair>& pairs,
                                  const Manifest& manifest,
                                  const BalancePolicy& policy) {
  RecordIndex index(manifest);

  std::map<std::string, std::vector<size_t>> by_source;
  for (size_t i = 0; i < pairs.size(); ++i) {
    const UtteranceRecord& r = index.at(pairs[i].record_id);
    by_source[r.source_dataset].push_back(i);
  }

  std::vector<bool> keep(pairs.size(), false);
  for (auto& [source, indices] : by_source) {
    auto cap_it = policy.per_source_caption_cap.find(source);
    size_t cap = cap_it != policy.per_source_caption_cap.end()
                     ? cap_it->second
                     : policy.default_cap;
    std::vector<size_t> kept;
    if (indices.size() <= cap) {
      kept = indices;
    } else {
      kept = sample_without_replacement(indices, cap,
                                        mix64(policy.rng_seed, fnv1a64(source)));
    }
    for (size_t i : kept) keep[i] = true;
  }

  std::vector<TrainingPair> out;
  out.reserve(pairs.size());
  for (size_t i = 0; i < pairs.size(); ++i) {
    if (keep[i]) out.push_back(pairs[i]);
  }
  return out;
}

CorpusStats compute_stats(const std::vector<TrainingPair>& pairs,
                          const Manifest& manifest) {
  RecordIndex index(manifest);

  struct Acc {
    std::unordered_set<std::string> audio_ids;
    size_t captions = 0;
    double duration_s = 0.0;
  };
  std::map<std::string, Acc> by_source;

  for (const auto& p : pairs) {
    const UtteranceRecord& r = index.at(p.record_id);
    Acc& acc = by_source[r.source_dataset];
    ++acc.captions;
    if (acc.audio_ids.insert(r.id).second) acc.duration_s += r.audio_duration_s;
  }

  CorpusStats stats;
  stats.totals.source = "All";
  for (const auto& [source, acc] : by_source) {
    SourceStats s;
    s.source = source;
    s.n_audios = acc.audio_ids.size();
    s.n_captions = acc.captions;
    s.duration_hours = acc.duration_s / 3600.0;
    stats.totals.n_audios += s.n_audios;
    stats.totals.n_captions += s.n_captions;
    stats.totals.duration_hours += s.duration_hours;
    stats.per_source.push_back(std::move(s));
  }
  return stats;
}

std::string stats_table(const CorpusStats& stats) {
  size_t name_width = 12;
  for (const auto& s : stats.per_source)
    name_width = std::max(name_width, s.source.size());

  std::string out;
  char line[256];
  std::snprintf(line, sizeof(line), "%-*s  %9s  %10s  %15s\n", int(name_width),
                "Dataset", "#Audios", "#Captions", "Duration(hours)");
  out += line;
  auto add_row = [&](const SourceStats& s) {
    std::snprintf(line, sizeof(line), "%-*s  %9zu  %10zu  %15.2f\n",
                  int(name_width), s.source.c_str(), s.n_audios, s.n_captions,
                  s.duration_hours);
    out += line;
  };
  for (const auto& s : stats.per_source) add_row(s);
  add_row(stats.totals);
  return out;
}

std::string stats_json(const CorpusStats& stats) {
  nlohmann::json j;
  j["per_source"] = nlohmann::json::array();
  auto to_json = [](const SourceStats& s) {
    return nlohmann::json{{"source", s.source},
                          {"n_audios", s.n_audios},
                          {"n_captions", s.n_captions},
                          {"duration_hours", s.duration_hours}};
  };
  for (const auto& s : stats.per_source) j["per_source"].push_back(to_json(s));
  j["totals"] = to_json(stats.totals);
  return j.dump(2);
}

SplitResult split(const std::vector<TrainingPair>& pairs, double val_fraction,
                  uint64_t rng_seed) {
  if (val_fraction < 0.0 || val_fraction >= 1.0)
    throw ValidationError("val_fraction must be in [0, 1)");

  std::set<std::string> id_set;
  for (const auto& p : pairs) id_set.insert(p.record_id);
  std::vector<std::string> ids(id_set.begin(), id_set.end());

  size_t n_val = size_t(std::llround(double(ids.size()) * val_fraction));
  DetRng rng(rng_seed);
  for (size_t i = 0; i + 1 < ids.size(); ++i) {
    size_t j = i + rng.next_index(ids.size() - i);
    std::swap(ids[i], ids[j]);
  }
  std::unordered_set<std::string> val_ids(ids.begin(), ids.begin() + n_val);

  SplitResult result;
  for (const auto& p : pairs) {
    if (val_ids.count(p.record_id))
      result.val.push_back(p);
    else
      result.train.push_back(p);
  }
  return result;
}

}  // namespace desta
