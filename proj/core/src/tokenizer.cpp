#include "desta/tokenizer.hpp"

#include <algorithm>
#include <map>
#include <sstream>

namespace desta {

namespace {

std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

}  // namespace

Tokenizer Tokenizer::build(const std::vector<std::string>& corpus,
                           size_t max_words) {
  std::map<std::string, size_t> counts;  // ordered map keeps ties deterministic
  for (const auto& text : corpus) {
    for (auto& w : split_words(text)) ++counts[w];
  }
  std::vector<std::pair<std::string, size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (ranked.size() > max_words) ranked.resize(max_words);

  Tokenizer tok;
  tok.words_.reserve(ranked.size());
  for (const auto& [w, n] : ranked) {
    tok.word_to_id_.emplace(w, int(kWordBase + tok.words_.size()));
    tok.words_.push_back(w);
  }
  return tok;
}

std::vector<int> Tokenizer::encode(const std::string& text) const {
  std::vector<int> ids;
  for (const auto& w : split_words(text)) {
    auto it = word_to_id_.find(w);
    if (it != word_to_id_.end()) {
      ids.push_back(it->second);
    } else {
      for (unsigned char c : w) ids.push_back(kByteBase + int(c));
    }
  }
  return ids;
}

std::string Tokenizer::decode(const std::vector<int>& ids) const {
  std::string out;
  bool last_was_word = false;
  for (int id : ids) {
    if (id >= kWordBase && size_t(id - kWordBase) < words_.size()) {
      if (!out.empty()) out += ' ';
      out += words_[size_t(id - kWordBase)];
      last_was_word = true;
    } else if (id >= kByteBase && id < kWordBase) {
      if (last_was_word && !out.empty()) out += ' ';
      out += char(id - kByteBase);
      last_was_word = false;
    }
    // specials decode to nothing
  }
  return out;
}

}  // namespace desta
