#pragma once

#include <cstddef>
#include <string>
#include <unordered_map>
#include <vector>

namespace desta {

// Whitespace tokenizer with byte fallback, sized for the desk-scale toy LM.
// Ids: 0 <pad>, 1 <bos>, 2 <eos>, 3..258 raw bytes, 259.. corpus words
// ranked by (count desc, word asc). Words outside the vocabulary encode as
// their UTF-8 bytes, so any string round-trips.
class Tokenizer {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kByteBase = 3;
  static constexpr int kWordBase = 259;

  static Tokenizer build(const std::vector<std::string>& corpus,
                         size_t max_words = 4096);

  std::vector<int> encode(const std::string& text) const;
  std::string decode(const std::vector<int>& ids) const;

  size_t vocab_size() const { return kWordBase + words_.size(); }
  const std::vector<std::string>& words() const { return words_; }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> word_to_id_;
};

}  // namespace desta
