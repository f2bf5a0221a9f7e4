#pragma once

#include <string>
#include <utility>
#include <vector>

#include "desta/metadata.hpp"

namespace desta {

// Textual surrogate for one audio: one line per segment,
//   "[HH:MM:SS-HH:MM:SS] <text>" optionally followed by
//   " (<Key>: <Value>, <Key>: <Value>, ...)".
struct SeedTranscript {
  std::string text;
  std::string source_id;
};

// Zero-padded "HH:MM:SS", seconds floored to integers. Throws on negative t.
std::string format_timestamp(double t_seconds);

struct SeedOptions {
  // Rendering order for the attribute parenthetical; spoken_text entries are
  // skipped because that text is the line body.
  std::vector<AttributeKey> attribute_order = default_attribute_order();
};

// Utterance-level attributes are attached to every segment's parenthetical,
// except duration which only goes on the last line. Values containing ","
// or ")" are escaped to "，" and "〉" to keep the grammar parseable.
SeedTranscript build_seed_transcript(const UtteranceRecord& record,
                                     const SeedOptions& options = {});

struct ParsedSeedLine {
  double start_s = 0.0;
  double end_s = 0.0;
  std::string text;
  // display-name/value pairs in appearance order, values unescaped
  std::vector<std::pair<std::string, std::string>> attributes;
};

// Inverse of build_seed_transcript, used as the round-trip oracle. Throws
// ParseError with line and column on grammar violations.
std::vector<ParsedSeedLine> parse_seed_transcript(const std::string& text);

}  // namespace desta
