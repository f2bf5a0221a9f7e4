#include "desta/seed_transcript.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "desta/error.hpp"

namespace desta {

namespace {

constexpr const char* kEscapedComma = "\xef\xbc\x8c";  // U+FF0C fullwidth comma
constexpr const char* kEscapedParen = "\xe3\x80\x89";  // U+3009 right angle bracket

std::string escape_value(const std::string& v) {
  std::string out;
  out.reserve(v.size());
  for (char c : v) {
    if (c == ',')
      out += kEscapedComma;
    else if (c == ')')
      out += kEscapedParen;
    else
      out += c;
  }
  return out;
}

std::string unescape_value(const std::string& v) {
  std::string out;
  out.reserve(v.size());
  for (size_t i = 0; i < v.size();) {
    if (v.compare(i, 3, kEscapedComma) == 0) {
      out += ',';
      i += 3;
    } else if (v.compare(i, 3, kEscapedParen) == 0) {
      out += ')';
      i += 3;
    } else {
      out += v[i++];
    }
  }
  return out;
}

bool parse_two_digits(const std::string& s, size_t pos, int* out) {
  if (pos + 1 >= s.size() || !isdigit((unsigned char)s[pos]) ||
      !isdigit((unsigned char)s[pos + 1]))
    return false;
  *out = (s[pos] - '0') * 10 + (s[pos + 1] - '0');
  return true;
}

// "HH:MM:SS" starting at pos; returns seconds or -1
double parse_hms(const std::string& s, size_t pos) {
  int h = 0, m = 0, sec = 0;
  if (!parse_two_digits(s, pos, &h)) return -1;
  if (pos + 2 >= s.size() || s[pos + 2] != ':') return -1;
  if (!parse_two_digits(s, pos + 3, &m)) return -1;
  if (pos + 5 >= s.size() || s[pos + 5] != ':') return -1;
  if (!parse_two_digits(s, pos + 6, &sec)) return -1;
  return h * 3600.0 + m * 60.0 + sec;
}

// A trailing " (...)" counts as an attribute parenthetical only when every
// comma-separated chunk is "<known display name>: <value>"; otherwise it is
// part of the segment text.
bool try_parse_attributes(const std::string& content,
                          std::vector<std::pair<std::string, std::string>>* out) {
  std::vector<std::pair<std::string, std::string>> pairs;
  size_t pos = 0;
  while (pos <= content.size()) {
    size_t comma = content.find(", ", pos);
    std::string item = comma == std::string::npos ? content.substr(pos)
                                                  : content.substr(pos, comma - pos);
    size_t colon = item.find(": ");
    if (colon == std::string::npos) return false;
    std::string name = item.substr(0, colon);
    if (!attribute_key_from_display_name(name)) return false;
    pairs.emplace_back(name, unescape_value(item.substr(colon + 2)));
    if (comma == std::string::npos) break;
    pos = comma + 2;
  }
  if (pairs.empty()) return false;
  *out = std::move(pairs);
  return true;
}

}  // namespace

std::string format_timestamp(double t_seconds) {
  if (t_seconds < 0)
    throw ValidationError("negative timestamp: " + std::to_string(t_seconds));
  long long total = (long long)std::floor(t_seconds);
  long long h = total / 3600;
  long long m = (total % 3600) / 60;
  long long s = total % 60;
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%02lld:%02lld:%02lld", h, m, s);
  return buf;
}

SeedTranscript build_seed_transcript(const UtteranceRecord& record,
                                     const SeedOptions& options) {
  std::ostringstream out;
  for (size_t i = 0; i < record.segments.size(); ++i) {
    const auto& seg = record.segments[i];
    bool last = i + 1 == record.segments.size();
    if (i > 0) out << "\n";
    out << "[" << format_timestamp(seg.start_s) << "-"
        << format_timestamp(seg.end_s) << "] " << seg.text;

    std::string parenthetical;
    for (AttributeKey key : options.attribute_order) {
      if (key == AttributeKey::kSpokenText) continue;
      if (key == AttributeKey::kDuration && !last) continue;
      auto it = record.attributes.find(key);
      if (it == record.attributes.end()) continue;
      if (!parenthetical.empty()) parenthetical += ", ";
      parenthetical += std::string(attribute_display_name(key)) + ": " +
                       escape_value(it->second);
    }
    if (!parenthetical.empty()) out << " (" << parenthetical << ")";
  }
  return SeedTranscript{out.str(), record.id};
}

std::vector<ParsedSeedLine> parse_seed_transcript(const std::string& text) {
  std::vector<ParsedSeedLine> lines;
  std::istringstream in(text);
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() && in.eof()) break;

    if (line.empty() || line[0] != '[')
      throw ParseError("expected '[' opening a timestamp", line_no, 1);
    double start = parse_hms(line, 1);
    if (start < 0) throw ParseError("bad start timestamp", line_no, 2);
    if (line.size() < 10 || line[9] != '-')
      throw ParseError("expected '-' between timestamps", line_no, 10);
    double end = parse_hms(line, 10);
    if (end < 0) throw ParseError("bad end timestamp", line_no, 11);
    if (line.size() < 19 || line[18] != ']')
      throw ParseError("expected ']' closing the timestamp", line_no, 19);
    if (line.size() < 20 || line[19] != ' ')
      throw ParseError("expected ' ' after timestamp", line_no, 20);

    ParsedSeedLine parsed;
    parsed.start_s = start;
    parsed.end_s = end;
    std::string body = line.substr(20);

    if (!body.empty() && body.back() == ')') {
      // attribute values escape ")" but may contain "(", so the parenthetical
      // may hold nested "(" characters: try every " (" opener right to left
      // and take the first whose content reads as an attribute list
      size_t open = body.rfind(" (");
      while (open != std::string::npos) {
        std::string inner = body.substr(open + 2, body.size() - open - 3);
        std::vector<std::pair<std::string, std::string>> attrs;
        if (try_parse_attributes(inner, &attrs)) {
          parsed.attributes = std::move(attrs);
          body = body.substr(0, open);
          break;
        }
        open = open == 0 ? std::string::npos : body.rfind(" (", open - 1);
      }
    }
    parsed.text = body;
    if (parsed.text.empty())
      throw ParseError("empty segment text", line_no, 21);
    lines.push_back(std::move(parsed));
  }
  return lines;
}

}  // namespace desta
