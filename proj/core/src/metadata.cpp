#include "desta/metadata.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "desta/error.hpp"

namespace desta {

using nlohmann::json;

namespace {

struct KeyNames {
  AttributeKey key;
  const char* name;
  const char* display;
};

constexpr KeyNames kKeyTable[kAttributeKeyCount] = {
    {AttributeKey::kGender, "gender", "Gender"},
    {AttributeKey::kAge, "age", "Age"},
    {AttributeKey::kAccent, "accent", "Accent"},
    {AttributeKey::kEmotion, "emotion", "Emotion"},
    {AttributeKey::kPitch, "pitch", "Pitch"},
    {AttributeKey::kVolume, "volume", "Volume"},
    {AttributeKey::kSpeakingSpeed, "speaking_speed", "Speaking speed"},
    {AttributeKey::kSnrLevel, "snr_level", "SNR"},
    {AttributeKey::kC50Value, "c50_value", "C50"},
    {AttributeKey::kDuration, "duration", "Duration"},
    {AttributeKey::kIntent, "intent", "Intent"},
    {AttributeKey::kSpokenText, "spoken_text", "Spoken text"},
};

std::string trimmed(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

const char* attribute_key_name(AttributeKey key) {
  return kKeyTable[int(key)].name;
}

const char* attribute_display_name(AttributeKey key) {
  return kKeyTable[int(key)].display;
}

std::optional<AttributeKey> attribute_key_from_name(std::string_view name) {
  for (const auto& e : kKeyTable) {
    if (name == e.name) return e.key;
  }
  return std::nullopt;
}

std::optional<AttributeKey> attribute_key_from_display_name(std::string_view name) {
  for (const auto& e : kKeyTable) {
    if (name == e.display) return e.key;
  }
  return std::nullopt;
}

std::vector<AttributeKey> default_attribute_order() {
  std::vector<AttributeKey> order;
  order.reserve(kAttributeKeyCount);
  for (const auto& e : kKeyTable) order.push_back(e.key);
  return order;
}

RecordIndex::RecordIndex(const Manifest& manifest) {
  by_id_.reserve(manifest.records.size());
  for (const auto& r : manifest.records) by_id_.emplace(r.id, &r);
}

const UtteranceRecord* RecordIndex::find(const std::string& id) const {
  auto it = by_id_.find(id);
  return it == by_id_.end() ? nullptr : it->second;
}

const UtteranceRecord& RecordIndex::at(const std::string& id) const {
  const UtteranceRecord* r = find(id);
  if (!r) throw ValidationError("record id not found in manifest: " + id);
  return *r;
}

std::string record_to_json_line(const UtteranceRecord& record) {
  json j;
  j["id"] = record.id;
  j["source_dataset"] = record.source_dataset;
  j["audio_duration_s"] = record.audio_duration_s;
  j["segments"] = json::array();
  for (const auto& s : record.segments) {
    j["segments"].push_back(
        {{"start_s", s.start_s}, {"end_s", s.end_s}, {"text", s.text}});
  }
  j["attributes"] = json::object();
  for (const auto& [k, v] : record.attributes) j["attributes"][attribute_key_name(k)] = v;
  return j.dump();
}

UtteranceRecord record_from_json_line(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed JSON: ") + e.what());
  }
  if (!j.is_object()) throw ValidationError("record line is not a JSON object");

  UtteranceRecord r;
  try {
    r.id = j.at("id").get<std::string>();
    r.source_dataset = j.value("source_dataset", std::string());
    r.audio_duration_s = j.at("audio_duration_s").get<double>();
    if (j.contains("segments")) {
      for (const auto& s : j.at("segments")) {
        TranscriptSegment seg;
        seg.start_s = s.at("start_s").get<double>();
        seg.end_s = s.at("end_s").get<double>();
        seg.text = s.at("text").get<std::string>();
        r.segments.push_back(std::move(seg));
      }
    }
    if (j.contains("attributes")) {
      for (const auto& [k, v] : j.at("attributes").items()) {
        auto key = attribute_key_from_name(k);
        if (!key) throw ValidationError("unknown attribute key: " + k);
        r.attributes[*key] = v.get<std::string>();
      }
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("bad record field: ") + e.what());
  }
  return r;
}

Manifest load_manifest(const std::string& path, LoadReport* report) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open manifest: " + path);

  Manifest m;
  LoadReport local;
  std::set<std::string> seen_ids;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trimmed(line).empty()) continue;
    ++local.lines_total;
    UtteranceRecord r;
    try {
      r = record_from_json_line(line);
    } catch (const ValidationError& e) {
      local.skipped.push_back({line_no, e.what()});
      continue;
    }
    auto violations = validate_record(r);
    if (!violations.empty()) {
      local.skipped.push_back({line_no, "invalid record: " + violations.front()});
      continue;
    }
    if (!seen_ids.insert(r.id).second) {
      throw ValidationError("duplicate record id \"" + r.id + "\" at line " +
                            std::to_string(line_no));
    }
    m.provenance.emplace(r.source_dataset, "loaded from " + path);
    m.records.push_back(std::move(r));
  }
  if (report) *report = std::move(local);
  return m;
}

void save_manifest(const Manifest& manifest, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write manifest: " + path);
  for (const auto& r : manifest.records) out << record_to_json_line(r) << "\n";
}

std::optional<double> attribute_numeric_value(const std::string& value) {
  const char* begin = value.c_str();
  char* end = nullptr;
  double v = std::strtod(begin, &end);
  if (end == begin) return std::nullopt;
  // allow a unit suffix ("2.8s", "12 dB"); reject other trailing junk
  std::string rest = trimmed(std::string(end));
  for (char c : rest) {
    if (!std::isalpha(static_cast<unsigned char>(c))) return std::nullopt;
  }
  return v;
}

std::vector<std::string> validate_record(const UtteranceRecord& record) {
  std::vector<std::string> violations;
  if (record.id.empty()) violations.push_back("empty record id");
  if (record.audio_duration_s < 0)
    violations.push_back("negative audio_duration_s");

  double prev_end = 0.0;
  for (size_t i = 0; i < record.segments.size(); ++i) {
    const auto& s = record.segments[i];
    std::string tag = "segment " + std::to_string(i);
    if (s.start_s < 0) violations.push_back(tag + ": negative start_s");
    if (s.start_s > s.end_s) violations.push_back(tag + ": start_s > end_s");
    if (trimmed(s.text).empty()) violations.push_back(tag + ": empty text");
    if (i > 0) {
      if (s.start_s < record.segments[i - 1].start_s)
        violations.push_back(tag + ": segments not ordered by start_s");
      else if (s.start_s < prev_end)
        violations.push_back(tag + ": overlaps previous segment");
    }
    prev_end = s.end_s;
  }

  auto it = record.attributes.find(AttributeKey::kDuration);
  if (it != record.attributes.end()) {
    auto v = attribute_numeric_value(it->second);
    if (!v) {
      violations.push_back("duration attribute is not numeric: " + it->second);
    } else if (std::fabs(*v - record.audio_duration_s) > 0.1) {
      violations.push_back("duration attribute " + it->second +
                           " disagrees with audio_duration_s " +
                           std::to_string(record.audio_duration_s));
    }
  }
  return violations;
}

Manifest merge_extractor_outputs(const Manifest& base, const Manifest& overlay,
                                 MergePolicy policy) {
  RecordIndex index(base);
  std::string missing;
  for (const auto& r : overlay.records) {
    if (!index.find(r.id)) missing += missing.empty() ? r.id : ", " + r.id;
  }
  if (!missing.empty()) throw ValidationError("missing ids: " + missing);

  Manifest merged = base;
  std::unordered_map<std::string, UtteranceRecord*> by_id;
  by_id.reserve(merged.records.size());
  for (auto& r : merged.records) by_id.emplace(r.id, &r);

  for (const auto& o : overlay.records) {
    UtteranceRecord* b = by_id.at(o.id);
    for (const auto& [k, v] : o.attributes) {
      if (policy == MergePolicy::kExtractorWins) {
        b->attributes[k] = v;
      } else {
        b->attributes.emplace(k, v);  // annotation wins: keep existing
      }
    }
  }
  for (const auto& [k, v] : overlay.provenance) merged.provenance.emplace(k, v);
  return merged;
}

}  // namespace desta
