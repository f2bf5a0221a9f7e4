#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace desta {

// Closed attribute schema: exactly these 12 keys exist. Records carrying any
// other key are rejected at load time rather than silently stripped.
enum class AttributeKey {
  kGender,
  kAge,
  kAccent,
  kEmotion,
  kPitch,
  kVolume,
  kSpeakingSpeed,
  kSnrLevel,
  kC50Value,
  kDuration,
  kIntent,
  kSpokenText,
};

inline constexpr int kAttributeKeyCount = 12;

// Manifest/JSON spelling, e.g. "speaking_speed".
const char* attribute_key_name(AttributeKey key);
// Seed-transcript spelling, e.g. "Speaking speed".
const char* attribute_display_name(AttributeKey key);
std::optional<AttributeKey> attribute_key_from_name(std::string_view name);
std::optional<AttributeKey> attribute_key_from_display_name(std::string_view name);

// Schema listing order. spoken_text is last; formatting never renders it as
// an attribute since it is the line body itself.
std::vector<AttributeKey> default_attribute_order();

struct TranscriptSegment {
  double start_s = 0.0;
  double end_s = 0.0;
  std::string text;
};

// One audio's metadata. Attribute values stay verbatim strings even when
// numeric (snr_level, c50_value, duration); numeric interpretation happens
// only at validation/formatting time.
struct UtteranceRecord {
  std::string id;
  std::string source_dataset;
  double audio_duration_s = 0.0;
  std::vector<TranscriptSegment> segments;
  std::map<AttributeKey, std::string> attributes;
};

struct Manifest {
  std::vector<UtteranceRecord> records;
  std::map<std::string, std::string> provenance;  // source_dataset -> note
};

// id -> record lookup; borrows the manifest, which must outlive the index.
class RecordIndex {
 public:
  explicit RecordIndex(const Manifest& manifest);
  const UtteranceRecord* find(const std::string& id) const;
  // throws ValidationError naming the id when absent
  const UtteranceRecord& at(const std::string& id) const;

 private:
  std::unordered_map<std::string_view, const UtteranceRecord*> by_id_;
};

struct SkippedLine {
  size_t line_number = 0;  // 1-based
  std::string reason;
};

struct LoadReport {
  size_t lines_total = 0;
  std::vector<SkippedLine> skipped;
};

// One JSON object per line, fields exactly: id, source_dataset,
// audio_duration_s, segments[{start_s,end_s,text}], attributes{}.
std::string record_to_json_line(const UtteranceRecord& record);
UtteranceRecord record_from_json_line(const std::string& line);  // throws ValidationError

// Loads a line-delimited manifest. Malformed lines, closed-schema violations
// and records failing validate_record are skipped and reported; duplicate
// ids are fatal.
Manifest load_manifest(const std::string& path, LoadReport* report = nullptr);
void save_manifest(const Manifest& manifest, const std::string& path);

// Empty result iff every UtteranceRecord invariant holds. Violations are
// data, not errors.
std::vector<std::string> validate_record(const UtteranceRecord& record);

enum class MergePolicy { kAnnotationWins, kExtractorWins };

// Unions extractor-derived attributes into base records. Every overlay id
// must exist in base; on key conflict the policy picks the surviving value.
Manifest merge_extractor_outputs(const Manifest& base, const Manifest& overlay,
                                 MergePolicy policy);

// Numeric reading of an attribute value; tolerates a trailing unit suffix
// such as "2.8s" or "12 dB".
std::optional<double> attribute_numeric_value(const std::string& value);

}  // namespace desta
