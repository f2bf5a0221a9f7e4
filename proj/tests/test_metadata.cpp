#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "desta/error.hpp"
#include "desta/metadata.hpp"
#include "desta/sha256.hpp"
#include "desta/tensor.hpp"
#include "testutil.hpp"

using namespace desta;
using testutil::TempDir;

TEST_CASE("sha256 known vectors") {
  CHECK(sha256_hex("") ==
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  // two-block message
  CHECK(sha256_hex("abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq") ==
        "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1");
}

TEST_CASE("attribute key set is closed at 12") {
  auto order = default_attribute_order();
  CHECK(order.size() == 12);
  CHECK(attribute_key_from_name("gender").has_value());
  CHECK(attribute_key_from_name("c50_value").has_value());
  CHECK_FALSE(attribute_key_from_name("timbre").has_value());
  CHECK(std::string(attribute_display_name(AttributeKey::kSpeakingSpeed)) ==
        "Speaking speed");
}

TEST_CASE("load_manifest happy path and skip reporting") {
  TempDir tmp("manifest");
  std::string good =
      R"({"id":"a","source_dataset":"s","audio_duration_s":1.0,"segments":[{"start_s":0,"end_s":1,"text":"hi"}],"attributes":{}})";

  SUBCASE("three well-formed lines") {
    testutil::write_file(tmp.file("m.jsonl"),
                         good + "\n" +
                             R"({"id":"b","source_dataset":"s","audio_duration_s":2.0,"segments":[],"attributes":{}})" +
                             "\n" +
                             R"({"id":"c","source_dataset":"s","audio_duration_s":3.0,"segments":[],"attributes":{}})" +
                             "\n");
    LoadReport report;
    Manifest m = load_manifest(tmp.file("m.jsonl"), &report);
    CHECK(m.records.size() == 3);
    CHECK(report.skipped.empty());
  }

  SUBCASE("unknown attribute key skips the record") {
    testutil::write_file(
        tmp.file("m.jsonl"),
        good + "\n" +
            R"({"id":"b","source_dataset":"s","audio_duration_s":1.0,"segments":[],"attributes":{"timbre":"warm"}})" +
            "\n");
    LoadReport report;
    Manifest m = load_manifest(tmp.file("m.jsonl"), &report);
    CHECK(m.records.size() == 1);
    REQUIRE(report.skipped.size() == 1);
    CHECK(report.skipped[0].line_number == 2);
    CHECK(report.skipped[0].reason.find("timbre") != std::string::npos);
  }

  SUBCASE("duplicate id is fatal and names the id") {
    std::string dup =
        R"({"id":"u1","source_dataset":"s","audio_duration_s":1.0,"segments":[],"attributes":{}})";
    testutil::write_file(tmp.file("m.jsonl"), dup + "\n" + dup + "\n");
    CHECK_THROWS_WITH_AS(load_manifest(tmp.file("m.jsonl")),
                         doctest::Contains("u1"), ValidationError);
  }

  SUBCASE("unreadable file is fatal") {
    CHECK_THROWS_AS(load_manifest(tmp.file("nope.jsonl")), ValidationError);
  }

  SUBCASE("malformed json is a recorded skip") {
    testutil::write_file(tmp.file("m.jsonl"), "{not json\n" + good + "\n");
    LoadReport report;
    Manifest m = load_manifest(tmp.file("m.jsonl"), &report);
    CHECK(m.records.size() == 1);
    CHECK(report.skipped.size() == 1);
  }
}

TEST_CASE("manifest round trip is record-for-record equal") {
  TempDir tmp("roundtrip");
  Manifest m;
  m.records.push_back(testutil::example_record());
  UtteranceRecord r2;
  r2.id = "u2";
  r2.source_dataset = "other";
  r2.audio_duration_s = 2.75;
  r2.segments.push_back({0.25, 2.75, "ok then"});
  r2.attributes[AttributeKey::kSnrLevel] = "12.5";
  r2.attributes[AttributeKey::kIntent] = "confirm, then hang up";
  m.records.push_back(r2);

  save_manifest(m, tmp.file("m.jsonl"));
  Manifest loaded = load_manifest(tmp.file("m.jsonl"));
  REQUIRE(loaded.records.size() == m.records.size());
  for (size_t i = 0; i < m.records.size(); ++i) {
    const auto& a = m.records[i];
    const auto& b = loaded.records[i];
    CHECK(a.id == b.id);
    CHECK(a.source_dataset == b.source_dataset);
    CHECK(a.audio_duration_s == doctest::Approx(b.audio_duration_s));
    REQUIRE(a.segments.size() == b.segments.size());
    for (size_t s = 0; s < a.segments.size(); ++s) {
      CHECK(a.segments[s].start_s == doctest::Approx(b.segments[s].start_s));
      CHECK(a.segments[s].end_s == doctest::Approx(b.segments[s].end_s));
      CHECK(a.segments[s].text == b.segments[s].text);
    }
    CHECK(a.attributes == b.attributes);
  }
}

TEST_CASE("validate_record examples") {
  UtteranceRecord r;
  r.id = "x";
  r.audio_duration_s = 5.0;

  SUBCASE("adjacent segments are fine") {
    r.segments = {{0, 3, "a"}, {3, 5, "b"}};
    CHECK(validate_record(r).empty());
  }
  SUBCASE("overlap is one violation") {
    r.segments = {{0, 3, "a"}, {2, 5, "b"}};
    auto v = validate_record(r);
    REQUIRE(v.size() == 1);
    CHECK(v[0].find("overlap") != std::string::npos);
  }
  SUBCASE("duration attribute consistent within 0.1 s") {
    r.audio_duration_s = 2.8;
    r.attributes[AttributeKey::kDuration] = "2.8";
    CHECK(validate_record(r).empty());
    r.attributes[AttributeKey::kDuration] = "2.8s";  // unit suffix tolerated
    CHECK(validate_record(r).empty());
    r.attributes[AttributeKey::kDuration] = "3.2";
    CHECK_FALSE(validate_record(r).empty());
  }
  SUBCASE("records with zero attributes are valid") {
    r.segments = {{0, 1, "hi"}};
    r.attributes.clear();
    CHECK(validate_record(r).empty());
  }
}

namespace {

// independent statement of the record invariants, for the property test
bool invariants_hold(const UtteranceRecord& r) {
  if (r.id.empty() || r.audio_duration_s < 0) return false;
  for (size_t i = 0; i < r.segments.size(); ++i) {
    const auto& s = r.segments[i];
    if (s.start_s < 0 || s.start_s > s.end_s) return false;
    std::string t = s.text;
    if (t.find_first_not_of(" \t\r\n") == std::string::npos) return false;
    if (i > 0 && (s.start_s < r.segments[i - 1].start_s ||
                  s.start_s < r.segments[i - 1].end_s))
      return false;
  }
  auto it = r.attributes.find(AttributeKey::kDuration);
  if (it != r.attributes.end()) {
    auto v = attribute_numeric_value(it->second);
    if (!v || std::abs(*v - r.audio_duration_s) > 0.1) return false;
  }
  return true;
}

UtteranceRecord random_record(DetRng& rng) {
  UtteranceRecord r;
  r.id = "rec" + std::to_string(rng.next_index(1000000));
  r.source_dataset = "gen";
  double t = 0;
  size_t n_segments = rng.next_index(4);
  for (size_t i = 0; i < n_segments; ++i) {
    TranscriptSegment s;
    s.start_s = t + rng.next_uniform(0, 2);
    s.end_s = s.start_s + rng.next_uniform(0, 3);
    s.text = "seg " + std::to_string(i);
    t = s.end_s;
    r.segments.push_back(s);
  }
  r.audio_duration_s = t;
  if (rng.next_uniform() < 0.5)
    r.attributes[AttributeKey::kGender] = rng.next_uniform() < 0.5 ? "Female" : "Male";
  if (rng.next_uniform() < 0.3)
    r.attributes[AttributeKey::kDuration] = std::to_string(r.audio_duration_s);
  return r;
}

void break_one_invariant(UtteranceRecord& r, DetRng& rng) {
  switch (rng.next_index(4)) {
    case 0:
      r.id.clear();
      break;
    case 1:
      r.segments.push_back({5.0, 3.0, "backwards"});
      break;
    case 2:
      if (!r.segments.empty()) {
        r.segments.back().text = "   ";
      } else {
        r.segments.push_back({0, 1, "  "});
      }
      break;
    default:
      r.attributes[AttributeKey::kDuration] =
          std::to_string(r.audio_duration_s + 1.0);
      break;
  }
}

}  // namespace

TEST_CASE("validate_record <=> invariants, property over generated records") {
  DetRng rng(20240815);
  for (int i = 0; i < 500; ++i) {
    UtteranceRecord r = random_record(rng);
    bool broken = rng.next_uniform() < 0.5;
    if (broken) break_one_invariant(r, rng);
    bool valid = validate_record(r).empty();
    CHECK(valid == invariants_hold(r));
  }
}

TEST_CASE("merge_extractor_outputs") {
  Manifest base;
  UtteranceRecord u1;
  u1.id = "u1";
  u1.source_dataset = "s";
  u1.attributes[AttributeKey::kGender] = "Female";
  base.records.push_back(u1);

  Manifest overlay;
  UtteranceRecord o1;
  o1.id = "u1";
  o1.attributes[AttributeKey::kEmotion] = "Happy";
  overlay.records.push_back(o1);

  SUBCASE("disjoint keys union") {
    Manifest merged = merge_extractor_outputs(base, overlay,
                                              MergePolicy::kAnnotationWins);
    CHECK(merged.records[0].attributes.at(AttributeKey::kGender) == "Female");
    CHECK(merged.records[0].attributes.at(AttributeKey::kEmotion) == "Happy");
  }

  SUBCASE("conflicting key follows the policy") {
    base.records[0].attributes[AttributeKey::kEmotion] = "Sad";
    Manifest keep = merge_extractor_outputs(base, overlay,
                                            MergePolicy::kAnnotationWins);
    CHECK(keep.records[0].attributes.at(AttributeKey::kEmotion) == "Sad");
    Manifest take = merge_extractor_outputs(base, overlay,
                                            MergePolicy::kExtractorWins);
    CHECK(take.records[0].attributes.at(AttributeKey::kEmotion) == "Happy");
  }

  SUBCASE("overlay id missing from base is fatal listing the ids") {
    UtteranceRecord o9;
    o9.id = "u9";
    overlay.records.push_back(o9);
    CHECK_THROWS_WITH_AS(
        merge_extractor_outputs(base, overlay, MergePolicy::kAnnotationWins),
        doctest::Contains("u9"), ValidationError);
  }

  SUBCASE("merging the same overlay twice equals merging once") {
    Manifest once = merge_extractor_outputs(base, overlay,
                                            MergePolicy::kExtractorWins);
    Manifest twice = merge_extractor_outputs(once, overlay,
                                             MergePolicy::kExtractorWins);
    REQUIRE(once.records.size() == twice.records.size());
    for (size_t i = 0; i < once.records.size(); ++i)
      CHECK(once.records[i].attributes == twice.records[i].attributes);
  }
}
