#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>

#include "desta/error.hpp"
#include "desta/seed_transcript.hpp"
#include "desta/tensor.hpp"
#include "testutil.hpp"

using namespace desta;

TEST_CASE("format_timestamp") {
  CHECK(format_timestamp(3.0) == "00:00:03");
  CHECK(format_timestamp(0.0) == "00:00:00");
  CHECK(format_timestamp(3661.9) == "01:01:01");  // floored, not rounded
  CHECK(format_timestamp(59.999) == "00:00:59");
  CHECK_THROWS_AS(format_timestamp(-0.5), ValidationError);
}

TEST_CASE("build_seed_transcript renders the documented pattern") {
  SeedTranscript seed = build_seed_transcript(testutil::example_record());
  CHECK(seed.text ==
        "[00:00:00-00:00:03] How are you? (Gender: Female, Emotion: Happy)");
  CHECK(seed.source_id == "u1");
}

TEST_CASE("empty attribute set renders no parenthetical") {
  UtteranceRecord r = testutil::example_record();
  r.attributes.clear();
  CHECK(build_seed_transcript(r).text == "[00:00:00-00:00:03] How are you?");
}

TEST_CASE("two segments give two well-formed lines; duration on last only") {
  UtteranceRecord r;
  r.id = "two";
  r.audio_duration_s = 5.0;
  r.segments = {{0, 2, "first"}, {2, 5, "second"}};
  r.attributes[AttributeKey::kGender] = "Male";
  r.attributes[AttributeKey::kDuration] = "5.0";
  std::string text = build_seed_transcript(r).text;
  CHECK(text ==
        "[00:00:00-00:00:02] first (Gender: Male)\n"
        "[00:00:02-00:00:05] second (Gender: Male, Duration: 5.0)");
}

TEST_CASE("spoken_text never appears in a parenthetical") {
  UtteranceRecord r = testutil::example_record();
  r.attributes[AttributeKey::kSpokenText] = "How are you?";
  std::string text = build_seed_transcript(r).text;
  CHECK(text.find("Spoken text") == std::string::npos);
}

TEST_CASE("determinism: identical inputs give byte-identical output") {
  UtteranceRecord r = testutil::example_record();
  CHECK(build_seed_transcript(r).text == build_seed_transcript(r).text);
}

TEST_CASE("values with ',' or ')' are escaped and unescaped on parse") {
  UtteranceRecord r = testutil::example_record();
  r.attributes[AttributeKey::kIntent] = "greet, then ask (politely)";
  std::string text = build_seed_transcript(r).text;
  // the rendered line still splits cleanly on ", "
  auto lines = parse_seed_transcript(text);
  REQUIRE(lines.size() == 1);
  std::map<std::string, std::string> attrs(lines[0].attributes.begin(),
                                           lines[0].attributes.end());
  CHECK(attrs.at("Intent") == "greet, then ask (politely)");
  CHECK(attrs.at("Gender") == "Female");
}

TEST_CASE("parse_seed_transcript examples") {
  SUBCASE("the rendered example round-trips") {
    auto lines = parse_seed_transcript(
        "[00:00:00-00:00:03] How are you? (Gender: Female, Emotion: Happy)");
    REQUIRE(lines.size() == 1);
    CHECK(lines[0].start_s == 0.0);
    CHECK(lines[0].end_s == 3.0);
    CHECK(lines[0].text == "How are you?");
    REQUIRE(lines[0].attributes.size() == 2);
    CHECK(lines[0].attributes[0].first == "Gender");
    CHECK(lines[0].attributes[0].second == "Female");
  }
  SUBCASE("no parenthetical means zero attributes") {
    auto lines = parse_seed_transcript("[00:00:00-00:00:03] hi");
    REQUIRE(lines.size() == 1);
    CHECK(lines[0].attributes.empty());
  }
  SUBCASE("missing timestamp bracket is a parse error at line 1") {
    try {
      parse_seed_transcript("hello");
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.line() == 1);
      CHECK(e.column() == 1);
    }
  }
  SUBCASE("error on the second line reports line 2") {
    try {
      parse_seed_transcript("[00:00:00-00:00:01] ok\nbroken");
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.line() == 2);
    }
  }
  SUBCASE("a trailing parenthetical that is not attributes stays text") {
    auto lines = parse_seed_transcript("[00:00:00-00:00:03] Hello (world)");
    REQUIRE(lines.size() == 1);
    CHECK(lines[0].text == "Hello (world)");
    CHECK(lines[0].attributes.empty());
  }
}

namespace {

UtteranceRecord random_record_for_roundtrip(DetRng& rng) {
  static const char* words[] = {"hello", "there",  "how", "are",   "you",
                                "fine",  "thanks", "bye", "again", "ok"};
  static const char* values[] = {"Happy", "Sad",     "Male",   "Female",
                                 "fast",  "low, dry", "a)b",   "12.5",
                                 "en-GB", "question"};
  UtteranceRecord r;
  r.id = "rt" + std::to_string(rng.next_index(1 << 30));
  r.source_dataset = "gen";
  double t = rng.next_uniform(0, 30);
  size_t n_segments = 1 + rng.next_index(3);
  for (size_t i = 0; i < n_segments; ++i) {
    TranscriptSegment seg;
    seg.start_s = t;
    seg.end_s = t + 1.0 + rng.next_uniform(0, 10);
    size_t n_words = 1 + rng.next_index(5);
    for (size_t w = 0; w < n_words; ++w) {
      if (w) seg.text += " ";
      seg.text += words[rng.next_index(10)];
    }
    t = seg.end_s + rng.next_uniform(0, 2);
    r.segments.push_back(seg);
  }
  r.audio_duration_s = t;
  auto order = default_attribute_order();
  for (AttributeKey key : order) {
    if (key == AttributeKey::kSpokenText || key == AttributeKey::kDuration)
      continue;
    if (rng.next_uniform() < 0.4)
      r.attributes[key] = values[rng.next_index(10)];
  }
  return r;
}

}  // namespace

TEST_CASE("round trip property over generated records") {
  DetRng rng(7);
  SeedOptions options;
  for (int iter = 0; iter < 300; ++iter) {
    UtteranceRecord r = random_record_for_roundtrip(rng);
    std::string text = build_seed_transcript(r, options).text;
    auto lines = parse_seed_transcript(text);
    REQUIRE(lines.size() == r.segments.size());

    for (size_t i = 0; i < lines.size(); ++i) {
      CHECK(lines[i].start_s == std::floor(r.segments[i].start_s));
      CHECK(lines[i].end_s == std::floor(r.segments[i].end_s));
      CHECK(lines[i].text == r.segments[i].text);
      // every non-duration attribute on every line, values restored
      std::map<std::string, std::string> got(lines[i].attributes.begin(),
                                             lines[i].attributes.end());
      size_t expected = r.attributes.size();
      for (const auto& [key, value] : r.attributes) {
        if (key == AttributeKey::kDuration && i + 1 != lines.size()) {
          --expected;
          continue;
        }
        CHECK(got.at(attribute_display_name(key)) == value);
      }
      CHECK(got.size() == expected);
    }
  }
}
