#include <filesystem>

#include "debias/datasets.hpp"
#include "debias/error.hpp"
#include "doctest.h"

using namespace debias;

namespace {

const std::filesystem::path kData = DEBIAS_DATA_DIR;

std::string item(const std::string& id, const std::string& target, const std::string& label3) {
  return R"({"id": ")" + id + R"(", "target": ")" + target + R"(", "bias_type": "gender",
  "context": "The BLANK one.",
  "sentences": [
    {"sentence": "The kind one.", "gold_label": "stereotype"},
    {"sentence": "The rude one.", "gold_label": "anti-stereotype"},
    {"sentence": "The blue cheese one.", "gold_label": ")" + label3 + R"("}]})";
}

std::string wrap(const std::string& items) {
  return "{\"version\": \"1.0\", \"data\": {\"intrasentence\": [\n" + items + "\n]}}";
}

}  // namespace

TEST_SUITE("datasets") {

TEST_CASE("fill extraction") {
  CHECK(extract_fill("My daddy is BLANK.", "My daddy is strong.") == "strong");
  CHECK(extract_fill("BLANK people are here", "Tall people are here") == "Tall");
  CHECK(extract_fill("the BLANK", "The old dog") == "old dog");
  CHECK_THROWS_AS(extract_fill("no blank", "no blank"), ParseError);
}

TEST_CASE("StereoSet parse") {
  const auto ex = parse_stereoset(wrap(item("a", "Bride", "unrelated")));
  REQUIRE(ex.size() == 1);
  CHECK(ex[0].stereotype == "kind");
  CHECK(ex[0].anti_stereotype == "rude");
  CHECK(ex[0].unrelated == "blue cheese");
  CHECK(ex[0].bias_type == "gender");
  CHECK(filter_stereoset(ex, default_stereoset_targets()).size() == 1);
}

TEST_CASE("StereoSet parse errors carry line numbers") {
  // duplicate label in the second example, which starts on line 8
  const std::string text = wrap(item("a", "bride", "unrelated") + ",\n" + item("b", "groom", "stereotype"));
  try {
    parse_stereoset(text);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("line 8") != std::string::npos);
    CHECK(msg.find("example 1") != std::string::npos);
  }
  try {
    parse_stereoset("{\"data\": {\n\"intrasentence\": [ ,\n]}}");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_stereoset("{\"data\": {}}"), ParseError);
}

TEST_CASE("mini StereoSet through the default filter") {
  const auto all = load_stereoset(kData / "benchmarks/stereoset_mini.json");
  CHECK(all.size() == 20);
  const auto f = load_filtered_stereoset(kData / "benchmarks/stereoset_mini.json");
  CHECK(f.size() == 10);
  for (const auto& e : f) CHECK(e.bias_type == "gender");
  CHECK(filter_stereoset(all, {}).empty());
  std::vector<std::string> every;
  for (const auto& e : all) every.push_back(e.target);
  CHECK(filter_stereoset(all, every).size() == all.size());
}

TEST_CASE("CrowS CSV quoting") {
  const std::string csv =
      ",sent_more,sent_less,stereo_antistereo,bias_type\n"
      "0,\"He said \"\"hi\"\", then left.\",\"She said \"\"hi\"\", then left.\",stereo,gender\n"
      "1,\"A line\nthat wraps\",\"B line\nthat wraps\",antistereo,gender\r\n"
      "2,plain one,plain two,stereo,race\n";
  const auto pairs = parse_crows_csv(csv);
  REQUIRE(pairs.size() == 3);
  CHECK(pairs[0].stereo == "He said \"hi\", then left.");
  CHECK(pairs[1].anti == "B line\nthat wraps");
  CHECK(pairs[2].bias_type == "race");
  try {
    parse_crows_csv(csv + "3,only,three\n");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("line 7") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_crows_csv("a,b\n1,2\n"), ParseError);
  CHECK_THROWS_AS(parse_crows_csv("sent_more,sent_less,bias_type\n\"open,x,y\n"), ParseError);
}

TEST_CASE("mini CrowS file") {
  const auto pairs = load_crows(kData / "benchmarks/crows_mini.csv");
  CHECK(pairs.size() == 20);
  for (const auto& p : pairs) CHECK(p.stereo != p.anti);
}

TEST_CASE("SEAT files") {
  const auto t = load_seat(kData / "benchmarks/C6.json");
  CHECK(t.id == "C6");
  CHECK(t.targets_x.size() == 16);
  CHECK(t.attributes_b.size() == 16);
  const auto plain = parse_seat_json(
      R"({"targ1": ["a"], "targ2": ["b"], "attr1": {"category": "x", "examples": ["c"]}, "attr2": ["d"]})", "t");
  CHECK(plain.attributes_a == std::vector<std::string>{"c"});
  CHECK_THROWS_AS(parse_seat_json(R"({"targ1": [], "targ2": ["b"], "attr1": ["c"], "attr2": ["d"]})", "t"), ParseError);
  CHECK_THROWS_AS(parse_seat_json(R"({"targ1": ["a"]})", "t"), ParseError);
}

}
