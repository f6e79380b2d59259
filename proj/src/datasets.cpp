#include "debias/datasets.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

#include "debias/error.hpp"
#include "debias/lexicon.hpp"

namespace debias {

namespace {

using nlohmann::json;

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t line_of(std::string_view text, std::size_t byte) {
  byte = std::min(byte, text.size());
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + byte, '\n'));
}

/// Line of the first occurrence of `needle` (quoted), or 0.
std::size_t line_of_string(std::string_view text, const std::string& needle) {
  const auto pos = text.find('"' + needle + '"');
  return pos == std::string_view::npos ? 0 : line_of(text, pos);
}

json parse_json(std::string_view text, const std::string& what) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw ParseError(what + " line " + std::to_string(line_of(text, e.byte)) + ": " + e.what());
  }
}

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

bool same_ci(char a, char b) {
  return std::tolower(static_cast<unsigned char>(a)) == std::tolower(static_cast<unsigned char>(b));
}

std::vector<std::string> examples_of(const json& root, const char* key) {
  const json& node = root.at(key);
  const json& list = node.is_object() ? node.at("examples") : node;
  std::vector<std::string> out;
  for (const auto& v : list) out.push_back(v.get<std::string>());
  return out;
}

}  // namespace

const std::vector<std::string>& default_stereoset_targets() {
  static const std::vector<std::string> targets = {"daddy", "ma'am",      "groom",
                                                   "bride", "stepfather", "stepmother"};
  return targets;
}

std::string extract_fill(std::string_view context, std::string_view sentence) {
  const auto blank = context.find("BLANK");
  if (blank == std::string_view::npos) throw ParseError("context has no BLANK");
  const std::string_view prefix = context.substr(0, blank);
  const std::string_view suffix = context.substr(blank + 5);
  std::size_t p = 0;
  while (p < prefix.size() && p < sentence.size() && same_ci(prefix[p], sentence[p])) ++p;
  std::size_t s = 0;
  while (s < suffix.size() && s + p < sentence.size() &&
         same_ci(suffix[suffix.size() - 1 - s], sentence[sentence.size() - 1 - s])) {
    ++s;
  }
  return trim(sentence.substr(p, sentence.size() - p - s));
}

std::vector<StereoExample> parse_stereoset(std::string_view text) {
  const json root = parse_json(text, "stereoset");
  const json* items = nullptr;
  if (root.contains("data") && root["data"].contains("intrasentence")) {
    items = &root["data"]["intrasentence"];
  }
  if (items == nullptr || !items->is_array()) {
    throw ParseError("stereoset line 1: missing data.intrasentence array");
  }
  std::vector<StereoExample> out;
  std::size_t index = 0;
  for (const auto& item : *items) {
    const std::string id = item.value("id", std::string());
    auto fail = [&](const std::string& why) {
      const std::size_t line = id.empty() ? 0 : line_of_string(text, id);
      throw ParseError("stereoset line " + (line ? std::to_string(line) : std::string("?")) +
                       " (example " + std::to_string(index) + "): " + why);
    };
    try {
      StereoExample ex;
      ex.id = id;
      ex.target = item.at("target").get<std::string>();
      ex.bias_type = item.at("bias_type").get<std::string>();
      ex.context = item.at("context").get<std::string>();
      if (ex.context.find("BLANK") == std::string::npos) fail("context has no BLANK");
      std::set<std::string> seen;
      for (const auto& s : item.at("sentences")) {
        const std::string label = s.at("gold_label").get<std::string>();
        const std::string fill = extract_fill(ex.context, s.at("sentence").get<std::string>());
        if (!seen.insert(label).second) fail("duplicate label " + label);
        if (label == "stereotype") {
          ex.stereotype = fill;
        } else if (label == "anti-stereotype") {
          ex.anti_stereotype = fill;
        } else if (label == "unrelated") {
          ex.unrelated = fill;
        } else {
          fail("unknown gold_label " + label);
        }
      }
      if (seen.size() != 3) fail("expected three candidates");
      out.push_back(std::move(ex));
    } catch (const json::exception& e) {
      fail(e.what());
    }
    ++index;
  }
  return out;
}

std::vector<StereoExample> load_stereoset(const std::filesystem::path& path) {
  return parse_stereoset(slurp(path));
}

std::vector<StereoExample> filter_stereoset(const std::vector<StereoExample>& examples,
                                            const std::vector<std::string>& targets) {
  std::set<std::string> allowed;
  for (const auto& t : targets) allowed.insert(to_lower_ascii(t));
  std::vector<StereoExample> out;
  for (const auto& e : examples) {
    if (allowed.count(to_lower_ascii(e.target))) out.push_back(e);
  }
  return out;
}

std::vector<StereoExample> load_filtered_stereoset(const std::filesystem::path& path,
                                                   const std::vector<std::string>& targets) {
  return filter_stereoset(load_stereoset(path), targets);
}

std::vector<CrowsPair> parse_crows_csv(std::string_view text) {
  // records of fields, each with the line it started on
  std::vector<std::pair<std::size_t, std::vector<std::string>>> rows;
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  bool any = false;
  std::size_t line = 1;
  std::size_t row_line = 1;
  auto end_row = [&] {
    fields.push_back(std::move(field));
    field.clear();
    if (any || fields.size() > 1 || !fields.front().empty()) rows.emplace_back(row_line, std::move(fields));
    fields.clear();
    any = false;
    row_line = line;
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      any = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (c == '\n') {
      ++line;
      end_row();
    } else if (c != '\r') {
      field.push_back(c);
    }
  }
  if (quoted) throw ParseError("crows line " + std::to_string(row_line) + ": unterminated quote");
  if (!field.empty() || !fields.empty()) end_row();
  if (rows.empty()) throw ParseError("crows line 1: empty file");

  const auto& header = rows.front().second;
  auto column = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw ParseError("crows line 1: missing column " + name);
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t more = column("sent_more");
  const std::size_t less = column("sent_less");
  const std::size_t type = column("bias_type");
  std::vector<CrowsPair> out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& [at, f] = rows[r];
    if (f.size() != header.size()) {
      throw ParseError("crows line " + std::to_string(at) + ": expected " +
                       std::to_string(header.size()) + " fields, got " + std::to_string(f.size()));
    }
    if (f[more].empty() || f[less].empty()) {
      throw ParseError("crows line " + std::to_string(at) + ": empty sentence");
    }
    out.push_back(CrowsPair{f[more], f[less], f[type]});
  }
  return out;
}

std::vector<CrowsPair> load_crows(const std::filesystem::path& path) {
  return parse_crows_csv(slurp(path));
}

SeatTest parse_seat_json(std::string_view text, std::string id) {
  const json root = parse_json(text, "seat");
  SeatTest test;
  test.id = std::move(id);
  try {
    test.targets_x = examples_of(root, "targ1");
    test.targets_y = examples_of(root, "targ2");
    test.attributes_a = examples_of(root, "attr1");
    test.attributes_b = examples_of(root, "attr2");
  } catch (const json::exception& e) {
    throw ParseError("seat " + test.id + ": " + e.what());
  }
  if (test.targets_x.empty() || test.targets_y.empty() || test.attributes_a.empty() ||
      test.attributes_b.empty()) {
    throw ParseError("seat " + test.id + ": every set needs at least one sentence");
  }
  return test;
}

SeatTest load_seat(const std::filesystem::path& path, std::string id) {
  if (id.empty()) id = path.stem().string();
  return parse_seat_json(slurp(path), std::move(id));
}

}  // namespace debias
