#include "debias/lexicon.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>

#include "debias/error.hpp"

namespace debias {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> normalize(std::vector<std::string> words) {
  for (auto& w : words) w = to_lower_ascii(trim(w));
  return words;
}

void check_or_throw(const BiasDomain& domain) {
  if (domain.d() < 2) {
    throw InvalidDomain("a bias domain needs at least two attributes, got " +
                        std::to_string(domain.d()));
  }
  const std::size_t g = domain.g();
  for (const auto& a : domain.attributes) {
    if (a.words.size() != g) {
      throw MismatchedTupleLength("attribute '" + a.name + "' has " +
                                  std::to_string(a.words.size()) +
                                  " words, expected " + std::to_string(g));
    }
  }
  if (g == 0) throw InvalidDomain("attribute tuples are empty");

  std::set<std::string> neutral(domain.neutral.begin(), domain.neutral.end());
  for (const auto& a : domain.attributes) {
    for (const auto& w : a.words) {
      if (neutral.count(w)) throw OverlapError("word is both neutral and attribute: " + w);
    }
  }
  for (std::size_t m = 0; m < g; ++m) {
    std::set<std::string> seen;
    for (const auto& a : domain.attributes) {
      if (!seen.insert(a.words[m]).second) {
        throw DuplicateConcept("concept " + std::to_string(m) +
                               " repeats word: " + a.words[m]);
      }
    }
  }
  const auto problems = validate_domain(domain);
  if (!problems.empty()) throw InvalidDomain(problems.front());
}

}  // namespace

std::string to_lower_ascii(std::string_view s) {
  std::string out(s);
  for (auto& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

std::vector<std::string> read_word_list(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidDomain("cannot open word list: " + path.string());
  std::vector<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    words.push_back(t);
  }
  return words;
}

void write_word_list(const std::filesystem::path& path,
                     const std::vector<std::string>& words) {
  std::ofstream out(path);
  if (!out) throw InvalidDomain("cannot write word list: " + path.string());
  for (const auto& w : words) out << w << '\n';
}

BiasDomain make_bias_domain(std::string name, std::vector<std::string> neutral,
                            std::vector<std::vector<std::string>> attributes,
                            std::vector<std::string> attribute_names) {
  BiasDomain domain;
  domain.name = std::move(name);
  domain.neutral = normalize(std::move(neutral));
  for (std::size_t i = 0; i < attributes.size(); ++i) {
    AttributeTuple t;
    t.index = i;
    t.name = i < attribute_names.size() ? attribute_names[i]
                                        : "attribute" + std::to_string(i + 1);
    t.words = normalize(std::move(attributes[i]));
    domain.attributes.push_back(std::move(t));
  }
  check_or_throw(domain);
  return domain;
}

BiasDomain load_bias_domain(const std::filesystem::path& neutral_file,
                            const std::vector<std::filesystem::path>& attribute_files,
                            std::string name) {
  std::vector<std::vector<std::string>> attrs;
  std::vector<std::string> names;
  for (const auto& p : attribute_files) {
    attrs.push_back(read_word_list(p));
    names.push_back(p.stem().string());
  }
  return make_bias_domain(std::move(name), read_word_list(neutral_file),
                          std::move(attrs), std::move(names));
}

std::vector<std::filesystem::path> save_bias_domain(const BiasDomain& domain,
                                                    const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_word_list(dir / "neutral.txt", domain.neutral);
  std::vector<std::filesystem::path> paths;
  for (const auto& a : domain.attributes) {
    paths.push_back(dir / (a.name + ".txt"));
    write_word_list(paths.back(), a.words);
  }
  return paths;
}

std::vector<std::string> validate_domain(const BiasDomain& domain) {
  std::vector<std::string> out;
  auto check_word = [&](const std::string& w) {
    if (w.empty()) {
      out.push_back("empty word: ");
      return;
    }
    if (std::any_of(w.begin(), w.end(),
                    [](unsigned char c) { return std::isspace(c); })) {
      out.push_back("whitespace: " + w);
    }
    if (to_lower_ascii(w) != w) out.push_back("not lowercase: " + w);
  };

  if (domain.d() < 2) {
    out.push_back("too few attributes: " + std::to_string(domain.d()));
  }
  for (const auto& w : domain.neutral) check_word(w);

  const std::size_t g = domain.g();
  if (!domain.attributes.empty() && g == 0) out.push_back("empty tuple: " + domain.attributes.front().name);
  for (const auto& a : domain.attributes) {
    if (a.words.size() != g) {
      out.push_back("length mismatch: " + a.name + " has " +
                    std::to_string(a.words.size()) + ", expected " +
                    std::to_string(g));
    }
    for (const auto& w : a.words) check_word(w);
  }

  std::set<std::string> neutral(domain.neutral.begin(), domain.neutral.end());
  std::set<std::string> reported;
  for (const auto& a : domain.attributes) {
    for (const auto& w : a.words) {
      if (neutral.count(w) && reported.insert(w).second) out.push_back("overlap: " + w);
    }
  }

  std::size_t shared = g;
  for (const auto& a : domain.attributes) shared = std::min(shared, a.words.size());
  for (std::size_t m = 0; m < shared; ++m) {
    std::set<std::string> seen;
    for (const auto& a : domain.attributes) {
      if (!seen.insert(a.words[m]).second) {
        out.push_back("duplicate concept: " + a.words[m]);
      }
    }
  }
  return out;
}

LexiconIndex::LexiconIndex(const BiasDomain& domain) {
  for (std::size_t j = 0; j < domain.neutral.size(); ++j) {
    if (map_.emplace(domain.neutral[j], WordRef{WordRole::kNeutral, 0, j}).second) {
      words_.push_back(domain.neutral[j]);
    }
  }
  for (const auto& a : domain.attributes) {
    for (std::size_t m = 0; m < a.words.size(); ++m) {
      if (map_.emplace(a.words[m], WordRef{WordRole::kAttribute, a.index, m}).second) {
        words_.push_back(a.words[m]);
      }
    }
  }
}

std::optional<WordRef> LexiconIndex::find(std::string_view word) const {
  auto it = map_.find(to_lower_ascii(word));
  if (it == map_.end()) return std::nullopt;
  return it->second;
}

}  // namespace debias
