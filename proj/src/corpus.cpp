#include "debias/corpus.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include "debias/error.hpp"
#include "debias/rng.hpp"

namespace debias {

namespace {

bool is_word_byte(unsigned char c) {
  return std::isalnum(c) || c == '_' || c >= 0x80;
}

std::string leading_run(std::string_view w) {
  std::size_t j = 0;
  while (j < w.size() && is_word_byte(static_cast<unsigned char>(w[j]))) ++j;
  return std::string(w.substr(0, j));
}

/// Index from the leading word-character run of each lexicon word to the
/// words sharing it ("ma" -> {"ma'am"}).
class MatchTable {
 public:
  explicit MatchTable(const LexiconIndex& index) : index_(index) {
    for (const auto& w : index.words()) {
      std::string run = leading_run(w);
      if (!run.empty()) by_run_[run].push_back(w);
    }
  }

  std::vector<Match> scan(std::string_view text) const {
    const std::string lower = to_lower_ascii(text);
    std::vector<Match> out;
    const std::size_t n = lower.size();
    std::size_t i = 0;
    while (i < n) {
      if (!is_word_byte(static_cast<unsigned char>(lower[i]))) {
        ++i;
        continue;
      }
      std::size_t j = i;
      while (j < n && is_word_byte(static_cast<unsigned char>(lower[j]))) ++j;
      auto it = by_run_.find(lower.substr(i, j - i));
      if (it != by_run_.end()) {
        for (const auto& w : it->second) {
          const std::size_t e = i + w.size();
          if (e > n || lower.compare(i, w.size(), w) != 0) continue;
          if (e < n && is_word_byte(static_cast<unsigned char>(lower[e]))) continue;
          out.push_back(Match{w, *index_.find(w), i, e});
        }
      }
      i = j;
    }
    return out;
  }

 private:
  const LexiconIndex& index_;
  std::unordered_map<std::string, std::vector<std::string>> by_run_;
};

CorpusSlices empty_slices(const BiasDomain& domain) {
  CorpusSlices s;
  for (const auto& a : domain.attributes) {
    AttributeSlice slice;
    slice.attribute = a.index;
    slice.name = a.name;
    for (std::size_t m = 0; m < a.words.size(); ++m) {
      slice.buckets.push_back(PerWordBucket{m, a.words[m], {}});
    }
    s.attributes.push_back(std::move(slice));
  }
  return s;
}

template <typename T>
std::vector<T> take_sorted(const std::vector<T>& v, const std::vector<std::size_t>& idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(v[i]);
  return out;
}

std::string sanitize(std::string s) {
  for (auto& c : s) {
    if (c == '\t' || c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

void write_records(const std::filesystem::path& path,
                   const std::vector<SentenceRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw EmptyCorpus("cannot write slice file: " + path.string());
  for (const auto& r : records) {
    for (const auto& m : r.matches) {
      out << m.begin << '\t' << m.end << '\t' << m.word << '\t' << r.text << '\n';
    }
  }
}

std::vector<SentenceRecord> read_records(const std::filesystem::path& path,
                                         const LexiconIndex& index) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open slice file: " + path.string());
  std::vector<SentenceRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::array<std::size_t, 3> tabs{};
    std::size_t pos = 0;
    for (auto& t : tabs) {
      t = line.find('\t', pos);
      if (t == std::string::npos) {
        throw ParseError(path.string() + ":" + std::to_string(lineno) +
                         ": expected 4 tab-separated fields");
      }
      pos = t + 1;
    }
    Match m;
    try {
      m.begin = std::stoul(line.substr(0, tabs[0]));
      m.end = std::stoul(line.substr(tabs[0] + 1, tabs[1] - tabs[0] - 1));
    } catch (const std::exception&) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": bad span");
    }
    m.word = line.substr(tabs[1] + 1, tabs[2] - tabs[1] - 1);
    std::string text = line.substr(tabs[2] + 1);
    auto ref = index.find(m.word);
    if (!ref) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) +
                       ": word not in lexicon: " + m.word);
    }
    m.ref = *ref;
    if (m.end > text.size() || m.begin >= m.end ||
        to_lower_ascii(std::string_view(text).substr(m.begin, m.end - m.begin)) != m.word) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) +
                       ": span does not match word " + m.word);
    }
    const bool same_record =
        !out.empty() && out.back().text == text &&
        std::none_of(out.back().matches.begin(), out.back().matches.end(),
                     [&](const Match& x) { return x.begin == m.begin; });
    if (same_record) {
      out.back().matches.push_back(std::move(m));
    } else {
      out.push_back(SentenceRecord{std::move(text), {std::move(m)}});
    }
  }
  return out;
}

std::string bucket_file_name(std::size_t attribute, std::size_t concept_id,
                             const std::string& word) {
  std::string safe;
  for (unsigned char c : word) safe += std::isalnum(c) ? static_cast<char>(c) : '_';
  char buf[64];
  std::snprintf(buf, sizeof buf, "attr%zu_c%04zu_", attribute, concept_id);
  return buf + safe + ".tsv";
}

}  // namespace

std::size_t AttributeSlice::total() const {
  std::size_t n = 0;
  for (const auto& b : buckets) n += b.sentences.size();
  return n;
}

std::size_t whitespace_token_count(std::string_view text) {
  std::size_t n = 0;
  bool in_token = false;
  for (unsigned char c : text) {
    const bool space = std::isspace(c);
    if (!space && !in_token) ++n;
    in_token = !space;
  }
  return n;
}

std::vector<Match> find_matches(std::string_view text, const LexiconIndex& index) {
  return MatchTable(index).scan(text);
}

CorpusSlices collect(const std::vector<std::string>& lines, const BiasDomain& domain,
                     const CollectOptions& options) {
  const LexiconIndex index(domain);
  const MatchTable table(index);
  CorpusSlices slices = empty_slices(domain);
  bool any = false;

  for (const auto& raw : lines) {
    std::string text = raw;
    if (!text.empty() && text.back() == '\r') text.pop_back();
    text = sanitize(std::move(text));
    if (whitespace_token_count(text) > options.max_tokens_per_sentence) continue;

    const auto matches = table.scan(text);
    if (matches.empty()) continue;

    if (options.exclusive_attribute_sentences) {
      std::optional<std::size_t> first;
      bool mixed = false;
      for (const auto& m : matches) {
        if (m.ref.role != WordRole::kAttribute) continue;
        if (first && *first != m.ref.attribute) mixed = true;
        first = m.ref.attribute;
      }
      if (mixed) continue;
    }

    SentenceRecord neutral{text, {}};
    // (attribute, concept_id) -> matches of that bucket's word
    std::map<std::pair<std::size_t, std::size_t>, std::vector<Match>> buckets;
    for (const auto& m : matches) {
      if (m.ref.role == WordRole::kNeutral) {
        neutral.matches.push_back(m);
      } else {
        buckets[{m.ref.attribute, m.ref.index}].push_back(m);
      }
    }
    if (!neutral.matches.empty()) slices.neutral.push_back(std::move(neutral));
    for (auto& [key, ms] : buckets) {
      slices.attributes[key.first].buckets[key.second].sentences.push_back(
          SentenceRecord{text, std::move(ms)});
    }
    any = true;
  }
  if (!any) throw EmptyCorpus("no sentence contains any tuple word");
  return slices;
}

CorpusSlices collect(std::istream& in, const BiasDomain& domain,
                     const CollectOptions& options) {
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(std::move(line));
  return collect(lines, domain, options);
}

CorpusSlices reliability_filter(CorpusSlices slices, std::size_t threshold) {
  if (threshold == 0 || slices.attributes.empty()) return slices;
  const std::size_t concepts = slices.concepts();
  std::vector<bool> keep(concepts, true);
  for (const auto& a : slices.attributes) {
    for (std::size_t p = 0; p < concepts; ++p) {
      if (a.buckets[p].sentences.size() < threshold) keep[p] = false;
    }
  }
  for (auto& a : slices.attributes) {
    std::vector<PerWordBucket> kept;
    for (std::size_t p = 0; p < concepts; ++p) {
      if (keep[p]) kept.push_back(std::move(a.buckets[p]));
    }
    a.buckets = std::move(kept);
  }
  if (slices.concepts() == 0) {
    throw EmptyCorpus("reliability threshold " + std::to_string(threshold) +
                      " removed every concept");
  }
  return slices;
}

CorpusSlices quality_equalize(CorpusSlices slices, std::uint64_t seed) {
  const std::size_t concepts = slices.concepts();
  for (std::size_t p = 0; p < concepts; ++p) {
    std::size_t n = SIZE_MAX;
    for (const auto& a : slices.attributes) n = std::min(n, a.buckets[p].sentences.size());
    for (auto& a : slices.attributes) {
      auto& bucket = a.buckets[p];
      if (bucket.sentences.size() == n) continue;
      Rng rng(derive_seed(seed, "equalize", a.attribute, bucket.concept_id));
      bucket.sentences = take_sorted(bucket.sentences,
                                     rng.sample_sorted(bucket.sentences.size(), n));
    }
  }
  return slices;
}

std::vector<std::size_t> apportion(const std::vector<std::size_t>& sizes,
                                   std::size_t total) {
  const std::size_t sum = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
  std::vector<std::size_t> seats(sizes.size(), 0);
  if (sum == 0) return seats;
  if (total >= sum) return sizes;
  std::vector<std::uint64_t> remainder(sizes.size());
  std::size_t assigned = 0;
  for (std::size_t b = 0; b < sizes.size(); ++b) {
    const auto prod = static_cast<unsigned __int128>(total) * sizes[b];
    seats[b] = static_cast<std::size_t>(prod / sum);
    remainder[b] = static_cast<std::uint64_t>(prod % sum);
    assigned += seats[b];
  }
  std::vector<std::size_t> order(sizes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return remainder[x] > remainder[y];
  });
  for (std::size_t r = 0; assigned < total; ++r, ++assigned) ++seats[order[r]];
  return seats;
}

CorpusSlices quantity_cap(CorpusSlices slices, std::size_t per_attribute_cap,
                          std::uint64_t seed) {
  if (per_attribute_cap == 0) throw InvalidConfig("quantity cap must be positive");
  for (auto& a : slices.attributes) {
    if (a.total() <= per_attribute_cap) continue;
    std::vector<std::size_t> sizes;
    for (const auto& b : a.buckets) sizes.push_back(b.sentences.size());
    const auto seats = apportion(sizes, per_attribute_cap);
    for (std::size_t p = 0; p < a.buckets.size(); ++p) {
      auto& bucket = a.buckets[p];
      if (seats[p] == bucket.sentences.size()) continue;
      Rng rng(derive_seed(seed, "quantity", a.attribute, bucket.concept_id));
      bucket.sentences = take_sorted(bucket.sentences,
                                     rng.sample_sorted(bucket.sentences.size(), seats[p]));
    }
  }
  return slices;
}

std::vector<StatRow> corpus_stats(const CorpusSlices& slices) {
  std::vector<StatRow> rows;
  if (!slices.neutral.empty()) {
    rows.push_back(StatRow{"neutral", std::nullopt, "*", slices.neutral.size()});
  }
  for (const auto& a : slices.attributes) {
    for (const auto& b : a.buckets) {
      rows.push_back(StatRow{a.name, b.concept_id, b.word, b.sentences.size()});
    }
  }
  return rows;
}

void write_stats_csv(std::ostream& out, const std::string& stage,
                     const std::vector<StatRow>& rows, bool with_header) {
  if (with_header) out << "stage,attribute,concept,word,count\n";
  for (const auto& r : rows) {
    out << stage << ',' << r.attribute << ',';
    if (r.concept_id) out << *r.concept_id;
    out << ',' << r.word << ',' << r.count << '\n';
  }
}

void write_slices(const CorpusSlices& slices, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir / "manifest.tsv", std::ios::binary);
  manifest << "kind\tattribute\tconcept\tword\tfile\tcount\n";
  write_records(dir / "neutral.tsv", slices.neutral);
  manifest << "neutral\t-\t-\t-\tneutral.tsv\t" << slices.neutral.size() << '\n';
  for (const auto& a : slices.attributes) {
    for (const auto& b : a.buckets) {
      const std::string file = bucket_file_name(a.attribute, b.concept_id, b.word);
      write_records(dir / file, b.sentences);
      manifest << "bucket\t" << a.attribute << '\t' << b.concept_id << '\t' << b.word
               << '\t' << file << '\t' << b.sentences.size() << '\n';
    }
  }
}

CorpusSlices read_slices(const std::filesystem::path& dir, const BiasDomain& domain) {
  const LexiconIndex index(domain);
  std::ifstream manifest(dir / "manifest.tsv", std::ios::binary);
  if (!manifest) throw ParseError("missing slice manifest in " + dir.string());
  CorpusSlices slices;
  for (const auto& a : domain.attributes) {
    slices.attributes.push_back(AttributeSlice{a.index, a.name, {}});
  }
  std::string line;
  std::getline(manifest, line);  // header
  std::size_t lineno = 1;
  while (std::getline(manifest, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, '\t');) f.push_back(cell);
    if (f.size() != 6) {
      throw ParseError("manifest.tsv:" + std::to_string(lineno) + ": expected 6 fields");
    }
    auto records = read_records(dir / f[4], index);
    if (f[0] == "neutral") {
      slices.neutral = std::move(records);
      continue;
    }
    const std::size_t attr = std::stoul(f[1]);
    const std::size_t concept_id = std::stoul(f[2]);
    if (attr >= slices.attributes.size()) {
      throw ParseError("manifest.tsv:" + std::to_string(lineno) + ": attribute out of range");
    }
    slices.attributes[attr].buckets.push_back(PerWordBucket{concept_id, f[3], std::move(records)});
  }
  const std::size_t concepts = slices.concepts();
  for (const auto& a : slices.attributes) {
    if (a.buckets.size() != concepts) throw ParseError("manifest buckets are not concept-aligned");
    for (std::size_t p = 0; p < concepts; ++p) {
      if (a.buckets[p].concept_id != slices.attributes.front().buckets[p].concept_id) {
        throw ParseError("manifest buckets are not concept-aligned");
      }
    }
  }
  return slices;
}

}  // namespace debias
