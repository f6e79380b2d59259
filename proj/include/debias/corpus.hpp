#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "debias/lexicon.hpp"

namespace debias {

/// One whole-word occurrence of a tuple word inside a sentence.
/// [begin, end) is a byte span into the sentence text.
struct Match {
  std::string word;
  WordRef ref;
  std::size_t begin = 0;
  std::size_t end = 0;
};

struct SentenceRecord {
  std::string text;
  std::vector<Match> matches;
};

/// Sentences containing one attribute word (S^{a(i)}_m). Records keep only the
/// matches of the bucket's own word.
struct PerWordBucket {
  std::size_t concept_id = 0;
  std::string word;
  std::vector<SentenceRecord> sentences;
};

struct AttributeSlice {
  std::size_t attribute = 0;
  std::string name;
  /// Concept-aligned across attributes: buckets[p] of every attribute shares
  /// the same concept index.
  std::vector<PerWordBucket> buckets;

  std::size_t total() const;
};

struct CorpusSlices {
  /// Records keep only their neutral-word matches.
  std::vector<SentenceRecord> neutral;
  std::vector<AttributeSlice> attributes;

  std::size_t d() const { return attributes.size(); }
  std::size_t concepts() const {
    return attributes.empty() ? 0 : attributes.front().buckets.size();
  }
};

struct CollectOptions {
  std::size_t max_tokens_per_sentence = 128;
  /// Drop sentences that contain words of more than one attribute.
  bool exclusive_attribute_sentences = false;
};

/// Finds every case-insensitive whole-word occurrence of an indexed word.
std::vector<Match> find_matches(std::string_view text, const LexiconIndex& index);

/// Scrapes sentences (one per line) into neutral and per-word attribute slices.
/// Throws EmptyCorpus when no line matches any word.
CorpusSlices collect(std::istream& lines, const BiasDomain& domain,
                     const CollectOptions& options = {});
CorpusSlices collect(const std::vector<std::string>& lines, const BiasDomain& domain,
                     const CollectOptions& options = {});

/// Removes every concept whose bucket in any attribute holds fewer than
/// `threshold` sentences. Throws EmptyCorpus if nothing survives.
CorpusSlices reliability_filter(CorpusSlices slices, std::size_t threshold = 30);

/// Downsamples each concept's buckets to the smallest size among attributes.
CorpusSlices quality_equalize(CorpusSlices slices, std::uint64_t seed);

/// Caps each attribute slice at `per_attribute_cap` sentences using
/// largest-remainder apportionment across buckets.
CorpusSlices quantity_cap(CorpusSlices slices, std::size_t per_attribute_cap,
                          std::uint64_t seed);

/// Largest-remainder apportionment of `total` seats proportional to `sizes`.
/// Ties in the fractional part go to the lower index.
std::vector<std::size_t> apportion(const std::vector<std::size_t>& sizes,
                                   std::size_t total);

struct StatRow {
  std::string attribute;               // attribute name, or "neutral"
  std::optional<std::size_t> concept_id;  // empty for the neutral row
  std::string word;
  std::size_t count = 0;
};

std::vector<StatRow> corpus_stats(const CorpusSlices& slices);

/// Appends stats rows under a stage label ("raw", "reliability", ...) as CSV.
/// Writes the header when `with_header` is set.
void write_stats_csv(std::ostream& out, const std::string& stage,
                     const std::vector<StatRow>& rows, bool with_header);

/// Writes one TSV file per bucket plus neutral.tsv and manifest.tsv into dir.
/// Each line: char_start \t char_end \t word \t sentence.
void write_slices(const CorpusSlices& slices, const std::filesystem::path& dir);

/// Reads slices written by write_slices. Words are resolved against `domain`.
CorpusSlices read_slices(const std::filesystem::path& dir, const BiasDomain& domain);

/// Whitespace-separated token count used for the sentence length limit.
std::size_t whitespace_token_count(std::string_view text);

}  // namespace debias
