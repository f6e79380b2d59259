#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace debias {

/// One attribute's word tuple. Position m in `words` is the concept index
/// shared across all attributes of a domain ("uncle" <-> "aunt").
struct AttributeTuple {
  std::size_t index = 0;  // 0-based attribute index
  std::string name;       // e.g. "male"
  std::vector<std::string> words;
};

/// A bias domain: the neutral word tuple plus d index-aligned attribute
/// tuples. Immutable after loading.
struct BiasDomain {
  std::string name;
  std::vector<AttributeTuple> attributes;
  std::vector<std::string> neutral;

  std::size_t d() const { return attributes.size(); }
  std::size_t g() const {
    return attributes.empty() ? 0 : attributes.front().words.size();
  }
};

/// Loads and validates a domain. Words are trimmed and lowercased; lines
/// starting with '#' and blank lines are skipped. Attribute names default to
/// the file stems.
///
/// Throws MismatchedTupleLength, OverlapError, DuplicateConcept, or
/// InvalidDomain (fewer than two attributes, malformed words).
BiasDomain load_bias_domain(const std::filesystem::path& neutral_file,
                            const std::vector<std::filesystem::path>& attribute_files,
                            std::string name = {});

/// Builds a domain from in-memory lists with the same normalization and checks
/// as load_bias_domain.
BiasDomain make_bias_domain(std::string name, std::vector<std::string> neutral,
                            std::vector<std::vector<std::string>> attributes,
                            std::vector<std::string> attribute_names = {});

/// Reports every invariant violation as "<rule>: <word>". Never throws.
std::vector<std::string> validate_domain(const BiasDomain& domain);

/// Reads a word-list file (one word per line, '#' comments ignored).
std::vector<std::string> read_word_list(const std::filesystem::path& path);

void write_word_list(const std::filesystem::path& path,
                     const std::vector<std::string>& words);

/// Writes neutral.txt and one <attribute name>.txt per attribute into `dir`.
/// Returns the attribute file paths in attribute order.
std::vector<std::filesystem::path> save_bias_domain(const BiasDomain& domain,
                                                    const std::filesystem::path& dir);

enum class WordRole { kNeutral, kAttribute };

struct WordRef {
  WordRole role;
  std::size_t attribute = 0;  // meaningful for kAttribute
  std::size_t index = 0;      // concept index, or position in the neutral list
};

/// Word -> role lookup over a domain.
class LexiconIndex {
 public:
  explicit LexiconIndex(const BiasDomain& domain);

  std::optional<WordRef> find(std::string_view word) const;

  /// Every indexed word, neutral first, then attributes in order.
  const std::vector<std::string>& words() const { return words_; }

 private:
  std::unordered_map<std::string, WordRef> map_;
  std::vector<std::string> words_;
};

std::string to_lower_ascii(std::string_view s);

}  // namespace debias
