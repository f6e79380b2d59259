#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "debias/encoder.hpp"

namespace debias {

/// Text-to-token contract shared by every encoder adapter.
class Tokenizer {
 public:
  virtual ~Tokenizer() = default;

  virtual std::size_t vocab_size() const = 0;

  /// Tokenizes `text`; each entry of `word_char_spans` ([begin, end) byte
  /// ranges) is mapped onto the sub-tokens it overlaps. Throws BadSpan when a
  /// span covers no token.
  virtual TokenizedSentence tokenize(
      std::string_view text,
      const std::vector<std::pair<std::size_t, std::size_t>>& word_char_spans = {},
      bool add_special_tokens = true) const = 0;

  /// Sub-token ids of a single word.
  virtual std::vector<int> word_pieces(std::string_view word) const = 0;
};

/// Lowercasing WordPiece tokenizer (greedy longest match, "##" continuation
/// pieces). Text is pre-split on whitespace, and every ASCII punctuation
/// character becomes its own token.
class WordPieceTokenizer final : public Tokenizer {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kCls = 2;
  static constexpr int kSep = 3;
  static constexpr int kMask = 4;

  /// `vocab` must start with [PAD] [UNK] [CLS] [SEP] [MASK].
  explicit WordPieceTokenizer(std::vector<std::string> vocab);

  /// Special tokens, every printable ASCII character, "##"-continuations of
  /// alphanumerics, then the pre-split pieces of `words` in order.
  static WordPieceTokenizer build(const std::vector<std::string>& words);

  static WordPieceTokenizer load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  std::size_t vocab_size() const override { return vocab_.size(); }
  int id(std::string_view token) const;
  const std::string& token(int id) const { return vocab_.at(static_cast<std::size_t>(id)); }

  TokenizedSentence tokenize(std::string_view text,
                             const std::vector<std::pair<std::size_t, std::size_t>>&
                                 word_char_spans = {},
                             bool add_special_tokens = true) const override;

  std::vector<int> word_pieces(std::string_view word) const override;

 private:
  std::vector<std::string> vocab_;
  std::unordered_map<std::string, int> ids_;
};

}  // namespace debias
