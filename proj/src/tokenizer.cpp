#include "debias/tokenizer.hpp"

#include <cctype>
#include <fstream>
#include <limits>

#include "debias/error.hpp"
#include "debias/lexicon.hpp"

namespace debias {

namespace {

constexpr std::size_t kNoOffset = std::numeric_limits<std::size_t>::max();
constexpr std::size_t kMaxWordChars = 100;

bool is_punct(unsigned char c) { return c < 0x80 && std::ispunct(c); }

struct Piece {
  std::size_t begin;
  std::size_t end;
};

/// Whitespace and punctuation pre-split.
std::vector<Piece> presplit(std::string_view text) {
  std::vector<Piece> out;
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (std::isspace(c)) {
      ++i;
    } else if (is_punct(c)) {
      out.push_back({i, i + 1});
      ++i;
    } else {
      std::size_t j = i;
      while (j < n) {
        const auto cj = static_cast<unsigned char>(text[j]);
        if (std::isspace(cj) || is_punct(cj)) break;
        ++j;
      }
      out.push_back({i, j});
      i = j;
    }
  }
  return out;
}

}  // namespace

WordPieceTokenizer::WordPieceTokenizer(std::vector<std::string> vocab)
    : vocab_(std::move(vocab)) {
  static const char* kSpecials[] = {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"};
  if (vocab_.size() < 5) throw InvalidEncoderSpec("vocabulary is missing special tokens");
  for (int i = 0; i < 5; ++i) {
    if (vocab_[static_cast<std::size_t>(i)] != kSpecials[i]) {
      throw InvalidEncoderSpec(std::string("vocabulary must start with ") + kSpecials[i]);
    }
  }
  for (std::size_t i = 0; i < vocab_.size(); ++i) {
    ids_.emplace(vocab_[i], static_cast<int>(i));
  }
}

WordPieceTokenizer WordPieceTokenizer::build(const std::vector<std::string>& words) {
  std::vector<std::string> vocab = {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"};
  for (int c = 33; c < 127; ++c) {
    if (c >= 'A' && c <= 'Z') continue;
    vocab.emplace_back(1, static_cast<char>(c));
  }
  for (int c = 33; c < 127; ++c) {
    if (std::isalnum(c) && !(c >= 'A' && c <= 'Z')) {
      vocab.push_back("##" + std::string(1, static_cast<char>(c)));
    }
  }
  std::unordered_map<std::string, bool> seen;
  for (const auto& v : vocab) seen.emplace(v, true);
  for (const auto& w : words) {
    const std::string lower = to_lower_ascii(w);
    for (const auto& p : presplit(lower)) {
      std::string piece = lower.substr(p.begin, p.end - p.begin);
      if (seen.emplace(piece, true).second) vocab.push_back(std::move(piece));
    }
  }
  return WordPieceTokenizer(std::move(vocab));
}

WordPieceTokenizer WordPieceTokenizer::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidEncoderSpec("cannot open vocabulary: " + path.string());
  std::vector<std::string> vocab;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    vocab.push_back(line);
  }
  return WordPieceTokenizer(std::move(vocab));
}

void WordPieceTokenizer::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  for (const auto& v : vocab_) out << v << '\n';
}

int WordPieceTokenizer::id(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  return it == ids_.end() ? kUnk : it->second;
}

std::vector<int> WordPieceTokenizer::word_pieces(std::string_view word) const {
  return tokenize(word, {}, false).token_ids;
}

TokenizedSentence WordPieceTokenizer::tokenize(
    std::string_view text,
    const std::vector<std::pair<std::size_t, std::size_t>>& word_char_spans,
    bool add_special_tokens) const {
  const std::string lower = to_lower_ascii(text);
  TokenizedSentence out;
  if (add_special_tokens) {
    out.token_ids.push_back(kCls);
    out.offsets.emplace_back(kNoOffset, kNoOffset);
  }
  for (const auto& p : presplit(lower)) {
    const std::size_t len = p.end - p.begin;
    if (len > kMaxWordChars) {
      out.token_ids.push_back(kUnk);
      out.offsets.emplace_back(p.begin, p.end);
      continue;
    }
    std::vector<std::pair<int, Piece>> pieces;
    std::size_t start = p.begin;
    bool bad = false;
    while (start < p.end) {
      std::size_t end = p.end;
      int found = -1;
      while (end > start) {
        std::string sub = lower.substr(start, end - start);
        if (start > p.begin) sub = "##" + sub;
        auto it = ids_.find(sub);
        if (it != ids_.end()) {
          found = it->second;
          break;
        }
        --end;
      }
      if (found < 0) {
        bad = true;
        break;
      }
      pieces.push_back({found, {start, end}});
      start = end;
    }
    if (bad) {
      out.token_ids.push_back(kUnk);
      out.offsets.emplace_back(p.begin, p.end);
    } else {
      for (const auto& [tid, piece] : pieces) {
        out.token_ids.push_back(tid);
        out.offsets.emplace_back(piece.begin, piece.end);
      }
    }
  }
  if (add_special_tokens) {
    out.token_ids.push_back(kSep);
    out.offsets.emplace_back(kNoOffset, kNoOffset);
  }

  for (const auto& [b, e] : word_char_spans) {
    TokenSpan span{out.size(), out.size()};
    for (std::size_t t = 0; t < out.size(); ++t) {
      const auto [tb, te] = out.offsets[t];
      if (tb == kNoOffset) continue;
      if (tb < e && te > b) {
        if (span.begin == out.size()) span.begin = t;
        span.end = t + 1;
      }
    }
    if (span.begin >= span.end) {
      throw BadSpan("character span [" + std::to_string(b) + ", " + std::to_string(e) +
                    ") covers no token");
    }
    out.word_spans.push_back(span);
  }
  return out;
}

}  // namespace debias
