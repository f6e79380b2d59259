// Shared fixtures for the unit and acceptance tests.
#pragma once

#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "debias/corpus.hpp"
#include "debias/lexicon.hpp"
#include "debias/tiny_encoder.hpp"
#include "debias/tokenizer.hpp"

namespace testsupport {

using namespace debias;

inline BiasDomain toy_domain() {
  return make_bias_domain("gender", {"science", "art", "math", "poetry"},
                          {{"uncle", "father"}, {"aunt", "mother"}}, {"male", "female"});
}

/// Each attribute word appears in `per_word` template sentences; male words
/// lean toward science/math, female words toward art/poetry.
inline std::vector<std::string> synthetic_corpus(std::uint32_t seed, std::size_t per_word = 40) {
  std::mt19937 rng(seed);
  const std::vector<std::string> templates = {
      "the {a} talked about {n} all evening", "my {a} always liked {n}",
      "a {a} wrote a letter about {n}",       "yesterday the {a} read a book on {n}"};
  const std::vector<std::pair<std::vector<std::string>, std::vector<std::string>>> groups = {
      {{"uncle", "father"}, {"science", "math"}}, {{"aunt", "mother"}, {"art", "poetry"}}};
  std::vector<std::string> lines;
  for (const auto& [words, lean] : groups) {
    for (const auto& w : words) {
      for (std::size_t i = 0; i < per_word; ++i) {
        std::string t = templates[rng() % templates.size()];
        t.replace(t.find("{a}"), 3, w);
        t.replace(t.find("{n}"), 3, lean[rng() % lean.size()]);
        lines.push_back(t);
      }
    }
  }
  for (const std::string n : {"science", "art", "math", "poetry"}) {
    for (int i = 0; i < 10; ++i) lines.push_back("people often discuss " + n + " together");
  }
  return lines;
}

inline std::vector<std::string> vocabulary_words() {
  return {"the",  "talked", "about", "all",       "evening", "my",   "always",
          "liked", "a",     "wrote", "letter",    "yesterday", "read", "book",
          "on",   "people", "often", "discuss",   "together", "science", "art",
          "math", "poetry", "uncle", "father",    "aunt",    "mother"};
}

struct TinySetup {
  WordPieceTokenizer tokenizer;
  TinyEncoder encoder;
};

inline TinySetup make_tiny(std::size_t layers = 2, std::size_t hidden = 8, std::size_t heads = 2,
                           std::uint64_t seed = 11) {
  WordPieceTokenizer tok = WordPieceTokenizer::build(vocabulary_words());
  EncoderSpec spec;
  spec.num_layers = layers;
  spec.hidden_size = hidden;
  spec.num_heads = heads;
  spec.vocab_size = tok.vocab_size();
  spec.max_positions = 64;
  return TinySetup{std::move(tok), TinyEncoder(spec, seed)};
}

inline std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("debias_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testsupport
