#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "debias/encoder.hpp"
#include "debias/tokenizer.hpp"

namespace debias {

// ---------------------------------------------------------------------------
// Sentence embeddings

enum class Pooling { kMean, kFirstToken };

/// Final-layer pooling of already computed states.
Eigen::VectorXd pool_states(const LayerStates& states, Pooling pooling = Pooling::kMean);

Eigen::VectorXd sentence_embedding(const Encoder& encoder, const Tokenizer& tokenizer,
                                   const PromptParameters* prompt, std::string_view sentence,
                                   Pooling pooling = Pooling::kMean);

// ---------------------------------------------------------------------------
// SEAT

struct SeatTest {
  std::string id;
  std::vector<std::string> targets_x;
  std::vector<std::string> targets_y;
  std::vector<std::string> attributes_a;
  std::vector<std::string> attributes_b;
};

struct SeatResult {
  double effect_size = 0.0;
  double p_value = 1.0;
};

struct SeatOptions {
  /// Exact enumeration of partitions up to this many targets in X u Y.
  std::size_t exact_limit = 12;
  std::size_t samples = 10000;
  std::uint64_t seed = 0;
};

/// Effect size (population standard deviation over X u Y) and one-sided
/// permutation p-value: the fraction of equal-size re-partitions of X u Y
/// whose test statistic is >= the observed one. Rows are embeddings.
/// Throws DegenerateVariance, EmptyInput.
SeatResult seat_score(const RowMatrix& x, const RowMatrix& y, const RowMatrix& a,
                      const RowMatrix& b, const SeatOptions& options = {});

using SentenceEmbedder = std::function<Eigen::VectorXd(const std::string&)>;

SeatResult seat_score(const SeatTest& test, const SentenceEmbedder& embed,
                      const SeatOptions& options = {});

// ---------------------------------------------------------------------------
// CrowS-Pairs

struct CrowsPair {
  std::string stereo;
  std::string anti;
  std::string bias_type;
};

/// A pair tokenized and aligned: shared_* hold the positions of tokens that are
/// unmodified between the two sentences (longest common subsequence),
/// excluding special tokens.
struct AlignedCrowsPair {
  std::vector<int> stereo_ids;
  std::vector<int> anti_ids;
  std::vector<std::size_t> shared_stereo;
  std::vector<std::size_t> shared_anti;
  std::string bias_type;
};

/// Throws InvalidQuery if the sentences tokenize identically.
AlignedCrowsPair align_crows_pair(const Tokenizer& tokenizer, const CrowsPair& pair);

/// Pseudo-log-likelihood of token positions in a sentence.
class PllScorer {
 public:
  virtual ~PllScorer() = default;
  virtual double pll(const std::vector<int>& token_ids,
                     const std::vector<std::size_t>& positions) const = 0;
};

class EncoderPllScorer final : public PllScorer {
 public:
  EncoderPllScorer(const Encoder& encoder, const PromptParameters* prompt)
      : encoder_(encoder), prompt_(prompt) {}
  double pll(const std::vector<int>& token_ids,
             const std::vector<std::size_t>& positions) const override;

 private:
  const Encoder& encoder_;
  const PromptParameters* prompt_;
};

/// Percentage of pairs whose stereotypical sentence has the higher PLL; ties
/// count one half. Throws EmptyInput.
double crows_score(const std::vector<AlignedCrowsPair>& pairs, const PllScorer& scorer);

/// Same metric from precomputed (stereo PLL, anti PLL) values.
double crows_score_from_pll(const std::vector<std::pair<double, double>>& plls);

// ---------------------------------------------------------------------------
// StereoSet intrasentence

struct StereoExample {
  std::string id;
  std::string target;
  std::string bias_type;
  std::string context;  // contains exactly one "BLANK"
  std::string stereotype;       // fill word(s)
  std::string anti_stereotype;
  std::string unrelated;
};

struct StereoScores {
  double lms = 0.0;
  double ss = 0.0;
  double icat = 0.0;
  std::size_t count = 0;
};

struct StereoReport {
  std::map<std::string, StereoScores> per_domain;
  StereoScores overall;
};

double icat_score(double lms, double ss);

/// Scores one candidate fill of a context (higher = more likely).
class FillScorer {
 public:
  virtual ~FillScorer() = default;
  virtual double score(const std::string& context, const std::string& fill) const = 0;
};

/// Length-normalized chained masked-token log-probability of the fill.
class EncoderFillScorer final : public FillScorer {
 public:
  EncoderFillScorer(const Encoder& encoder, const Tokenizer& tokenizer,
                    const PromptParameters* prompt)
      : encoder_(encoder), tokenizer_(tokenizer), prompt_(prompt) {}
  double score(const std::string& context, const std::string& fill) const override;

 private:
  const Encoder& encoder_;
  const Tokenizer& tokenizer_;
  const PromptParameters* prompt_;
};

/// LMS counts, per example, each related candidate (stereotype and
/// anti-stereotype) that outscores the unrelated one, averaged over both;
/// SS is the percentage of examples whose stereotype outscores the
/// anti-stereotype (ties count one half). `filter` keeps only examples whose
/// target is listed. Throws EmptyAfterFilter.
StereoReport stereoset_score(const std::vector<StereoExample>& examples, const FillScorer& scorer,
                             const std::optional<std::vector<std::string>>& filter = std::nullopt);

/// Same metric from precomputed (stereotype, anti, unrelated) scores.
StereoReport stereoset_score_from_scores(const std::vector<StereoExample>& examples,
                                         const std::vector<std::array<double, 3>>& scores);

// ---------------------------------------------------------------------------
// Report

struct EvalReport {
  std::string label;
  std::map<std::string, SeatResult> seat;
  std::optional<double> crows;
  std::optional<StereoReport> stereoset;
};

/// "key = value" lines (seat.C6.effect_size = ..., stereoset.overall.icat = ...).
void write_report_kv(std::ostream& out, const EvalReport& report);
EvalReport read_report_kv(std::istream& in);

/// "benchmark,subset,metric,value" rows.
void write_report_csv(std::ostream& out, const EvalReport& report);

}  // namespace debias
