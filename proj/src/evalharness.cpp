#include "debias/evalharness.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include "debias/error.hpp"
#include "debias/lexicon.hpp"
#include "debias/rng.hpp"

namespace debias {

namespace {

double cosine(const Eigen::RowVectorXd& u, const Eigen::RowVectorXd& v) {
  const double nu = u.norm();
  const double nv = v.norm();
  if (nu == 0.0 || nv == 0.0) return 0.0;
  return u.dot(v) / (nu * nv);
}

double association(const Eigen::RowVectorXd& w, const RowMatrix& a, const RowMatrix& b) {
  double sa = 0.0;
  double sb = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) sa += cosine(w, a.row(i));
  for (Eigen::Index i = 0; i < b.rows(); ++i) sb += cosine(w, b.row(i));
  return sa / static_cast<double>(a.rows()) - sb / static_cast<double>(b.rows());
}

RowMatrix embed_all(const std::vector<std::string>& sentences, const SentenceEmbedder& embed) {
  RowMatrix out;
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    const Eigen::VectorXd v = embed(sentences[i]);
    if (i == 0) out.resize(static_cast<Eigen::Index>(sentences.size()), v.size());
    out.row(static_cast<Eigen::Index>(i)) = v.transpose();
  }
  return out;
}

void tally(StereoScores& s, double st, double an, double un, double& lms_hits, double& ss_hits) {
  lms_hits += 0.5 * ((st > un ? 1.0 : 0.0) + (an > un ? 1.0 : 0.0));
  ss_hits += st > an ? 1.0 : (st == an ? 0.5 : 0.0);
  ++s.count;
}

void finish(StereoScores& s, double lms_hits, double ss_hits) {
  const double n = static_cast<double>(s.count);
  s.lms = 100.0 * lms_hits / n;
  s.ss = 100.0 * ss_hits / n;
  s.icat = icat_score(s.lms, s.ss);
}

}  // namespace

Eigen::VectorXd pool_states(const LayerStates& states, Pooling pooling) {
  if (states.layers.empty() || states.tokens() == 0) throw EmptyInput("no token states to pool");
  const RowMatrix& last = states.final_layer();
  if (pooling == Pooling::kFirstToken) return last.row(0).transpose();
  return last.colwise().mean().transpose();
}

Eigen::VectorXd sentence_embedding(const Encoder& encoder, const Tokenizer& tokenizer,
                                   const PromptParameters* prompt, std::string_view sentence,
                                   Pooling pooling) {
  return pool_states(encoder.encode(tokenizer.tokenize(sentence), prompt), pooling);
}

SeatResult seat_score(const RowMatrix& x, const RowMatrix& y, const RowMatrix& a,
                      const RowMatrix& b, const SeatOptions& options) {
  if (x.rows() == 0 || y.rows() == 0 || a.rows() == 0 || b.rows() == 0) {
    throw EmptyInput("SEAT needs non-empty target and attribute sets");
  }
  const Eigen::Index nx = x.rows();
  const Eigen::Index n = nx + y.rows();
  Eigen::VectorXd s(n);
  for (Eigen::Index i = 0; i < nx; ++i) s[i] = association(x.row(i), a, b);
  for (Eigen::Index i = 0; i < y.rows(); ++i) s[nx + i] = association(y.row(i), a, b);

  const double mean_x = s.head(nx).mean();
  const double mean_y = s.tail(y.rows()).mean();
  const double mean_all = s.mean();
  const double stddev = std::sqrt((s.array() - mean_all).square().sum() / static_cast<double>(n));
  if (!(stddev > 0.0)) throw DegenerateVariance("association scores have zero variance");

  SeatResult result;
  result.effect_size = (mean_x - mean_y) / stddev;

  const double total = s.sum();
  const double observed = s.head(nx).sum() - s.tail(y.rows()).sum();
  const double tol = 1e-12 * std::max(1.0, std::abs(observed));
  std::size_t hits = 0;
  std::size_t trials = 0;
  if (static_cast<std::size_t>(n) <= options.exact_limit) {
    for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
      if (std::popcount(mask) != nx) continue;
      double in = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (mask & (1u << i)) in += s[i];
      }
      if (2.0 * in - total >= observed - tol) ++hits;
      ++trials;
    }
  } else {
    Rng rng(derive_seed(options.seed, "seat-permutation"));
    for (std::size_t t = 0; t < options.samples; ++t) {
      const auto perm = rng.permutation(static_cast<std::size_t>(n));
      double in = 0.0;
      for (Eigen::Index i = 0; i < nx; ++i) in += s[static_cast<Eigen::Index>(perm[i])];
      if (2.0 * in - total >= observed - tol) ++hits;
      ++trials;
    }
  }
  result.p_value = static_cast<double>(hits) / static_cast<double>(trials);
  return result;
}

SeatResult seat_score(const SeatTest& test, const SentenceEmbedder& embed,
                      const SeatOptions& options) {
  if (test.targets_x.empty() || test.targets_y.empty() || test.attributes_a.empty() ||
      test.attributes_b.empty()) {
    throw EmptyInput("SEAT test " + test.id + " has an empty set");
  }
  return seat_score(embed_all(test.targets_x, embed), embed_all(test.targets_y, embed),
                    embed_all(test.attributes_a, embed), embed_all(test.attributes_b, embed),
                    options);
}

AlignedCrowsPair align_crows_pair(const Tokenizer& tokenizer, const CrowsPair& pair) {
  AlignedCrowsPair out;
  out.bias_type = pair.bias_type;
  out.stereo_ids = tokenizer.tokenize(pair.stereo).token_ids;
  out.anti_ids = tokenizer.tokenize(pair.anti).token_ids;
  if (out.stereo_ids == out.anti_ids) {
    throw InvalidQuery("CrowS pair sentences do not differ: " + pair.stereo);
  }
  // LCS over the interior tokens (special tokens at both ends are skipped).
  const std::size_t n = out.stereo_ids.size() - 2;
  const std::size_t m = out.anti_ids.size() - 2;
  std::vector<std::vector<std::uint32_t>> dp(n + 1, std::vector<std::uint32_t>(m + 1, 0));
  for (std::size_t i = n; i-- > 0;) {
    for (std::size_t j = m; j-- > 0;) {
      dp[i][j] = out.stereo_ids[i + 1] == out.anti_ids[j + 1]
                     ? dp[i + 1][j + 1] + 1
                     : std::max(dp[i + 1][j], dp[i][j + 1]);
    }
  }
  for (std::size_t i = 0, j = 0; i < n && j < m;) {
    if (out.stereo_ids[i + 1] == out.anti_ids[j + 1]) {
      out.shared_stereo.push_back(i + 1);
      out.shared_anti.push_back(j + 1);
      ++i;
      ++j;
    } else if (dp[i + 1][j] >= dp[i][j + 1]) {
      ++i;
    } else {
      ++j;
    }
  }
  return out;
}

double EncoderPllScorer::pll(const std::vector<int>& token_ids,
                             const std::vector<std::size_t>& positions) const {
  return pseudo_log_likelihood(encoder_, token_ids, positions, prompt_);
}

double crows_score_from_pll(const std::vector<std::pair<double, double>>& plls) {
  if (plls.empty()) throw EmptyInput("no CrowS pairs to score");
  double wins = 0.0;
  for (const auto& [stereo, anti] : plls) {
    wins += stereo > anti ? 1.0 : (stereo == anti ? 0.5 : 0.0);
  }
  return 100.0 * wins / static_cast<double>(plls.size());
}

double crows_score(const std::vector<AlignedCrowsPair>& pairs, const PllScorer& scorer) {
  std::vector<std::pair<double, double>> plls;
  plls.reserve(pairs.size());
  for (const auto& p : pairs) {
    plls.emplace_back(scorer.pll(p.stereo_ids, p.shared_stereo),
                      scorer.pll(p.anti_ids, p.shared_anti));
  }
  return crows_score_from_pll(plls);
}

double icat_score(double lms, double ss) { return lms * std::min(ss, 100.0 - ss) / 50.0; }

double EncoderFillScorer::score(const std::string& context, const std::string& fill) const {
  const auto pos = context.find("BLANK");
  if (pos == std::string::npos) throw InvalidQuery("context has no BLANK: " + context);
  const std::string sentence = context.substr(0, pos) + fill + context.substr(pos + 5);
  const auto t = tokenizer_.tokenize(sentence, {{pos, pos + fill.size()}});
  const TokenSpan span = t.word_spans.front();
  return chained_span_logprob(encoder_, t.token_ids, span, prompt_) /
         static_cast<double>(span.size());
}

StereoReport stereoset_score_from_scores(const std::vector<StereoExample>& examples,
                                         const std::vector<std::array<double, 3>>& scores) {
  if (examples.empty()) throw EmptyAfterFilter("no StereoSet examples to score");
  if (examples.size() != scores.size()) throw LengthMismatch("one score triple per example");
  StereoReport report;
  std::map<std::string, std::pair<double, double>> hits;
  double lms_all = 0.0;
  double ss_all = 0.0;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto& [st, an, un] = scores[i];
    auto& h = hits[examples[i].bias_type];
    tally(report.per_domain[examples[i].bias_type], st, an, un, h.first, h.second);
    tally(report.overall, st, an, un, lms_all, ss_all);
  }
  for (auto& [domain, s] : report.per_domain) finish(s, hits[domain].first, hits[domain].second);
  finish(report.overall, lms_all, ss_all);
  return report;
}

StereoReport stereoset_score(const std::vector<StereoExample>& examples, const FillScorer& scorer,
                             const std::optional<std::vector<std::string>>& filter) {
  std::vector<StereoExample> kept;
  if (filter) {
    std::set<std::string> allowed;
    for (const auto& w : *filter) allowed.insert(to_lower_ascii(w));
    for (const auto& e : examples) {
      if (allowed.count(to_lower_ascii(e.target))) kept.push_back(e);
    }
  } else {
    kept = examples;
  }
  if (kept.empty()) throw EmptyAfterFilter("no StereoSet examples left after filtering");
  std::vector<std::array<double, 3>> scores;
  scores.reserve(kept.size());
  for (const auto& e : kept) {
    scores.push_back({scorer.score(e.context, e.stereotype), scorer.score(e.context, e.anti_stereotype),
                      scorer.score(e.context, e.unrelated)});
  }
  return stereoset_score_from_scores(kept, scores);
}

void write_report_kv(std::ostream& out, const EvalReport& report) {
  out << std::setprecision(17);
  out << "label = " << report.label << '\n';
  for (const auto& [id, r] : report.seat) {
    out << "seat." << id << ".effect_size = " << r.effect_size << '\n';
    out << "seat." << id << ".p_value = " << r.p_value << '\n';
  }
  if (report.crows) out << "crows.score = " << *report.crows << '\n';
  if (report.stereoset) {
    auto emit = [&](const std::string& name, const StereoScores& s) {
      out << "stereoset." << name << ".lms = " << s.lms << '\n';
      out << "stereoset." << name << ".ss = " << s.ss << '\n';
      out << "stereoset." << name << ".icat = " << s.icat << '\n';
      out << "stereoset." << name << ".count = " << s.count << '\n';
    };
    for (const auto& [domain, s] : report.stereoset->per_domain) emit(domain, s);
    emit("overall", report.stereoset->overall);
  }
}

EvalReport read_report_kv(std::istream& in) {
  EvalReport report;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) {
      throw ParseError("report line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 3);
    if (key == "label") {
      report.label = value;
      continue;
    }
    const auto first = key.find('.');
    const auto last = key.rfind('.');
    const std::string group = key.substr(0, first);
    const std::string field = key.substr(last + 1);
    const std::string sub = first == last ? "" : key.substr(first + 1, last - first - 1);
    double v = 0.0;
    try {
      v = std::stod(value);
    } catch (const std::exception&) {
      throw ParseError("report line " + std::to_string(lineno) + ": bad number " + value);
    }
    if (group == "seat") {
      if (field == "effect_size") report.seat[sub].effect_size = v;
      if (field == "p_value") report.seat[sub].p_value = v;
    } else if (group == "crows") {
      report.crows = v;
    } else if (group == "stereoset") {
      if (!report.stereoset) report.stereoset.emplace();
      StereoScores& s = sub == "overall" ? report.stereoset->overall
                                         : report.stereoset->per_domain[sub];
      if (field == "lms") s.lms = v;
      if (field == "ss") s.ss = v;
      if (field == "icat") s.icat = v;
      if (field == "count") s.count = static_cast<std::size_t>(v);
    }
  }
  return report;
}

void write_report_csv(std::ostream& out, const EvalReport& report) {
  out << std::setprecision(10);
  out << "benchmark,subset,metric,value\n";
  for (const auto& [id, r] : report.seat) {
    out << "seat," << id << ",effect_size," << r.effect_size << '\n';
    out << "seat," << id << ",p_value," << r.p_value << '\n';
  }
  if (report.crows) out << "crows,all,score," << *report.crows << '\n';
  if (report.stereoset) {
    auto emit = [&](const std::string& name, const StereoScores& s) {
      out << "stereoset," << name << ",lms," << s.lms << '\n';
      out << "stereoset," << name << ",ss," << s.ss << '\n';
      out << "stereoset," << name << ",icat," << s.icat << '\n';
    };
    for (const auto& [domain, s] : report.stereoset->per_domain) emit(domain, s);
    emit("overall", report.stereoset->overall);
  }
}

}  // namespace debias
