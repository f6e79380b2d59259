#include <random>
#include <sstream>

#include "debias/error.hpp"
#include "debias/evalharness.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace debias;
using doctest::Approx;

namespace {

RowMatrix rows(std::initializer_list<std::initializer_list<double>> r) {
  RowMatrix m(static_cast<Eigen::Index>(r.size()), static_cast<Eigen::Index>(r.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& row : r) {
    Eigen::Index j = 0;
    for (double v : row) m(i, j++) = v;
    ++i;
  }
  return m;
}

// Brute-force SEAT over all equal splits, independent of the library.
std::pair<double, double> seat_oracle(const RowMatrix& x, const RowMatrix& y, const RowMatrix& a,
                                      const RowMatrix& b) {
  auto cos = [](const Eigen::RowVectorXd& u, const Eigen::RowVectorXd& v) {
    return u.dot(v) / (u.norm() * v.norm());
  };
  auto s = [&](const Eigen::RowVectorXd& w) {
    double sa = 0, sb = 0;
    for (Eigen::Index i = 0; i < a.rows(); ++i) sa += cos(w, a.row(i));
    for (Eigen::Index i = 0; i < b.rows(); ++i) sb += cos(w, b.row(i));
    return sa / a.rows() - sb / b.rows();
  };
  std::vector<double> all;
  for (Eigen::Index i = 0; i < x.rows(); ++i) all.push_back(s(x.row(i)));
  for (Eigen::Index i = 0; i < y.rows(); ++i) all.push_back(s(y.row(i)));
  const std::size_t n = all.size(), nx = static_cast<std::size_t>(x.rows());
  double mean = 0;
  for (double v : all) mean += v;
  mean /= n;
  double var = 0;
  for (double v : all) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / n);
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < nx; ++i) mx += all[i];
  for (std::size_t i = nx; i < n; ++i) my += all[i];
  const double effect = (mx / nx - my / (n - nx)) / sd;
  const double observed = mx - my;
  int hits = 0, total = 0;
  for (unsigned mask = 0; mask < (1u << n); ++mask) {
    if (static_cast<std::size_t>(__builtin_popcount(mask)) != nx) continue;
    double sx = 0, sy = 0;
    for (std::size_t i = 0; i < n; ++i) ((mask >> i) & 1 ? sx : sy) += all[i];
    ++total;
    if (sx - sy >= observed - 1e-12) ++hits;
  }
  return {effect, double(hits) / total};
}

class TablePll final : public PllScorer {
 public:
  explicit TablePll(std::map<std::vector<int>, double> t) : table_(std::move(t)) {}
  double pll(const std::vector<int>& ids, const std::vector<std::size_t>&) const override {
    return table_.at(ids);
  }

 private:
  std::map<std::vector<int>, double> table_;
};

class TableFill final : public FillScorer {
 public:
  std::map<std::string, double> table;
  double score(const std::string&, const std::string& fill) const override { return table.at(fill); }
};

StereoExample example(std::string target, std::string domain, std::string s, std::string a, std::string u) {
  return StereoExample{"id-" + s, std::move(target), std::move(domain), "The BLANK came.", std::move(s), std::move(a), std::move(u)};
}

}  // namespace

TEST_SUITE("evalharness") {

TEST_CASE("SEAT two-dimensional toy") {
  const auto x = rows({{1, 0}, {1, 0}});
  const auto y = rows({{0, 1}, {0, 1}});
  const auto a = rows({{1, 0}});
  const auto b = rows({{0, 1}});
  const auto r = seat_score(x, y, a, b);
  CHECK(r.effect_size == Approx(2.0).epsilon(1e-9));
  CHECK(r.p_value == Approx(1.0 / 6.0).epsilon(1e-12));
  const auto [effect, p] = seat_oracle(x, y, a, b);
  CHECK(effect == Approx(2.0).epsilon(1e-9));
  CHECK(p == Approx(1.0 / 6.0));
}

TEST_CASE("SEAT matches the brute-force oracle on random inputs") {
  std::mt19937 rng(2);
  std::normal_distribution<double> g;
  auto rnd = [&](int n) {
    RowMatrix m(n, 5);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
    return m;
  };
  for (int trial = 0; trial < 20; ++trial) {
    const auto x = rnd(3 + trial % 3), y = rnd(3 + trial % 3), a = rnd(4), b = rnd(3);
    const auto r = seat_score(x, y, a, b);
    const auto [effect, p] = seat_oracle(x, y, a, b);
    CHECK(r.effect_size == Approx(effect).epsilon(1e-9));
    CHECK(r.p_value == Approx(p).epsilon(1e-12));
    CHECK(std::abs(r.effect_size) <= 2.0 + 1e-12);
  }
}

TEST_CASE("SEAT sampled permutations for large sets") {
  std::mt19937 rng(8);
  std::normal_distribution<double> g;
  RowMatrix x(8, 4), y(8, 4), a(3, 4), b(3, 4);
  for (auto* m : {&x, &y, &a, &b})
    for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] = g(rng);
  x.col(0).array() += 3.0;
  a.col(0).array() += 3.0;
  SeatOptions opt;
  opt.samples = 2000;
  opt.seed = 4;
  const auto r1 = seat_score(x, y, a, b, opt);
  const auto r2 = seat_score(x, y, a, b, opt);
  CHECK(r1.p_value == r2.p_value);
  CHECK(r1.p_value >= 0.0);
  CHECK(r1.p_value < 0.05);
  CHECK(r1.effect_size > 1.0);
}

TEST_CASE("SEAT degenerate and symmetric inputs") {
  const auto x = rows({{1, 0}, {0, 1}});
  const auto a = rows({{1, 0}});
  const auto b = rows({{0, 1}});
  CHECK(seat_score(x, x, a, b).effect_size == Approx(0.0).epsilon(1e-12));
  const auto same = rows({{1, 1}, {1, 1}});
  CHECK_THROWS_AS(seat_score(same, same, a, b), DegenerateVariance);
}

TEST_CASE("SEAT effect size is invariant to rotations") {
  std::mt19937 rng(11);
  std::normal_distribution<double> g;
  auto rnd = [&](int n) {
    RowMatrix m(n, 6);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
    return m;
  };
  const auto x = rnd(4), y = rnd(4), a = rnd(3), b = rnd(3);
  Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(Eigen::MatrixXd(rnd(6))).householderQ();
  const auto r = seat_score(x, y, a, b);
  const auto s = seat_score(x * q, y * q, a * q, b * q);
  CHECK(s.effect_size == Approx(r.effect_size).epsilon(1e-9));
  CHECK(s.p_value == Approx(r.p_value));
}

TEST_CASE("SEAT over sentences uses the embedder") {
  SeatTest t{"toy", {"x1", "x2"}, {"y1", "y2"}, {"a"}, {"b"}};
  const auto r = seat_score(t, [](const std::string& s) {
    Eigen::VectorXd v(2);
    if (s[0] == 'x' || s[0] == 'a') v << 1, 0; else v << 0, 1;
    return v;
  });
  CHECK(r.effect_size == Approx(2.0));
}

TEST_CASE("CrowS rigged scores") {
  CHECK(crows_score_from_pll({{-1, -2}, {-3, -4}, {0, -1}}) == Approx(100.0));
  CHECK(crows_score_from_pll({{-1, -1}, {-2, -2}}) == Approx(50.0));
  CHECK(crows_score_from_pll({{-1, -2}, {-1, -2}, {-5, -1}}) == Approx(200.0 / 3.0));
  CHECK(crows_score_from_pll({{-1, -2}, {-1, -2}, {-5, -1}}) == Approx(66.67).epsilon(1e-4));
  CHECK_THROWS_AS(crows_score_from_pll({}), EmptyInput);
}

TEST_CASE("CrowS swapped labels sum to 100") {
  std::mt19937 rng(5);
  std::uniform_int_distribution<int> u(-3, 0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::pair<double, double>> p, q;
    for (int i = 0; i < 1 + trial % 7; ++i) {
      p.emplace_back(u(rng), u(rng));
      q.emplace_back(p.back().second, p.back().first);
    }
    const double a = crows_score_from_pll(p), b = crows_score_from_pll(q);
    CHECK(a + b == Approx(100.0));
    CHECK(a >= 0.0);
    CHECK(a <= 100.0);
  }
}

TEST_CASE("CrowS alignment keeps the unmodified tokens") {
  auto tiny = testsupport::make_tiny();
  const auto aligned = align_crows_pair(tiny.tokenizer, {"my uncle liked science", "my aunt liked science", "gender"});
  // CLS my uncle liked science SEP
  CHECK(aligned.shared_stereo == std::vector<std::size_t>{1, 3, 4});
  CHECK(aligned.shared_anti == std::vector<std::size_t>{1, 3, 4});
  CHECK_THROWS_AS(align_crows_pair(tiny.tokenizer, {"my uncle", "My uncle", "gender"}), InvalidQuery);
  const TablePll scorer({{aligned.stereo_ids, -1.0}, {aligned.anti_ids, -2.0}});
  CHECK(crows_score({aligned}, scorer) == Approx(100.0));
  const EncoderPllScorer real(tiny.encoder, nullptr);
  const double pll = real.pll(aligned.stereo_ids, aligned.shared_stereo);
  CHECK(pll == Approx(pseudo_log_likelihood(tiny.encoder, aligned.stereo_ids, aligned.shared_stereo)));
}

TEST_CASE("ICAT") {
  CHECK(icat_score(84.652, 56.019) == Approx(74.46).epsilon(0.01 / 74.46));
  CHECK(std::abs(icat_score(84.652, 56.019) - 74.462) < 0.01);
  CHECK(icat_score(77.0, 50.0) == 77.0);
  CHECK(icat_score(77.0, 100.0) == 0.0);
  CHECK(icat_score(77.0, 0.0) == 0.0);
}

TEST_CASE("StereoSet scoring from scores") {
  const std::vector<StereoExample> ex = {example("bride", "gender", "s1", "a1", "u1"),
                                         example("groom", "gender", "s2", "a2", "u2"),
                                         example("chess", "profession", "s3", "a3", "u3")};
  // stereo > anti > unrelated; anti > stereo > unrelated; tie stereo/anti, both below unrelated
  const std::vector<std::array<double, 3>> sc = {{{-1, -2, -3}}, {{-2, -1, -3}}, {{-2, -2, -1}}};
  const auto r = stereoset_score_from_scores(ex, sc);
  CHECK(r.overall.count == 3);
  CHECK(r.overall.lms == Approx(200.0 / 3.0));
  CHECK(r.overall.ss == Approx(50.0));
  CHECK(r.overall.icat == Approx(r.overall.lms));
  CHECK(r.per_domain.at("gender").lms == Approx(100.0));
  CHECK(r.per_domain.at("gender").ss == Approx(50.0));
  CHECK(r.per_domain.at("profession").lms == Approx(0.0));
  for (const auto& [name, s] : r.per_domain) {
    CHECK(s.icat == icat_score(s.lms, s.ss));
  }
}

TEST_CASE("StereoSet filter and scorer") {
  const std::vector<StereoExample> ex = {example("bride", "gender", "s1", "a1", "u1"),
                                         example("chess", "profession", "s3", "a3", "u3")};
  TableFill f;
  f.table = {{"s1", 0}, {"a1", -1}, {"u1", -5}, {"s3", 0}, {"a3", 1}, {"u3", 2}};
  const auto all = stereoset_score(ex, f);
  CHECK(all.overall.count == 2);
  const auto only = stereoset_score(ex, f, std::vector<std::string>{"BRIDE"});
  CHECK(only.overall.count == 1);
  CHECK(only.overall.ss == Approx(100.0));
  CHECK(only.overall.icat == Approx(0.0));
  CHECK_THROWS_AS(stereoset_score(ex, f, std::vector<std::string>{}), EmptyAfterFilter);
}

TEST_CASE("fill scorer is a length-normalized chain") {
  auto tiny = testsupport::make_tiny();
  const EncoderFillScorer scorer(tiny.encoder, tiny.tokenizer, nullptr);
  const double one = scorer.score("my BLANK liked science.", "aunt");
  const auto t = tiny.tokenizer.tokenize("my aunt liked science.", {{3, 7}});
  CHECK(one == Approx(chained_span_logprob(tiny.encoder, t.token_ids, t.word_spans[0])));
  const double two = scorer.score("my BLANK liked science.", "aunt uncle");
  const auto t2 = tiny.tokenizer.tokenize("my aunt uncle liked science.", {{3, 13}});
  REQUIRE(t2.word_spans[0].size() == 2);
  CHECK(two == Approx(chained_span_logprob(tiny.encoder, t2.token_ids, t2.word_spans[0]) / 2.0));
}

TEST_CASE("pooling") {
  LayerStates s;
  RowMatrix l(2, 2);
  l << 1, 2, 3, 6;
  s.layers = {l, l};
  CHECK(pool_states(s)[1] == Approx(4.0));
  CHECK(pool_states(s, Pooling::kFirstToken)[1] == Approx(2.0));
  LayerStates same;
  RowMatrix m(3, 2);
  m << 5, 7, 5, 7, 5, 7;
  same.layers = {m};
  CHECK(pool_states(same)[0] == Approx(5.0));
  auto tiny = testsupport::make_tiny();
  const auto e = sentence_embedding(tiny.encoder, tiny.tokenizer, nullptr, "my aunt");
  const auto st = tiny.encoder.encode(tiny.tokenizer.tokenize("my aunt"));
  CHECK((e - pool_states(st)).norm() < 1e-12);
  CHECK((e - sentence_embedding(tiny.encoder, tiny.tokenizer, nullptr, "my aunt", Pooling::kFirstToken)).norm() > 1e-6);
}

TEST_CASE("report round-trip") {
  EvalReport r;
  r.label = "original";
  r.seat["C6"] = SeatResult{0.5, 0.01};
  r.crows = 55.5;
  StereoReport sr;
  sr.overall = StereoScores{80, 60, icat_score(80, 60), 10};
  sr.per_domain["gender"] = sr.overall;
  r.stereoset = sr;
  std::stringstream ss;
  write_report_kv(ss, r);
  const auto back = read_report_kv(ss);
  CHECK(back.label == "original");
  CHECK(back.seat.at("C6").effect_size == Approx(0.5));
  CHECK(*back.crows == Approx(55.5));
  CHECK(back.stereoset->overall.icat == Approx(64.0));
  CHECK(back.stereoset->per_domain.at("gender").count == 10);
  std::ostringstream csv;
  write_report_csv(csv, r);
  CHECK(csv.str().rfind("benchmark,subset,metric,value\n", 0) == 0);
  CHECK(csv.str().find("crows,all,score,55.5") != std::string::npos);
}

}
