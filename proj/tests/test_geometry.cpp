#include <cmath>
#include <random>

#include "debias/error.hpp"
#include "debias/geometry.hpp"
#include "doctest.h"

using namespace debias;
using doctest::Approx;

namespace {

Eigen::VectorXd v(std::initializer_list<double> xs) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) out[i++] = x;
  return out;
}

RowMatrix random_rows(std::mt19937& rng, int n, int h, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  RowMatrix m(n, h);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

// Independent oracles, written without the library helpers.
std::vector<double> kernel_dist(const Eigen::VectorXd& e, const RowMatrix& rows, double rho,
                                int skip = -1) {
  std::vector<double> w;
  double mx = -1e300;
  for (Eigen::Index j = 0; j < rows.rows(); ++j) {
    if (j == skip) continue;
    double d2 = 0;
    for (Eigen::Index c = 0; c < rows.cols(); ++c) d2 += (e[c] - rows(j, c)) * (e[c] - rows(j, c));
    w.push_back(-d2 / (2 * rho * rho));
    mx = std::max(mx, w.back());
  }
  double z = 0;
  for (double& x : w) z += (x = std::exp(x - mx));
  for (double& x : w) x /= z;
  return w;
}

double kl_bits(const std::vector<double>& q, const std::vector<double>& p) {
  double s = 0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (q[i] > 0) s += q[i] * std::log2(q[i] / p[i]);
  }
  return s;
}

double js_bits(const std::vector<double>& p, const std::vector<double>& q) {
  std::vector<double> m(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) m[i] = 0.5 * (p[i] + q[i]);
  return 0.5 * kl_bits(p, m) + 0.5 * kl_bits(q, m);
}

}  // namespace

TEST_SUITE("geometry") {

TEST_CASE("prototype is the occurrence mean") {
  RowMatrix occ(3, 2);
  occ << 1, 2, 3, 4, 5, 9;
  const auto p = attribute_prototype(occ);
  CHECK(p[0] == Approx(3.0));
  CHECK(p[1] == Approx(5.0));
  CHECK_THROWS_AS(attribute_prototype(RowMatrix(0, 2)), EmptyInput);
}

TEST_CASE("conditional distribution worked example") {
  RowMatrix n(2, 1);
  n << 0, 1;
  const auto p = conditional_distribution(v({0.0}), n, 1.0);
  CHECK(p[0] == Approx(0.6225).epsilon(1e-4));
  CHECK(p[1] == Approx(0.3775).epsilon(1e-4));
  CHECK(p.sum() == Approx(1.0));
  CHECK_THROWS_AS(conditional_distribution(v({0.0}), n, 0.0), DegenerateRho);
  CHECK_THROWS_AS(conditional_distribution(v({0.0}), RowMatrix(0, 1), 1.0), EmptyInput);
}

TEST_CASE("huge rho gives the uniform distribution, tiny rho stays finite") {
  std::mt19937 rng(1);
  const RowMatrix n = random_rows(rng, 7, 4);
  const auto p = conditional_distribution(v({0.3, -1, 2, 0}), n, 1e6);
  for (Eigen::Index i = 0; i < p.size(); ++i) CHECK(p[i] == Approx(1.0 / 7).epsilon(1e-9));
  const auto sharp = conditional_distribution(v({30, 30, 30, 30}), n, 1e-3);
  CHECK(sharp.allFinite());
  CHECK(sharp.minCoeff() > 0.0);
  CHECK(sharp.sum() == Approx(1.0));
}

TEST_CASE("KL and JS worked examples") {
  CHECK(kl_divergence(v({1, 0}), v({0.5, 0.5})) == Approx(1.0).epsilon(1e-9));
  CHECK(kl_divergence(v({0.5, 0.5}), v({0.75, 0.25})) == Approx(0.2075).epsilon(1e-4));
  CHECK(js_divergence(v({1, 0}), v({0, 1})) == Approx(1.0).epsilon(1e-9));
  CHECK(js_divergence(v({1, 0}), v({0.5, 0.5})) == Approx(0.3113).epsilon(1e-4));
  CHECK_THROWS_AS(kl_divergence(v({1, 0}), v({1, 0, 0})), LengthMismatch);
  const auto s = smooth_distribution(v({1, 0, 0}));
  CHECK(s.minCoeff() > 0.0);
  CHECK(s.sum() == Approx(1.0));
}

TEST_CASE("divergence properties on random distributions") {
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + trial % 9;
    Eigen::VectorXd p(n), q(n);
    for (int i = 0; i < n; ++i) {
      p[i] = u(rng);
      q[i] = u(rng);
    }
    p /= p.sum();
    q /= q.sum();
    CHECK(kl_divergence(p, q) >= -1e-12);
    CHECK(kl_divergence(p, p) == Approx(0.0).epsilon(1e-12));
    const double js = js_divergence(p, q);
    CHECK(js >= -1e-12);
    CHECK(js <= 1.0 + 1e-12);
    CHECK(js == Approx(js_divergence(q, p)).epsilon(1e-12));
  }
}

TEST_CASE("total loss") {
  const auto t = total_loss(1.0, 3.0, 7.0 / 3.0);
  CHECK(t.total == Approx(8.0));
  CHECK(total_loss(2.0, 5.0, 0.0).total == Approx(2.0));
  CHECK_THROWS_AS(total_loss(1.0, 1.0, -0.1), InvalidConfig);
}

TEST_CASE("bias loss with three attributes against an oracle") {
  std::mt19937 rng(3);
  const RowMatrix protos = random_rows(rng, 3, 5);
  const RowMatrix neutral = random_rows(rng, 6, 5);
  const double rho = 1.7;
  std::vector<std::vector<double>> d;
  for (int i = 0; i < 3; ++i) d.push_back(kernel_dist(protos.row(i).transpose(), neutral, rho));
  const double expect = js_bits(d[0], d[1]) + js_bits(d[0], d[2]) + js_bits(d[1], d[2]);
  CHECK(bias_loss(protos, neutral, rho) == Approx(expect).epsilon(1e-9));
  CHECK(bias_loss_with_gradient(protos, neutral, rho).value == Approx(expect).epsilon(1e-9));
  RowMatrix same(3, 5);
  for (int i = 0; i < 3; ++i) same.row(i) = protos.row(0);
  CHECK(bias_loss(same, neutral, rho) == Approx(0.0).epsilon(1e-12));
}

TEST_CASE("bias loss is invariant to rotations and translations") {
  std::mt19937 rng(4);
  const RowMatrix protos = random_rows(rng, 2, 4);
  const RowMatrix neutral = random_rows(rng, 5, 4);
  const Eigen::MatrixXd rot = Eigen::HouseholderQR<Eigen::MatrixXd>(Eigen::MatrixXd(random_rows(rng, 4, 4))).householderQ();
  const Eigen::RowVectorXd shift = random_rows(rng, 1, 4, 3.0).row(0);
  const RowMatrix p2 = (protos * rot).rowwise() + shift;
  const RowMatrix n2 = (neutral * rot).rowwise() + shift;
  CHECK(bias_loss(p2, n2, 2.0) == Approx(bias_loss(protos, neutral, 2.0)).epsilon(1e-9));
}

TEST_CASE("representation loss with three occurrences against an oracle") {
  RowMatrix frozen(3, 2), prompted(3, 2);
  frozen << 0, 0, 1, 0, 0, 2;
  prompted << 0, 0, 2, 0, 0, 1;
  const double rho = 1.0;
  double expect = 0;
  for (int i = 0; i < 3; ++i) {
    expect += kl_bits(kernel_dist(frozen.row(i).transpose(), frozen, rho, i),
                      kernel_dist(prompted.row(i).transpose(), prompted, rho, i));
  }
  expect /= 3;
  CHECK(expect > 0.01);
  CHECK(representation_loss(frozen, prompted, rho) == Approx(expect).epsilon(1e-9));
  CHECK(representation_loss(frozen, frozen, rho) == Approx(0.0).epsilon(1e-12));
  CHECK_THROWS_AS(representation_loss(frozen, RowMatrix(2, 2), rho), MismatchedOccurrences);
}

TEST_CASE("hidden-softmax representation loss against an oracle") {
  std::mt19937 rng(5);
  const RowMatrix frozen = random_rows(rng, 4, 3);
  const RowMatrix prompted = random_rows(rng, 4, 3);
  double expect = 0;
  for (int i = 0; i < 4; ++i) {
    auto sm = [](Eigen::RowVectorXd r) {
      std::vector<double> out;
      double z = 0;
      for (Eigen::Index c = 0; c < r.size(); ++c) z += std::exp(r[c]);
      for (Eigen::Index c = 0; c < r.size(); ++c) out.push_back(std::exp(r[c]) / z);
      return out;
    };
    expect += kl_bits(sm(frozen.row(i)), sm(prompted.row(i)));
  }
  expect /= 4;
  CHECK(representation_loss(frozen, prompted, 1.0, RepresentationMode::kHiddenSoftmax) ==
        Approx(expect).epsilon(1e-9));
}

TEST_CASE("loss gradients match finite differences") {
  std::mt19937 rng(6);
  const RowMatrix protos = random_rows(rng, 3, 4);
  const RowMatrix neutral = random_rows(rng, 5, 4);
  const double rho = 1.3;
  const auto g = bias_loss_with_gradient(protos, neutral, rho);
  const double h = 1e-6;
  for (Eigen::Index i = 0; i < protos.size(); ++i) {
    RowMatrix a = protos, b = protos;
    a.data()[i] += h;
    b.data()[i] -= h;
    const double fd = (bias_loss(a, neutral, rho) - bias_loss(b, neutral, rho)) / (2 * h);
    CHECK(g.d_attribute.data()[i] == Approx(fd).epsilon(1e-5).scale(1e-3));
  }
  for (Eigen::Index i = 0; i < neutral.size(); ++i) {
    RowMatrix a = neutral, b = neutral;
    a.data()[i] += h;
    b.data()[i] -= h;
    const double fd = (bias_loss(protos, a, rho) - bias_loss(protos, b, rho)) / (2 * h);
    CHECK(g.d_neutral.data()[i] == Approx(fd).epsilon(1e-5).scale(1e-3));
  }
  const RowMatrix frozen = random_rows(rng, 5, 4);
  const RowMatrix prompted = random_rows(rng, 5, 4);
  for (auto mode : {RepresentationMode::kBatchNeighbors, RepresentationMode::kHiddenSoftmax}) {
    const auto r = representation_loss_with_gradient(frozen, prompted, rho, mode);
    CHECK(r.value == Approx(representation_loss(frozen, prompted, rho, mode)));
    for (Eigen::Index i = 0; i < prompted.size(); ++i) {
      RowMatrix a = prompted, b = prompted;
      a.data()[i] += h;
      b.data()[i] -= h;
      const double fd = (representation_loss(frozen, a, rho, mode) -
                         representation_loss(frozen, b, rho, mode)) / (2 * h);
      CHECK(r.d_prompted.data()[i] == Approx(fd).epsilon(1e-5).scale(1e-3));
    }
  }
}

}
