#include "debias/projection.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>

#include "debias/error.hpp"
#include "debias/rng.hpp"

namespace debias {

namespace {

// Row-wise Gaussian affinities whose entropy matches log(perplexity).
RowMatrix conditional_affinities(const RowMatrix& sq_dist, double perplexity) {
  const Eigen::Index n = sq_dist.rows();
  const double target = std::log(perplexity);
  RowMatrix p = RowMatrix::Zero(n, n);
  Eigen::VectorXd row(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double beta = 1.0;
    double lo = 0.0;
    double hi = std::numeric_limits<double>::infinity();
    double min_d = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != i) min_d = std::min(min_d, sq_dist(i, j));
    }
    for (int iter = 0; iter < 200; ++iter) {
      double sum = 0.0;
      double weighted = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        row[j] = j == i ? 0.0 : std::exp(-beta * (sq_dist(i, j) - min_d));
        sum += row[j];
        weighted += row[j] * (sq_dist(i, j) - min_d);
      }
      const double entropy = std::log(sum) + beta * weighted / sum;
      row /= sum;
      const double diff = entropy - target;
      if (std::abs(diff) < 1e-5) break;
      if (diff > 0) {
        lo = beta;
        beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (beta + hi);
      } else {
        hi = beta;
        beta = 0.5 * (beta + lo);
      }
    }
    p.row(i) = row.transpose();
  }
  return p;
}

}  // namespace

RowMatrix project_2d(const RowMatrix& x, const ProjectionOptions& opt) {
  const Eigen::Index n = x.rows();
  if (!(opt.perplexity > 0.0) || static_cast<double>(n) <= 3.0 * opt.perplexity) {
    throw PerplexityTooLarge("need more than 3*perplexity rows: have " + std::to_string(n) +
                             ", perplexity " + std::to_string(opt.perplexity));
  }
  const Eigen::VectorXd norms = x.rowwise().squaredNorm();
  RowMatrix sq = (-2.0 * x * x.transpose()).colwise() + norms;
  sq.rowwise() += norms.transpose();
  sq = sq.cwiseMax(0.0);

  RowMatrix p = conditional_affinities(sq, opt.perplexity);
  p = ((p + p.transpose()) / (2.0 * static_cast<double>(n))).eval();
  p = p.cwiseMax(1e-12);
  p.diagonal().setZero();

  Rng rng(derive_seed(opt.seed, "tsne"));
  RowMatrix y(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    y(i, 0) = 1e-4 * rng.normal();
    y(i, 1) = 1e-4 * rng.normal();
  }
  const double lr = opt.learning_rate > 0.0
                        ? opt.learning_rate
                        : std::max(static_cast<double>(n) / opt.exaggeration / 4.0, 50.0);
  RowMatrix velocity = RowMatrix::Zero(n, 2);
  RowMatrix gains = RowMatrix::Ones(n, 2);
  RowMatrix num(n, n);
  RowMatrix grad(n, 2);

  for (std::size_t it = 0; it < opt.iterations; ++it) {
    const bool early = it < opt.exaggeration_iterations;
    const double exaggeration = early ? opt.exaggeration : 1.0;
    const double momentum = early ? 0.5 : 0.8;

    const Eigen::VectorXd yn = y.rowwise().squaredNorm();
    num = (-2.0 * y * y.transpose()).colwise() + yn;
    num.rowwise() += yn.transpose();
    num = (1.0 + num.array().max(0.0)).inverse().matrix();
    num.diagonal().setZero();
    const double z = num.sum();

    // dC/dy_i = 4 * sum_j (P_ij - Q_ij) * num_ij * (y_i - y_j)
    const RowMatrix w = ((exaggeration * p).array() - num.array() / z).matrix().cwiseProduct(num);
    const Eigen::VectorXd wsum = w.rowwise().sum();
    grad = 4.0 * (wsum.asDiagonal() * y - w * y);

    for (Eigen::Index i = 0; i < n; ++i) {
      for (int c = 0; c < 2; ++c) {
        const bool same_sign = (grad(i, c) > 0) == (velocity(i, c) > 0);
        gains(i, c) = same_sign ? std::max(0.01, gains(i, c) * 0.8) : gains(i, c) + 0.2;
        velocity(i, c) = momentum * velocity(i, c) - lr * gains(i, c) * grad(i, c);
      }
    }
    y += velocity;
    y.rowwise() -= y.colwise().mean();
  }
  return y;
}

RowMatrix project_2d(const RowMatrix& embeddings, double perplexity, std::uint64_t seed) {
  ProjectionOptions opt;
  opt.perplexity = perplexity;
  opt.seed = seed;
  return project_2d(embeddings, opt);
}

void write_plot_rows(std::ostream& out, const std::vector<PlotRow>& rows) {
  out << "x\ty\tlabel\tgroup\n" << std::setprecision(9);
  for (const auto& r : rows) out << r.x << '\t' << r.y << '\t' << r.label << '\t' << r.group << '\n';
}

}  // namespace debias
