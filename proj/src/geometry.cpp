#include "debias/geometry.hpp"

#include <cmath>
#include <numbers>

#include "debias/error.hpp"

namespace debias {

namespace {

constexpr double kInvLn2 = 1.0 / std::numbers::ln2;

void check_rho(double rho) {
  if (!(rho > 0.0) || !std::isfinite(rho)) {
    throw DegenerateRho("kernel width rho must be positive and finite, got " +
                        std::to_string(rho));
  }
}

void check_lengths(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size()) {
    throw LengthMismatch("distribution lengths differ: " + std::to_string(a.size()) +
                         " vs " + std::to_string(b.size()));
  }
}

Eigen::VectorXd softmax(const Eigen::VectorXd& s) {
  const double mx = s.maxCoeff();
  Eigen::VectorXd p = (s.array() - mx).exp();
  return p / p.sum();
}

// d/ds of softmax given d/dp.
Eigen::VectorXd softmax_backward(const Eigen::VectorXd& p, const Eigen::VectorXd& dp) {
  return p.array() * (dp.array() - p.dot(dp));
}

Eigen::VectorXd smooth_backward(const Eigen::VectorXd& p, const Eigen::VectorXd& dr) {
  const Eigen::VectorXd f = p.cwiseMax(kProbabilityFloor);
  const double sum = f.sum();
  const Eigen::VectorXd r = f / sum;
  Eigen::VectorXd df = (dr.array() - dr.dot(r)) / sum;
  for (Eigen::Index j = 0; j < p.size(); ++j) {
    if (!(p[j] > kProbabilityFloor)) df[j] = 0.0;
  }
  return df;
}

// Squared-distance logits of `e` against every row of `points`, scaled by
// -1/(2 rho^2).
Eigen::VectorXd kernel_logits(const Eigen::VectorXd& e, const RowMatrix& points, double rho) {
  const double denom = 2.0 * rho * rho;
  Eigen::VectorXd s(points.rows());
  for (Eigen::Index j = 0; j < points.rows(); ++j) {
    s[j] = -(points.row(j).transpose() - e).squaredNorm() / denom;
  }
  return s;
}

struct KernelDistribution {
  Eigen::VectorXd raw;     // softmax output
  Eigen::VectorXd smooth;  // floored and renormalized
};

KernelDistribution kernel_distribution(const Eigen::VectorXd& e, const RowMatrix& points,
                                       double rho) {
  KernelDistribution out;
  out.raw = softmax(kernel_logits(e, points, rho));
  out.smooth = smooth_distribution(out.raw);
  return out;
}

// Backpropagates d/d(smooth) of a kernel distribution into d/ds (logits).
Eigen::VectorXd kernel_logit_grad(const KernelDistribution& k, const Eigen::VectorXd& d_smooth) {
  return softmax_backward(k.raw, smooth_backward(k.raw, d_smooth));
}

double kl_bits(const Eigen::VectorXd& q, const Eigen::VectorXd& p) {
  double total = 0.0;
  for (Eigen::Index j = 0; j < q.size(); ++j) total += q[j] * std::log(q[j] / p[j]);
  return std::max(0.0, total * kInvLn2);
}

// KL(Q||P) for two raw distributions with smoothing, returning d/dP_raw.
double kl_with_grad_p(const Eigen::VectorXd& q_raw, const Eigen::VectorXd& p_raw,
                      Eigen::VectorXd* d_p_raw) {
  const Eigen::VectorXd q = smooth_distribution(q_raw);
  const Eigen::VectorXd p = smooth_distribution(p_raw);
  const double value = kl_bits(q, p);
  if (d_p_raw) {
    const Eigen::VectorXd d_p = -(q.array() / p.array()) * kInvLn2;
    *d_p_raw = smooth_backward(p_raw, d_p);
  }
  return value;
}

double js_with_grad(const Eigen::VectorXd& p_raw, const Eigen::VectorXd& q_raw,
                    Eigen::VectorXd* d_p_raw, Eigen::VectorXd* d_q_raw) {
  const Eigen::VectorXd p = smooth_distribution(p_raw);
  const Eigen::VectorXd q = smooth_distribution(q_raw);
  const Eigen::VectorXd m = 0.5 * (p + q);
  double total = 0.0;
  for (Eigen::Index j = 0; j < p.size(); ++j) {
    const double term = 0.5 * p[j] * std::log(p[j] / m[j]) + 0.5 * q[j] * std::log(q[j] / m[j]);
    total += term;
  }
  total = std::clamp(total * kInvLn2, 0.0, 1.0);
  if (d_p_raw) {
    const Eigen::VectorXd d_p = 0.5 * (p.array() / m.array()).log() * kInvLn2;
    *d_p_raw = smooth_backward(p_raw, d_p);
  }
  if (d_q_raw) {
    const Eigen::VectorXd d_q = 0.5 * (q.array() / m.array()).log() * kInvLn2;
    *d_q_raw = smooth_backward(q_raw, d_q);
  }
  return total;
}

void check_bias_inputs(const RowMatrix& attrs, const RowMatrix& neutral, double rho) {
  check_rho(rho);
  if (attrs.rows() < 2) throw EmptyInput("bias loss needs at least two attribute prototypes");
  if (neutral.rows() < 2) throw EmptyInput("bias loss needs at least two neutral prototypes");
  if (attrs.cols() != neutral.cols()) throw LengthMismatch("prototype widths differ");
}

// Neighbor distribution of row i over every other row of `points`.
KernelDistribution neighbor_distribution(const RowMatrix& points, Eigen::Index i, double rho,
                                         RowMatrix* others) {
  const Eigen::Index n = points.rows();
  RowMatrix rest(n - 1, points.cols());
  for (Eigen::Index j = 0, r = 0; j < n; ++j) {
    if (j != i) rest.row(r++) = points.row(j);
  }
  KernelDistribution k = kernel_distribution(points.row(i).transpose(), rest, rho);
  if (others) *others = std::move(rest);
  return k;
}

void check_occurrences(const RowMatrix& frozen, const RowMatrix& prompted) {
  if (frozen.rows() != prompted.rows() || frozen.cols() != prompted.cols()) {
    throw MismatchedOccurrences("frozen and prompted occurrence sets differ in shape");
  }
}

}  // namespace

Eigen::VectorXd attribute_prototype(const RowMatrix& occurrence_embeddings) {
  if (occurrence_embeddings.rows() == 0) throw EmptyInput("no occurrence embeddings");
  return occurrence_embeddings.colwise().mean().transpose();
}

Eigen::VectorXd smooth_distribution(const Eigen::VectorXd& p) {
  const Eigen::VectorXd f = p.cwiseMax(kProbabilityFloor);
  return f / f.sum();
}

Eigen::VectorXd conditional_distribution(const Eigen::VectorXd& e, const RowMatrix& neutral,
                                         double rho) {
  check_rho(rho);
  if (neutral.rows() == 0) throw EmptyInput("no neutral prototypes");
  if (neutral.cols() != e.size()) throw LengthMismatch("prototype widths differ");
  return kernel_distribution(e, neutral, rho).smooth;
}

double kl_divergence(const Eigen::VectorXd& q, const Eigen::VectorXd& p) {
  check_lengths(q, p);
  return kl_with_grad_p(q, p, nullptr);
}

double js_divergence(const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
  check_lengths(p, q);
  return js_with_grad(p, q, nullptr, nullptr);
}

double bias_loss(const RowMatrix& attribute_prototypes, const RowMatrix& neutral, double rho) {
  check_bias_inputs(attribute_prototypes, neutral, rho);
  std::vector<Eigen::VectorXd> dists;
  for (Eigen::Index i = 0; i < attribute_prototypes.rows(); ++i) {
    dists.push_back(conditional_distribution(attribute_prototypes.row(i).transpose(), neutral, rho));
  }
  double total = 0.0;
  for (std::size_t i = 0; i < dists.size(); ++i) {
    for (std::size_t j = i + 1; j < dists.size(); ++j) total += js_divergence(dists[i], dists[j]);
  }
  return total;
}

BiasLossGradient bias_loss_with_gradient(const RowMatrix& attribute_prototypes,
                                         const RowMatrix& neutral, double rho) {
  check_bias_inputs(attribute_prototypes, neutral, rho);
  const Eigen::Index d = attribute_prototypes.rows();
  std::vector<KernelDistribution> dists;
  for (Eigen::Index i = 0; i < d; ++i) {
    dists.push_back(kernel_distribution(attribute_prototypes.row(i).transpose(), neutral, rho));
  }
  BiasLossGradient out;
  out.d_attribute = RowMatrix::Zero(d, attribute_prototypes.cols());
  out.d_neutral = RowMatrix::Zero(neutral.rows(), neutral.cols());
  std::vector<Eigen::VectorXd> d_smooth(static_cast<std::size_t>(d),
                                        Eigen::VectorXd::Zero(neutral.rows()));
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = i + 1; j < d; ++j) {
      Eigen::VectorXd gi, gj;
      out.value += js_with_grad(dists[i].smooth, dists[j].smooth, &gi, &gj);
      d_smooth[i] += gi;
      d_smooth[j] += gj;
    }
  }
  const double inv_rho2 = 1.0 / (rho * rho);
  for (Eigen::Index i = 0; i < d; ++i) {
    const Eigen::VectorXd ds = kernel_logit_grad(dists[i], d_smooth[i]);
    const Eigen::RowVectorXd e = attribute_prototypes.row(i);
    for (Eigen::Index j = 0; j < neutral.rows(); ++j) {
      const Eigen::RowVectorXd diff = e - neutral.row(j);
      out.d_attribute.row(i) -= ds[j] * inv_rho2 * diff;
      out.d_neutral.row(j) += ds[j] * inv_rho2 * diff;
    }
  }
  return out;
}

double representation_loss(const RowMatrix& frozen, const RowMatrix& prompted, double rho,
                           RepresentationMode mode) {
  return representation_loss_with_gradient(frozen, prompted, rho, mode).value;
}

RepresentationLossGradient representation_loss_with_gradient(const RowMatrix& frozen,
                                                             const RowMatrix& prompted,
                                                             double rho,
                                                             RepresentationMode mode) {
  check_occurrences(frozen, prompted);
  const Eigen::Index n = prompted.rows();
  RepresentationLossGradient out;
  out.d_prompted = RowMatrix::Zero(n, prompted.cols());

  if (mode == RepresentationMode::kHiddenSoftmax) {
    if (n == 0) throw EmptyInput("representation loss needs at least one occurrence");
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::VectorXd q = softmax(frozen.row(i).transpose());
      const Eigen::VectorXd p = softmax(prompted.row(i).transpose());
      Eigen::VectorXd dp;
      out.value += kl_with_grad_p(q, p, &dp);
      out.d_prompted.row(i) = softmax_backward(p, dp).transpose();
    }
  } else {
    check_rho(rho);
    if (n < 2) throw EmptyInput("representation loss needs at least two occurrences");
    const double inv_rho2 = 1.0 / (rho * rho);
    for (Eigen::Index i = 0; i < n; ++i) {
      const KernelDistribution q = neighbor_distribution(frozen, i, rho, nullptr);
      RowMatrix others;
      const KernelDistribution p = neighbor_distribution(prompted, i, rho, &others);
      Eigen::VectorXd d_smooth;
      out.value += kl_with_grad_p(q.smooth, p.smooth, &d_smooth);
      const Eigen::VectorXd ds = kernel_logit_grad(p, d_smooth);
      const Eigen::RowVectorXd yi = prompted.row(i);
      for (Eigen::Index j = 0, r = 0; j < n; ++j) {
        if (j == i) continue;
        const Eigen::RowVectorXd diff = yi - others.row(r);
        out.d_prompted.row(i) -= ds[r] * inv_rho2 * diff;
        out.d_prompted.row(j) += ds[r] * inv_rho2 * diff;
        ++r;
      }
    }
  }
  out.value /= static_cast<double>(n);
  out.d_prompted /= static_cast<double>(n);
  return out;
}

LossBreakdown total_loss(double bias, double representation, double lambda) {
  if (!(lambda >= 0.0)) throw InvalidConfig("lambda must be non-negative");
  return LossBreakdown{bias, representation, lambda, bias + lambda * representation};
}

}  // namespace debias
