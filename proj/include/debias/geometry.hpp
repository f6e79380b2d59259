#pragma once

#include <Eigen/Dense>

#include "debias/encoder.hpp"

namespace debias {

/// Entries of every distribution are floored here and renormalized before any
/// logarithm is taken.
inline constexpr double kProbabilityFloor = 1e-12;

/// Row-wise mean of the occurrence embeddings (n x H). Throws EmptyInput.
Eigen::VectorXd attribute_prototype(const RowMatrix& occurrence_embeddings);

/// Gaussian-kernel neighbor distribution of prototype `e` over the rows of
/// `neutral`: p_j proportional to exp(-|e - E_j|^2 / (2 rho^2)), computed with
/// max-subtraction and floored/renormalized. Throws DegenerateRho, EmptyInput.
Eigen::VectorXd conditional_distribution(const Eigen::VectorXd& e, const RowMatrix& neutral,
                                         double rho);

/// Floors entries at kProbabilityFloor and renormalizes.
Eigen::VectorXd smooth_distribution(const Eigen::VectorXd& p);

/// KL(Q || P) in bits. Both inputs are smoothed first. Throws LengthMismatch.
double kl_divergence(const Eigen::VectorXd& q, const Eigen::VectorXd& p);

/// Jensen-Shannon divergence in bits; symmetric and bounded by 1.
double js_divergence(const Eigen::VectorXd& p, const Eigen::VectorXd& q);

/// Sum of pairwise JS divergences between the attributes' conditional
/// distributions. `attribute_prototypes` is d x H (d >= 2), `neutral` N x H
/// (N >= 2).
double bias_loss(const RowMatrix& attribute_prototypes, const RowMatrix& neutral, double rho);

enum class RepresentationMode {
  /// Per occurrence, neighbor distribution over all other occurrences in the
  /// batch (Gaussian kernel), frozen vs prompted.
  kBatchNeighbors,
  /// Per occurrence, softmax over hidden dimensions, frozen vs prompted.
  kHiddenSoftmax,
};

/// Mean KL(Q_i || P_i) between frozen (Q) and prompted (P) distributions of
/// each occurrence. Rows of both matrices index the same occurrences. Throws
/// MismatchedOccurrences.
double representation_loss(const RowMatrix& frozen, const RowMatrix& prompted, double rho,
                           RepresentationMode mode = RepresentationMode::kBatchNeighbors);

struct LossBreakdown {
  double bias = 0.0;
  double representation = 0.0;
  double lambda = 0.0;
  double total = 0.0;
};

/// total = bias + lambda * representation. Throws InvalidConfig if lambda < 0.
LossBreakdown total_loss(double bias, double representation, double lambda);

// Gradient-carrying variants used by the tuner.

struct BiasLossGradient {
  double value = 0.0;
  RowMatrix d_attribute;  // d x H
  RowMatrix d_neutral;    // N x H
};

BiasLossGradient bias_loss_with_gradient(const RowMatrix& attribute_prototypes,
                                         const RowMatrix& neutral, double rho);

struct RepresentationLossGradient {
  double value = 0.0;
  RowMatrix d_prompted;  // n x H
};

RepresentationLossGradient representation_loss_with_gradient(
    const RowMatrix& frozen, const RowMatrix& prompted, double rho,
    RepresentationMode mode = RepresentationMode::kBatchNeighbors);

}  // namespace debias
