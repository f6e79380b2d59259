#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "debias/encoder.hpp"

namespace debias {

struct ProjectionOptions {
  double perplexity = 30.0;
  std::uint64_t seed = 0;
  std::size_t iterations = 1000;
  std::size_t exaggeration_iterations = 250;
  double exaggeration = 12.0;
  /// 0 picks max(N / exaggeration / 4, 50).
  double learning_rate = 0.0;
};

/// Exact t-SNE layout of the rows of `embeddings` (N x 2 result).
/// Throws PerplexityTooLarge unless N > 3 * perplexity.
RowMatrix project_2d(const RowMatrix& embeddings, const ProjectionOptions& options);
RowMatrix project_2d(const RowMatrix& embeddings, double perplexity, std::uint64_t seed);

struct PlotRow {
  double x = 0.0;
  double y = 0.0;
  std::string label;
  std::string group;
};

/// "x\ty\tlabel\tgroup" lines with a header.
void write_plot_rows(std::ostream& out, const std::vector<PlotRow>& rows);

}  // namespace debias
