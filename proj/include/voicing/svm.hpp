#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "voicing/common.hpp"

// Binary SVM with RBF kernel, trained by sequential minimal optimization on
// the dual. Labels are +1 / -1 (+1 = voiced).

namespace voicing::models {

struct SvmConfig {
  double c = 1.0;
  double gamma = 0.0;       // <= 0 selects 1 / (dim * var(X))
  double tolerance = 1e-3;  // KKT tolerance
  std::uint64_t seed = 1;   // working-set fallback scan origins
  // Per-class box scaling (w_pos, w_neg); alpha_i <= c * w_{y_i}.
  std::optional<std::pair<double, double>> class_weights;
  std::size_t max_sweeps = 2000;  // full passes before declaring non-convergence
};

struct SvmModel {
  std::vector<std::vector<double>> support_vectors;
  std::vector<double> alphas;  // positive multipliers, one per support vector
  std::vector<double> labels;  // +-1 per support vector
  double bias = 0.0;
  double gamma = 0.0;
  double c = 0.0;

  std::size_t dim() const {
    return support_vectors.empty() ? 0 : support_vectors.front().size();
  }
  // sum_i alpha_i y_i exp(-gamma ||x - x_i||^2) + bias
  double decision(std::span<const double> x) const;
};

struct SvmPrediction {
  bool positive = false;  // voiced
  double margin = 0.0;
};

// Throws DataError on non-finite features or single-class labels and
// NumericError when SMO fails to converge within the sweep budget.
SvmModel svm_train(const std::vector<std::vector<double>>& x,
                   const std::vector<int>& y, const SvmConfig& config = {});

SvmPrediction svm_predict(const SvmModel& model, std::span<const double> x);

}  // namespace voicing::models
