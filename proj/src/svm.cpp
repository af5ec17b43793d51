#include "voicing/svm.hpp"

#include <algorithm>
#include <cmath>
#include <list>
#include <random>
#include <unordered_map>

namespace voicing::models {

double SvmModel::decision(std::span<const double> x) const {
  if (x.size() != dim())
    throw DataError("svm: input dimension " + std::to_string(x.size()) +
                    " does not match model dimension " + std::to_string(dim()));
  double acc = bias;
  for (std::size_t i = 0; i < support_vectors.size(); ++i) {
    double dist = 0.0;
    const auto& sv = support_vectors[i];
    for (std::size_t d = 0; d < sv.size(); ++d) {
      const double diff = x[d] - sv[d];
      dist += diff * diff;
    }
    acc += alphas[i] * labels[i] * std::exp(-gamma * dist);
  }
  return acc;
}

SvmPrediction svm_predict(const SvmModel& model, std::span<const double> x) {
  const double margin = model.decision(x);
  return {margin >= 0.0, margin};
}

namespace {

// Platt's SMO with a full error cache and an LRU row cache for the kernel.
class SmoSolver {
 public:
  SmoSolver(const std::vector<std::vector<double>>& x, const std::vector<int>& y,
            const SvmConfig& config, double gamma)
      : x_(x), y_(y), config_(config), gamma_(gamma), n_(x.size()), rng_(config.seed) {
    sq_norms_.resize(n_);
    for (std::size_t i = 0; i < n_; ++i) {
      double acc = 0.0;
      for (const double v : x_[i]) acc += v * v;
      sq_norms_[i] = acc;
    }
    box_.resize(n_);
    const double w_pos = config.class_weights ? config.class_weights->first : 1.0;
    const double w_neg = config.class_weights ? config.class_weights->second : 1.0;
    for (std::size_t i = 0; i < n_; ++i)
      box_[i] = config.c * (y_[i] > 0 ? w_pos : w_neg);
    alpha_.assign(n_, 0.0);
    // f = 0 everywhere at the start, so E_i = -y_i.
    error_.resize(n_);
    for (std::size_t i = 0; i < n_; ++i) error_[i] = -double(y_[i]);
  }

  void solve() {
    std::size_t sweeps = 0;
    bool examine_all = true;
    std::size_t changed = 0;
    while (changed > 0 || examine_all) {
      if (++sweeps > config_.max_sweeps)
        throw NumericError("svm: SMO did not converge within " +
                           std::to_string(config_.max_sweeps) + " sweeps");
      changed = 0;
      if (examine_all) {
        for (std::size_t i = 0; i < n_; ++i) changed += examine(i);
        examine_all = false;
      } else {
        for (std::size_t i = 0; i < n_; ++i)
          if (is_free(i)) changed += examine(i);
        if (changed == 0) examine_all = true;
      }
    }
  }

  SvmModel finish() {
    SvmModel model;
    model.gamma = gamma_;
    model.c = config_.c;
    model.bias = bias_;
    for (std::size_t i = 0; i < n_; ++i) {
      if (alpha_[i] <= 1e-12) continue;
      model.support_vectors.push_back(x_[i]);
      model.alphas.push_back(alpha_[i]);
      model.labels.push_back(double(y_[i]));
    }
    return model;
  }

 private:
  bool is_free(std::size_t i) const {
    return alpha_[i] > 1e-12 && alpha_[i] < box_[i] - 1e-12;
  }

  const std::vector<double>& kernel_row(std::size_t i) {
    if (auto it = cache_.find(i); it != cache_.end()) return it->second;
    if (cache_.size() >= kCacheRows) {
      cache_.erase(cache_order_.front());
      cache_order_.pop_front();
    }
    std::vector<double> row(n_);
    for (std::size_t j = 0; j < n_; ++j) {
      double dot = 0.0;
      for (std::size_t d = 0; d < x_[i].size(); ++d) dot += x_[i][d] * x_[j][d];
      row[j] = std::exp(-gamma_ * (sq_norms_[i] + sq_norms_[j] - 2.0 * dot));
    }
    cache_order_.push_back(i);
    return cache_.emplace(i, std::move(row)).first->second;
  }

  std::size_t examine(std::size_t i2) {
    const double y2 = double(y_[i2]);
    const double e2 = error_[i2];
    const double r2 = e2 * y2;
    const bool violates = (r2 < -config_.tolerance && alpha_[i2] < box_[i2]) ||
                          (r2 > config_.tolerance && alpha_[i2] > 0.0);
    if (!violates) return 0;

    // Second-choice heuristic: the free point with the largest |E1 - E2|.
    std::size_t best = n_;
    double best_gap = -1.0;
    for (std::size_t i = 0; i < n_; ++i) {
      if (!is_free(i)) continue;
      const double gap = std::abs(error_[i] - e2);
      if (gap > best_gap) {
        best_gap = gap;
        best = i;
      }
    }
    if (best < n_ && take_step(best, i2)) return 1;

    // Fall back to scanning free points, then all points, from a seeded origin.
    const std::size_t start1 = rng_() % n_;
    for (std::size_t k = 0; k < n_; ++k) {
      const std::size_t i1 = (start1 + k) % n_;
      if (is_free(i1) && take_step(i1, i2)) return 1;
    }
    const std::size_t start2 = rng_() % n_;
    for (std::size_t k = 0; k < n_; ++k) {
      const std::size_t i1 = (start2 + k) % n_;
      if (take_step(i1, i2)) return 1;
    }
    return 0;
  }

  bool take_step(std::size_t i1, std::size_t i2) {
    if (i1 == i2) return false;
    const double alph1 = alpha_[i1], alph2 = alpha_[i2];
    const double y1 = double(y_[i1]), y2 = double(y_[i2]);
    const double e1 = error_[i1], e2 = error_[i2];
    const double s = y1 * y2;
    const double c1 = box_[i1], c2 = box_[i2];

    double lo, hi;
    if (s < 0.0) {
      lo = std::max(0.0, alph2 - alph1);
      hi = std::min(c2, c1 + alph2 - alph1);
    } else {
      lo = std::max(0.0, alph1 + alph2 - c1);
      hi = std::min(c2, alph1 + alph2);
    }
    if (lo >= hi) return false;

    const auto& row1 = kernel_row(i1);
    const double k11 = 1.0, k22 = 1.0;  // RBF diagonal
    const double k12 = row1[i2];
    const double eta = k11 + k22 - 2.0 * k12;

    double a2;
    if (eta > 1e-15) {
      a2 = std::clamp(alph2 + y2 * (e1 - e2) / eta, lo, hi);
    } else {
      // Degenerate curvature: compare the objective at both clip ends.
      const double f1 = y1 * e1 - alph1 * k11 - s * alph2 * k12;
      const double f2 = y2 * e2 - s * alph1 * k12 - alph2 * k22;
      const double l1 = alph1 + s * (alph2 - lo);
      const double h1 = alph1 + s * (alph2 - hi);
      const double obj_lo =
          l1 * f1 + lo * f2 + 0.5 * l1 * l1 * k11 + 0.5 * lo * lo * k22 + s * lo * l1 * k12;
      const double obj_hi =
          h1 * f1 + hi * f2 + 0.5 * h1 * h1 * k11 + 0.5 * hi * hi * k22 + s * hi * h1 * k12;
      if (obj_lo < obj_hi - 1e-12)
        a2 = lo;
      else if (obj_lo > obj_hi + 1e-12)
        a2 = hi;
      else
        return false;
    }
    if (std::abs(a2 - alph2) < 1e-12 * (a2 + alph2 + 1e-12)) return false;
    const double a1 = alph1 + s * (alph2 - a2);

    const double da1 = a1 - alph1, da2 = a2 - alph2;
    const auto& row2 = kernel_row(i2);
    const double b1 = bias_ - e1 - y1 * da1 * k11 - y2 * da2 * k12;
    const double b2 = bias_ - e2 - y1 * da1 * k12 - y2 * da2 * k22;
    double new_bias;
    if (a1 > 1e-12 && a1 < c1 - 1e-12)
      new_bias = b1;
    else if (a2 > 1e-12 && a2 < c2 - 1e-12)
      new_bias = b2;
    else
      new_bias = 0.5 * (b1 + b2);
    const double db = new_bias - bias_;

    alpha_[i1] = a1;
    alpha_[i2] = a2;
    bias_ = new_bias;
    for (std::size_t i = 0; i < n_; ++i)
      error_[i] += y1 * da1 * row1[i] + y2 * da2 * row2[i] + db;
    return true;
  }

  static constexpr std::size_t kCacheRows = 768;

  const std::vector<std::vector<double>>& x_;
  const std::vector<int>& y_;
  SvmConfig config_;
  double gamma_;
  std::size_t n_;
  std::mt19937_64 rng_;
  std::vector<double> sq_norms_, box_, alpha_, error_;
  double bias_ = 0.0;
  std::unordered_map<std::size_t, std::vector<double>> cache_;
  std::list<std::size_t> cache_order_;
};

}  // namespace

SvmModel svm_train(const std::vector<std::vector<double>>& x,
                   const std::vector<int>& y, const SvmConfig& config) {
  if (x.empty() || x.size() != y.size())
    throw DataError("svm: need matching, non-empty features and labels");
  const std::size_t dim = x.front().size();
  bool has_pos = false, has_neg = false;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i].size() != dim) throw DataError("svm: ragged feature matrix");
    for (const double v : x[i])
      if (!std::isfinite(v)) throw DataError("svm: non-finite feature value");
    if (y[i] == 1)
      has_pos = true;
    else if (y[i] == -1)
      has_neg = true;
    else
      throw DataError("svm: labels must be +1 or -1");
  }
  if (!has_pos || !has_neg) throw DataError("svm: both classes must be present");

  double gamma = config.gamma;
  if (gamma <= 0.0) {
    // 1 / (dim * var) with the variance pooled over all matrix entries.
    double mean = 0.0, sq = 0.0;
    const double count = double(x.size()) * double(dim);
    for (const auto& row : x)
      for (const double v : row) {
        mean += v;
        sq += v * v;
      }
    mean /= count;
    const double var = std::max(sq / count - mean * mean, 1e-12);
    gamma = 1.0 / (double(dim) * var);
  }

  SmoSolver solver(x, y, config, gamma);
  solver.solve();
  return solver.finish();
}

}  // namespace voicing::models
