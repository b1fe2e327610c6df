#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include <fmt/format.h>

#include "metaid/error.hpp"
#include "metaid/learn/lbfgs.hpp"

namespace metaid {

// Row-major classes x (dims + 1) weights; the last column is the bias.
struct WeightMatrix {
  std::size_t classes = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  WeightMatrix() = default;
  WeightMatrix(std::size_t k, std::size_t c) : classes(k), cols(c), data(k * c, 0.0) {}

  double& operator()(std::size_t k, std::size_t j) { return data[k * cols + j]; }
  double operator()(std::size_t k, std::size_t j) const { return data[k * cols + j]; }
  std::span<const double> row(std::size_t k) const { return {data.data() + k * cols, cols}; }

  friend bool operator==(const WeightMatrix&, const WeightMatrix&) = default;
};

// Writes softmax(W [x; 1]) into probs using log-sum-exp.
inline void softmax_into(std::span<const double> weights, std::size_t classes,
                         std::span<const double> x, std::span<double> probs) {
  const std::size_t d = x.size();
  const std::size_t cols = d + 1;
  double zmax = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < classes; ++k) {
    const double* w = weights.data() + k * cols;
    double z = w[d];
    for (std::size_t j = 0; j < d; ++j) z += w[j] * x[j];
    probs[k] = z;
    zmax = std::max(zmax, z);
  }
  double sum = 0.0;
  for (std::size_t k = 0; k < classes; ++k) {
    probs[k] = std::exp(probs[k] - zmax);
    sum += probs[k];
  }
  for (std::size_t k = 0; k < classes; ++k) probs[k] /= sum;
}

inline std::vector<double> softmax_probabilities(const WeightMatrix& w, std::span<const double> x) {
  if (w.cols != x.size() + 1) throw ShapeError("weight matrix does not match feature count");
  std::vector<double> p(w.classes);
  softmax_into(w.data, w.classes, x, p);
  return p;
}

// Negative log-likelihood of the softmax model plus (l2/2)||W||^2 over the
// non-bias columns; writes the exact gradient into `grad`.
inline double mlr_objective(std::span<const double> weights, std::size_t classes,
                            std::span<const double> rows, std::size_t dims,
                            std::span<const std::uint32_t> labels, double l2, std::span<double> grad) {
  const std::size_t cols = dims + 1;
  if (weights.size() != classes * cols || grad.size() != weights.size() ||
      rows.size() != labels.size() * dims)
    throw ShapeError("MLR objective shape mismatch");
  for (double w : weights)
    if (!std::isfinite(w)) throw NumericError("non-finite value in weight matrix");

  std::fill(grad.begin(), grad.end(), 0.0);
  std::vector<double> z(classes);
  double f = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double* x = rows.data() + i * dims;
    double zmax = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < classes; ++k) {
      const double* w = weights.data() + k * cols;
      double s = w[dims];
      for (std::size_t j = 0; j < dims; ++j) s += w[j] * x[j];
      z[k] = s;
      zmax = std::max(zmax, s);
    }
    double sum = 0.0;
    for (std::size_t k = 0; k < classes; ++k) sum += std::exp(z[k] - zmax);
    const double lse = zmax + std::log(sum);
    const auto y = labels[i];
    f += lse - z[y];
    for (std::size_t k = 0; k < classes; ++k) {
      const double r = std::exp(z[k] - lse) - (k == y ? 1.0 : 0.0);
      double* g = grad.data() + k * cols;
      for (std::size_t j = 0; j < dims; ++j) g[j] += r * x[j];
      g[dims] += r;
    }
  }
  if (l2 > 0.0) {
    double penalty = 0.0;
    for (std::size_t k = 0; k < classes; ++k)
      for (std::size_t j = 0; j < dims; ++j) {
        const double w = weights[k * cols + j];
        penalty += w * w;
        grad[k * cols + j] += l2 * w;
      }
    f += 0.5 * l2 * penalty;
  }
  return f;
}

struct MlrFit {
  WeightMatrix weights;
  bool converged = false;
  std::size_t iterations = 0;
  double objective = 0.0;
  double gradient_norm = 0.0;
};

inline MlrFit fit_mlr(std::span<const double> rows, std::size_t dims,
                      std::span<const std::uint32_t> labels, std::size_t classes, double l2,
                      const LbfgsOptions& options) {
  const std::size_t cols = dims + 1;
  auto fg = [&](std::span<const double> w, std::span<double> g) {
    // Trial points that overflow are rejected by the line search.
    if (!std::all_of(w.begin(), w.end(), [](double v) { return std::isfinite(v); }))
      return std::numeric_limits<double>::infinity();
    return mlr_objective(w, classes, rows, dims, labels, l2, g);
  };
  auto r = lbfgs_minimize(fg, std::vector<double>(classes * cols, 0.0), options);
  MlrFit fit;
  fit.weights.classes = classes;
  fit.weights.cols = cols;
  fit.weights.data = std::move(r.x);
  fit.converged = r.converged;
  fit.iterations = r.iterations;
  fit.objective = r.value;
  fit.gradient_norm = r.gradient_norm;
  return fit;
}

}  // namespace metaid
