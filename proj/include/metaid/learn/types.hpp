#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <fmt/format.h>

#include "metaid/error.hpp"
#include "metaid/model.hpp"

namespace metaid {

enum class Algorithm { knn, rf, mlr };

inline constexpr std::string_view algorithm_name(Algorithm a) {
  switch (a) {
    case Algorithm::knn: return "knn";
    case Algorithm::rf: return "rf";
    case Algorithm::mlr: return "mlr";
  }
  return "?";
}

inline std::optional<Algorithm> parse_algorithm(std::string_view s) {
  if (s == "knn") return Algorithm::knn;
  if (s == "rf") return Algorithm::rf;
  if (s == "mlr") return Algorithm::mlr;
  return std::nullopt;
}

// Defaults are the tuned configuration: 1-NN on Euclidean distance, entropy
// forests of 10 trees, L2-regularised softmax trained with L-BFGS.
struct HyperParams {
  Algorithm algorithm = Algorithm::knn;
  std::size_t knn_k = 1;
  std::size_t rf_trees = 10;
  double mlr_l2 = 1.0;
  double mlr_tol = 1e-4;
  std::size_t mlr_max_iter = 100;
  std::size_t lbfgs_memory = 10;
  // z-score features with training statistics before fitting.
  bool standardize = false;
  std::uint64_t seed = 0;

  friend bool operator==(const HyperParams&, const HyperParams&) = default;
};

inline void validate_params(const HyperParams& p) {
  if (p.knn_k < 1) throw DomainError("knn_k must be >= 1");
  if (p.rf_trees < 1) throw DomainError("rf_trees must be >= 1");
  if (!(p.mlr_l2 >= 0.0)) throw DomainError("mlr_l2 must be >= 0");
  if (!(p.mlr_tol > 0.0)) throw DomainError("mlr_tol must be > 0");
  if (p.mlr_max_iter < 1) throw DomainError("mlr_max_iter must be >= 1");
  if (p.lbfgs_memory < 1) throw DomainError("lbfgs_memory must be >= 1");
}

using ClassList = std::vector<UserId>;

// Probability vector over the identity set fixed at training time.
class PredictionVector {
 public:
  PredictionVector(ClassList classes, std::vector<double> probabilities)
      : PredictionVector(std::make_shared<const ClassList>(std::move(classes)),
                         std::move(probabilities)) {}

  PredictionVector(std::shared_ptr<const ClassList> classes, std::vector<double> probabilities)
      : classes_(std::move(classes)), probabilities_(std::move(probabilities)) {
    if (classes_->size() != probabilities_.size())
      throw ShapeError(fmt::format("{} classes but {} probabilities", classes_->size(),
                                   probabilities_.size()));
    sorted_ = std::is_sorted(classes_->begin(), classes_->end());
  }

  const ClassList& classes() const noexcept { return *classes_; }
  const std::shared_ptr<const ClassList>& shared_classes() const noexcept { return classes_; }
  const std::vector<double>& probabilities() const noexcept { return probabilities_; }
  std::size_t size() const noexcept { return probabilities_.size(); }

  std::optional<std::size_t> index_of(const UserId& u) const {
    if (sorted_) {
      auto it = std::lower_bound(classes_->begin(), classes_->end(), u);
      if (it != classes_->end() && *it == u) return static_cast<std::size_t>(it - classes_->begin());
      return std::nullopt;
    }
    for (std::size_t i = 0; i < classes_->size(); ++i)
      if ((*classes_)[i] == u) return i;
    return std::nullopt;
  }

  // True when class a outranks class b: higher probability, ties broken by
  // the lexicographically smaller UserId.
  bool outranks(std::size_t a, std::size_t b) const {
    if (probabilities_[a] != probabilities_[b]) return probabilities_[a] > probabilities_[b];
    return sorted_ ? a < b : (*classes_)[a] < (*classes_)[b];
  }

  std::size_t argmax() const {
    std::size_t best = 0;
    for (std::size_t i = 1; i < size(); ++i)
      if (outranks(i, best)) best = i;
    return best;
  }

  // Number of classes ranked above class `i`.
  std::size_t rank_of(std::size_t i) const {
    std::size_t r = 0;
    for (std::size_t j = 0; j < size(); ++j)
      if (j != i && outranks(j, i)) ++r;
    return r;
  }

 private:
  std::shared_ptr<const ClassList> classes_;
  std::vector<double> probabilities_;
  bool sorted_ = false;
};

inline UserId classify(const PredictionVector& p) { return p.classes()[p.argmax()]; }

inline bool top_k_hit(const PredictionVector& p, const UserId& truth, std::size_t k) {
  if (k < 1 || k > p.size())
    throw DomainError(fmt::format("k={} outside [1, {}]", k, p.size()));
  const auto t = p.index_of(truth);
  if (!t) throw UnknownClassError(fmt::format("{} is not in the identity set", truth.str()));
  return p.rank_of(*t) < k;
}

// Shannon entropy in bits of a vector of class counts (zeros ignored).
inline double entropy_bits(std::span<const double> counts) {
  double total = 0.0;
  for (double c : counts) total += c;
  if (total <= 0.0) throw DomainError("entropy of an empty distribution");
  double h = 0.0;
  for (double c : counts)
    if (c > 0.0) {
      const double p = c / total;
      h -= p * std::log2(p);
    }
  return h + 0.0;
}

inline double node_entropy(std::span<const UserId> labels) {
  if (labels.empty()) throw DomainError("node_entropy of an empty multiset");
  std::map<UserId, double> counts;
  for (const auto& l : labels) counts[l] += 1.0;
  std::vector<double> c;
  for (const auto& [_, n] : counts) c.push_back(n);
  return entropy_bits(c);
}

// Sorted distinct labels plus each row's index into them.
struct EncodedLabels {
  std::shared_ptr<const ClassList> classes;
  std::vector<std::uint32_t> index;
};

inline EncodedLabels encode_labels(std::span<const UserId> labels) {
  ClassList classes(labels.begin(), labels.end());
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  EncodedLabels out;
  out.index.reserve(labels.size());
  for (const auto& l : labels)
    out.index.push_back(static_cast<std::uint32_t>(
        std::lower_bound(classes.begin(), classes.end(), l) - classes.begin()));
  out.classes = std::make_shared<const ClassList>(std::move(classes));
  return out;
}

}  // namespace metaid
