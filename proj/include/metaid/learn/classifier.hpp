#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <fmt/format.h>
#include <json.hpp>

#include "metaid/error.hpp"
#include "metaid/learn/forest.hpp"
#include "metaid/learn/knn.hpp"
#include "metaid/learn/lbfgs.hpp"
#include "metaid/learn/mlr.hpp"
#include "metaid/learn/types.hpp"
#include "metaid/model.hpp"

namespace metaid {

// Per-feature z-score transform fitted on training rows. Constant features
// keep unit scale.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> scale;

  static Standardizer fit(std::span<const double> rows, std::size_t dims) {
    Standardizer s{std::vector<double>(dims, 0.0), std::vector<double>(dims, 0.0)};
    const std::size_t n = rows.size() / dims;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < dims; ++j) s.mean[j] += rows[i * dims + j];
    for (auto& m : s.mean) m /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < dims; ++j) {
        const double t = rows[i * dims + j] - s.mean[j];
        s.scale[j] += t * t;
      }
    for (auto& v : s.scale) {
      v = std::sqrt(v / static_cast<double>(n));
      if (!(v > 0.0)) v = 1.0;
    }
    return s;
  }

  void apply(std::span<const double> in, std::span<double> out) const {
    for (std::size_t j = 0; j < mean.size(); ++j) out[j] = (in[j] - mean[j]) / scale[j];
  }
};

class TrainedModel;
TrainedModel train(const SampleSet& samples, const HyperParams& params);
TrainedModel model_from_json(const nlohmann::json& j);

// A fitted classifier over the identity set of its training labels.
// Immutable; safe to share across threads for prediction.
class TrainedModel {
 public:
  using State = std::variant<KnnIndex, RandomForest, WeightMatrix>;

  Algorithm algorithm() const noexcept { return params_.algorithm; }
  const HyperParams& params() const noexcept { return params_; }
  const Combination& combination() const noexcept { return combination_; }
  const ClassList& classes() const noexcept { return *classes_; }
  const std::shared_ptr<const ClassList>& shared_classes() const noexcept { return classes_; }
  const std::optional<Standardizer>& standardizer() const noexcept { return standardizer_; }
  const State& state() const noexcept { return state_; }
  // False when MLR stopped at the iteration limit or on a failed line search.
  bool converged() const noexcept { return converged_; }
  std::size_t iterations() const noexcept { return iterations_; }

  // Probabilities for a row already encoded under combination().
  std::vector<double> predict_row(std::span<const double> x) const {
    if (x.size() != combination_.size())
      throw ShapeError(fmt::format("row has {} values, model expects {}", x.size(), combination_.size()));
    std::vector<double> scaled;
    if (standardizer_) {
      scaled.resize(x.size());
      standardizer_->apply(x, scaled);
      x = scaled;
    }
    return std::visit(
        [&](const auto& s) -> std::vector<double> {
          using T = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<T, WeightMatrix>) return softmax_probabilities(s, x);
          else return s.predict(x);
        },
        state_);
  }

  PredictionVector predict(std::span<const double> x) const { return {classes_, predict_row(x)}; }

 private:
  TrainedModel(HyperParams params, Combination combination, std::shared_ptr<const ClassList> classes,
               std::optional<Standardizer> standardizer, State state, bool converged,
               std::size_t iterations)
      : params_(params), combination_(std::move(combination)), classes_(std::move(classes)),
        standardizer_(std::move(standardizer)), state_(std::move(state)), converged_(converged),
        iterations_(iterations) {}

  friend TrainedModel train(const SampleSet& samples, const HyperParams& params);
  friend TrainedModel model_from_json(const nlohmann::json& j);

  HyperParams params_;
  Combination combination_;
  std::shared_ptr<const ClassList> classes_;
  std::optional<Standardizer> standardizer_;
  State state_;
  bool converged_ = true;
  std::size_t iterations_ = 0;
};

inline TrainedModel train(const SampleSet& samples, const HyperParams& params) {
  validate_params(params);
  validate_combination(samples.combination());
  if (samples.empty()) throw DomainError("training needs at least one sample");
  const std::size_t dims = samples.dims();
  if (samples.values().size() != samples.size() * dims) throw ShapeError("inconsistent sample rows");

  auto labels = encode_labels(samples.labels());
  const std::size_t num_classes = labels.classes->size();

  std::optional<Standardizer> standardizer;
  std::vector<double> scaled;
  std::span<const double> rows = samples.values();
  if (params.standardize) {
    standardizer = Standardizer::fit(rows, dims);
    scaled.resize(rows.size());
    for (std::size_t i = 0; i < samples.size(); ++i)
      standardizer->apply(rows.subspan(i * dims, dims), std::span(scaled).subspan(i * dims, dims));
    rows = scaled;
  }

  bool converged = true;
  std::size_t iterations = 0;
  TrainedModel::State state;
  switch (params.algorithm) {
    case Algorithm::knn:
      state = KnnIndex(dims, rows, labels.index, num_classes, params.knn_k);
      break;
    case Algorithm::rf:
      state = RandomForest::train(rows, dims, labels.index, num_classes, params.rf_trees, params.seed);
      break;
    case Algorithm::mlr: {
      LbfgsOptions opt;
      opt.memory = params.lbfgs_memory;
      opt.max_iterations = params.mlr_max_iter;
      opt.gradient_tolerance = params.mlr_tol;
      auto fit = fit_mlr(rows, dims, labels.index, num_classes, params.mlr_l2, opt);
      converged = fit.converged;
      iterations = fit.iterations;
      state = std::move(fit.weights);
      break;
    }
  }
  return TrainedModel(params, samples.combination(), labels.classes, std::move(standardizer),
                      std::move(state), converged, iterations);
}

inline PredictionVector predict_proba(const TrainedModel& model, const FeatureVector& features) {
  if (features.combination != model.combination())
    throw ShapeError(fmt::format("features [{}] do not match the model's [{}]",
                                 join_combination(features.combination),
                                 join_combination(model.combination())));
  return model.predict(features.values);
}

inline UserId classify(const TrainedModel& model, const FeatureVector& features) {
  return classify(predict_proba(model, features));
}

struct ObjectiveAndGradient {
  double value;
  WeightMatrix gradient;
};

// Softmax negative log-likelihood plus (l2/2)||W||^2 (bias unpenalised) and
// its gradient. Row k of W scores classes[k].
inline ObjectiveAndGradient mlr_objective_and_gradient(const WeightMatrix& w, const SampleSet& samples,
                                                       const ClassList& classes, double l2) {
  if (w.classes != classes.size() || w.cols != samples.dims() + 1)
    throw ShapeError(fmt::format("weight matrix {}x{} does not fit {} classes x {} features", w.classes,
                                 w.cols, classes.size(), samples.dims()));
  std::vector<std::uint32_t> labels;
  labels.reserve(samples.size());
  for (const auto& l : samples.labels()) {
    const auto it = std::find(classes.begin(), classes.end(), l);
    if (it == classes.end()) throw UnknownClassError(l.str() + " is not a row of the weight matrix");
    labels.push_back(static_cast<std::uint32_t>(it - classes.begin()));
  }
  ObjectiveAndGradient out{0.0, WeightMatrix(w.classes, w.cols)};
  out.value = mlr_objective(w.data, w.classes, samples.values(), samples.dims(), labels, l2, out.gradient.data);
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

inline constexpr int kModelFormatVersion = 1;

inline nlohmann::json to_json(const HyperParams& p) {
  return {{"algorithm", algorithm_name(p.algorithm)},
          {"knn_k", p.knn_k},
          {"rf_trees", p.rf_trees},
          {"rf_split", "entropy"},
          {"mlr_l2", p.mlr_l2},
          {"mlr_tol", p.mlr_tol},
          {"mlr_max_iter", p.mlr_max_iter},
          {"lbfgs_memory", p.lbfgs_memory},
          {"standardize", p.standardize},
          {"seed", p.seed}};
}

inline HyperParams params_from_json(const nlohmann::json& j) {
  HyperParams p;
  const auto algo = parse_algorithm(j.at("algorithm").get<std::string>());
  if (!algo) throw FormatError("unknown algorithm in model file");
  p.algorithm = *algo;
  p.knn_k = j.at("knn_k").get<std::size_t>();
  p.rf_trees = j.at("rf_trees").get<std::size_t>();
  p.mlr_l2 = j.at("mlr_l2").get<double>();
  p.mlr_tol = j.at("mlr_tol").get<double>();
  p.mlr_max_iter = j.at("mlr_max_iter").get<std::size_t>();
  p.lbfgs_memory = j.at("lbfgs_memory").get<std::size_t>();
  p.standardize = j.at("standardize").get<bool>();
  p.seed = j.at("seed").get<std::uint64_t>();
  return p;
}

inline nlohmann::json to_json(const TrainedModel& m) {
  nlohmann::json j;
  j["format"] = "metaid-model";
  j["version"] = kModelFormatVersion;
  j["algorithm"] = algorithm_name(m.algorithm());
  j["params"] = to_json(m.params());
  auto& combo = j["combination"] = nlohmann::json::array();
  for (auto f : m.combination()) combo.push_back(feature_name(f));
  auto& classes = j["classes"] = nlohmann::json::array();
  for (const auto& c : m.classes()) classes.push_back(c.str());
  j["converged"] = m.converged();
  j["iterations"] = m.iterations();
  if (const auto& s = m.standardizer()) j["standardizer"] = {{"mean", s->mean}, {"scale", s->scale}};
  else j["standardizer"] = nullptr;

  nlohmann::json state;
  if (const auto* knn = std::get_if<KnnIndex>(&m.state())) {
    state["k"] = knn->k();
    state["dims"] = knn->dims();
    state["sites"] = knn->sites();
    state["entry_offsets"] = knn->entry_offsets();
    auto& entries = state["entries"] = nlohmann::json::array();
    for (const auto& e : knn->entries()) entries.push_back({e.cls, e.count});
  } else if (const auto* rf = std::get_if<RandomForest>(&m.state())) {
    auto& trees = state["trees"] = nlohmann::json::array();
    for (const auto& t : rf->trees()) {
      nlohmann::json tree;
      auto& nodes = tree["nodes"] = nlohmann::json::array();
      for (const auto& n : t.nodes())
        nodes.push_back({n.feature, n.threshold, n.left, n.right, n.leaf_begin, n.leaf_end});
      auto& leaves = tree["leaves"] = nlohmann::json::array();
      for (const auto& e : t.leaf_entries()) leaves.push_back({e.cls, e.probability});
      trees.push_back(std::move(tree));
    }
  } else {
    const auto& w = std::get<WeightMatrix>(m.state());
    state["rows"] = w.classes;
    state["cols"] = w.cols;
    state["weights"] = w.data;
  }
  j["state"] = std::move(state);
  return j;
}

inline TrainedModel model_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != "metaid-model") throw FormatError("not a metaid model");
    if (j.at("version").get<int>() != kModelFormatVersion)
      throw FormatError(fmt::format("unsupported model version {}", j.at("version").dump()));
    auto params = params_from_json(j.at("params"));
    Combination combination;
    for (const auto& name : j.at("combination")) {
      const auto f = parse_feature(name.get<std::string>());
      if (!f) throw FormatError("unknown feature in model file");
      combination.push_back(*f);
    }
    validate_combination(combination);
    ClassList classes;
    for (const auto& c : j.at("classes")) classes.emplace_back(c.get<std::string>());
    auto shared = std::make_shared<const ClassList>(std::move(classes));
    const auto k = shared->size();

    std::optional<Standardizer> standardizer;
    if (!j.at("standardizer").is_null())
      standardizer = Standardizer{j["standardizer"].at("mean").get<std::vector<double>>(),
                                  j["standardizer"].at("scale").get<std::vector<double>>()};

    const auto& s = j.at("state");
    TrainedModel::State state;
    switch (params.algorithm) {
      case Algorithm::knn: {
        std::vector<KnnIndex::Entry> entries;
        for (const auto& e : s.at("entries"))
          entries.push_back({e.at(0).get<std::uint32_t>(), e.at(1).get<std::uint32_t>()});
        state = KnnIndex(s.at("dims").get<std::size_t>(), k, s.at("k").get<std::size_t>(),
                         s.at("sites").get<std::vector<double>>(),
                         s.at("entry_offsets").get<std::vector<std::uint32_t>>(), std::move(entries));
        break;
      }
      case Algorithm::rf: {
        std::vector<DecisionTree> trees;
        for (const auto& t : s.at("trees")) {
          std::vector<TreeNode> nodes;
          for (const auto& n : t.at("nodes"))
            nodes.push_back({n.at(0).get<std::int32_t>(), n.at(1).get<double>(), n.at(2).get<std::int32_t>(),
                             n.at(3).get<std::int32_t>(), n.at(4).get<std::uint32_t>(),
                             n.at(5).get<std::uint32_t>()});
          std::vector<LeafEntry> leaves;
          for (const auto& e : t.at("leaves"))
            leaves.push_back({e.at(0).get<std::uint32_t>(), e.at(1).get<double>()});
          for (const auto& n : nodes) {
            const bool ok = n.is_leaf()
                                ? n.leaf_begin <= n.leaf_end && n.leaf_end <= leaves.size()
                                : static_cast<std::size_t>(n.feature) < combination.size() && n.left > 0 &&
                                      n.right > 0 && static_cast<std::size_t>(n.left) < nodes.size() &&
                                      static_cast<std::size_t>(n.right) < nodes.size();
            if (!ok) throw FormatError("inconsistent tree node in model file");
          }
          for (const auto& e : leaves)
            if (e.cls >= k) throw FormatError("leaf class out of range in model file");
          if (nodes.empty()) throw FormatError("empty tree in model file");
          trees.emplace_back(std::move(nodes), std::move(leaves));
        }
        state = RandomForest(std::move(trees), k);
        break;
      }
      case Algorithm::mlr: {
        WeightMatrix w;
        w.classes = s.at("rows").get<std::size_t>();
        w.cols = s.at("cols").get<std::size_t>();
        w.data = s.at("weights").get<std::vector<double>>();
        if (w.classes != k || w.cols != combination.size() + 1 || w.data.size() != w.classes * w.cols)
          throw FormatError("weight matrix shape does not match model header");
        state = std::move(w);
        break;
      }
    }
    return TrainedModel(params, std::move(combination), std::move(shared), std::move(standardizer),
                        std::move(state), j.at("converged").get<bool>(),
                        j.at("iterations").get<std::size_t>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(fmt::format("malformed model: {}", e.what()));
  }
}

inline void save_model(const TrainedModel& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path);
  out << to_json(m).dump() << '\n';
  if (!out) throw IoError("failed writing " + path);
}

inline TrainedModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(fmt::format("malformed model file {}: {}", path, e.what()));
  }
  return model_from_json(j);
}

}  // namespace metaid
