#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <fmt/format.h>

#include "metaid/csv.hpp"
#include "metaid/error.hpp"
#include "metaid/ingest.hpp"
#include "metaid/learn.hpp"
#include "metaid/model.hpp"
#include "metaid/parallel.hpp"
#include "metaid/random.hpp"

namespace metaid {

struct ExperimentConfig {
  std::size_t u = 10;
  Combination combination = {FeatureId::friend_count, FeatureId::follower_count};
  std::size_t per_user = 200;
  std::size_t repetitions = 200;
  double split_ratio = 0.7;
  HyperParams params;
  std::vector<std::size_t> top_k = {1, 5, 10};
  std::uint64_t master_seed = 0;

  std::size_t n() const noexcept { return combination.size(); }
};

inline void validate_config(const ExperimentConfig& c) {
  validate_combination(c.combination);
  validate_params(c.params);
  if (c.u < 1) throw DomainError("u must be >= 1");
  if (c.per_user < 2) throw DomainError("per_user must be >= 2 so both split sides are non-empty");
  if (c.repetitions < 1) throw DomainError("repetitions must be >= 1");
  if (!(c.split_ratio > 0.0 && c.split_ratio < 1.0)) throw DomainError("split_ratio must lie in (0, 1)");
  for (auto k : c.top_k)
    if (k < 1) throw DomainError("top-k values must be >= 1");
}

// ---------------------------------------------------------------------------
// Metrics

// One repetition's metrics. Precision, recall and F are macro averages over
// the classes present in the ground truth.
struct MetricBundle {
  double accuracy = 0.0;
  std::vector<std::pair<std::size_t, double>> top_k;  // (k, hit rate)
  double precision = 0.0;
  double recall = 0.0;
  double f_score = 0.0;
  std::size_t observations = 0;
};

class MetricsAccumulator {
 public:
  MetricsAccumulator(std::size_t num_classes, std::vector<std::size_t> top_k)
      : top_k_(std::move(top_k)), top_hits_(top_k_.size(), 0), tp_(num_classes, 0),
        predicted_(num_classes, 0), actual_(num_classes, 0) {}

  void add(const PredictionVector& p, std::size_t truth) {
    if (p.size() != tp_.size()) throw ShapeError("prediction size differs from accumulator classes");
    const auto pred = p.argmax();
    const auto rank = p.rank_of(truth);
    ++observations_;
    ++predicted_[pred];
    ++actual_[truth];
    if (pred == truth) {
      ++hits_;
      ++tp_[truth];
    }
    for (std::size_t i = 0; i < top_k_.size(); ++i)
      if (rank < std::min(top_k_[i], p.size())) ++top_hits_[i];
  }

  MetricBundle finish() const {
    if (observations_ == 0) throw DomainError("no predictions to score");
    MetricBundle m;
    const double n = static_cast<double>(observations_);
    m.observations = observations_;
    m.accuracy = static_cast<double>(hits_) / n;
    for (std::size_t i = 0; i < top_k_.size(); ++i)
      m.top_k.emplace_back(top_k_[i], static_cast<double>(top_hits_[i]) / n);
    std::size_t present = 0;
    for (std::size_t c = 0; c < tp_.size(); ++c) {
      if (actual_[c] == 0) continue;
      ++present;
      const double tp = static_cast<double>(tp_[c]);
      const double precision = predicted_[c] ? tp / static_cast<double>(predicted_[c]) : 0.0;
      const double recall = tp / static_cast<double>(actual_[c]);
      m.precision += precision;
      m.recall += recall;
      m.f_score += precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
    }
    m.precision /= static_cast<double>(present);
    m.recall /= static_cast<double>(present);
    m.f_score /= static_cast<double>(present);
    return m;
  }

 private:
  std::vector<std::size_t> top_k_;
  std::vector<std::size_t> top_hits_;
  std::vector<std::size_t> tp_, predicted_, actual_;
  std::size_t hits_ = 0;
  std::size_t observations_ = 0;
};

inline MetricBundle accuracy_metrics(std::span<const std::pair<PredictionVector, UserId>> predictions,
                                     const std::vector<std::size_t>& top_k) {
  if (predictions.empty()) throw DomainError("accuracy_metrics needs at least one prediction");
  MetricsAccumulator acc(predictions.front().first.size(), top_k);
  for (const auto& [p, truth] : predictions) {
    const auto t = p.index_of(truth);
    if (!t) throw UnknownClassError(truth.str() + " is not in the identity set");
    acc.add(p, *t);
  }
  return acc.finish();
}

struct MetricSummary {
  double mean = 0.0;
  double ci95_half_width = 0.0;
};

// Mean and normal-approximation 95% half-width 1.96 s / sqrt(R).
inline MetricSummary summarize(std::span<const double> values) {
  if (values.empty()) throw DomainError("cannot summarize zero repetitions");
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  if (*lo == *hi) return {*lo, 0.0};
  double sum = 0.0;
  for (double v : values) sum += v;
  const double r = static_cast<double>(values.size());
  const double mean = sum / r;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / (r - 1.0));
  return {mean, 1.96 * sd / std::sqrt(r)};
}

struct MetricsReport {
  // Ordered: accuracy, top_<k>..., precision, recall, f_score.
  std::vector<std::pair<std::string, MetricSummary>> metrics;
  double train_seconds = 0.0;    // mean per repetition
  double predict_seconds = 0.0;  // mean per repetition
  std::size_t repetitions = 0;
  std::size_t test_observations = 0;  // summed over repetitions
  std::size_t convergence_warnings = 0;

  const MetricSummary& get(std::string_view name) const {
    for (const auto& [n, s] : metrics)
      if (n == name) return s;
    throw DomainError(fmt::format("no metric named {}", name));
  }
  const MetricSummary& accuracy() const { return get("accuracy"); }
  const MetricSummary& top(std::size_t k) const { return get(fmt::format("top_{}", k)); }
};

inline MetricsReport aggregate(std::span<const MetricBundle> reps) {
  if (reps.empty()) throw DomainError("no repetitions to aggregate");
  MetricsReport r;
  r.repetitions = reps.size();
  auto column = [&](auto&& get) {
    std::vector<double> v;
    v.reserve(reps.size());
    for (const auto& b : reps) v.push_back(get(b));
    return summarize(v);
  };
  r.metrics.emplace_back("accuracy", column([](const MetricBundle& b) { return b.accuracy; }));
  for (std::size_t i = 0; i < reps.front().top_k.size(); ++i)
    r.metrics.emplace_back(fmt::format("top_{}", reps.front().top_k[i].first),
                           column([&](const MetricBundle& b) { return b.top_k[i].second; }));
  r.metrics.emplace_back("precision", column([](const MetricBundle& b) { return b.precision; }));
  r.metrics.emplace_back("recall", column([](const MetricBundle& b) { return b.recall; }));
  r.metrics.emplace_back("f_score", column([](const MetricBundle& b) { return b.f_score; }));
  for (const auto& b : reps) r.test_observations += b.observations;
  return r;
}

// ---------------------------------------------------------------------------
// Bootstrap

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// Users holding at least `per_user` records, sorted.
inline std::vector<UserId> eligible_users(const Dataset& data, std::size_t per_user) {
  std::vector<UserId> out;
  for (const auto& [u, pos] : data.index())
    if (pos.size() >= per_user) out.push_back(u);
  return out;
}

// The user sample, standardisation and split of one repetition. Seeds
// depend only on (seed, stream index), never on scheduling.
inline SplitPair draw_repetition(const Dataset& data, const std::vector<UserId>& pool, std::size_t u,
                                 std::size_t per_user, double ratio, const Combination& combination,
                                 std::uint64_t seed, std::uint64_t stream) {
  auto rng = make_rng(seed, {stream, 0});
  std::vector<std::size_t> positions;
  for (auto i : sample_indices(pool.size(), u, rng)) {
    const auto& p = data.positions(pool[i]);
    positions.insert(positions.end(), p.begin(), p.end());
  }
  std::sort(positions.begin(), positions.end());
  const auto subset = standardize_per_user(select_records(data, positions), per_user,
                                           derive_seed(seed, {stream, 1}));
  return split_train_test(subset, combination, ratio, derive_seed(seed, {stream, 2}));
}

struct RepetitionOutcome {
  MetricBundle metrics;
  double train_seconds = 0.0;
  double predict_seconds = 0.0;
  bool converged = true;
};

inline RepetitionOutcome score_split(const SplitPair& split, const HyperParams& params,
                                     const std::vector<std::size_t>& top_k) {
  RepetitionOutcome out;
  auto t0 = Clock::now();
  const auto model = train(split.train, params);
  out.train_seconds = seconds_since(t0);
  out.converged = model.converged();

  MetricsAccumulator acc(model.classes().size(), top_k);
  const auto& classes = model.classes();
  t0 = Clock::now();
  for (std::size_t i = 0; i < split.test.size(); ++i) {
    const auto truth = std::lower_bound(classes.begin(), classes.end(), split.test.label(i)) - classes.begin();
    acc.add(model.predict(split.test.row(i)), static_cast<std::size_t>(truth));
  }
  out.predict_seconds = seconds_since(t0);
  out.metrics = acc.finish();
  return out;
}

// Optional transform of each repetition's training side (obfuscation).
using TrainTransform = std::function<void(SampleSet& train, std::size_t repetition)>;

inline MetricsReport bootstrap_run(const Dataset& data, const ExperimentConfig& config,
                                   const TrainTransform& transform = {}) {
  validate_config(config);
  const auto pool = eligible_users(data, config.per_user);
  if (pool.size() < config.u)
    throw CapacityError(fmt::format("{} users requested but only {} have >= {} records", config.u,
                                    pool.size(), config.per_user));

  std::vector<RepetitionOutcome> outcomes(config.repetitions);
  parallel_for(config.repetitions, [&](std::size_t rep) {
    auto split = draw_repetition(data, pool, config.u, config.per_user, config.split_ratio,
                                 config.combination, config.master_seed, rep);
    if (transform) transform(split.train, rep);
    auto params = config.params;
    params.seed = derive_seed(config.params.seed, {rep});
    outcomes[rep] = score_split(split, params, config.top_k);
  });

  std::vector<MetricBundle> bundles;
  MetricsReport report;
  for (const auto& o : outcomes) {
    bundles.push_back(o.metrics);
    report.train_seconds += o.train_seconds;
    report.predict_seconds += o.predict_seconds;
    if (!o.converged) ++report.convergence_warnings;
  }
  auto agg = aggregate(bundles);
  agg.train_seconds = report.train_seconds / static_cast<double>(config.repetitions);
  agg.predict_seconds = report.predict_seconds / static_cast<double>(config.repetitions);
  agg.convergence_warnings = report.convergence_warnings;
  return agg;
}

inline std::vector<std::pair<std::size_t, MetricsReport>> scaling_sweep(
    const Dataset& data, const ExperimentConfig& base, const std::vector<std::size_t>& u_values) {
  std::vector<std::pair<std::size_t, MetricsReport>> out;
  for (auto u : u_values) {
    auto c = base;
    c.u = u;
    out.emplace_back(u, bootstrap_run(data, c));
  }
  return out;
}

// Report CSV: one row per metric.
class ReportCsv {
 public:
  explicit ReportCsv(std::ostream& out)
      : csv_(out, {"experiment_id", "algorithm", "u", "n", "combination", "per_user", "repetitions",
                   "metric", "mean", "ci95_half_width"}) {}

  void add(const std::string& experiment_id, const ExperimentConfig& c, const MetricsReport& r) {
    for (const auto& [name, s] : r.metrics)
      csv_.row(experiment_id, algorithm_name(c.params.algorithm), c.u, c.n(),
               join_combination(c.combination), c.per_user, r.repetitions, name, s.mean,
               s.ci95_half_width);
  }

 private:
  CsvWriter csv_;
};

// ---------------------------------------------------------------------------
// Timing

struct TimingRow {
  std::size_t u = 0;
  std::size_t n = 0;
  Algorithm algorithm = Algorithm::knn;
  std::size_t subset_size = 0;
  double train_seconds = 0.0;    // median over runs
  double predict_seconds = 0.0;  // median over runs
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f_score = 0.0;
  // Stage-1 candidate recall for partitioned runs; 1 for monolithic ones.
  double candidate_recall = 1.0;
  // Run-to-run training time spread exceeded 20% of the median.
  bool unstable = false;
};

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

inline bool spread_exceeds(const std::vector<double>& v, double fraction) {
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  const double mid = median(v);
  return mid > 0.0 && (*hi - *lo) > fraction * mid;
}

struct TimingGrid {
  std::vector<Algorithm> algorithms = {Algorithm::knn, Algorithm::rf, Algorithm::mlr};
  std::vector<std::size_t> u_values = {100, 1000};
  std::vector<std::size_t> n_values = {3};
  // Combination for level n is the first n entries.
  Combination features = {FeatureId::friend_count, FeatureId::follower_count, FeatureId::listed_count,
                          FeatureId::favourites_count, FeatureId::statuses_count};
  std::size_t per_user = 20;
  double split_ratio = 0.7;
  std::size_t runs = 3;
  HyperParams params;
  std::uint64_t seed = 0;
};

// Median wall-clock train and predict time per (algorithm, u, n) cell. All
// algorithms in a (u, n) cell see the same users and split.
inline std::vector<TimingRow> timing_benchmark(const Dataset& data, const TimingGrid& grid) {
  if (grid.algorithms.empty() || grid.u_values.empty() || grid.n_values.empty())
    throw DomainError("timing grid is empty");
  if (grid.runs < 3) throw DomainError("timing needs at least 3 runs per cell");
  const auto pool = eligible_users(data, grid.per_user);
  std::vector<TimingRow> rows;
  for (auto u : grid.u_values) {
    if (pool.size() < u)
      throw CapacityError(fmt::format("{} users requested but only {} available", u, pool.size()));
    for (auto n : grid.n_values) {
      if (n < 1 || n > grid.features.size())
        throw DomainError(fmt::format("n={} outside the benchmark feature list", n));
      const Combination combo(grid.features.begin(), grid.features.begin() + static_cast<std::ptrdiff_t>(n));
      const auto split = draw_repetition(data, pool, u, grid.per_user, grid.split_ratio, combo, grid.seed, u);
      for (auto algo : grid.algorithms) {
        auto params = grid.params;
        params.algorithm = algo;
        std::vector<double> train_t, predict_t;
        RepetitionOutcome first;
        for (std::size_t r = 0; r < grid.runs; ++r) {
          auto o = score_split(split, params, {1});
          train_t.push_back(o.train_seconds);
          predict_t.push_back(o.predict_seconds);
          if (r == 0) first = std::move(o);
        }
        TimingRow row;
        row.u = u;
        row.n = n;
        row.algorithm = algo;
        row.subset_size = u;
        row.train_seconds = median(train_t);
        row.predict_seconds = median(predict_t);
        row.accuracy = first.metrics.accuracy;
        row.precision = first.metrics.precision;
        row.recall = first.metrics.recall;
        row.f_score = first.metrics.f_score;
        row.unstable = spread_exceeds(train_t, 0.2);
        rows.push_back(row);
      }
    }
  }
  return rows;
}

inline void write_timing_csv(std::ostream& out, const std::vector<TimingRow>& rows) {
  CsvWriter csv(out, {"u", "n", "algorithm", "subset_size", "wall_time_train_s", "wall_time_predict_s",
                      "accuracy", "precision", "recall", "f_score", "candidate_recall"});
  for (const auto& r : rows)
    csv.row(r.u, r.n, algorithm_name(r.algorithm), r.subset_size, r.train_seconds, r.predict_seconds,
            r.accuracy, r.precision, r.recall, r.f_score, r.candidate_recall);
}

}  // namespace metaid
