#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "metaid/csv.hpp"
#include "metaid/error.hpp"
#include "metaid/eval.hpp"
#include "metaid/model.hpp"
#include "metaid/parallel.hpp"

namespace metaid {

struct CombinationScore {
  Combination combination;
  Algorithm algorithm = Algorithm::knn;
  std::size_t level = 0;
  double mean_accuracy = 0.0;
  double ci_half_width = 0.0;
  std::size_t runs = 0;
};

// All `level`-subsets of `features`, each in ascending enum order, listed
// lexicographically by enum index.
inline std::vector<Combination> enumerate_combinations(std::vector<FeatureId> features, std::size_t level) {
  std::sort(features.begin(), features.end());
  features.erase(std::unique(features.begin(), features.end()), features.end());
  if (level < 1) throw DomainError("level must be >= 1");
  if (level > features.size())
    throw DomainError(fmt::format("level {} exceeds the {} available features", level, features.size()));
  std::vector<Combination> out;
  std::vector<std::size_t> pick(level);
  for (std::size_t i = 0; i < level; ++i) pick[i] = i;
  const std::size_t n = features.size();
  while (true) {
    Combination c;
    for (auto i : pick) c.push_back(features[i]);
    out.push_back(std::move(c));
    std::size_t i = level;
    while (i > 0 && pick[i - 1] == n - level + (i - 1)) --i;
    if (i == 0) break;
    ++pick[i - 1];
    for (std::size_t j = i; j < level; ++j) pick[j] = pick[j - 1] + 1;
  }
  return out;
}

struct WrapperOptions {
  std::vector<std::size_t> levels = {1, 2, 3};
  std::vector<FeatureId> features = all_features();
};

// Exhaustive wrapper search. Each combination runs a full bootstrap with
// master seed derived from (config.master_seed, level, combination index).
// Result is sorted by mean accuracy descending; ties keep level then
// enumeration order.
inline std::vector<CombinationScore> wrapper_search(const Dataset& data, const HyperParams& params,
                                                    const WrapperOptions& options,
                                                    const ExperimentConfig& config) {
  struct Job {
    std::size_t level;
    std::size_t index;
    Combination combination;
  };
  std::vector<Job> jobs;
  for (auto level : options.levels) {
    auto combos = enumerate_combinations(options.features, level);
    for (std::size_t i = 0; i < combos.size(); ++i) jobs.push_back({level, i, std::move(combos[i])});
  }
  std::vector<CombinationScore> scores(jobs.size());
  parallel_for(jobs.size(), [&](std::size_t j) {
    auto c = config;
    c.params = params;
    c.combination = jobs[j].combination;
    c.master_seed = derive_seed(config.master_seed, {jobs[j].level, jobs[j].index});
    const auto report = bootstrap_run(data, c);
    scores[j] = {jobs[j].combination, params.algorithm, jobs[j].level, report.accuracy().mean,
                 report.accuracy().ci95_half_width, report.repetitions};
  });
  std::stable_sort(scores.begin(), scores.end(),
                   [](const CombinationScore& a, const CombinationScore& b) { return a.mean_accuracy > b.mean_accuracy; });
  return scores;
}

inline void write_ranking_csv(std::ostream& out, const std::vector<CombinationScore>& scores) {
  CsvWriter csv(out, {"algorithm", "level", "combination", "mean_accuracy", "ci_half_width", "runs"});
  for (const auto& s : scores)
    csv.row(algorithm_name(s.algorithm), s.level, join_combination(s.combination), s.mean_accuracy,
            s.ci_half_width, s.runs);
}

// ---------------------------------------------------------------------------
// Entropy

// Name of the pseudo-feature treating the whole creation timestamp as one
// categorical value.
inline constexpr std::string_view kFullActName = "act";

namespace detail {

template <typename Key, typename Fn>
double plugin_entropy(const Dataset& data, Fn&& key) {
  if (data.empty()) throw DomainError("entropy of an empty dataset");
  std::map<Key, double> counts;
  for (const auto& r : data.records()) counts[key(r)] += 1.0;
  std::vector<double> c;
  c.reserve(counts.size());
  for (const auto& [_, n] : counts) c.push_back(n);
  return entropy_bits(c);
}

}  // namespace detail

// Plug-in Shannon entropy (bits) of the feature's value over all records.
inline double feature_entropy(const Dataset& data, FeatureId f) {
  return detail::plugin_entropy<double>(data, [f](const TweetRecord& r) { return feature_value(r, f); });
}

inline double act_entropy(const Dataset& data) {
  return detail::plugin_entropy<std::int64_t>(
      data, [](const TweetRecord& r) { return r.account_created_at.time_since_epoch().count(); });
}

struct EntropyRow {
  std::string feature;
  double entropy_bits;
};

// Full ACT first, then every feature in enum order.
inline std::vector<EntropyRow> entropy_table(const Dataset& data) {
  std::vector<EntropyRow> rows{{std::string(kFullActName), act_entropy(data)}};
  for (auto f : all_features()) rows.push_back({std::string(feature_name(f)), feature_entropy(data, f)});
  return rows;
}

inline void write_entropy_csv(std::ostream& out, const std::vector<EntropyRow>& rows) {
  CsvWriter csv(out, {"feature", "entropy_bits"});
  for (const auto& r : rows) csv.row(r.feature, r.entropy_bits);
}

}  // namespace metaid
