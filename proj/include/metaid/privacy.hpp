#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include <fmt/format.h>

#include "metaid/csv.hpp"
#include "metaid/error.hpp"
#include "metaid/eval.hpp"
#include "metaid/ingest.hpp"
#include "metaid/model.hpp"
#include "metaid/random.hpp"

namespace metaid {

// Rounding granularity for a value with `digits` decimal digits.
inline constexpr std::int64_t rounding_granularity(int digits) {
  if (digits <= 1) return 1;
  if (digits == 2) return 10;
  std::int64_t g = 1;
  for (int i = 0; i < digits - 2; ++i) g *= 10;
  return g;
}

inline constexpr int decimal_digits(std::int64_t v) {
  int d = 1;
  while (v >= 10) {
    v /= 10;
    ++d;
  }
  return d;
}

// Nearest multiple of the value's granularity, halves away from zero.
// Saturates to the largest representable multiple near INT64_MAX.
inline constexpr std::int64_t round_magnitude(std::int64_t value) {
  if (value < 0) throw DomainError("round_magnitude needs a non-negative value");
  const auto g = rounding_granularity(decimal_digits(value));
  const auto q = value / g;
  const auto r = value % g;
  if (2 * r < g) return q * g;
  if (q + 1 > std::numeric_limits<std::int64_t>::max() / g) return q * g;
  return (q + 1) * g;
}

// ---------------------------------------------------------------------------
// Rounding randomization

namespace detail {

inline std::vector<std::size_t> column_positions(const SampleSet& s, std::span<const FeatureId> columns) {
  std::vector<std::size_t> out;
  for (auto f : columns) {
    const auto& c = s.combination();
    const auto it = std::find(c.begin(), c.end(), f);
    if (it == c.end())
      throw ScheduleError(fmt::format("column {} is not in combination {}", feature_name(f), join_combination(c)));
    out.push_back(static_cast<std::size_t>(it - c.begin()));
  }
  return out;
}

inline std::size_t perturbed_count(double fraction, std::size_t rows) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw ScheduleError("fraction must lie in [0, 1]");
  return std::min(rows, static_cast<std::size_t>(std::floor(fraction * static_cast<double>(rows) + 1e-9)));
}

inline std::int64_t as_count(double v) {
  if (!(v >= 0.0) || v != std::floor(v) || v > 9.0e18)
    throw DomainError(fmt::format("value {} is not a non-negative integer", v));
  return static_cast<std::int64_t>(v);
}

}  // namespace detail

// For every column, floor(fraction * rows) rows drawn independently per
// column are replaced by round_magnitude of their value. Labels, order and
// shape are unchanged.
inline SampleSet randomize_dataset(SampleSet train, std::span<const FeatureId> columns, double fraction,
                                   std::uint64_t seed) {
  const auto pos = detail::column_positions(train, columns);
  const auto count = detail::perturbed_count(fraction, train.size());
  for (std::size_t c = 0; c < pos.size(); ++c) {
    auto rng = make_rng(seed, {static_cast<std::uint64_t>(columns[c])});
    for (auto i : sample_indices(train.size(), count, rng)) {
      auto& v = train.row(i)[pos[c]];
      v = static_cast<double>(round_magnitude(detail::as_count(v)));
    }
  }
  return train;
}

// ---------------------------------------------------------------------------
// Anonymization binning

enum class BinMode { quantile, equal_width };

// Bin b holds values v with edges[b-1] < v <= edges[b]; outer bins are open.
struct BinEdges {
  std::vector<double> edges;  // bins - 1 entries, non-decreasing

  std::size_t bins() const noexcept { return edges.size() + 1; }

  std::size_t index(double v) const {
    return static_cast<std::size_t>(std::lower_bound(edges.begin(), edges.end(), v) - edges.begin());
  }
};

inline BinEdges fit_bins(std::span<const double> train, std::size_t bins, BinMode mode = BinMode::quantile) {
  if (bins < 1) throw DomainError("bins must be >= 1");
  if (train.empty()) throw DomainError("bin edges need at least one training value");
  std::vector<double> sorted(train.begin(), train.end());
  std::sort(sorted.begin(), sorted.end());
  BinEdges b;
  const std::size_t n = sorted.size();
  for (std::size_t j = 1; j < bins; ++j) {
    if (mode == BinMode::quantile) {
      const std::size_t rank = (j * n + bins - 1) / bins;  // ceil(j n / bins)
      b.edges.push_back(sorted[std::max<std::size_t>(rank, 1) - 1]);
    } else {
      const double lo = sorted.front(), hi = sorted.back();
      b.edges.push_back(lo + (hi - lo) * static_cast<double>(j) / static_cast<double>(bins));
    }
  }
  return b;
}

// Category indices of `values` under edges fitted on `train`.
inline std::vector<std::size_t> anonymize_bins(std::span<const double> train, std::span<const double> values,
                                               std::size_t bins, BinMode mode = BinMode::quantile) {
  const auto edges = fit_bins(train, bins, mode);
  std::vector<std::size_t> out;
  out.reserve(values.size());
  for (double v : values) out.push_back(edges.index(v));
  return out;
}

// Binning applied to a training set: for every column, floor(fraction *
// rows) rows take their bin's representative, the lower median of the
// column's training values in that bin. Keeps the feature scale so clean
// test rows stay comparable.
inline SampleSet bin_dataset(SampleSet train, std::span<const FeatureId> columns, double fraction,
                             std::size_t bins, BinMode mode, std::uint64_t seed) {
  const auto pos = detail::column_positions(train, columns);
  const auto count = detail::perturbed_count(fraction, train.size());
  if (count == 0) return train;
  std::vector<double> column(train.size());
  for (std::size_t c = 0; c < pos.size(); ++c) {
    for (std::size_t i = 0; i < train.size(); ++i) column[i] = train.row(i)[pos[c]];
    const auto edges = fit_bins(column, bins, mode);
    std::vector<std::vector<double>> members(edges.bins());
    for (double v : column) members[edges.index(v)].push_back(v);
    std::vector<double> representative(edges.bins(), 0.0);
    for (std::size_t b = 0; b < members.size(); ++b) {
      auto& m = members[b];
      if (m.empty()) continue;
      const auto mid = m.begin() + static_cast<std::ptrdiff_t>((m.size() - 1) / 2);
      std::nth_element(m.begin(), mid, m.end());
      representative[b] = *mid;
    }
    auto rng = make_rng(seed, {static_cast<std::uint64_t>(columns[c])});
    for (auto i : sample_indices(train.size(), count, rng))
      train.row(i)[pos[c]] = representative[edges.index(column[i])];
  }
  return train;
}

// ---------------------------------------------------------------------------
// Sweep

enum class Mechanism { rounding_randomization, anonymization_binning };

inline constexpr std::string_view mechanism_name(Mechanism m) {
  return m == Mechanism::rounding_randomization ? "rounding_randomization" : "anonymization_binning";
}

inline std::optional<Mechanism> parse_mechanism(std::string_view s) {
  if (s == "rounding_randomization" || s == "rounding") return Mechanism::rounding_randomization;
  if (s == "anonymization_binning" || s == "binning") return Mechanism::anonymization_binning;
  return std::nullopt;
}

inline std::vector<double> default_fractions() {
  std::vector<double> f;
  for (int i = 0; i <= 10; ++i) f.push_back(i / 10.0);
  return f;
}

struct ObfuscationSchedule {
  Combination columns;  // empty: every column of the experiment combination
  std::vector<double> fractions = default_fractions();
  Mechanism mechanism = Mechanism::rounding_randomization;
  std::size_t bins = 10;
  BinMode bin_mode = BinMode::quantile;
  std::uint64_t seed = 0;
};

inline void validate_schedule(const ObfuscationSchedule& s) {
  if (s.fractions.empty()) throw ScheduleError("schedule has no fractions");
  for (std::size_t i = 0; i < s.fractions.size(); ++i) {
    if (!(s.fractions[i] >= 0.0 && s.fractions[i] <= 1.0)) throw ScheduleError("fractions must lie in [0, 1]");
    if (i && !(s.fractions[i - 1] < s.fractions[i])) throw ScheduleError("fractions must be strictly ascending");
  }
  if (s.bins < 1) throw ScheduleError("bins must be >= 1");
}

inline Combination resolve_columns(const ObfuscationSchedule& s, const Combination& combination) {
  const Combination cols = s.columns.empty() ? combination : s.columns;
  for (auto f : cols)
    if (std::find(combination.begin(), combination.end(), f) == combination.end())
      throw ScheduleError(fmt::format("column {} is not in combination {}", feature_name(f),
                                      join_combination(combination)));
  return cols;
}

struct SweepPoint {
  double fraction;
  MetricsReport report;
};

// One bootstrap per fraction on the config's seeds; only the training side
// of each repetition is perturbed, seeded from (schedule seed, fraction
// index, repetition).
inline std::vector<SweepPoint> obfuscation_sweep(const Dataset& data, const ExperimentConfig& config,
                                                 const ObfuscationSchedule& schedule) {
  validate_schedule(schedule);
  validate_config(config);
  const auto cols = resolve_columns(schedule, config.combination);
  std::vector<SweepPoint> out;
  for (std::size_t fi = 0; fi < schedule.fractions.size(); ++fi) {
    const double f = schedule.fractions[fi];
    auto transform = [&](SampleSet& train, std::size_t rep) {
      const auto seed = derive_seed(schedule.seed, {fi, rep});
      if (schedule.mechanism == Mechanism::rounding_randomization)
        train = randomize_dataset(std::move(train), cols, f, seed);
      else
        train = bin_dataset(std::move(train), cols, f, schedule.bins, schedule.bin_mode, seed);
    };
    out.push_back({f, bootstrap_run(data, config, transform)});
  }
  return out;
}

inline void write_sweep_csv(std::ostream& out, Mechanism mechanism, const ExperimentConfig& config,
                            const std::vector<SweepPoint>& points) {
  CsvWriter csv(out, {"mechanism", "fraction", "algorithm", "combination", "mean_accuracy", "ci_half_width"});
  for (const auto& p : points)
    csv.row(mechanism_name(mechanism), p.fraction, algorithm_name(config.params.algorithm),
            join_combination(config.combination), p.report.accuracy().mean, p.report.accuracy().ci95_half_width);
}

}  // namespace metaid
