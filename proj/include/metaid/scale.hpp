#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include <fmt/format.h>

#include "metaid/error.hpp"
#include "metaid/eval.hpp"
#include "metaid/learn.hpp"
#include "metaid/parallel.hpp"
#include "metaid/random.hpp"

namespace metaid {

struct PartitionPlan {
  std::vector<std::vector<UserId>> subsets;  // each sorted
  std::size_t subset_size = 0;
  std::uint64_t seed = 0;
};

// Shuffles the identities under `seed` and cuts consecutive chunks of
// `subset_size`; only the last chunk may be smaller.
inline PartitionPlan partition_classes(std::vector<UserId> identities, std::size_t subset_size, std::uint64_t seed) {
  if (subset_size < 1) throw PlanError("subset_size must be >= 1");
  std::sort(identities.begin(), identities.end());
  identities.erase(std::unique(identities.begin(), identities.end()), identities.end());
  auto rng = make_rng(seed, {0});
  std::shuffle(identities.begin(), identities.end(), rng);
  PartitionPlan plan{{}, subset_size, seed};
  for (std::size_t i = 0; i < identities.size(); i += subset_size) {
    const auto end = std::min(identities.size(), i + subset_size);
    std::vector<UserId> s(identities.begin() + static_cast<std::ptrdiff_t>(i),
                          identities.begin() + static_cast<std::ptrdiff_t>(end));
    std::sort(s.begin(), s.end());
    plan.subsets.push_back(std::move(s));
  }
  return plan;
}

struct PartitionedPrediction {
  PredictionVector prediction;
  std::vector<std::size_t> candidates;  // indices into classes(), ascending
};

// Two-stage classifier: one stage-1 model per subset nominates its top
// `candidates_per_subset` classes; a stage-2 model of the same kind,
// trained on the nominated classes only, decides. Stage-2 models are
// memoized per candidate set.
class PartitionedModel {
 public:
  const std::vector<TrainedModel>& stage1() const noexcept { return stage1_; }
  const ClassList& classes() const noexcept { return *classes_; }
  std::size_t candidates_per_subset() const noexcept { return top_c_; }
  std::size_t stage2_models() const {
    std::lock_guard lock(memo_->mutex);
    return memo_->entries.size();
  }

  PartitionedPrediction predict(std::span<const double> x) const {
    if (stage1_.size() == 1) {
      auto p = stage1_.front().predict(x);
      return {PredictionVector(classes_, p.probabilities()), top_indices(p, top_c_, nullptr)};
    }
    std::vector<std::size_t> cand;
    for (std::size_t s = 0; s < stage1_.size(); ++s) {
      const auto p = stage1_[s].predict(x);
      for (auto c : top_indices(p, top_c_, &offsets_[s])) cand.push_back(c);
    }
    std::sort(cand.begin(), cand.end());
    const auto& model = stage2(cand);
    std::vector<double> probs(classes_->size(), 0.0);
    const auto local = model.predict_row(x);
    // Stage-2 classes are the candidates in ascending order.
    for (std::size_t i = 0; i < cand.size(); ++i) probs[cand[i]] = local[i];
    return {PredictionVector(classes_, std::move(probs)), std::move(cand)};
  }

 private:
  struct Memo {
    struct Entry {
      std::once_flag once;
      std::optional<TrainedModel> model;
    };
    mutable std::mutex mutex;
    std::map<std::vector<std::size_t>, std::shared_ptr<Entry>> entries;
  };

  PartitionedModel(std::vector<TrainedModel> stage1, std::shared_ptr<const ClassList> classes,
                   std::vector<std::vector<std::size_t>> offsets, SampleSet samples, HyperParams params,
                   std::size_t top_c)
      : stage1_(std::move(stage1)), classes_(std::move(classes)), offsets_(std::move(offsets)),
        samples_(std::move(samples)), params_(params), top_c_(top_c), memo_(std::make_unique<Memo>()) {}

  friend PartitionedModel train_partitioned(const SampleSet&, const HyperParams&, const PartitionPlan&,
                                            std::size_t);

  // Top-c local classes of p by rank, mapped through `global` when given.
  static std::vector<std::size_t> top_indices(const PredictionVector& p, std::size_t c,
                                              const std::vector<std::size_t>* global) {
    std::vector<std::size_t> idx(p.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    const auto take = std::min(c, idx.size());
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(take), idx.end(),
                      [&](std::size_t a, std::size_t b) { return p.outranks(a, b); });
    idx.resize(take);
    if (global)
      for (auto& i : idx) i = (*global)[i];
    std::sort(idx.begin(), idx.end());
    return idx;
  }

  const TrainedModel& stage2(const std::vector<std::size_t>& cand) const {
    std::shared_ptr<Memo::Entry> entry;
    {
      std::lock_guard lock(memo_->mutex);
      auto& e = memo_->entries[cand];
      if (!e) e = std::make_shared<Memo::Entry>();
      entry = e;
    }
    std::call_once(entry->once, [&] {
      const auto& all = *classes_;
      auto subset = samples_.filter_labels([&](const UserId& u) {
        const auto i = static_cast<std::size_t>(std::lower_bound(all.begin(), all.end(), u) - all.begin());
        return std::binary_search(cand.begin(), cand.end(), i);
      });
      entry->model.emplace(train(subset, params_));
    });
    return *entry->model;
  }

  std::vector<TrainedModel> stage1_;
  std::shared_ptr<const ClassList> classes_;
  std::vector<std::vector<std::size_t>> offsets_;  // per subset: local class -> global index
  SampleSet samples_;
  HyperParams params_;
  std::size_t top_c_ = 1;
  std::unique_ptr<Memo> memo_;
};

// Trains one stage-1 model per subset, in parallel, each with `params`
// unchanged so a single-subset plan reproduces the monolithic model.
inline PartitionedModel train_partitioned(const SampleSet& samples, const HyperParams& params,
                                          const PartitionPlan& plan, std::size_t candidates_per_subset = 1) {
  validate_params(params);
  if (candidates_per_subset < 1) throw PlanError("candidates_per_subset must be >= 1");
  if (plan.subsets.empty()) throw PlanError("plan has no subsets");
  const auto encoded = encode_labels(samples.labels());
  const auto& classes = *encoded.classes;

  std::vector<std::vector<std::size_t>> offsets;
  std::vector<int> owner(classes.size(), -1);
  for (std::size_t s = 0; s < plan.subsets.size(); ++s) {
    if (plan.subsets[s].empty()) throw PlanError(fmt::format("subset {} is empty", s));
    std::vector<std::size_t> global;
    for (const auto& u : plan.subsets[s]) {
      const auto it = std::lower_bound(classes.begin(), classes.end(), u);
      if (it == classes.end() || *it != u) throw PlanError(fmt::format("identity {} has no training samples", u.str()));
      const auto g = static_cast<std::size_t>(it - classes.begin());
      if (owner[g] >= 0) throw PlanError(fmt::format("identity {} appears in two subsets", u.str()));
      owner[g] = static_cast<int>(s);
      global.push_back(g);
    }
    std::sort(global.begin(), global.end());
    offsets.push_back(std::move(global));
  }
  for (std::size_t g = 0; g < classes.size(); ++g)
    if (owner[g] < 0) throw PlanError(fmt::format("identity {} is not covered by the plan", classes[g].str()));

  std::vector<std::optional<TrainedModel>> built(plan.subsets.size());
  parallel_for(plan.subsets.size(), [&](std::size_t s) {
    if (plan.subsets.size() == 1) {
      built[s].emplace(train(samples, params));
      return;
    }
    const auto part = samples.filter_labels([&](const UserId& u) {
      const auto g = static_cast<std::size_t>(std::lower_bound(classes.begin(), classes.end(), u) - classes.begin());
      return owner[g] == static_cast<int>(s);
    });
    built[s].emplace(train(part, params));
  });
  std::vector<TrainedModel> stage1;
  for (auto& b : built) stage1.push_back(std::move(*b));
  return PartitionedModel(std::move(stage1), encoded.classes, std::move(offsets), samples, params,
                          candidates_per_subset);
}

inline PartitionedPrediction predict_partitioned(const PartitionedModel& model, const FeatureVector& features) {
  if (features.combination != model.stage1().front().combination())
    throw ShapeError("feature combination differs from the model's combination");
  return model.predict(features.values);
}

// ---------------------------------------------------------------------------
// Benchmark

struct PartitionBenchConfig {
  std::size_t u = 1000;
  std::size_t per_user = 20;
  double split_ratio = 0.7;
  Combination combination = {FeatureId::friend_count, FeatureId::follower_count, FeatureId::listed_count};
  HyperParams params;
  std::vector<std::size_t> subset_sizes = {100, 250, 500, 1000};
  std::size_t candidates_per_subset = 1;
  std::uint64_t seed = 0;
};

struct PartitionRun {
  TimingRow row;
  std::vector<PartitionedPrediction> predictions;  // test order
};

// Scores a partitioned model on one split. candidate_recall is the share of
// test rows whose true class was nominated at stage 1.
inline PartitionRun run_partitioned(const SplitPair& split, const HyperParams& params, std::size_t subset_size,
                                    std::size_t candidates_per_subset, std::uint64_t plan_seed) {
  const auto encoded = encode_labels(split.train.labels());
  const auto plan = partition_classes(*encoded.classes, subset_size, plan_seed);

  PartitionRun out;
  auto t0 = Clock::now();
  const auto model = train_partitioned(split.train, params, plan, candidates_per_subset);
  out.row.train_seconds = seconds_since(t0);

  const auto& classes = model.classes();
  std::vector<std::optional<PartitionedPrediction>> preds(split.test.size());
  t0 = Clock::now();
  parallel_for(split.test.size(), [&](std::size_t i) { preds[i].emplace(model.predict(split.test.row(i))); });
  out.row.predict_seconds = seconds_since(t0);

  MetricsAccumulator acc(classes.size(), {1});
  std::size_t nominated = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto truth =
        static_cast<std::size_t>(std::lower_bound(classes.begin(), classes.end(), split.test.label(i)) - classes.begin());
    acc.add(preds[i]->prediction, truth);
    if (std::binary_search(preds[i]->candidates.begin(), preds[i]->candidates.end(), truth)) ++nominated;
    out.predictions.push_back(std::move(*preds[i]));
  }
  const auto m = acc.finish();
  out.row.n = split.train.dims();
  out.row.algorithm = params.algorithm;
  out.row.subset_size = subset_size;
  out.row.accuracy = m.accuracy;
  out.row.precision = m.precision;
  out.row.recall = m.recall;
  out.row.f_score = m.f_score;
  out.row.candidate_recall = static_cast<double>(nominated) / static_cast<double>(preds.size());
  return out;
}

// Every subset size is scored on the same users and split.
inline std::vector<TimingRow> partition_benchmark(const Dataset& data, const PartitionBenchConfig& c) {
  validate_combination(c.combination);
  if (c.subset_sizes.empty()) throw DomainError("no subset sizes given");
  const auto pool = eligible_users(data, c.per_user);
  if (pool.size() < c.u)
    throw CapacityError(fmt::format("{} users requested but only {} have >= {} records", c.u, pool.size(), c.per_user));
  const auto split = draw_repetition(data, pool, c.u, c.per_user, c.split_ratio, c.combination, c.seed, 0);
  std::vector<TimingRow> rows;
  for (auto size : c.subset_sizes) {
    auto r = run_partitioned(split, c.params, size, c.candidates_per_subset, derive_seed(c.seed, {1}));
    r.row.u = c.u;
    rows.push_back(r.row);
  }
  return rows;
}

}  // namespace metaid
