#include <gtest/gtest.h>

#include <set>

#include "support.hpp"

namespace metaid {
namespace {

std::vector<UserId> ids(std::size_t n) {
  std::vector<UserId> out;
  for (std::size_t i = 0; i < n; ++i) out.emplace_back(fmt::format("c{}", i));
  return out;
}

TEST(Plan, TenIdentitiesBySizeThree) {
  const auto p = partition_classes(ids(10), 3, 4);
  ASSERT_EQ(p.subsets.size(), 4u);
  std::vector<std::size_t> sizes;
  std::set<UserId> seen;
  for (const auto& s : p.subsets) {
    sizes.push_back(s.size());
    EXPECT_TRUE(std::is_sorted(s.begin(), s.end()));
    seen.insert(s.begin(), s.end());
  }
  EXPECT_EQ(sizes, (std::vector<std::size_t>{3, 3, 3, 1}));
  EXPECT_EQ(seen.size(), 10u);
}

TEST(Plan, DeterministicAndSeedSensitive) {
  EXPECT_EQ(partition_classes(ids(50), 7, 1).subsets, partition_classes(ids(50), 7, 1).subsets);
  EXPECT_NE(partition_classes(ids(50), 7, 1).subsets, partition_classes(ids(50), 7, 2).subsets);
  auto shuffled = ids(50);
  std::reverse(shuffled.begin(), shuffled.end());
  EXPECT_EQ(partition_classes(shuffled, 7, 1).subsets, partition_classes(ids(50), 7, 1).subsets);
  EXPECT_EQ(partition_classes(ids(5), 10, 0).subsets.size(), 1u);
  EXPECT_THROW(partition_classes(ids(5), 0, 0), PlanError);
}

SplitPair split_for(std::size_t users, std::uint64_t seed, double sep = 1.0) {
  const auto d = testing::population(users, 20, sep, seed);
  return split_train_test(d, {FeatureId::friend_count, FeatureId::follower_count, FeatureId::listed_count}, 0.7,
                          seed);
}

TEST(Partitioned, SingleSubsetMatchesMonolithic) {
  const auto s = split_for(12, 3);
  for (auto a : {Algorithm::knn, Algorithm::rf, Algorithm::mlr}) {
    HyperParams p;
    p.algorithm = a;
    p.seed = 5;
    const auto mono = train(s.train, p);
    const auto enc = encode_labels(s.train.labels());
    const auto part = train_partitioned(s.train, p, partition_classes(*enc.classes, 100, 1));
    for (std::size_t i = 0; i < s.test.size(); ++i)
      ASSERT_EQ(part.predict(s.test.row(i)).prediction.probabilities(), mono.predict(s.test.row(i)).probabilities());
  }
}

TEST(Partitioned, OneNearestNeighbourEqualsMonolithic) {
  Rng rng(31);
  for (int trial = 0; trial < 40; ++trial) {
    auto in = testing::random_instance(rng, 60, 12, 3, 5);
    const auto samples = testing::to_samples(in);
    HyperParams p;
    const auto mono = train(samples, p);
    const auto enc = encode_labels(samples.labels());
    const auto size = std::uniform_int_distribution<std::size_t>(1, enc.classes->size())(rng);
    const auto part = train_partitioned(samples, p, partition_classes(*enc.classes, size, rng()));
    for (int q = 0; q < 30; ++q) {
      std::vector<double> x(in.dims);
      for (auto& v : x) v = std::uniform_int_distribution<int>(-1, 6)(rng);
      ASSERT_EQ(part.predict(x).prediction.argmax(), mono.predict(x).argmax());
    }
  }
}

TEST(Partitioned, FourSubsetsCoverAllClasses) {
  const auto s = split_for(10, 4, 5.0);
  const auto enc = encode_labels(s.train.labels());
  const auto plan = partition_classes(*enc.classes, 3, 2);
  const auto model = train_partitioned(s.train, HyperParams{}, plan, 2);
  EXPECT_EQ(model.stage1().size(), 4u);
  EXPECT_EQ(model.classes().size(), 10u);
  for (std::size_t i = 0; i < s.test.size(); ++i) {
    const auto r = model.predict(s.test.row(i));
    EXPECT_EQ(r.prediction.size(), 10u);
    // Three subsets nominate two each; the singleton subset nominates one.
    EXPECT_EQ(r.candidates.size(), 7u);
    double sum = 0;
    for (double v : r.prediction.probabilities()) sum += v;
    EXPECT_NEAR(sum, 1.0, 1e-12);
    EXPECT_TRUE(std::binary_search(r.candidates.begin(), r.candidates.end(), r.prediction.argmax()));
  }
}

TEST(Partitioned, StageTwoModelsAreMemoized) {
  const auto s = split_for(20, 5);
  const auto enc = encode_labels(s.train.labels());
  HyperParams p;
  p.algorithm = Algorithm::rf;
  const auto model = train_partitioned(s.train, p, partition_classes(*enc.classes, 5, 3));
  std::vector<std::vector<double>> forward;
  for (std::size_t i = 0; i < s.test.size(); ++i) forward.push_back(model.predict(s.test.row(i)).prediction.probabilities());
  const auto built = model.stage2_models();
  EXPECT_GE(built, 1u);
  EXPECT_LE(built, s.test.size());
  for (std::size_t i = s.test.size(); i-- > 0;)
    ASSERT_EQ(model.predict(s.test.row(i)).prediction.probabilities(), forward[i]);
  EXPECT_EQ(model.stage2_models(), built);

  // A fresh model queried in reverse order gives the same answers.
  const auto again = train_partitioned(s.train, p, partition_classes(*enc.classes, 5, 3));
  for (std::size_t i = s.test.size(); i-- > 0;)
    ASSERT_EQ(again.predict(s.test.row(i)).prediction.probabilities(), forward[i]);
}

TEST(Partitioned, ParallelPredictionMatchesSerial) {
  const auto s = split_for(30, 6);
  HyperParams p;
  p.algorithm = Algorithm::mlr;
  set_worker_count(1);
  const auto a = run_partitioned(s, p, 7, 1, 9);
  set_worker_count(4);
  const auto b = run_partitioned(s, p, 7, 1, 9);
  set_worker_count(1);
  ASSERT_EQ(a.predictions.size(), b.predictions.size());
  for (std::size_t i = 0; i < a.predictions.size(); ++i)
    ASSERT_EQ(a.predictions[i].prediction.probabilities(), b.predictions[i].prediction.probabilities());
  EXPECT_EQ(a.row.accuracy, b.row.accuracy);
  EXPECT_GE(a.row.candidate_recall, a.row.accuracy);
}

TEST(Partitioned, PlanErrors) {
  const auto s = split_for(4, 7);
  const auto enc = encode_labels(s.train.labels());
  const auto& c = *enc.classes;
  const HyperParams p;
  EXPECT_THROW(train_partitioned(s.train, p, PartitionPlan{}), PlanError);
  EXPECT_THROW(train_partitioned(s.train, p, PartitionPlan{{{c[0], c[1]}, {}, {c[2], c[3]}}}), PlanError);
  EXPECT_THROW(train_partitioned(s.train, p, PartitionPlan{{{c[0], c[1]}, {c[1], c[2], c[3]}}}), PlanError);
  EXPECT_THROW(train_partitioned(s.train, p, PartitionPlan{{{c[0], c[1]}, {c[2]}}}), PlanError);
  EXPECT_THROW(train_partitioned(s.train, p, PartitionPlan{{{c[0], c[1]}, {c[2], c[3], UserId("ghost")}}}),
               PlanError);
  EXPECT_THROW(train_partitioned(s.train, p, partition_classes(c, 2, 0), 0), PlanError);
}

TEST(Bench, OneRowPerSubsetSize) {
  const auto d = testing::population(20, 20, 3.0, 8);
  PartitionBenchConfig c;
  c.u = 12;
  c.subset_sizes = {3, 6, 12};
  const auto rows = partition_benchmark(d, c);
  ASSERT_EQ(rows.size(), 3u);
  for (const auto& r : rows) {
    EXPECT_EQ(r.u, 12u);
    EXPECT_EQ(r.n, 3u);
  }
  // Exact 1-NN: every subset size gives the monolithic accuracy.
  EXPECT_EQ(rows[0].accuracy, rows[2].accuracy);
  EXPECT_EQ(rows[1].accuracy, rows[2].accuracy);
  EXPECT_EQ(rows[2].candidate_recall, rows[2].accuracy);
  c.u = 21;
  EXPECT_THROW(partition_benchmark(d, c), CapacityError);
}

}  // namespace
}  // namespace metaid
