#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numeric>

#include "oracles.hpp"

namespace metaid {
namespace {

using testing::Instance;
using testing::random_instance;
using testing::to_samples;
using testing::knn_oracle;
using testing::leaf_recursive;
using testing::random_query;
using testing::tree_distribution;

// ---------------------------------------------------------------------------
// kNN

TEST(Knn, MatchesExhaustiveScanOracle) {
  Rng rng(2024);
  for (int trial = 0; trial < 300; ++trial) {
    const auto in = random_instance(rng);
    const std::size_t k = std::uniform_int_distribution<std::size_t>(1, 7)(rng);
    const KnnIndex index(in.dims, in.rows, in.labels, in.classes, k);
    for (int q = 0; q < 20; ++q) {
      const auto x = random_query(rng, in.dims);
      ASSERT_EQ(index.predict(x), knn_oracle(in, x, k)) << "trial " << trial;
    }
  }
}

TEST(Knn, NearestAndLexicographicTieBreak) {
  SampleSet s({FeatureId::friend_count, FeatureId::follower_count});
  s.push_back(std::vector<double>{10, 10}, UserId("u2"));
  s.push_back(std::vector<double>{0, 0}, UserId("u1"));
  const auto m = train(s, {});
  auto p = m.predict(std::vector<double>{1, 1});
  EXPECT_EQ(classify(p), UserId("u1"));
  EXPECT_EQ(p.probabilities(), (std::vector<double>{1.0, 0.0}));
  EXPECT_EQ(classify(m.predict(std::vector<double>{5, 5})), UserId("u1"));
}

TEST(Knn, SelfNearestNeighbourOnDistinctPoints) {
  Rng rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    auto in = random_instance(rng, 40, 5, 3, 1000);
    const KnnIndex index(in.dims, in.rows, in.labels, in.classes, 1);
    std::set<std::vector<double>> distinct;
    for (std::size_t i = 0; i < in.size(); ++i)
      distinct.insert(std::vector<double>(in.rows.begin() + i * in.dims, in.rows.begin() + (i + 1) * in.dims));
    if (distinct.size() != in.size()) continue;
    for (std::size_t i = 0; i < in.size(); ++i) {
      const auto p = index.predict(std::span<const double>(in.rows.data() + i * in.dims, in.dims));
      EXPECT_EQ(p[in.labels[i]], 1.0);
    }
  }
}

TEST(Knn, ScalesToManyDuplicatePoints) {
  Instance in{1, 3, {}, {}};
  for (int i = 0; i < 3000; ++i) {
    in.rows.push_back(i % 10);
    in.labels.push_back(static_cast<std::uint32_t>(i % 3));
  }
  const KnnIndex index(1, in.rows, in.labels, 3, 5);
  EXPECT_EQ(index.site_count(), 10u);
  const std::vector<double> x{4.2};
  EXPECT_EQ(index.predict(x), knn_oracle(in, x, 5));
}

// ---------------------------------------------------------------------------
// Random forest

TEST(Forest, TreesMatchRecursiveReevaluation) {
  Rng rng(77);
  for (int trial = 0; trial < 150; ++trial) {
    const auto in = random_instance(rng);
    const auto forest = RandomForest::train(in.rows, in.dims, in.labels, in.classes, 4, rng());
    for (int q = 0; q < 20; ++q) {
      const auto x = random_query(rng, in.dims);
      for (const auto& t : forest.trees()) {
        const auto leaf = t.leaf_of(x);
        ASSERT_EQ(leaf, leaf_recursive(t, 0, x));
        const auto p = tree_distribution(t, leaf, in.classes);
        EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-12);
      }
      EXPECT_EQ(forest.predict(x), testing::forest_oracle(forest, x, in.classes));
    }
  }
}

// Root split of a single-feature tree grown on every row equals the
// exhaustive minimum of weighted child entropy over midpoint thresholds.
TEST(Forest, RootSplitMaximisesInformationGain) {
  Rng rng(31);
  int checked = 0;
  for (int trial = 0; trial < 200; ++trial) {
    auto in = random_instance(rng, 40, 4, 1, 12);
    std::vector<std::uint32_t> all(in.size());
    std::iota(all.begin(), all.end(), 0u);
    Rng tree_rng(1);
    const auto tree = DecisionTree::grow(in.rows, 1, in.labels, in.classes, all, 1, tree_rng);

    std::vector<double> values(in.rows);
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());
    std::vector<UserId> labels;
    for (auto l : in.labels) labels.emplace_back(fmt::format("c{}", l));
    const double parent = node_entropy(labels);
    if (values.size() < 2 || parent == 0.0) {
      EXPECT_TRUE(tree.nodes()[0].is_leaf());
      continue;
    }
    double best = 1e300;
    std::vector<double> best_t;
    for (std::size_t i = 0; i + 1 < values.size(); ++i) {
      const double t = (values[i] + values[i + 1]) / 2;
      std::vector<UserId> l, r;
      for (std::size_t k = 0; k < in.size(); ++k) (in.rows[k] <= t ? l : r).push_back(labels[k]);
      const double h = (l.size() * node_entropy(l) + r.size() * node_entropy(r)) / in.size();
      if (h < best - 1e-12) best = h, best_t = {t};
      else if (std::abs(h - best) <= 1e-12) best_t.push_back(t);
    }
    const auto& root = tree.nodes()[0];
    ASSERT_FALSE(root.is_leaf());
    EXPECT_NE(std::find(best_t.begin(), best_t.end(), root.threshold), best_t.end()) << "trial " << trial;
    ++checked;
  }
  EXPECT_GT(checked, 100);
}

TEST(Forest, GrownToPurityOnDistinctPoints) {
  Instance in{2, 3, {}, {}};
  for (int i = 0; i < 30; ++i) {
    in.rows.push_back(i);
    in.rows.push_back((i * 7) % 11);
    in.labels.push_back(static_cast<std::uint32_t>((i * 5) % 3));
  }
  std::vector<std::uint32_t> all(30);
  std::iota(all.begin(), all.end(), 0u);
  Rng r(3);
  const auto tree = DecisionTree::grow(in.rows, 2, in.labels, 3, all, 2, r);
  for (std::size_t i = 0; i < 30; ++i) {
    const auto leaf = tree.leaf(tree.leaf_of(std::span<const double>(in.rows.data() + 2 * i, 2)));
    ASSERT_EQ(leaf.size(), 1u);
    EXPECT_EQ(leaf[0].cls, in.labels[i]);
    EXPECT_EQ(leaf[0].probability, 1.0);
  }
}

TEST(Forest, ReproducibleAcrossWorkerCounts) {
  Rng rng(8);
  const auto in = random_instance(rng, 50, 5, 3, 20);
  set_worker_count(1);
  const auto a = RandomForest::train(in.rows, in.dims, in.labels, in.classes, 16, 42);
  set_worker_count(4);
  const auto b = RandomForest::train(in.rows, in.dims, in.labels, in.classes, 16, 42);
  set_worker_count(1);
  ASSERT_EQ(a.trees().size(), b.trees().size());
  for (std::size_t t = 0; t < a.trees().size(); ++t) {
    ASSERT_EQ(a.trees()[t].nodes().size(), b.trees()[t].nodes().size());
    for (std::size_t n = 0; n < a.trees()[t].nodes().size(); ++n)
      EXPECT_EQ(a.trees()[t].nodes()[n].threshold, b.trees()[t].nodes()[n].threshold);
  }
}

// ---------------------------------------------------------------------------
// MLR and L-BFGS

TEST(Mlr, ObjectiveAtZeroIsLogClasses) {
  SampleSet s({FeatureId::friend_count});
  s.push_back(std::vector<double>{3.0}, UserId("a"));
  const ClassList classes{UserId("a"), UserId("b")};
  const auto r = mlr_objective_and_gradient(WeightMatrix(2, 2), s, classes, 1.0);
  EXPECT_NEAR(r.value, std::log(2.0), 1e-15);
}

TEST(Mlr, ZeroWeightsPredictUniform) {
  const auto p = softmax_probabilities(WeightMatrix(4, 3), std::vector<double>{1e6, -3});
  for (double v : p) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(Mlr, GradientMatchesCentralDifferences) {
  for (std::uint64_t seed : {4u, 5u, 6u}) EXPECT_LE(testing::worst_gradient_error(seed), 1e-5) << seed;
}

TEST(Mlr, NonFiniteWeightsRejected) {
  SampleSet s({FeatureId::friend_count});
  s.push_back(std::vector<double>{1.0}, UserId("a"));
  WeightMatrix w(1, 2);
  w(0, 0) = std::nan("");
  EXPECT_THROW(mlr_objective_and_gradient(w, s, {UserId("a")}, 1.0), NumericError);
}

TEST(Mlr, UnregularisedObjectiveVanishesOnSeparableData) {
  SampleSet s({FeatureId::friend_count});
  for (double x : {-3.0, -2.0, -1.0}) s.push_back(std::vector<double>{x}, UserId("a"));
  for (double x : {1.0, 2.0, 3.0}) s.push_back(std::vector<double>{x}, UserId("b"));
  const ClassList classes{UserId("a"), UserId("b")};
  auto objective = [&](double scale) {
    WeightMatrix w(2, 2);
    w(0, 0) = -scale;
    w(1, 0) = scale;
    return mlr_objective_and_gradient(w, s, classes, 0.0).value;
  };
  double previous = 1e300;
  for (double scale : {0.25, 0.5, 1.0, 2.0, 4.0, 8.0}) {
    const double f = objective(scale);
    EXPECT_GE(f, 0.0);
    EXPECT_LT(f, previous);
    previous = f;
  }
  EXPECT_LT(objective(1000.0), 1e-12);
}

TEST(Mlr, SeparableOneDimensionalTrainingAccuracy) {
  Rng rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    SampleSet s({FeatureId::friend_count});
    std::uniform_real_distribution<double> a(0, 10), b(14, 30);
    for (int i = 0; i < 25; ++i) s.push_back(std::vector<double>{a(rng)}, UserId("a"));
    for (int i = 0; i < 25; ++i) s.push_back(std::vector<double>{b(rng)}, UserId("b"));
    // Threshold oracle: some cut separates the classes.
    double max_a = -1e300, min_b = 1e300;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s.label(i) == UserId("a")) max_a = std::max(max_a, s.row(i)[0]);
      else min_b = std::min(min_b, s.row(i)[0]);
    }
    ASSERT_LT(max_a, min_b);
    HyperParams p;
    p.algorithm = Algorithm::mlr;
    p.mlr_max_iter = 500;
    const auto m = train(s, p);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < s.size(); ++i) hits += classify(m.predict(s.row(i))) == s.label(i);
    EXPECT_EQ(hits, s.size());
  }
}

TEST(Lbfgs, MinimisesRosenbrock) {
  auto f = [](std::span<const double> x, std::span<double> g) {
    const double a = 1 - x[0], b = x[1] - x[0] * x[0];
    g[0] = -2 * a - 400 * x[0] * b;
    g[1] = 200 * b;
    return a * a + 100 * b * b;
  };
  LbfgsOptions opt;
  opt.max_iterations = 500;
  opt.gradient_tolerance = 1e-8;
  const auto r = lbfgs_minimize(f, {-1.2, 1.0}, opt);
  EXPECT_TRUE(r.converged) << r.message;
  EXPECT_NEAR(r.x[0], 1.0, 1e-6);
  EXPECT_NEAR(r.x[1], 1.0, 1e-6);
}

TEST(Lbfgs, IterationLimitReportedNotHidden) {
  Rng rng(2);
  const auto in = random_instance(rng, 50, 5, 3, 50);
  HyperParams p;
  p.algorithm = Algorithm::mlr;
  p.mlr_max_iter = 1;
  p.mlr_tol = 1e-12;
  const auto m = train(to_samples(in), p);
  EXPECT_FALSE(m.converged());
  EXPECT_EQ(m.iterations(), 1u);
}

// ---------------------------------------------------------------------------
// Uniform interface

HyperParams with(Algorithm a) {
  HyperParams p;
  p.algorithm = a;
  return p;
}

TEST(Classifier, SingleClassPredictsCertainty) {
  SampleSet s({FeatureId::friend_count, FeatureId::verified});
  for (int i = 0; i < 5; ++i) s.push_back(std::vector<double>{double(i), 0}, UserId("only"));
  for (auto a : {Algorithm::knn, Algorithm::rf, Algorithm::mlr}) {
    const auto m = train(s, with(a));
    const auto p = m.predict(std::vector<double>{100, 1});
    EXPECT_EQ(p.probabilities(), std::vector<double>{1.0});
    EXPECT_EQ(classify(p), UserId("only"));
  }
}

TEST(Classifier, ProbabilitiesFormADistribution) {
  Rng rng(17);
  for (int trial = 0; trial < 40; ++trial) {
    const auto in = random_instance(rng, 50, 5, 3, 30);
    const auto s = to_samples(in);
    for (auto a : {Algorithm::knn, Algorithm::rf, Algorithm::mlr}) {
      auto p = with(a);
      p.knn_k = 3;
      const auto m = train(s, p);
      EXPECT_EQ(m.classes().size(), in.classes);
      for (int q = 0; q < 5; ++q) {
        const auto pv = m.predict(random_query(rng, in.dims));
        double sum = 0;
        for (double v : pv.probabilities()) {
          EXPECT_GE(v, 0.0);
          sum += v;
        }
        EXPECT_NEAR(sum, 1.0, 1e-9);
      }
    }
  }
}

TEST(Classifier, CombinationMismatchIsShapeError) {
  SampleSet s({FeatureId::friend_count});
  s.push_back(std::vector<double>{1}, UserId("a"));
  const auto m = train(s, {});
  EXPECT_THROW(predict_proba(m, FeatureVector{{FeatureId::follower_count}, {1}}), ShapeError);
  EXPECT_THROW(m.predict(std::vector<double>{1, 2}), ShapeError);
  EXPECT_EQ(classify(m, FeatureVector{{FeatureId::friend_count}, {9}}), UserId("a"));
}

TEST(Classifier, SerializationPreservesPredictionsExactly) {
  Rng rng(23);
  const auto dir = std::filesystem::temp_directory_path() / "metaid_model_test";
  std::filesystem::create_directories(dir);
  for (auto a : {Algorithm::knn, Algorithm::rf, Algorithm::mlr}) {
    const auto in = random_instance(rng, 50, 5, 3, 40);
    auto p = with(a);
    p.standardize = a == Algorithm::mlr;
    const auto m = train(to_samples(in), p);
    const auto path = (dir / fmt::format("{}.json", algorithm_name(a))).string();
    save_model(m, path);
    const auto back = load_model(path);
    EXPECT_EQ(back.classes(), m.classes());
    EXPECT_EQ(back.params(), m.params());
    for (int q = 0; q < 50; ++q) {
      const auto x = random_query(rng, in.dims);
      EXPECT_EQ(back.predict_row(x), m.predict_row(x));
    }
  }
  EXPECT_THROW(model_from_json(nlohmann::json{{"format", "other"}}), FormatError);
}

// ---------------------------------------------------------------------------
// PredictionVector, classify, top-k, entropy

PredictionVector pv(std::vector<std::string> names, std::vector<double> p) {
  ClassList c;
  for (auto& n : names) c.emplace_back(n);
  return {c, p};
}

TEST(Prediction, ArgmaxAndTieBreak) {
  EXPECT_EQ(classify(pv({"a", "b", "c"}, {0.5, 0.3, 0.2})), UserId("a"));
  EXPECT_EQ(classify(pv({"b", "a"}, {0.5, 0.5})), UserId("a"));
}

TEST(Prediction, TopK) {
  const auto p = pv({"a", "b", "c"}, {0.5, 0.3, 0.2});
  EXPECT_FALSE(top_k_hit(p, UserId("b"), 1));
  EXPECT_TRUE(top_k_hit(p, UserId("b"), 2));
  EXPECT_TRUE(top_k_hit(p, UserId("a"), 1));
  for (auto t : {"a", "b", "c"}) EXPECT_TRUE(top_k_hit(p, UserId(t), 3));
  EXPECT_THROW(top_k_hit(p, UserId("z"), 1), UnknownClassError);
  EXPECT_THROW(top_k_hit(p, UserId("a"), 4), DomainError);
  EXPECT_THROW(top_k_hit(p, UserId("a"), 0), DomainError);
  // Ties resolve before the cut: b outranks c at equal probability.
  const auto tie = pv({"c", "b", "a"}, {0.25, 0.25, 0.5});
  EXPECT_TRUE(top_k_hit(tie, UserId("b"), 2));
  EXPECT_FALSE(top_k_hit(tie, UserId("c"), 2));
}

TEST(Prediction, ArgmaxInvariantUnderMonotoneRescaling) {
  Rng rng(6);
  std::uniform_int_distribution<int> v(0, 4);
  for (int t = 0; t < 500; ++t) {
    std::vector<double> p(6);
    for (auto& x : p) x = v(rng) / 4.0;
    std::vector<double> q(p);
    for (auto& x : q) x = std::sqrt(x) * 3 + 1;
    EXPECT_EQ(classify(pv({"f", "e", "d", "c", "b", "a"}, p)), classify(pv({"f", "e", "d", "c", "b", "a"}, q)));
  }
}

TEST(Entropy, NodeEntropyExamples) {
  auto ids = [](std::initializer_list<const char*> xs) {
    std::vector<UserId> v;
    for (auto x : xs) v.emplace_back(x);
    return v;
  };
  EXPECT_DOUBLE_EQ(node_entropy(ids({"A", "A", "B", "B"})), 1.0);
  EXPECT_DOUBLE_EQ(node_entropy(ids({"A", "A", "A"})), 0.0);
  EXPECT_DOUBLE_EQ(node_entropy(ids({"A", "B", "C", "D"})), 2.0);
  EXPECT_THROW(node_entropy(std::vector<UserId>{}), DomainError);
}

TEST(Params, ValidationAndJsonRoundTrip) {
  HyperParams p;
  p.knn_k = 0;
  EXPECT_THROW(validate_params(p), DomainError);
  p = {};
  p.algorithm = Algorithm::rf;
  p.rf_trees = 33;
  p.seed = 123456789012345ull;
  EXPECT_EQ(params_from_json(to_json(p)), p);
}

}  // namespace
}  // namespace metaid
