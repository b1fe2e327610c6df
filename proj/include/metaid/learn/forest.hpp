#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "metaid/error.hpp"
#include "metaid/parallel.hpp"
#include "metaid/random.hpp"

namespace metaid {

struct TreeNode {
  std::int32_t feature = -1;  // -1 marks a leaf
  double threshold = 0.0;     // go left when x[feature] <= threshold
  std::int32_t left = -1;
  std::int32_t right = -1;
  std::uint32_t leaf_begin = 0;  // range into the tree's leaf entries
  std::uint32_t leaf_end = 0;

  bool is_leaf() const noexcept { return feature < 0; }
};

struct LeafEntry {
  std::uint32_t cls;
  double probability;
};

// A classification tree grown to purity with information-gain splits.
class DecisionTree {
 public:
  DecisionTree() = default;
  DecisionTree(std::vector<TreeNode> nodes, std::vector<LeafEntry> leaves)
      : nodes_(std::move(nodes)), leaves_(std::move(leaves)) {}

  const std::vector<TreeNode>& nodes() const noexcept { return nodes_; }
  const std::vector<LeafEntry>& leaf_entries() const noexcept { return leaves_; }

  std::span<const LeafEntry> leaf(std::size_t node) const {
    const auto& n = nodes_[node];
    return {leaves_.data() + n.leaf_begin, n.leaf_end - n.leaf_begin};
  }

  std::size_t leaf_of(std::span<const double> x) const {
    std::size_t i = 0;
    while (!nodes_[i].is_leaf()) {
      const auto& n = nodes_[i];
      i = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
    }
    return i;
  }

  // Grows a tree on `sample` (row indices, repeats allowed).
  static DecisionTree grow(std::span<const double> rows, std::size_t dims,
                           std::span<const std::uint32_t> labels, std::size_t num_classes,
                           std::vector<std::uint32_t> sample, std::size_t max_features, Rng& rng) {
    Grower g(rows, dims, labels, num_classes, sample.size(), max_features, rng);
    g.idx = std::move(sample);
    g.run();
    return DecisionTree(std::move(g.nodes), std::move(g.leaves));
  }

 private:
  struct Grower {
    std::span<const double> rows;
    std::size_t dims;
    std::span<const std::uint32_t> labels;
    std::size_t max_features;
    Rng& rng;

    std::vector<std::uint32_t> idx;
    std::vector<TreeNode> nodes;
    std::vector<LeafEntry> leaves;

    std::vector<double> xlogx;  // c*ln(c) for c in [0, n]
    std::vector<std::uint32_t> parent_counts, left_counts;
    std::vector<std::uint32_t> touched;
    std::vector<std::pair<double, std::uint32_t>> column;
    std::vector<std::size_t> features;

    Grower(std::span<const double> r, std::size_t d, std::span<const std::uint32_t> l,
           std::size_t num_classes, std::size_t n, std::size_t mf, Rng& g)
        : rows(r), dims(d), labels(l), max_features(mf), rng(g), xlogx(n + 1, 0.0),
          parent_counts(num_classes, 0), left_counts(num_classes, 0), features(d) {
      for (std::size_t c = 1; c <= n; ++c) xlogx[c] = static_cast<double>(c) * std::log(static_cast<double>(c));
      std::iota(features.begin(), features.end(), std::size_t{0});
    }

    double value(std::uint32_t row, std::size_t f) const { return rows[std::size_t{row} * dims + f]; }

    struct Split {
      bool found = false;
      std::size_t feature = 0;
      double threshold = 0.0;
      double impurity = 0.0;  // sum over children of m*H in nats
    };

    void run() {
      struct Work {
        std::int32_t node;
        std::uint32_t begin, end;
      };
      std::vector<Work> stack;
      nodes.push_back({});
      stack.push_back({0, 0, static_cast<std::uint32_t>(idx.size())});
      while (!stack.empty()) {
        const auto w = stack.back();
        stack.pop_back();

        touched.clear();
        for (auto i = w.begin; i < w.end; ++i) {
          const auto c = labels[idx[i]];
          if (parent_counts[c]++ == 0) touched.push_back(c);
        }
        std::sort(touched.begin(), touched.end());
        const auto parent_touched = touched;

        Split best;
        if (parent_touched.size() > 1) best = find_split(w.begin, w.end, parent_touched);

        if (!best.found) {
          auto& n = nodes[w.node];
          n.leaf_begin = static_cast<std::uint32_t>(leaves.size());
          const double m = w.end - w.begin;
          for (auto c : parent_touched) leaves.push_back({c, parent_counts[c] / m});
          n.leaf_end = static_cast<std::uint32_t>(leaves.size());
        }
        for (auto c : parent_touched) parent_counts[c] = 0;
        if (!best.found) continue;

        const auto mid = static_cast<std::uint32_t>(
            std::stable_partition(idx.begin() + w.begin, idx.begin() + w.end,
                                  [&](std::uint32_t r) { return value(r, best.feature) <= best.threshold; }) -
            idx.begin());
        const auto left = static_cast<std::int32_t>(nodes.size());
        nodes.push_back({});
        nodes.push_back({});
        auto& n = nodes[w.node];
        n.feature = static_cast<std::int32_t>(best.feature);
        n.threshold = best.threshold;
        n.left = left;
        n.right = left + 1;
        stack.push_back({left + 1, mid, w.end});
        stack.push_back({left, w.begin, mid});
      }
    }

    // Features are tried in a random order; the search stops after
    // max_features candidates unless none of them admits a split yet.
    Split find_split(std::uint32_t begin, std::uint32_t end, const std::vector<std::uint32_t>& present) {
      for (std::size_t i = 0; i + 1 < features.size(); ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, features.size() - 1);
        std::swap(features[i], features[pick(rng)]);
      }
      double parent_s = 0.0;
      for (auto c : present) parent_s += xlogx[parent_counts[c]];
      const std::uint32_t m = end - begin;

      Split best;
      for (std::size_t fi = 0; fi < features.size(); ++fi) {
        if (fi >= max_features && best.found) break;
        const auto f = features[fi];
        column.clear();
        for (auto i = begin; i < end; ++i) column.emplace_back(value(idx[i], f), labels[idx[i]]);
        std::sort(column.begin(), column.end());
        if (column.front().first == column.back().first) continue;

        double s_left = 0.0, s_right = parent_s;
        for (std::uint32_t i = 0; i + 1 < m; ++i) {
          const auto c = column[i].second;
          const auto cl = left_counts[c]++;
          const auto cr = parent_counts[c] - cl;
          s_left += xlogx[cl + 1] - xlogx[cl];
          s_right += xlogx[cr - 1] - xlogx[cr];
          if (column[i].first == column[i + 1].first) continue;
          const auto ml = i + 1, mr = m - ml;
          const double impurity = (xlogx[ml] - s_left) + (xlogx[mr] - s_right);
          if (!best.found || impurity < best.impurity) {
            const double lo = column[i].first, hi = column[i + 1].first;
            double t = lo + (hi - lo) / 2.0;
            if (!(t >= lo && t < hi)) t = lo;
            best = {true, f, t, impurity};
          }
        }
        for (auto c : present) left_counts[c] = 0;
      }
      return best;
    }
  };

  std::vector<TreeNode> nodes_;
  std::vector<LeafEntry> leaves_;
};

class RandomForest {
 public:
  RandomForest() = default;
  RandomForest(std::vector<DecisionTree> trees, std::size_t num_classes)
      : trees_(std::move(trees)), num_classes_(num_classes) {}

  // Each tree sees a bootstrap resample and ceil(sqrt(dims)) candidate
  // features per split; tree t is seeded from (seed, t).
  static RandomForest train(std::span<const double> rows, std::size_t dims,
                            std::span<const std::uint32_t> labels, std::size_t num_classes,
                            std::size_t num_trees, std::uint64_t seed) {
    if (dims == 0 || rows.size() != labels.size() * dims) throw ShapeError("RF training matrix shape mismatch");
    if (labels.empty()) throw DomainError("RF needs at least one training sample");
    const auto max_features =
        static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(dims))));
    std::vector<DecisionTree> trees(num_trees);
    parallel_for(num_trees, [&](std::size_t t) {
      auto rng = make_rng(seed, {t});
      std::uniform_int_distribution<std::uint32_t> draw(0, static_cast<std::uint32_t>(labels.size() - 1));
      std::vector<std::uint32_t> sample(labels.size());
      for (auto& s : sample) s = draw(rng);
      trees[t] = DecisionTree::grow(rows, dims, labels, num_classes, std::move(sample), max_features, rng);
    });
    return RandomForest(std::move(trees), num_classes);
  }

  const std::vector<DecisionTree>& trees() const noexcept { return trees_; }
  std::size_t num_classes() const noexcept { return num_classes_; }

  // Mean of per-tree leaf class frequencies, accumulated in tree order.
  std::vector<double> predict(std::span<const double> x) const {
    // Sum then divide once so unanimous pure leaves give exactly 1.
    std::vector<double> probs(num_classes_, 0.0);
    for (const auto& t : trees_)
      for (const auto& e : t.leaf(t.leaf_of(x))) probs[e.cls] += e.probability;
    const double n = static_cast<double>(trees_.size());
    for (auto& p : probs) p /= n;
    return probs;
  }

 private:
  std::vector<DecisionTree> trees_;
  std::size_t num_classes_ = 0;
};

}  // namespace metaid
