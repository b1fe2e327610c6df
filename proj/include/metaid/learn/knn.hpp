#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "metaid/error.hpp"

namespace metaid {

// Exact k-nearest-neighbour search under squared Euclidean distance.
//
// Identical training points are merged into one site carrying per-class
// multiplicities; a k-d tree over the sites prunes the scan. Neighbours are
// ordered by (distance, class index) and the first k samples (counting
// multiplicity) vote, so ties always resolve toward the smaller class index.
class KnnIndex {
 public:
  struct Entry {
    std::uint32_t cls;
    std::uint32_t count;
  };

  struct Node {
    std::uint32_t begin, end;  // range into order_
    std::int32_t left = -1, right = -1;
  };

  KnnIndex() = default;

  KnnIndex(std::size_t dims, std::span<const double> rows, std::span<const std::uint32_t> labels,
           std::size_t num_classes, std::size_t k)
      : dims_(dims), num_classes_(num_classes), k_(k) {
    if (dims == 0 || rows.size() != labels.size() * dims)
      throw ShapeError("kNN training matrix shape mismatch");
    if (labels.empty()) throw DomainError("kNN needs at least one training sample");
    build_sites(rows, labels);
    build_tree();
  }

  // Rebuilds from serialized sites.
  KnnIndex(std::size_t dims, std::size_t num_classes, std::size_t k, std::vector<double> sites,
           std::vector<std::uint32_t> entry_offsets, std::vector<Entry> entries)
      : dims_(dims), num_classes_(num_classes), k_(k), sites_(std::move(sites)),
        entry_offsets_(std::move(entry_offsets)), entries_(std::move(entries)) {
    if (dims_ == 0 || sites_.size() % dims_ != 0 || entry_offsets_.size() != site_count() + 1 ||
        entry_offsets_.back() != entries_.size())
      throw ShapeError("inconsistent serialized kNN index");
    for (const auto& e : entries_) {
      if (e.cls >= num_classes_) throw ShapeError("serialized kNN entry class out of range");
      total_ += e.count;
    }
    build_tree();
  }

  std::size_t dims() const noexcept { return dims_; }
  std::size_t k() const noexcept { return k_; }
  std::size_t num_classes() const noexcept { return num_classes_; }
  std::size_t site_count() const noexcept { return dims_ ? sites_.size() / dims_ : 0; }
  std::size_t sample_count() const noexcept { return total_; }
  const std::vector<double>& sites() const noexcept { return sites_; }
  const std::vector<std::uint32_t>& entry_offsets() const noexcept { return entry_offsets_; }
  const std::vector<Entry>& entries() const noexcept { return entries_; }

  // Class-vote probabilities for one query.
  std::vector<double> predict(std::span<const double> x) const {
    if (x.size() != dims_) throw ShapeError("query dimension mismatch");
    const std::size_t k = std::min<std::size_t>(k_, total_);
    Search s{x, k, {}, 0};
    if (!nodes_.empty()) visit(0, s);
    std::vector<std::size_t> votes(num_classes_, 0);
    std::size_t remaining = k;
    for (const auto& c : s.best) {
      const auto take = std::min<std::size_t>(remaining, c.count);
      votes[c.cls] += take;
      remaining -= take;
      if (remaining == 0) break;
    }
    std::vector<double> probs(num_classes_);
    for (std::size_t c = 0; c < num_classes_; ++c)
      probs[c] = static_cast<double>(votes[c]) / static_cast<double>(k);
    return probs;
  }

 private:
  static constexpr std::uint32_t kLeafSize = 8;

  struct Candidate {
    double dist;
    std::uint32_t cls;
    std::uint32_t count;
    bool before(double d, std::uint32_t c) const { return dist < d || (dist == d && cls < c); }
  };

  struct Search {
    std::span<const double> x;
    std::size_t k;
    std::vector<Candidate> best;  // ascending by (dist, cls)
    std::size_t total;

    double bound() const {
      return total >= k ? best.back().dist : std::numeric_limits<double>::infinity();
    }

    void offer(double d, std::uint32_t cls, std::uint32_t count) {
      if (total >= k && best.back().before(d, cls)) return;
      auto it = std::find_if(best.begin(), best.end(),
                             [&](const Candidate& c) { return !c.before(d, cls); });
      best.insert(it, {d, cls, count});
      total += count;
      while (total - best.back().count >= k) {
        total -= best.back().count;
        best.pop_back();
      }
    }
  };

  std::span<const double> site(std::size_t i) const { return {sites_.data() + i * dims_, dims_}; }

  double distance(std::span<const double> x, std::size_t s) const {
    const double* p = sites_.data() + s * dims_;
    double d = 0.0;
    for (std::size_t j = 0; j < dims_; ++j) {
      const double t = x[j] - p[j];
      d += t * t;
    }
    return d;
  }

  double box_distance(std::span<const double> x, std::size_t node) const {
    const double* lo = box_.data() + node * 2 * dims_;
    const double* hi = lo + dims_;
    double d = 0.0;
    for (std::size_t j = 0; j < dims_; ++j) {
      double t = 0.0;
      if (x[j] < lo[j]) t = lo[j] - x[j];
      else if (x[j] > hi[j]) t = x[j] - hi[j];
      d += t * t;
    }
    return d;
  }

  void build_sites(std::span<const double> rows, std::span<const std::uint32_t> labels) {
    const std::size_t n = labels.size();
    std::vector<std::uint32_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0u);
    auto row = [&](std::uint32_t i) { return rows.subspan(std::size_t{i} * dims_, dims_); };
    std::sort(perm.begin(), perm.end(), [&](std::uint32_t a, std::uint32_t b) {
      const auto ra = row(a), rb = row(b);
      for (std::size_t j = 0; j < dims_; ++j)
        if (ra[j] != rb[j]) return ra[j] < rb[j];
      return labels[a] < labels[b];
    });
    entry_offsets_.push_back(0);
    for (std::size_t i = 0; i < n;) {
      std::size_t j = i;
      const auto ri = row(perm[i]);
      while (j < n && std::equal(ri.begin(), ri.end(), row(perm[j]).begin())) ++j;
      sites_.insert(sites_.end(), ri.begin(), ri.end());
      for (std::size_t a = i; a < j;) {
        std::size_t b = a;
        while (b < j && labels[perm[b]] == labels[perm[a]]) ++b;
        entries_.push_back({labels[perm[a]], static_cast<std::uint32_t>(b - a)});
        a = b;
      }
      entry_offsets_.push_back(static_cast<std::uint32_t>(entries_.size()));
      i = j;
    }
    total_ = n;
  }

  void build_tree() {
    const std::size_t n = site_count();
    order_.resize(n);
    std::iota(order_.begin(), order_.end(), 0u);
    nodes_.clear();
    box_.clear();
    if (n > 0) build_node(0, static_cast<std::uint32_t>(n));
  }

  std::int32_t build_node(std::uint32_t begin, std::uint32_t end) {
    const auto id = static_cast<std::int32_t>(nodes_.size());
    nodes_.push_back({begin, end});
    box_.resize(box_.size() + 2 * dims_);
    double* lo = box_.data() + static_cast<std::size_t>(id) * 2 * dims_;
    double* hi = lo + dims_;
    std::fill(lo, lo + dims_, std::numeric_limits<double>::infinity());
    std::fill(hi, hi + dims_, -std::numeric_limits<double>::infinity());
    for (auto i = begin; i < end; ++i) {
      const auto p = site(order_[i]);
      for (std::size_t j = 0; j < dims_; ++j) {
        lo[j] = std::min(lo[j], p[j]);
        hi[j] = std::max(hi[j], p[j]);
      }
    }
    if (end - begin <= kLeafSize) return id;

    std::size_t axis = 0;
    double spread = -1.0;
    for (std::size_t j = 0; j < dims_; ++j)
      if (hi[j] - lo[j] > spread) {
        spread = hi[j] - lo[j];
        axis = j;
      }
    const auto mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](std::uint32_t a, std::uint32_t b) {
                       const double va = sites_[a * dims_ + axis], vb = sites_[b * dims_ + axis];
                       return va < vb || (va == vb && a < b);
                     });
    const auto left = build_node(begin, mid);
    const auto right = build_node(mid, end);
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
  }

  void visit(std::int32_t id, Search& s) const {
    const auto& node = nodes_[id];
    if (node.left < 0) {
      for (auto i = node.begin; i < node.end; ++i) {
        const auto site_id = order_[i];
        const double d = distance(s.x, site_id);
        if (d > s.bound()) continue;
        for (auto e = entry_offsets_[site_id]; e < entry_offsets_[site_id + 1]; ++e)
          s.offer(d, entries_[e].cls, entries_[e].count);
      }
      return;
    }
    const double dl = box_distance(s.x, node.left);
    const double dr = box_distance(s.x, node.right);
    const auto first = dl <= dr ? node.left : node.right;
    const auto second = dl <= dr ? node.right : node.left;
    if (std::min(dl, dr) <= s.bound()) visit(first, s);
    if (std::max(dl, dr) <= s.bound()) visit(second, s);
  }

  std::size_t dims_ = 0;
  std::size_t num_classes_ = 0;
  std::size_t k_ = 1;
  std::size_t total_ = 0;
  std::vector<double> sites_;
  std::vector<std::uint32_t> entry_offsets_;
  std::vector<Entry> entries_;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
  std::vector<double> box_;
};

}  // namespace metaid
