#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "metaid/metaid.hpp"

namespace metaid::testing {

inline Instant at(const char* text) { return *parse_instant(text); }

inline TweetRecord record(const std::string& user, std::size_t n = 0, const char* act = "2012-05-06T07:08:09Z",
                          const char* posted = "2015-10-01T12:00:00Z") {
  TweetRecord r;
  r.user = UserId(user);
  r.tweet_id = fmt::format("{}-{}", user, n);
  r.posted_at = at(posted);
  r.account_created_at = at(act);
  r.favourites_count = 10;
  r.follower_count = 20;
  r.friend_count = 30;
  r.listed_count = 4;
  r.statuses_count = 500 + static_cast<std::int64_t>(n);
  return r;
}

// `counts[i]` records for user "u<i>".
inline Dataset users_with_counts(const std::vector<std::size_t>& counts) {
  std::vector<TweetRecord> out;
  for (std::size_t u = 0; u < counts.size(); ++u)
    for (std::size_t t = 0; t < counts[u]; ++t) out.push_back(record(fmt::format("u{}", u), t));
  return Dataset(std::move(out));
}

inline Dataset population(std::size_t users, std::size_t tweets, double sep, std::uint64_t seed,
                          double walk = 1.0) {
  PopulationSpec s;
  s.users = users;
  s.tweets_per_user = tweets;
  s.separability = sep;
  s.counter_walk_step = walk;
  s.seed = seed;
  return generate_population(s);
}

// Small random labelled matrix with integer-valued features so ties occur.
struct Instance {
  std::size_t dims;
  std::size_t classes;
  std::vector<double> rows;
  std::vector<std::uint32_t> labels;

  std::size_t size() const { return labels.size(); }
};

inline Instance random_instance(Rng& rng, std::size_t max_n = 50, std::size_t max_classes = 5,
                                std::size_t max_dims = 3, int value_range = 6) {
  Instance in;
  in.dims = std::uniform_int_distribution<std::size_t>(1, max_dims)(rng);
  in.classes = std::uniform_int_distribution<std::size_t>(1, max_classes)(rng);
  const auto n = std::uniform_int_distribution<std::size_t>(in.classes, max_n)(rng);
  std::uniform_int_distribution<int> value(0, value_range);
  for (std::size_t i = 0; i < n * in.dims; ++i) in.rows.push_back(value(rng));
  for (std::size_t i = 0; i < n; ++i)
    in.labels.push_back(static_cast<std::uint32_t>(i < in.classes ? i : std::uniform_int_distribution<std::size_t>(0, in.classes - 1)(rng)));
  return in;
}

inline SampleSet to_samples(const Instance& in) {
  const auto all = all_features();
  Combination c(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(in.dims));
  SampleSet s(c);
  for (std::size_t i = 0; i < in.size(); ++i)
    s.push_back(std::span<const double>(in.rows.data() + i * in.dims, in.dims), UserId(fmt::format("c{}", in.labels[i])));
  return s;
}

// CSV text without its wall_time_* columns, which are the only
// non-deterministic outputs.
inline std::string without_timing_columns(const std::string& csv) {
  std::vector<bool> keep;
  std::string out, line;
  std::istringstream in(csv);
  bool header = true;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream row(line);
    while (std::getline(row, cell, ',')) cells.push_back(cell);
    if (header) {
      for (const auto& c : cells) keep.push_back(c.rfind("wall_time", 0) != 0);
      header = false;
    }
    bool first = true;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i < keep.size() && !keep[i]) continue;
      out += (first ? "" : ",") + cells[i];
      first = false;
    }
    out += '\n';
  }
  return out;
}

}  // namespace metaid::testing
