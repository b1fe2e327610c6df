#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "metaid/error.hpp"
#include "metaid/model.hpp"
#include "metaid/parallel.hpp"
#include "metaid/random.hpp"

namespace metaid {

// Parameters of a synthetic user population. Separability is the mean
// spacing of adjacent per-user latent counter means in units of the
// intra-user noise scale `noise_sigma`.
struct PopulationSpec {
  std::size_t users = 100;
  std::size_t tweets_per_user = 200;
  double separability = 5.0;
  Instant epoch_start = *parse_instant("2006-03-21T00:00:00Z");
  Instant epoch_end = *parse_instant("2015-10-01T00:00:00Z");
  double counter_walk_step = 1.0;
  double geo_prob = 0.5;
  double verified_prob = 0.016;
  double noise_sigma = 5.0;
  // Dirichlet concentration of each user's hour-of-day preference.
  double hour_concentration = 1.0;
  // Posts fall in [epoch_end, epoch_end + collection_days).
  int collection_days = 123;
  std::uint64_t seed = 0;
};

inline void validate_spec(const PopulationSpec& s) {
  if (s.users < 1) throw DomainError("users must be >= 1");
  if (s.tweets_per_user < 1) throw DomainError("tweets_per_user must be >= 1");
  if (!(s.epoch_start < s.epoch_end)) throw DomainError("epoch_range start must precede end");
  if (!(s.separability >= 0.0)) throw DomainError("separability must be >= 0");
  if (!(s.counter_walk_step >= 0.0)) throw DomainError("counter_walk_step must be >= 0");
  if (!(s.noise_sigma >= 0.0)) throw DomainError("noise_sigma must be >= 0");
  if (!(s.geo_prob >= 0.0 && s.geo_prob <= 1.0)) throw DomainError("geo_prob must lie in [0,1]");
  if (!(s.verified_prob >= 0.0 && s.verified_prob <= 1.0))
    throw DomainError("verified_prob must lie in [0,1]");
  if (!(s.hour_concentration > 0.0)) throw DomainError("hour_concentration must be > 0");
  if (s.collection_days < 1) throw DomainError("collection_days must be >= 1");
}

namespace detail {

// Offsets keep typical counters well clear of the zero clamp.
inline constexpr std::array<double, 5> kCounterBase = {500.0, 800.0, 400.0, 50.0, 2000.0};

inline std::string padded_id(std::size_t i, std::size_t width) {
  return fmt::format("{:0{}}", i, width);
}

inline std::vector<TweetRecord> generate_user(const PopulationSpec& s, std::size_t user_index,
                                              Instant act, std::size_t id_width) {
  auto rng = make_rng(s.seed, {1, user_index});
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);

  const double spread = static_cast<double>(s.users) * s.separability * s.noise_sigma;
  std::array<double, 5> mean{};
  for (std::size_t c = 0; c < mean.size(); ++c) mean[c] = kCounterBase[c] + spread * unit(rng);

  const bool geo = unit(rng) < s.geo_prob;
  const bool verified = unit(rng) < s.verified_prob;

  std::array<double, 24> hour_weight{};
  std::gamma_distribution<double> gamma(s.hour_concentration, 1.0);
  for (auto& w : hour_weight) w = gamma(rng);
  if (std::all_of(hour_weight.begin(), hour_weight.end(), [](double w) { return w <= 0.0; }))
    hour_weight.fill(1.0);
  std::discrete_distribution<int> hour_of(hour_weight.begin(), hour_weight.end());

  const std::size_t n = s.tweets_per_user;
  std::vector<std::int64_t> post_seconds(n);
  std::uniform_int_distribution<int> day_of(0, s.collection_days - 1);
  std::uniform_int_distribution<int> second_of_hour(0, 3599);
  for (auto& p : post_seconds)
    p = static_cast<std::int64_t>(day_of(rng)) * 86400 + hour_of(rng) * 3600 + second_of_hour(rng);
  std::sort(post_seconds.begin(), post_seconds.end());
  for (std::size_t t = 1; t < n; ++t)
    if (post_seconds[t] <= post_seconds[t - 1]) post_seconds[t] = post_seconds[t - 1] + 1;

  const double bound = 3.0 * s.noise_sigma;
  std::array<double, 4> drift{};
  auto draw_counter = [&](std::size_t c) {
    drift[c] = std::clamp(drift[c] + s.counter_walk_step * noise(rng), -bound, bound);
    const double v = std::round(mean[c] + drift[c] + s.noise_sigma * noise(rng));
    return static_cast<std::int64_t>(std::max(0.0, v));
  };

  std::int64_t statuses =
      static_cast<std::int64_t>(std::max(0.0, std::round(mean[4] + s.noise_sigma * noise(rng))));

  const UserId user("u" + padded_id(user_index, id_width));
  std::vector<TweetRecord> out(n);
  for (std::size_t t = 0; t < n; ++t) {
    auto& r = out[t];
    r.user = user;
    r.tweet_id = fmt::format("{}-{}", user.str(), padded_id(t, std::to_string(n - 1).size()));
    r.posted_at = s.epoch_end + std::chrono::seconds(post_seconds[t]);
    r.account_created_at = act;
    r.favourites_count = draw_counter(0);
    r.follower_count = draw_counter(1);
    r.friend_count = draw_counter(2);
    r.listed_count = draw_counter(3);
    if (t > 0)
      statuses += 1 + static_cast<std::int64_t>(std::round(std::abs(s.counter_walk_step * noise(rng))));
    r.statuses_count = statuses;
    r.geo_enabled = geo;
    r.verified = verified;
  }
  return out;
}

}  // namespace detail

// Generates `users` accounts of `tweets_per_user` records each. Users are
// generated independently from (seed, user index), so output does not
// depend on the worker count.
inline Dataset generate_population(const PopulationSpec& spec) {
  validate_spec(spec);

  // ACTs are drawn sequentially so collisions can be redrawn.
  const auto range = (spec.epoch_end - spec.epoch_start).count();
  if (static_cast<std::uint64_t>(range) < spec.users)
    throw DomainError("epoch_range too short for distinct account creation times");
  auto act_rng = make_rng(spec.seed, {0});
  std::uniform_int_distribution<std::int64_t> offset(0, range - 1);
  std::set<std::int64_t> taken;
  std::vector<Instant> acts(spec.users);
  for (auto& act : acts) {
    std::int64_t o;
    do o = offset(act_rng);
    while (!taken.insert(o).second);
    act = spec.epoch_start + std::chrono::seconds(o);
  }

  const std::size_t id_width = std::to_string(spec.users - 1).size();
  std::vector<std::vector<TweetRecord>> per_user(spec.users);
  parallel_for(spec.users, [&](std::size_t u) {
    per_user[u] = detail::generate_user(spec, u, acts[u], id_width);
  });

  std::vector<TweetRecord> records;
  records.reserve(spec.users * spec.tweets_per_user);
  for (auto& v : per_user)
    for (auto& r : v) records.push_back(std::move(r));
  return Dataset(std::move(records));
}

}  // namespace metaid
