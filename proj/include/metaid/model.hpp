#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <fmt/format.h>

#include "metaid/error.hpp"

namespace metaid {

// ---------------------------------------------------------------------------
// Time

using Instant = std::chrono::sys_seconds;

struct CalendarFields {
  int year;
  int month;
  int day;
  int hour;
  int minute;
  int second;
};

inline CalendarFields decompose(Instant t) {
  using namespace std::chrono;
  const auto day_start = floor<days>(t);
  const year_month_day ymd{day_start};
  const auto secs = (t - day_start).count();
  return {static_cast<int>(ymd.year()), static_cast<int>(static_cast<unsigned>(ymd.month())),
          static_cast<int>(static_cast<unsigned>(ymd.day())), static_cast<int>(secs / 3600),
          static_cast<int>((secs / 60) % 60), static_cast<int>(secs % 60)};
}

// Returns nullopt when the fields do not name a valid UTC instant.
inline std::optional<Instant> compose(const CalendarFields& f) {
  using namespace std::chrono;
  const year_month_day ymd{year{f.year}, month{static_cast<unsigned>(f.month)},
                           day{static_cast<unsigned>(f.day)}};
  if (!ymd.ok() || f.hour < 0 || f.hour > 23 || f.minute < 0 || f.minute > 59 || f.second < 0 ||
      f.second > 59)
    return std::nullopt;
  return sys_days{ymd} + hours{f.hour} + minutes{f.minute} + seconds{f.second};
}

// Parses exactly "YYYY-MM-DDThh:mm:ssZ".
inline std::optional<Instant> parse_instant(std::string_view s) {
  if (s.size() != 20 || s[4] != '-' || s[7] != '-' || s[10] != 'T' || s[13] != ':' ||
      s[16] != ':' || s[19] != 'Z')
    return std::nullopt;
  auto num = [&](std::size_t pos, std::size_t len) -> int {
    int v = 0;
    for (std::size_t i = pos; i < pos + len; ++i) {
      if (s[i] < '0' || s[i] > '9') return -1;
      v = v * 10 + (s[i] - '0');
    }
    return v;
  };
  const CalendarFields f{num(0, 4), num(5, 2), num(8, 2), num(11, 2), num(14, 2), num(17, 2)};
  if (f.year < 0 || f.month < 0 || f.day < 0 || f.hour < 0 || f.minute < 0 || f.second < 0)
    return std::nullopt;
  return compose(f);
}

inline std::string format_instant(Instant t) {
  const auto f = decompose(t);
  return fmt::format("{:04}-{:02}-{:02}T{:02}:{:02}:{:02}Z", f.year, f.month, f.day, f.hour,
                     f.minute, f.second);
}

// ---------------------------------------------------------------------------
// Identity

// Account identifier used as the ground-truth label.
class UserId {
 public:
  UserId() = default;
  explicit UserId(std::string id) : id_(std::move(id)) {}

  const std::string& str() const noexcept { return id_; }
  bool empty() const noexcept { return id_.empty(); }

  friend bool operator==(const UserId&, const UserId&) = default;
  friend std::strong_ordering operator<=>(const UserId& a, const UserId& b) {
    return a.id_.compare(b.id_) <=> 0;
  }

 private:
  std::string id_;
};

// ---------------------------------------------------------------------------
// Records

struct TweetRecord {
  UserId user;
  std::string tweet_id;
  Instant posted_at{};
  Instant account_created_at{};
  std::int64_t favourites_count = 0;
  std::int64_t follower_count = 0;
  std::int64_t friend_count = 0;
  std::int64_t listed_count = 0;
  std::int64_t statuses_count = 0;
  bool geo_enabled = false;
  bool verified = false;

  friend bool operator==(const TweetRecord&, const TweetRecord&) = default;
};

inline const TweetRecord& validate_record(const TweetRecord& r) {
  if (r.user.empty()) throw ValidationError("user_id", "must be non-empty");
  const std::pair<const char*, std::int64_t> counters[] = {
      {"favourites_count", r.favourites_count}, {"follower_count", r.follower_count},
      {"friend_count", r.friend_count},         {"listed_count", r.listed_count},
      {"statuses_count", r.statuses_count}};
  for (const auto& [name, value] : counters)
    if (value < 0) throw ValidationError(name, fmt::format("negative value {}", value));
  if (r.account_created_at > r.posted_at)
    throw ValidationError("account_created_at", "later than posted_at");
  return r;
}

// ---------------------------------------------------------------------------
// Features

enum class FeatureId : std::uint8_t {
  act_year,
  act_month,
  act_day,
  act_hour,
  act_minute,
  act_second,
  favourites_count,
  follower_count,
  friend_count,
  listed_count,
  statuses_count,
  geo_enabled,
  verified,
  post_hour,
};

inline constexpr std::size_t kFeatureCount = 14;

inline constexpr std::array<std::string_view, kFeatureCount> kFeatureNames = {
    "act_year",       "act_month",      "act_day",      "act_hour",     "act_minute",
    "act_second",     "favourites_count", "follower_count", "friend_count", "listed_count",
    "statuses_count", "geo_enabled",    "verified",     "post_hour"};

inline constexpr std::string_view feature_name(FeatureId f) {
  return kFeatureNames[static_cast<std::size_t>(f)];
}

inline std::optional<FeatureId> parse_feature(std::string_view name) {
  for (std::size_t i = 0; i < kFeatureCount; ++i)
    if (kFeatureNames[i] == name) return static_cast<FeatureId>(i);
  return std::nullopt;
}

inline std::vector<FeatureId> all_features() {
  std::vector<FeatureId> out;
  for (std::size_t i = 0; i < kFeatureCount; ++i) out.push_back(static_cast<FeatureId>(i));
  return out;
}

inline constexpr std::array<FeatureId, 6> kActFeatures = {
    FeatureId::act_year,   FeatureId::act_month,  FeatureId::act_day,
    FeatureId::act_hour,   FeatureId::act_minute, FeatureId::act_second};

inline constexpr std::array<FeatureId, 5> kCounterFeatures = {
    FeatureId::favourites_count, FeatureId::follower_count, FeatureId::friend_count,
    FeatureId::listed_count, FeatureId::statuses_count};

using Combination = std::vector<FeatureId>;

inline void validate_combination(std::span<const FeatureId> combination) {
  if (combination.empty()) throw InvalidCombinationError("combination is empty");
  std::array<bool, kFeatureCount> seen{};
  for (FeatureId f : combination) {
    auto& s = seen[static_cast<std::size_t>(f)];
    if (s) throw InvalidCombinationError(fmt::format("duplicate feature {}", feature_name(f)));
    s = true;
  }
}

inline std::string join_combination(std::span<const FeatureId> combination, char sep = '+') {
  std::string out;
  for (std::size_t i = 0; i < combination.size(); ++i) {
    if (i) out += sep;
    out += feature_name(combination[i]);
  }
  return out;
}

// Parses names separated by ',' or '+'.
inline Combination parse_combination(std::string_view text) {
  Combination out;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find_first_of(",+", start);
    if (end == std::string_view::npos) end = text.size();
    const auto token = text.substr(start, end - start);
    const auto f = parse_feature(token);
    if (!f) throw InvalidCombinationError(fmt::format("unknown feature '{}'", token));
    out.push_back(*f);
    start = end + 1;
  }
  validate_combination(out);
  return out;
}

inline double feature_value(const TweetRecord& r, FeatureId f) {
  switch (f) {
    case FeatureId::act_year: return decompose(r.account_created_at).year;
    case FeatureId::act_month: return decompose(r.account_created_at).month;
    case FeatureId::act_day: return decompose(r.account_created_at).day;
    case FeatureId::act_hour: return decompose(r.account_created_at).hour;
    case FeatureId::act_minute: return decompose(r.account_created_at).minute;
    case FeatureId::act_second: return decompose(r.account_created_at).second;
    case FeatureId::favourites_count: return static_cast<double>(r.favourites_count);
    case FeatureId::follower_count: return static_cast<double>(r.follower_count);
    case FeatureId::friend_count: return static_cast<double>(r.friend_count);
    case FeatureId::listed_count: return static_cast<double>(r.listed_count);
    case FeatureId::statuses_count: return static_cast<double>(r.statuses_count);
    case FeatureId::geo_enabled: return r.geo_enabled ? 1.0 : 0.0;
    case FeatureId::verified: return r.verified ? 1.0 : 0.0;
    case FeatureId::post_hour: return decompose(r.posted_at).hour;
  }
  return 0.0;
}

// Writes the encoding of `r` under an already validated combination.
inline void encode_into(const TweetRecord& r, std::span<const FeatureId> combination,
                        std::span<double> out) {
  for (std::size_t i = 0; i < combination.size(); ++i) out[i] = feature_value(r, combination[i]);
}

struct FeatureVector {
  Combination combination;
  std::vector<double> values;

  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

inline FeatureVector extract_features(const TweetRecord& r, std::span<const FeatureId> combination) {
  validate_combination(combination);
  FeatureVector v{Combination(combination.begin(), combination.end()),
                  std::vector<double>(combination.size())};
  encode_into(r, combination, v.values);
  return v;
}

struct LabeledSample {
  FeatureVector features;
  UserId label;
};

// A sequence of labeled samples sharing one combination, stored row-major.
// `origin` optionally records the source record position of each row.
class SampleSet {
 public:
  SampleSet() = default;
  explicit SampleSet(Combination combination) : combination_(std::move(combination)) {}

  const Combination& combination() const noexcept { return combination_; }
  std::size_t dims() const noexcept { return combination_.size(); }
  std::size_t size() const noexcept { return labels_.size(); }
  bool empty() const noexcept { return labels_.empty(); }

  std::span<const double> row(std::size_t i) const { return {values_.data() + i * dims(), dims()}; }
  std::span<double> row(std::size_t i) { return {values_.data() + i * dims(), dims()}; }
  const UserId& label(std::size_t i) const { return labels_[i]; }
  const std::vector<UserId>& labels() const noexcept { return labels_; }
  const std::vector<double>& values() const noexcept { return values_; }
  const std::vector<std::size_t>& origins() const noexcept { return origins_; }

  void push_back(std::span<const double> row, UserId label, std::size_t origin = 0) {
    if (row.size() != dims())
      throw ShapeError(fmt::format("row has {} values, expected {}", row.size(), dims()));
    values_.insert(values_.end(), row.begin(), row.end());
    labels_.push_back(std::move(label));
    origins_.push_back(origin);
  }

  void push_back(const LabeledSample& s) {
    if (s.features.combination != combination_)
      throw ShapeError("sample combination differs from the set's combination");
    push_back(s.features.values, s.label);
  }

  LabeledSample sample(std::size_t i) const {
    const auto r = row(i);
    return {{combination_, {r.begin(), r.end()}}, labels_[i]};
  }

  // Rows whose label satisfies pred, order preserved.
  template <typename Pred>
  SampleSet filter_labels(Pred&& pred) const {
    SampleSet out(combination_);
    for (std::size_t i = 0; i < size(); ++i)
      if (pred(labels_[i])) out.push_back(row(i), labels_[i], origins_[i]);
    return out;
  }

 private:
  Combination combination_;
  std::vector<double> values_;
  std::vector<UserId> labels_;
  std::vector<std::size_t> origins_;
};

// ---------------------------------------------------------------------------
// Dataset

class Dataset {
 public:
  Dataset() = default;

  // Throws ValidationError when records violate a record invariant or a user
  // has inconsistent account creation times.
  explicit Dataset(std::vector<TweetRecord> records) : records_(std::move(records)) {
    for (std::size_t i = 0; i < records_.size(); ++i) {
      validate_record(records_[i]);
      auto [it, inserted] = index_.try_emplace(records_[i].user);
      if (!inserted && records_[it->second.front()].account_created_at != records_[i].account_created_at)
        throw ValidationError("account_created_at",
                              fmt::format("differs across records of user {}", records_[i].user.str()));
      it->second.push_back(i);
    }
  }

  const std::vector<TweetRecord>& records() const noexcept { return records_; }
  std::size_t size() const noexcept { return records_.size(); }
  bool empty() const noexcept { return records_.empty(); }
  std::size_t user_count() const noexcept { return index_.size(); }

  const std::map<UserId, std::vector<std::size_t>>& index() const noexcept { return index_; }

  // Sorted lexicographically.
  std::vector<UserId> users() const {
    std::vector<UserId> out;
    out.reserve(index_.size());
    for (const auto& [u, _] : index_) out.push_back(u);
    return out;
  }

  const std::vector<std::size_t>& positions(const UserId& u) const {
    static const std::vector<std::size_t> none;
    auto it = index_.find(u);
    return it == index_.end() ? none : it->second;
  }

  friend bool operator==(const Dataset& a, const Dataset& b) { return a.records_ == b.records_; }

 private:
  std::vector<TweetRecord> records_;
  std::map<UserId, std::vector<std::size_t>> index_;
};

}  // namespace metaid
