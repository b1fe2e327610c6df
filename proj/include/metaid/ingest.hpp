#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <json.hpp>

#include "metaid/csv.hpp"
#include "metaid/error.hpp"
#include "metaid/model.hpp"
#include "metaid/random.hpp"

namespace metaid {

inline constexpr std::size_t kDefaultMinTweets = 201;

struct Rejection {
  std::size_t line_number;  // 1-based
  std::string reason;
};

struct ParseOptions {
  // Parsing fails when more than this fraction of non-blank lines is rejected.
  double max_malformed_fraction = 0.01;
};

struct ParseResult {
  Dataset data;
  std::vector<Rejection> rejected;
  std::size_t lines = 0;  // non-blank lines seen
};

namespace detail {

template <typename T>
T require_field(const nlohmann::json& obj, const char* name) {
  auto it = obj.find(name);
  if (it == obj.end()) throw ValidationError(name, "missing");
  if constexpr (std::is_same_v<T, bool>) {
    if (!it->is_boolean()) throw ValidationError(name, "expected boolean");
    return it->get<bool>();
  } else if constexpr (std::is_same_v<T, std::int64_t>) {
    if (!it->is_number_integer()) throw ValidationError(name, "expected integer");
    return it->get<std::int64_t>();
  } else {
    if (!it->is_string()) throw ValidationError(name, "expected string");
    return it->get<std::string>();
  }
}

inline Instant require_instant(const nlohmann::json& obj, const char* name) {
  const auto text = require_field<std::string>(obj, name);
  const auto t = parse_instant(text);
  if (!t) throw ValidationError(name, fmt::format("not a YYYY-MM-DDThh:mm:ssZ instant: '{}'", text));
  return *t;
}

}  // namespace detail

// Decodes and validates one JSON-lines object. Throws ValidationError or
// nlohmann::json::exception.
inline TweetRecord parse_record_line(const std::string& line) {
  const auto obj = nlohmann::json::parse(line);
  if (!obj.is_object()) throw ValidationError("line", "not a JSON object");
  TweetRecord r;
  r.user = UserId(detail::require_field<std::string>(obj, "user_id"));
  r.tweet_id = detail::require_field<std::string>(obj, "tweet_id");
  r.posted_at = detail::require_instant(obj, "posted_at");
  r.account_created_at = detail::require_instant(obj, "account_created_at");
  r.favourites_count = detail::require_field<std::int64_t>(obj, "favourites_count");
  r.follower_count = detail::require_field<std::int64_t>(obj, "follower_count");
  r.friend_count = detail::require_field<std::int64_t>(obj, "friend_count");
  r.listed_count = detail::require_field<std::int64_t>(obj, "listed_count");
  r.statuses_count = detail::require_field<std::int64_t>(obj, "statuses_count");
  r.geo_enabled = detail::require_field<bool>(obj, "geo_enabled");
  r.verified = detail::require_field<bool>(obj, "verified");
  validate_record(r);
  return r;
}

// Canonical single-line encoding; field order is fixed so output is
// byte-stable.
inline std::string format_record_line(const TweetRecord& r) {
  return fmt::format(
      R"({{"user_id":{},"tweet_id":{},"posted_at":"{}","account_created_at":"{}",)"
      R"("favourites_count":{},"follower_count":{},"friend_count":{},"listed_count":{},)"
      R"("statuses_count":{},"geo_enabled":{},"verified":{}}})",
      nlohmann::json(r.user.str()).dump(), nlohmann::json(r.tweet_id).dump(),
      format_instant(r.posted_at), format_instant(r.account_created_at), r.favourites_count,
      r.follower_count, r.friend_count, r.listed_count, r.statuses_count,
      r.geo_enabled ? "true" : "false", r.verified ? "true" : "false");
}

inline void write_records(std::ostream& out, const Dataset& data) {
  for (const auto& r : data.records()) out << format_record_line(r) << '\n';
  if (!out) throw IoError("failed writing records");
}

inline ParseResult parse_records(std::istream& in, const ParseOptions& options = {}) {
  if (!in) throw IoError("input stream is not readable");
  ParseResult result;
  std::vector<TweetRecord> records;
  std::map<UserId, Instant> act_of;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ++result.lines;
    try {
      auto r = parse_record_line(line);
      auto [it, inserted] = act_of.try_emplace(r.user, r.account_created_at);
      if (!inserted && it->second != r.account_created_at)
        throw ValidationError("account_created_at", "differs from earlier records of this user");
      records.push_back(std::move(r));
    } catch (const ValidationError& e) {
      result.rejected.push_back({line_number, e.what()});
    } catch (const nlohmann::json::exception& e) {
      result.rejected.push_back({line_number, fmt::format("malformed JSON: {}", e.what())});
    }
  }
  if (in.bad()) throw IoError(fmt::format("read failure after line {}", line_number));

  if (result.lines > 0 &&
      static_cast<double>(result.rejected.size()) >
          options.max_malformed_fraction * static_cast<double>(result.lines)) {
    std::string where;
    for (std::size_t i = 0; i < std::min<std::size_t>(result.rejected.size(), 20); ++i)
      where += fmt::format("{}{}", i ? "," : "", result.rejected[i].line_number);
    if (result.rejected.size() > 20) where += ",...";
    throw FormatError(fmt::format("{} of {} lines malformed (limit {}); lines: {}",
                                  result.rejected.size(), result.lines,
                                  options.max_malformed_fraction, where));
  }
  result.data = Dataset(std::move(records));
  return result;
}

inline void write_rejections_csv(std::ostream& out, const std::vector<Rejection>& rejected) {
  CsvWriter csv(out, {"line_number", "reason"});
  for (const auto& r : rejected) csv.row(r.line_number, r.reason);
}

// Copies the records at `positions` (in the given order) into a new dataset.
inline Dataset select_records(const Dataset& data, const std::vector<std::size_t>& positions) {
  std::vector<TweetRecord> out;
  out.reserve(positions.size());
  for (auto p : positions) out.push_back(data.records()[p]);
  return Dataset(std::move(out));
}

inline Dataset filter_min_tweets(const Dataset& data, std::size_t minimum = kDefaultMinTweets) {
  if (minimum < 1) throw DomainError("minimum must be >= 1");
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < data.size(); ++i)
    if (data.positions(data.records()[i].user).size() >= minimum) keep.push_back(i);
  return select_records(data, keep);
}

// Draws `k` of `n` indices uniformly without replacement, returned ascending.
inline std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

// Keeps exactly `per_user` uniformly sampled records of each user, in
// original record order.
inline Dataset standardize_per_user(const Dataset& data, std::size_t per_user, std::uint64_t seed) {
  if (per_user < 1) throw DomainError("per_user must be >= 1");
  std::vector<std::size_t> keep;
  std::uint64_t user_index = 0;
  for (const auto& [user, positions] : data.index()) {
    if (positions.size() < per_user)
      throw InsufficientRecordsError(
          user.str(), fmt::format("user {} has {} records, {} required", user.str(),
                                  positions.size(), per_user));
    auto rng = make_rng(seed, {user_index++});
    for (auto i : sample_indices(positions.size(), per_user, rng)) keep.push_back(positions[i]);
  }
  std::sort(keep.begin(), keep.end());
  return select_records(data, keep);
}

struct SplitPair {
  SampleSet train;
  SampleSet test;
};

// Number of a user's records assigned to training: floor(ratio * count),
// clamped so both sides keep at least one record.
inline std::size_t train_count(double ratio, std::size_t count) {
  auto n = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(count) + 1e-9));
  return std::clamp<std::size_t>(n, 1, count - 1);
}

// Per-user stratified split. Rows are grouped by user (sorted) and keep
// record order within each side; `origin` holds the record position.
inline SplitPair split_train_test(const Dataset& data, const Combination& combination, double ratio,
                                  std::uint64_t seed) {
  validate_combination(combination);
  if (!(ratio > 0.0 && ratio < 1.0)) throw DomainError("split ratio must lie in (0, 1)");
  SplitPair out{SampleSet(combination), SampleSet(combination)};
  std::vector<double> row(combination.size());
  std::uint64_t user_index = 0;
  for (const auto& [user, positions] : data.index()) {
    if (positions.size() < 2)
      throw StratificationError(
          fmt::format("user {} has {} record(s); at least 2 needed", user.str(), positions.size()));
    auto rng = make_rng(seed, {user_index++});
    const auto n_train = train_count(ratio, positions.size());
    const auto chosen = sample_indices(positions.size(), n_train, rng);
    std::size_t c = 0;
    for (std::size_t i = 0; i < positions.size(); ++i) {
      const auto pos = positions[i];
      encode_into(data.records()[pos], combination, row);
      if (c < chosen.size() && chosen[c] == i) {
        out.train.push_back(row, user, pos);
        ++c;
      } else {
        out.test.push_back(row, user, pos);
      }
    }
  }
  return out;
}

}  // namespace metaid
