#pragma once

#include <initializer_list>
#include <ostream>
#include <string>
#include <string_view>
#include <type_traits>

#include <fmt/format.h>

#include "metaid/error.hpp"

namespace metaid {

// Minimal RFC 4180 writer. Doubles use the shortest round-trip
// representation, so identical values always produce identical bytes.
class CsvWriter {
 public:
  CsvWriter(std::ostream& out, std::initializer_list<std::string_view> header) : out_(out) {
    bool first = true;
    for (auto h : header) {
      if (!first) out_ << ',';
      out_ << escape(h);
      first = false;
    }
    out_ << '\n';
  }

  template <typename... Ts>
  void row(const Ts&... fields) {
    bool first = true;
    ((out_ << (first ? "" : ",") << cell(fields), first = false), ...);
    out_ << '\n';
    if (!out_) throw IoError("failed writing CSV row");
  }

  static std::string escape(std::string_view s) {
    if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
    std::string q = "\"";
    for (char c : s) {
      if (c == '"') q += '"';
      q += c;
    }
    q += '"';
    return q;
  }

 private:
  template <typename T>
  static std::string cell(const T& v) {
    if constexpr (std::is_same_v<T, bool>) {
      return v ? "true" : "false";
    } else if constexpr (std::is_arithmetic_v<T>) {
      return fmt::format("{}", v);
    } else {
      return escape(std::string_view(v));
    }
  }

  std::ostream& out_;
};

}  // namespace metaid
