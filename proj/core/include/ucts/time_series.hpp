#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ucts/month_index.hpp"

namespace ucts {

enum class Scale { level, log };

// Monthly-indexed univariate series. Entry i belongs to start advanced by
// i months; std::nullopt marks a missing observation.
struct TimeSeries {
  MonthIndex start;
  std::vector<std::optional<double>> values;
  Scale scale = Scale::level;
  std::string label;

  std::size_t size() const { return values.size(); }
  MonthIndex month_at(std::size_t i) const { return start.plus_months(static_cast<int>(i)); }
  MonthIndex end_month() const { return start.plus_months(static_cast<int>(values.size()) - 1); }

  // Index of the given month, or nullopt when outside the span.
  std::optional<std::size_t> index_of(MonthIndex m) const {
    int off = start.months_until(m);
    if (off < 0 || off >= static_cast<int>(values.size())) return std::nullopt;
    return static_cast<std::size_t>(off);
  }

  std::size_t observed_count() const {
    std::size_t n = 0;
    for (const auto& v : values) n += v.has_value() ? 1 : 0;
    return n;
  }
};

// Elementwise natural log; missing entries preserved. Throws DomainError
// naming the offending index for non-positive values.
TimeSeries log_transform(const TimeSeries& ts);

// Inverse of log_transform.
TimeSeries exp_transform(const TimeSeries& ts);

// Copy of [from, to], inclusive. Throws RangeError when the bounds leave
// the series span or from > to.
TimeSeries slice(const TimeSeries& ts, MonthIndex from, MonthIndex to);

// Series CSV: header "year,month,value", empty value field for missing.
// Lines starting with '#' are metadata and skipped on read.
void write_series_csv(std::ostream& out, const TimeSeries& ts,
                      const std::string& meta_comment = "");
TimeSeries read_series_csv(std::istream& in, const std::string& label = "");

}  // namespace ucts
