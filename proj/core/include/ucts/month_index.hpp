#pragma once

#include <compare>
#include <string>

#include "ucts/errors.hpp"

namespace ucts {

// Calendar month used to index monthly series. Ordering is (year, month)
// lexicographic; differences are exact integer month counts.
struct MonthIndex {
  int year = 1970;
  int month = 1;  // 1..12

  friend auto operator<=>(const MonthIndex&, const MonthIndex&) = default;

  // Months from *this to other; positive when other is later.
  int months_until(const MonthIndex& other) const {
    return (other.year - year) * 12 + (other.month - month);
  }

  MonthIndex plus_months(int n) const {
    int linear = year * 12 + (month - 1) + n;
    int y = linear / 12;
    int m = linear % 12;
    if (m < 0) {
      m += 12;
      y -= 1;
    }
    return MonthIndex{y, m + 1};
  }

  std::string to_string() const {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02d", year, month);
    return std::string(buf);
  }

  // Parses "YYYY-MM". Throws RangeError on malformed input.
  static MonthIndex parse(const std::string& text);
};

inline MonthIndex make_month(int year, int month) {
  if (month < 1 || month > 12) {
    throw RangeError("month must be in 1..12, got " + std::to_string(month));
  }
  return MonthIndex{year, month};
}

// Calendar day for daily quote data.
struct CalendarDate {
  int year = 1970;
  int month = 1;
  int day = 1;

  friend auto operator<=>(const CalendarDate&, const CalendarDate&) = default;

  MonthIndex month_index() const { return MonthIndex{year, month}; }
  std::string to_string() const;

  static bool is_leap_year(int year);
  static int days_in_month(int year, int month);
  static bool valid(int year, int month, int day);
};

}  // namespace ucts
