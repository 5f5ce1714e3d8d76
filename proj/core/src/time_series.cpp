#include "ucts/time_series.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

namespace ucts {

MonthIndex MonthIndex::parse(const std::string& text) {
  int y = 0, m = 0;
  char dash = 0;
  std::istringstream in(text);
  in >> y >> dash >> m;
  if (in.fail() || dash != '-' || m < 1 || m > 12) {
    throw RangeError("cannot parse month '" + text + "', expected YYYY-MM");
  }
  return MonthIndex{y, m};
}

std::string CalendarDate::to_string() const {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", year, month, day);
  return std::string(buf);
}

bool CalendarDate::is_leap_year(int year) {
  return (year % 4 == 0 && year % 100 != 0) || year % 400 == 0;
}

int CalendarDate::days_in_month(int year, int month) {
  static constexpr int kDays[12] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  if (month < 1 || month > 12) return 0;
  if (month == 2 && is_leap_year(year)) return 29;
  return kDays[month - 1];
}

bool CalendarDate::valid(int year, int month, int day) {
  return month >= 1 && month <= 12 && day >= 1 && day <= days_in_month(year, month);
}

namespace {

std::string format_value(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v,
                                 std::chars_format::general, 17);
  return std::string(buf, ptr);
}

}  // namespace

TimeSeries log_transform(const TimeSeries& ts) {
  TimeSeries out;
  out.start = ts.start;
  out.scale = Scale::log;
  out.label = ts.label;
  out.values.reserve(ts.values.size());
  for (std::size_t i = 0; i < ts.values.size(); ++i) {
    if (!ts.values[i].has_value()) {
      out.values.emplace_back(std::nullopt);
      continue;
    }
    double v = *ts.values[i];
    if (!(v > 0.0)) {
      throw DomainError("log_transform: non-positive value at index " + std::to_string(i) +
                        " (" + ts.month_at(i).to_string() + ")");
    }
    out.values.emplace_back(std::log(v));
  }
  return out;
}

TimeSeries exp_transform(const TimeSeries& ts) {
  TimeSeries out;
  out.start = ts.start;
  out.scale = Scale::level;
  out.label = ts.label;
  out.values.reserve(ts.values.size());
  for (const auto& v : ts.values) {
    if (v.has_value()) {
      out.values.emplace_back(std::exp(*v));
    } else {
      out.values.emplace_back(std::nullopt);
    }
  }
  return out;
}

TimeSeries slice(const TimeSeries& ts, MonthIndex from, MonthIndex to) {
  if (from > to) {
    throw RangeError("slice: from " + from.to_string() + " is after to " + to.to_string());
  }
  auto i = ts.index_of(from);
  auto j = ts.index_of(to);
  if (!i || !j) {
    throw RangeError("slice: [" + from.to_string() + ", " + to.to_string() +
                     "] leaves the series span [" + ts.start.to_string() + ", " +
                     ts.end_month().to_string() + "]");
  }
  TimeSeries out;
  out.start = from;
  out.scale = ts.scale;
  out.label = ts.label;
  out.values.assign(ts.values.begin() + static_cast<long>(*i),
                    ts.values.begin() + static_cast<long>(*j) + 1);
  return out;
}

void write_series_csv(std::ostream& out, const TimeSeries& ts, const std::string& meta_comment) {
  if (!meta_comment.empty()) out << "# " << meta_comment << "\n";
  out << "year,month,value\n";
  for (std::size_t i = 0; i < ts.values.size(); ++i) {
    MonthIndex m = ts.month_at(i);
    out << m.year << ',' << m.month << ',';
    if (ts.values[i].has_value()) out << format_value(*ts.values[i]);
    out << '\n';
  }
}

TimeSeries read_series_csv(std::istream& in, const std::string& label) {
  TimeSeries out;
  out.label = label;
  std::string line;
  bool header_seen = false;
  bool first_row = true;
  MonthIndex prev{};
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {  // header row required
      header_seen = true;
      continue;
    }
    std::size_t c1 = line.find(',');
    std::size_t c2 = c1 == std::string::npos ? std::string::npos : line.find(',', c1 + 1);
    if (c2 == std::string::npos) {
      throw DataError("series csv: malformed row at line " + std::to_string(line_no));
    }
    int year = 0, month = 0;
    auto r1 = std::from_chars(line.data(), line.data() + c1, year);
    auto r2 = std::from_chars(line.data() + c1 + 1, line.data() + c2, month);
    if (r1.ec != std::errc{} || r2.ec != std::errc{} || month < 1 || month > 12) {
      throw DataError("series csv: bad year/month at line " + std::to_string(line_no));
    }
    MonthIndex m{year, month};
    if (first_row) {
      out.start = m;
      first_row = false;
    } else if (prev.months_until(m) != 1) {
      throw DataError("series csv: months not consecutive at line " + std::to_string(line_no) +
                      " (" + m.to_string() + " after " + prev.to_string() + ")");
    }
    prev = m;
    std::string field = line.substr(c2 + 1);
    if (field.empty()) {
      out.values.emplace_back(std::nullopt);
    } else {
      double v = 0.0;
      auto rv = std::from_chars(field.data(), field.data() + field.size(), v);
      if (rv.ec != std::errc{} || rv.ptr != field.data() + field.size()) {
        throw DataError("series csv: bad value '" + field + "' at line " + std::to_string(line_no));
      }
      out.values.emplace_back(v);
    }
  }
  if (out.values.empty()) throw DataError("series csv: no data rows");
  return out;
}

}  // namespace ucts
