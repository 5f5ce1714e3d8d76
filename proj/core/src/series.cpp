#include "ucts/series.hpp"

#include <algorithm>
#include <charconv>
#include <istream>
#include <map>
#include <sstream>

namespace ucts {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (char c : line) {
    if (c == '"') {
      quoted = !quoted;
    } else if (c == ',' && !quoted) {
      fields.push_back(field);
      field.clear();
    } else {
      field.push_back(c);
    }
  }
  fields.push_back(field);
  for (auto& f : fields) {
    while (!f.empty() && (f.front() == ' ' || f.front() == '\t')) f.erase(f.begin());
    while (!f.empty() && (f.back() == ' ' || f.back() == '\t' || f.back() == '\r')) f.pop_back();
  }
  return fields;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  auto r = std::from_chars(s.data(), s.data() + s.size(), out);
  return r.ec == std::errc{} && r.ptr == s.data() + s.size();
}

bool parse_int(const char* begin, const char* end, int& out) {
  auto r = std::from_chars(begin, end, out);
  return r.ec == std::errc{} && r.ptr == end;
}

bool parse_date(const std::string& s, bool mdy, CalendarDate& out) {
  // ISO: YYYY-MM-DD. MDY: M/D/YYYY.
  char sep = mdy ? '/' : '-';
  std::size_t p1 = s.find(sep);
  if (p1 == std::string::npos) return false;
  std::size_t p2 = s.find(sep, p1 + 1);
  if (p2 == std::string::npos || s.find(sep, p2 + 1) != std::string::npos) return false;
  int a = 0, b = 0, c = 0;
  if (!parse_int(s.data(), s.data() + p1, a)) return false;
  if (!parse_int(s.data() + p1 + 1, s.data() + p2, b)) return false;
  if (!parse_int(s.data() + p2 + 1, s.data() + s.size(), c)) return false;
  int year = mdy ? c : a;
  int month = mdy ? a : b;
  int day = mdy ? b : c;
  if (!CalendarDate::valid(year, month, day)) return false;
  out = CalendarDate{year, month, day};
  return true;
}

}  // namespace

IngestResult ingest_daily_csv(std::istream& source, const ColumnMapping& mapping) {
  std::string line;
  if (!std::getline(source, line)) {
    throw DataError("daily csv: empty input, header row required");
  }
  auto header = split_csv_line(line);
  auto find_col = [&](const std::string& name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
      throw ConfigError("daily csv: mapped column '" + name + "' not found in header");
    }
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t date_idx = find_col(mapping.date_column);
  const std::size_t price_idx = find_col(mapping.price_column);
  const std::size_t shares_idx = find_col(mapping.shares_column);

  IngestResult result;
  std::map<CalendarDate, std::size_t> seen;  // date -> first line number
  std::vector<std::string> duplicates;
  std::size_t line_no = 1;
  while (std::getline(source, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto fields = split_csv_line(line);
    std::size_t needed = std::max({date_idx, price_idx, shares_idx});
    if (fields.size() <= needed) {
      result.skipped.push_back({line_no, "too few fields"});
      continue;
    }
    CalendarDate date;
    if (!parse_date(fields[date_idx], mapping.mdy_dates, date)) {
      result.skipped.push_back({line_no, "unparseable date '" + fields[date_idx] + "'"});
      continue;
    }
    double price = 0.0;
    if (!parse_double(fields[price_idx], price)) {
      result.skipped.push_back({line_no, "unparseable price '" + fields[price_idx] + "'"});
      continue;
    }
    double shares = 0.0;
    if (!parse_double(fields[shares_idx], shares)) {
      result.skipped.push_back({line_no, "unparseable shares '" + fields[shares_idx] + "'"});
      continue;
    }
    if (!(price > 0.0)) {
      result.skipped.push_back({line_no, "non-positive price"});
      continue;
    }
    if (!(shares > 0.0)) {
      result.skipped.push_back({line_no, "non-positive shares"});
      continue;
    }
    auto [it, inserted] = seen.emplace(date, line_no);
    if (!inserted) {
      duplicates.push_back(date.to_string());
      continue;
    }
    result.quotes.push_back(DailyQuote{date, price, shares});
  }
  if (!duplicates.empty()) {
    std::string msg = "daily csv: duplicate dates:";
    for (const auto& d : duplicates) msg += " " + d;
    throw DataError(msg);
  }
  return result;
}

TimeSeries to_monthly_market_cap(const std::vector<DailyQuote>& daily, const std::string& label) {
  if (daily.empty()) throw DataError("to_monthly_market_cap: empty quote table");

  // Accumulate in date order so the result does not depend on row order.
  std::vector<const DailyQuote*> ordered;
  ordered.reserve(daily.size());
  for (const auto& q : daily) ordered.push_back(&q);
  std::sort(ordered.begin(), ordered.end(),
            [](const DailyQuote* a, const DailyQuote* b) { return a->date < b->date; });

  MonthIndex first = ordered.front()->date.month_index();
  MonthIndex last = ordered.back()->date.month_index();
  const int n = first.months_until(last) + 1;

  std::vector<double> sums(static_cast<std::size_t>(n), 0.0);
  std::vector<int> counts(static_cast<std::size_t>(n), 0);
  for (const DailyQuote* q : ordered) {
    int idx = first.months_until(q->date.month_index());
    sums[static_cast<std::size_t>(idx)] += q->price * q->shares_outstanding;
    counts[static_cast<std::size_t>(idx)] += 1;
  }

  TimeSeries out;
  out.start = first;
  out.scale = Scale::level;
  out.label = label;
  out.values.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    if (counts[static_cast<std::size_t>(i)] == 0) {
      out.values.emplace_back(std::nullopt);
    } else {
      out.values.emplace_back(sums[static_cast<std::size_t>(i)] /
                              counts[static_cast<std::size_t>(i)]);
    }
  }
  return out;
}

}  // namespace ucts
