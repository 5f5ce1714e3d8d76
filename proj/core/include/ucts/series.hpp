#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "ucts/month_index.hpp"
#include "ucts/time_series.hpp"

namespace ucts {

// One trading day of quote data. price is currency per share, shares the
// number outstanding; both strictly positive.
struct DailyQuote {
  CalendarDate date;
  double price = 0.0;
  double shares_outstanding = 0.0;
};

struct ColumnMapping {
  std::string date_column = "date";
  std::string price_column = "price";
  std::string shares_column = "shares";
  // Dates parse as ISO-8601 (YYYY-MM-DD) unless mdy_dates is set, in which
  // case M/D/Y with '/' separators is accepted instead.
  bool mdy_dates = false;
};

struct SkippedRow {
  std::size_t line_number = 0;  // 1-based, header is line 1
  std::string reason;
};

struct IngestResult {
  std::vector<DailyQuote> quotes;  // in file order
  std::vector<SkippedRow> skipped;
};

// Parses a daily quote CSV (UTF-8, header row required). Rows whose price,
// shares, or date fail to parse are recorded in `skipped`, never silently
// dropped. Throws ConfigError when a mapped column is absent and DataError
// listing the offending dates when duplicates appear.
IngestResult ingest_daily_csv(std::istream& source, const ColumnMapping& mapping);

// Monthly market capitalization: for every calendar month between the first
// and last quote date, the arithmetic mean over available days of
// price x shares_outstanding. Months without trading days become missing.
TimeSeries to_monthly_market_cap(const std::vector<DailyQuote>& daily,
                                 const std::string& label = "market_cap");

}  // namespace ucts
