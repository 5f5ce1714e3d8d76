#pragma once

#include <optional>
#include <vector>

#include "ucts/estimation.hpp"
#include "ucts/kalman.hpp"
#include "ucts/model_spec.hpp"
#include "ucts/time_series.hpp"

namespace ucts {

enum class MeanCorrection { median, lognormal_mean };

struct EventStudyConfig {
  MonthIndex train_start;
  MonthIndex train_end;
  MonthIndex event_month;  // first compared month; > train_end
  int horizon_months = 60;
  double band_level = 0.95;
  int persistence_months = 3;   // consecutive in-band months for recovery
  double discount_rate = 0.0;   // per month, >= 0
  MeanCorrection mean_correction = MeanCorrection::median;
  std::vector<int> windows_years = {1, 2, 3, 5};
};

struct LossRow {
  int window_years = 0;
  double avg_loss = 0.0;  // discounted mean of observed - counterfactual
  double pct_loss = 0.0;  // mean of (observed - cf)/cf, in percent
  bool partial = false;   // window ran past the available data
  int months_used = 0;
};

struct ImpactReport {
  std::vector<LossRow> rows;
  std::optional<MonthIndex> recovery_month;
  std::vector<MonthIndex> excluded_months;  // re-exits after a sustained entry
  double baseline_prebreak_avg = 0.0;       // mean cap over the 12 pre-event months
  int baseline_months = 0;                  // < 12 flags a partial baseline
  double one_year_drop_pct = 0.0;           // pre-year avg vs first post-year avg
  EventStudyConfig config;
};

struct EventStudyResult {
  FitResult fit;
  ForecastResult forecast_log;  // bands on the log scale
  TimeSeries counterfactual;    // level scale, aligned with the forecast span
  TimeSeries band_lower;
  TimeSeries band_upper;
  ImpactReport report;
};

// Fit on the log of the training slice, forecast through the horizon,
// translate back to levels per mean_correction, and compare with the
// observed post-event path.
EventStudyResult run_event_study(const TimeSeries& level_series, const ModelSpec& spec,
                                 const EventStudyConfig& config,
                                 const FitOptions& fit_options = {});

// Loss rows over the first 12w months from the start of both series, which
// must be aligned level series. Discounting applies factor (1+r)^-h to the
// month-h loss; r = 0 reproduces plain averages.
std::vector<LossRow> loss_table(const TimeSeries& observed, const TimeSeries& counterfactual,
                                const std::vector<int>& windows_years, double discount_rate);

struct RecoveryResult {
  std::optional<MonthIndex> month;
  std::vector<MonthIndex> excluded_months;
};

// First month from which the observed series stays inside the band for
// persistence consecutive observed months. Later re-exits are reported as
// excluded months and do not reset the recovery.
RecoveryResult recovery_month(const TimeSeries& observed, const TimeSeries& lower,
                              const TimeSeries& upper, int persistence);

// Mean market cap over the 12 months preceding event_month. months_used
// reports how many were actually available.
double prebreak_baseline(const TimeSeries& level_series, MonthIndex event_month,
                         int* months_used = nullptr);

}  // namespace ucts
