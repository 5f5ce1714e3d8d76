#include "ucts/counterfactual.hpp"

#include <algorithm>
#include <cmath>

#include "ucts/errors.hpp"

namespace ucts {

std::vector<LossRow> loss_table(const TimeSeries& observed, const TimeSeries& counterfactual,
                                const std::vector<int>& windows_years, double discount_rate) {
  if (observed.start != counterfactual.start) {
    throw ConfigError("loss_table: observed and counterfactual series are not aligned");
  }
  if (discount_rate < 0.0) throw ConfigError("loss_table: discount_rate must be >= 0");
  const int len = static_cast<int>(std::min(observed.values.size(), counterfactual.values.size()));

  std::vector<LossRow> rows;
  for (int w : windows_years) {
    LossRow row;
    row.window_years = w;
    const int months = 12 * w;
    row.partial = months > len;
    double loss_sum = 0.0;
    double ratio_sum = 0.0;
    int count = 0;
    for (int h = 0; h < std::min(months, len); ++h) {
      const auto& obs = observed.values[static_cast<std::size_t>(h)];
      const auto& cf = counterfactual.values[static_cast<std::size_t>(h)];
      if (!obs.has_value() || !cf.has_value()) continue;
      const double factor = std::pow(1.0 + discount_rate, -(h + 1));
      loss_sum += factor * (*obs - *cf);
      ratio_sum += (*obs - *cf) / *cf;
      ++count;
    }
    row.months_used = count;
    if (count > 0) {
      row.avg_loss = loss_sum / count;
      row.pct_loss = 100.0 * ratio_sum / count;
    }
    rows.push_back(row);
  }
  return rows;
}

RecoveryResult recovery_month(const TimeSeries& observed, const TimeSeries& lower,
                              const TimeSeries& upper, int persistence) {
  if (observed.start != lower.start || observed.start != upper.start) {
    throw ConfigError("recovery_month: series are not aligned");
  }
  if (persistence < 1) throw ConfigError("recovery_month: persistence must be >= 1");
  const std::size_t len =
      std::min({observed.values.size(), lower.values.size(), upper.values.size()});

  RecoveryResult result;
  std::optional<MonthIndex> run_start;
  int run_len = 0;
  bool recovered = false;
  std::size_t last_observed = 0;
  for (std::size_t i = len; i-- > 0;) {
    if (observed.values[i].has_value()) {
      last_observed = i;
      break;
    }
  }

  for (std::size_t i = 0; i < len; ++i) {
    const auto& obs = observed.values[i];
    const auto& lo = lower.values[i];
    const auto& up = upper.values[i];
    if (!obs.has_value() || !lo.has_value() || !up.has_value()) {
      continue;  // missing months neither extend nor reset a run
    }
    const bool inside = *obs >= *lo && *obs <= *up;
    if (recovered) {
      // Re-exit after a sustained entry: flagged, never resets recovery.
      if (!inside) result.excluded_months.push_back(observed.month_at(i));
      continue;
    }
    if (inside) {
      if (!run_start.has_value()) {
        run_start = observed.month_at(i);
        run_len = 0;
      }
      ++run_len;
      // A run that reaches the end of the data cannot be contradicted, so
      // it counts even when shorter than the persistence rule.
      if (run_len >= persistence || i == last_observed) {
        recovered = true;
        result.month = run_start;
      }
    } else {
      run_start.reset();
      run_len = 0;
    }
  }
  return result;
}

double prebreak_baseline(const TimeSeries& level_series, MonthIndex event_month,
                         int* months_used) {
  double sum = 0.0;
  int count = 0;
  for (int back = 12; back >= 1; --back) {
    const MonthIndex m = event_month.plus_months(-back);
    const auto idx = level_series.index_of(m);
    if (!idx.has_value()) continue;
    const auto& v = level_series.values[*idx];
    if (v.has_value()) {
      sum += *v;
      ++count;
    }
  }
  if (months_used != nullptr) *months_used = count;
  if (count == 0) {
    throw DataError("prebreak_baseline: no observed months in the year before " +
                    event_month.to_string());
  }
  return sum / count;
}

EventStudyResult run_event_study(const TimeSeries& level_series, const ModelSpec& spec,
                                 const EventStudyConfig& config, const FitOptions& fit_options) {
  if (level_series.scale != Scale::level) {
    throw ConfigError("run_event_study: input series must be on the level scale");
  }
  if (!(config.train_start <= config.train_end)) {
    throw ConfigError("run_event_study: train_start must not be after train_end");
  }
  if (!(config.train_end < config.event_month)) {
    throw ConfigError("run_event_study: train_end must precede event_month");
  }
  if (config.horizon_months < 12) {
    throw ConfigError("run_event_study: horizon must be at least 12 months");
  }
  if (!(config.band_level > 0.0 && config.band_level < 1.0)) {
    throw ConfigError("run_event_study: band_level must lie in (0, 1)");
  }
  if (config.persistence_months < 1) {
    throw ConfigError("run_event_study: persistence_months must be >= 1");
  }

  const MonthIndex forecast_start = config.train_end.plus_months(1);
  const int event_offset = forecast_start.months_until(config.event_month);
  if (event_offset < 0 || event_offset >= config.horizon_months) {
    throw ConfigError("run_event_study: event_month must fall inside the forecast horizon");
  }

  EventStudyResult result;
  result.report.config = config;

  // Fit the structural model on the log of the training window.
  const TimeSeries train = slice(level_series, config.train_start, config.train_end);
  const TimeSeries log_train = log_transform(train);
  result.fit = fit(spec, log_train, fit_options);

  const StateSpaceSystem system = assemble(spec, result.fit.params);
  const FilterOutput filtered = filter(system, log_train);
  result.forecast_log =
      forecast(system, filtered, log_train, config.horizon_months, 1.0 - config.band_level);

  // Translate the log-scale forecast into levels. The median transform
  // exp(m) is band-consistent; the lognormal mean adds the s^2/2 term.
  TimeSeries cf, lower, upper;
  cf.start = lower.start = upper.start = forecast_start;
  cf.scale = lower.scale = upper.scale = Scale::level;
  cf.label = level_series.label + ".counterfactual";
  lower.label = level_series.label + ".band_lower";
  upper.label = level_series.label + ".band_upper";
  for (int h = 0; h < config.horizon_months; ++h) {
    const auto hi = static_cast<std::size_t>(h);
    double mean = result.forecast_log.mean[hi];
    if (config.mean_correction == MeanCorrection::lognormal_mean) {
      mean += 0.5 * result.forecast_log.variance[hi];
    }
    cf.values.emplace_back(std::exp(mean));
    lower.values.emplace_back(std::exp(result.forecast_log.lower[hi]));
    upper.values.emplace_back(std::exp(result.forecast_log.upper[hi]));
  }
  result.counterfactual = cf;
  result.band_lower = lower;
  result.band_upper = upper;

  // Align observed and counterfactual from the event month on.
  const MonthIndex forecast_end = forecast_start.plus_months(config.horizon_months - 1);
  const MonthIndex obs_end = level_series.end_month();
  const MonthIndex compare_end = obs_end < forecast_end ? obs_end : forecast_end;
  if (compare_end < config.event_month) {
    throw ConfigError("run_event_study: no observed data in the post-event window");
  }
  const TimeSeries obs_post = slice(level_series, config.event_month, compare_end);
  const TimeSeries cf_post = slice(cf, config.event_month, compare_end);
  const TimeSeries lower_post = slice(lower, config.event_month, compare_end);
  const TimeSeries upper_post = slice(upper, config.event_month, compare_end);
  if (obs_post.observed_count() == 0) {
    throw ConfigError("run_event_study: post-event window has no observed values");
  }

  result.report.rows =
      loss_table(obs_post, cf_post, config.windows_years, config.discount_rate);
  const RecoveryResult recovery =
      recovery_month(obs_post, lower_post, upper_post, config.persistence_months);
  result.report.recovery_month = recovery.month;
  result.report.excluded_months = recovery.excluded_months;

  result.report.baseline_prebreak_avg =
      prebreak_baseline(level_series, config.event_month, &result.report.baseline_months);

  // Footnote-style summary: previous-year average against the first
  // post-event year average.
  {
    double post_sum = 0.0;
    int post_count = 0;
    for (int h = 0; h < 12 && h < static_cast<int>(obs_post.values.size()); ++h) {
      const auto& v = obs_post.values[static_cast<std::size_t>(h)];
      if (v.has_value()) {
        post_sum += *v;
        ++post_count;
      }
    }
    if (post_count > 0 && result.report.baseline_prebreak_avg > 0.0) {
      const double post_avg = post_sum / post_count;
      result.report.one_year_drop_pct =
          100.0 * (1.0 - post_avg / result.report.baseline_prebreak_avg);
    }
  }
  return result;
}

}  // namespace ucts
