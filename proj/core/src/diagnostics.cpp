#include "ucts/diagnostics.hpp"

#include <algorithm>
#include <cmath>

#include "ucts/errors.hpp"
#include "ucts/stats.hpp"

namespace ucts {

namespace {

// Autocorrelations of residuals taken as mean zero: r_k = sum e_t e_{t-k} / sum e_t^2.
std::vector<double> raw_autocorrelations(std::span<const double> e, int max_lag) {
  const int n = static_cast<int>(e.size());
  double denom = 0.0;
  for (double v : e) denom += v * v;
  std::vector<double> r(static_cast<std::size_t>(max_lag) + 1, 0.0);
  r[0] = 1.0;
  if (denom <= 0.0) return r;  // all-zero residuals: no autocorrelation signal
  for (int k = 1; k <= max_lag; ++k) {
    double num = 0.0;
    for (int t = k; t < n; ++t) num += e[static_cast<std::size_t>(t)] * e[static_cast<std::size_t>(t - k)];
    r[static_cast<std::size_t>(k)] = num / denom;
  }
  return r;
}

}  // namespace

LjungBoxResult ljung_box(std::span<const double> e, int lags, int fitted_params) {
  const int n = static_cast<int>(e.size());
  if (n <= lags) {
    throw DataError("ljung_box: need more observations than lags (n=" + std::to_string(n) +
                    ", lags=" + std::to_string(lags) + ")");
  }
  const std::vector<double> r = raw_autocorrelations(e, lags);
  double q = 0.0;
  for (int k = 1; k <= lags; ++k) {
    q += r[static_cast<std::size_t>(k)] * r[static_cast<std::size_t>(k)] / (n - k);
  }
  q *= static_cast<double>(n) * (n + 2);

  LjungBoxResult out;
  out.q = q;
  out.lags = lags;
  out.df = std::max(lags - fitted_params, 1);
  out.p_value = stats::chi_squared_sf(q, out.df);
  out.p_value_raw = stats::chi_squared_sf(q, lags);
  return out;
}

HeteroResult hetero_ratio(std::span<const double> e, int h) {
  const int n = static_cast<int>(e.size());
  if (h == 0) h = n / 3;
  if (h < 1 || n < 2 * h) {
    throw DataError("hetero_ratio: block length " + std::to_string(h) +
                    " does not fit n=" + std::to_string(n));
  }
  double first = 0.0, last = 0.0;
  for (int t = 0; t < h; ++t) first += e[static_cast<std::size_t>(t)] * e[static_cast<std::size_t>(t)];
  for (int t = n - h; t < n; ++t) last += e[static_cast<std::size_t>(t)] * e[static_cast<std::size_t>(t)];
  if (first <= 0.0) throw DataError("hetero_ratio: zero denominator (degenerate residuals)");

  HeteroResult out;
  out.h = h;
  out.h_stat = last / first;
  const double cdf = stats::f_cdf(out.h_stat, h, h);
  out.p_value = std::clamp(2.0 * std::min(cdf, 1.0 - cdf), 0.0, 1.0);
  return out;
}

NormalityResult lobato_velasco(std::span<const double> e) {
  const int n = static_cast<int>(e.size());
  if (n < 30) throw DataError("lobato_velasco: need n >= 30, got " + std::to_string(n));

  const double mean = stats::mean(e);
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (double v : e) {
    const double d = v - mean;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;
  if (!(m2 > 0.0)) throw DataError("lobato_velasco: constant series");

  // Autocovariance-power sums F(k) = gamma0^k + 2 sum_j gamma_j^k; no
  // bandwidth is needed because the powers are summable.
  double f3 = std::pow(m2, 3);
  double f4 = std::pow(m2, 4);
  for (int j = 1; j < n; ++j) {
    double gj = 0.0;
    for (int t = j; t < n; ++t) {
      gj += (e[static_cast<std::size_t>(t)] - mean) * (e[static_cast<std::size_t>(t - j)] - mean);
    }
    gj /= n;
    f3 += 2.0 * std::pow(gj, 3);
    f4 += 2.0 * std::pow(gj, 4);
  }
  if (!(f3 > 0.0) || !(f4 > 0.0)) {
    throw DataError("lobato_velasco: degenerate long-run moment estimate");
  }

  NormalityResult out;
  out.skewness_component = n * m3 * m3 / (6.0 * f3);
  out.kurtosis_component = n * std::pow(m4 - 3.0 * m2 * m2, 2) / (24.0 * f4);
  out.statistic = out.skewness_component + out.kurtosis_component;
  out.p_value = stats::chi_squared_sf(out.statistic, 2.0);
  return out;
}

CusumResult cusum(std::span<const double> e, double significance) {
  const int n = static_cast<int>(e.size());
  if (n < 10) throw DataError("cusum: need n >= 10, got " + std::to_string(n));

  double a;
  if (std::abs(significance - 0.05) < 1e-9) {
    a = 0.948;
  } else if (std::abs(significance - 0.01) < 1e-9) {
    a = 1.143;
  } else if (std::abs(significance - 0.10) < 1e-9) {
    a = 0.850;
  } else {
    throw RangeError("cusum: significance must be 0.10, 0.05 or 0.01");
  }

  double ss = 0.0;
  for (double v : e) ss += v * v;
  const double sigma = std::sqrt(ss / n);

  CusumResult out;
  out.boundary_a = a;
  out.path.reserve(static_cast<std::size_t>(n));
  out.lower.reserve(static_cast<std::size_t>(n));
  out.upper.reserve(static_cast<std::size_t>(n));
  const double sqrt_n = std::sqrt(static_cast<double>(n));
  double path = 0.0;
  bool stable = true;
  for (int t = 1; t <= n; ++t) {
    path += sigma > 0.0 ? e[static_cast<std::size_t>(t - 1)] / sigma : 0.0;
    const double bound = a * sqrt_n + 2.0 * a * t / sqrt_n;
    out.path.push_back(path);
    out.lower.push_back(-bound);
    out.upper.push_back(bound);
    if (std::abs(path) > bound) stable = false;
  }
  out.stable = stable;
  return out;
}

std::vector<double> acf(std::span<const double> e, int max_lag) {
  const int n = static_cast<int>(e.size());
  if (n <= max_lag) {
    throw DataError("acf: need more observations than lags");
  }
  return raw_autocorrelations(e, max_lag);
}

std::vector<std::pair<double, double>> qq_data(std::span<const double> e) {
  const std::size_t n = e.size();
  if (n < 3) throw DataError("qq_data: need n >= 3");
  std::vector<double> sorted(e.begin(), e.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<std::pair<double, double>> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double p = (static_cast<double>(i) + 0.5) / static_cast<double>(n);
    out.emplace_back(stats::normal_quantile(p), sorted[i]);
  }
  return out;
}

DiagnosticsReport diagnose(std::span<const double> residuals, const DiagnosticsOptions& options) {
  DiagnosticsReport report;
  report.residuals.assign(residuals.begin(), residuals.end());
  report.ljung_box = ljung_box(residuals, options.ljung_box_lags, options.fitted_params);
  report.hetero = hetero_ratio(residuals, options.hetero_h);
  report.normality = lobato_velasco(residuals);
  report.cusum = ucts::cusum(residuals, options.cusum_significance);
  report.acf = ucts::acf(residuals, options.acf_max_lag);
  report.qq = qq_data(residuals);
  return report;
}

}  // namespace ucts
