#pragma once

#include <span>
#include <utility>
#include <vector>

namespace ucts {

struct LjungBoxResult {
  double q = 0.0;
  int lags = 0;
  int df = 0;          // lags minus fitted hyperparameters, floored at 1
  double p_value = 0.0;      // at the adjusted df
  double p_value_raw = 0.0;  // at df = lags
};

// Q = n(n+2) sum_k r_k^2/(n-k) on residuals taken as mean zero (so an
// impulse has exactly zero autocorrelation at every lag).
LjungBoxResult ljung_box(std::span<const double> e, int lags = 24, int fitted_params = 0);

struct HeteroResult {
  double h_stat = 0.0;
  int h = 0;  // block length
  double p_value = 0.0;  // two-sided F(h, h)
};

// H = (sum of the last h squared residuals) / (sum of the first h).
// h = 0 selects floor(n/3).
HeteroResult hetero_ratio(std::span<const double> e, int h = 0);

struct NormalityResult {
  double statistic = 0.0;  // asymptotically chi^2(2)
  double p_value = 0.0;
  double skewness_component = 0.0;
  double kurtosis_component = 0.0;
};

// Autocorrelation-robust skewness/kurtosis normality test: the mu_3 and
// mu_4 - 3 mu_2^2 terms are studentized by 6*sum_j gamma(j)^3 and
// 24*sum_j gamma(j)^4 over all sample autocovariances.
NormalityResult lobato_velasco(std::span<const double> e);

struct CusumResult {
  std::vector<double> path;   // cumulative standardized residuals
  std::vector<double> lower;
  std::vector<double> upper;  // +-(a sqrt(n) + 2 a t / sqrt(n))
  bool stable = false;
  double boundary_a = 0.948;
};

// significance picks the boundary constant: 0.10 -> 0.850, 0.05 -> 0.948,
// 0.01 -> 1.143.
CusumResult cusum(std::span<const double> e, double significance = 0.05);

// Sample autocorrelations without mean removal; r_0 = 1.
std::vector<double> acf(std::span<const double> e, int max_lag);

// (theoretical normal quantile at (i - 0.5)/n, ordered sample value) pairs.
std::vector<std::pair<double, double>> qq_data(std::span<const double> e);

struct DiagnosticsReport {
  LjungBoxResult ljung_box;
  HeteroResult hetero;
  NormalityResult normality;
  CusumResult cusum;
  std::vector<double> acf;
  std::vector<std::pair<double, double>> qq;
  std::vector<double> residuals;
};

struct DiagnosticsOptions {
  int ljung_box_lags = 24;
  int fitted_params = 0;
  int hetero_h = 0;  // 0 -> floor(n/3)
  int acf_max_lag = 24;
  double cusum_significance = 0.05;
};

DiagnosticsReport diagnose(std::span<const double> residuals,
                           const DiagnosticsOptions& options = {});

}  // namespace ucts
