#pragma once

#include <Eigen/Dense>
#include <vector>

#include "ucts/model_spec.hpp"
#include "ucts/time_series.hpp"

namespace ucts {

struct FilterOptions {
  // Replace the exact diffuse recursion by a proper prior with variance
  // kappa on the diffuse states. Exists for cross-checking only.
  bool big_kappa = false;
  double kappa = 1e7;
};

// Output of the forward pass. Predicted quantities are one-step-ahead:
// a[t] = E[alpha_t | y_{1..t-1}], P[t] likewise; index n holds the
// end-of-sample prediction used by forecast().
struct FilterOutput {
  int n = 0;
  int m = 0;
  int d = 0;  // time steps spent in the exact diffuse phase
  double loglik = 0.0;
  int observed = 0;  // non-missing count

  std::vector<Eigen::VectorXd> a;       // n + 1 entries
  std::vector<Eigen::MatrixXd> P;      // proper part, n + 1 entries
  std::vector<Eigen::MatrixXd> P_inf;  // diffuse part, d entries (empty after)

  std::vector<double> v;       // innovation, NaN when undefined
  std::vector<double> F;       // innovation variance (proper part)
  std::vector<double> F_inf;   // diffuse innovation variance, 0 after phase
  std::vector<double> e;       // standardized innovation v/sqrt(F), NaN when undefined
  std::vector<bool> is_missing;
  std::vector<bool> is_diffuse_step;
  // An exact-diffuse update ran at this step (F_inf numerically positive);
  // the smoother must branch on the same decision the filter made.
  std::vector<bool> used_diffuse_update;
  // F ~ 0 with a numerically consistent observation: update skipped, no
  // likelihood term. Arises only for fully deterministic systems.
  std::vector<bool> is_degenerate;

  // Standardized innovations for the steps where they exist.
  std::vector<double> standardized_innovations() const;
};

struct SmootherOutput {
  std::vector<Eigen::VectorXd> alphahat;  // E[alpha_t | y_{1..n}]
  std::vector<Eigen::MatrixXd> V;         // Var[alpha_t | y_{1..n}]
};

struct ForecastResult {
  int horizon = 0;
  MonthIndex start;  // month of the first forecast step
  std::vector<double> mean;
  std::vector<double> variance;
  std::vector<double> lower;
  std::vector<double> upper;
  double band_level = 0.95;  // 1 - alpha
  Scale scale = Scale::log;
};

// Kalman filter with exact diffuse initialization. Missing observations
// skip the update and contribute no likelihood term. The log-likelihood
// follows the exact-diffuse definition: steps with F_inf > 0 contribute
// -0.5 (log 2pi + log F_inf) and no residual term.
FilterOutput filter(const StateSpaceSystem& system, const TimeSeries& ts,
                    const FilterOptions& options = {});

// Log-likelihood only, no stored paths; used inside optimization loops.
// Matches filter(...).loglik bit for bit.
double filter_loglik(const StateSpaceSystem& system, const TimeSeries& ts);

// Fixed-interval smoother, including the diffuse-phase recursion.
SmootherOutput smooth(const StateSpaceSystem& system, const FilterOutput& filtered);

// H-step-ahead observation forecast from the end of the filtered sample.
// alpha in (0, 1]; bands are mean +- z_{1-alpha/2} sqrt(variance).
// H = 0 yields an empty result.
ForecastResult forecast(const StateSpaceSystem& system, const FilterOutput& filtered,
                        const TimeSeries& ts, int horizon, double alpha = 0.05);

}  // namespace ucts
