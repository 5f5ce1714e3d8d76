#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ucts/kalman.hpp"
#include "ucts/model_spec.hpp"

namespace ucts {

struct FitOptions {
  int restarts = 8;
  double tolerance = 1e-5;  // gradient max-norm at the polished optimum
  int max_iterations = 400; // per optimizer stage
  std::uint64_t seed = 1;
  // Optional explicit starting point; restart 0 uses it when present.
  std::optional<ParamVector> start;
};

struct InformationCriteria {
  double aic = 0.0;
  double bic = 0.0;
  double aicc = 0.0;
};

struct FitResult {
  ModelSpec spec;
  ParamVector params;
  double loglik = 0.0;
  int k = 0;  // estimated hyperparameters + diffuse initial-state elements
  int n = 0;  // usable (non-missing) observations
  InformationCriteria ic;
  bool converged = false;
  int iterations = 0;
  double gradient_norm = 0.0;
  int restarts_used = 0;
  int best_restart = 0;
  std::uint64_t sample_fingerprint = 0;  // guards compare_models
};

// Thrown when every restart fails; carries the best incumbent found.
class EstimationError : public NumericalError {
 public:
  EstimationError(const std::string& what, std::optional<FitResult> incumbent)
      : NumericalError(what), incumbent_(std::move(incumbent)) {}
  const std::optional<FitResult>& incumbent() const { return incumbent_; }

 private:
  std::optional<FitResult> incumbent_;
};

// Quasi-maximum-likelihood fit. Variances are searched in log space
// (theta_i = ln sigma_i^2, floored at e^-30) with a Nelder-Mead stage
// followed by a BFGS polish on finite-difference gradients; the drift
// constant is profiled out exactly by the diffuse filter and read back
// from the smoothed drift state.
FitResult fit(const ModelSpec& spec, const TimeSeries& ts, const FitOptions& options = {});

// AIC = -2l + 2k, BIC = -2l + k ln n, AICc = AIC + 2k(k+1)/(n-k-1).
// Throws RangeError when n <= k + 1 (AICc undefined).
InformationCriteria information_criteria(double loglik, int k, int n);

struct ModelRanking {
  // Indices into the input fits, best first, one ranking per criterion.
  std::vector<int> by_aic;
  std::vector<int> by_bic;
  std::vector<int> by_aicc;
  bool rankings_agree = false;
};

// Ranks fits by each criterion; ties break toward fewer parameters. All
// fits must share the identical observation sample.
ModelRanking compare_models(const std::vector<FitResult>& fits);

// Log-likelihood of the spec evaluated at fixed parameters (no search).
double loglik_at(const ModelSpec& spec, const ParamVector& params, const TimeSeries& ts);

std::uint64_t sample_fingerprint(const TimeSeries& ts);

}  // namespace ucts
