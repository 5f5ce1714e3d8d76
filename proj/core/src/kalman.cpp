#include "ucts/kalman.hpp"

#include <cmath>
#include <limits>

#include "ucts/errors.hpp"
#include "ucts/stats.hpp"

namespace ucts {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;
// Directions whose diffuse innovation variance is tiny relative to P_inf
// are left alone for the step: an exact update there divides by F_inf^2
// and wrecks P_star. Skipped directions strengthen under T and are
// absorbed a few steps later.
constexpr double kDiffuseRelTol = 1e-5;
// P_inf residue after a clean rank reduction sits near machine precision.
constexpr double kDiffuseExhausted = 1e-8;
const double kNaN = std::numeric_limits<double>::quiet_NaN();

// F ~ 0 at a non-diffuse step only happens for (numerically) deterministic
// systems; the observation must then agree with the prediction.
bool degenerate_step(double F, double y_scale) {
  return F <= 1e-12 * std::max(1.0, y_scale * y_scale);
}

// Shared forward pass; `store` may be null when only the likelihood is
// needed. The arithmetic is identical in both modes.
double run_filter(const StateSpaceSystem& system, const TimeSeries& ts,
                  const FilterOptions& options, FilterOutput* store) {
  const int m = system.dim();
  const int n = static_cast<int>(ts.values.size());
  const int observed = static_cast<int>(ts.observed_count());
  if (observed < m + 1) {
    throw DataError("filter: need at least m + 1 = " + std::to_string(m + 1) +
                    " non-missing observations, got " + std::to_string(observed));
  }

  Eigen::VectorXd a = system.a1;
  Eigen::MatrixXd P = system.P_star;
  Eigen::MatrixXd Pinf = system.p_inf.asDiagonal();
  if (options.big_kappa) {
    P += options.kappa * Pinf;
    Pinf.setZero();
  }

  const Eigen::MatrixXd RQR = system.R * system.q_diag.asDiagonal() * system.R.transpose();
  const Eigen::RowVectorXd& Z = system.Z;
  const Eigen::MatrixXd& T = system.T;
  const double H = system.h;

  double y_scale = 1.0;
  for (const auto& value : ts.values) {
    if (value.has_value()) y_scale = std::max(y_scale, std::abs(*value));
  }

  if (store != nullptr) {
    store->n = n;
    store->m = m;
    store->observed = observed;
    store->d = 0;
    store->a.clear();
    store->P.clear();
    store->P_inf.clear();
    store->a.reserve(static_cast<std::size_t>(n) + 1);
    store->P.reserve(static_cast<std::size_t>(n) + 1);
    store->v.assign(static_cast<std::size_t>(n), kNaN);
    store->F.assign(static_cast<std::size_t>(n), kNaN);
    store->F_inf.assign(static_cast<std::size_t>(n), 0.0);
    store->e.assign(static_cast<std::size_t>(n), kNaN);
    store->is_missing.assign(static_cast<std::size_t>(n), false);
    store->is_diffuse_step.assign(static_cast<std::size_t>(n), false);
    store->used_diffuse_update.assign(static_cast<std::size_t>(n), false);
    store->is_degenerate.assign(static_cast<std::size_t>(n), false);
  }

  bool diffuse = Pinf.size() > 0 && Pinf.cwiseAbs().maxCoeff() > kDiffuseExhausted;
  // Every exact-diffuse update removes one rank from P_inf; T is invertible
  // for assembled systems, so the count tells us when the phase is over
  // without relying on the numerical residue decaying.
  int remaining_rank = diffuse ? static_cast<int>(std::lround(system.p_inf.sum())) : 0;
  double loglik = 0.0;
  int d = 0;

  Eigen::VectorXd Mstar(m), Minf(m);
  Eigen::VectorXd a_upd(m);
  Eigen::MatrixXd P_upd(m, m), Pinf_upd(m, m);

  for (int t = 0; t < n; ++t) {
    const auto idx = static_cast<std::size_t>(t);
    if (store != nullptr) {
      store->a.push_back(a);
      store->P.push_back(P);
      if (diffuse) {
        store->P_inf.push_back(Pinf);
        store->is_diffuse_step[idx] = true;
      }
    }
    if (diffuse) ++d;

    const bool missing = !ts.values[idx].has_value();
    if (store != nullptr) store->is_missing[idx] = missing;

    if (missing) {
      a_upd = a;
      P_upd = P;
      if (diffuse) Pinf_upd = Pinf;
    } else {
      const double y = *ts.values[idx];
      const double v = y - Z.dot(a);
      Mstar.noalias() = P * Z.transpose();
      const double Fstar = Z.dot(Mstar) + H;
      if (store != nullptr) {
        store->v[idx] = v;
        store->F[idx] = Fstar;
      }

      if (diffuse) {
        Minf.noalias() = Pinf * Z.transpose();
        const double Finf = Z.dot(Minf);
        if (store != nullptr) store->F_inf[idx] = Finf;
        const double pinf_scale = std::max(1.0, Pinf.cwiseAbs().maxCoeff());
        if (Finf > kDiffuseRelTol * pinf_scale) {
          if (store != nullptr) store->used_diffuse_update[idx] = true;
          a_upd = a + Minf * (v / Finf);
          P_upd = P + Minf * Minf.transpose() * (Fstar / (Finf * Finf)) -
                  (Mstar * Minf.transpose() + Minf * Mstar.transpose()) / Finf;
          Pinf_upd = Pinf - Minf * Minf.transpose() / Finf;
          loglik -= 0.5 * (kLog2Pi + std::log(Finf));
          --remaining_rank;
        } else if (Fstar > 0.0 && !degenerate_step(Fstar, y_scale)) {
          a_upd = a + Mstar * (v / Fstar);
          P_upd = P - Mstar * Mstar.transpose() / Fstar;
          Pinf_upd = Pinf;
          loglik -= 0.5 * (kLog2Pi + std::log(Fstar) + v * v / Fstar);
          if (store != nullptr) store->e[idx] = v / std::sqrt(Fstar);
        } else {
          if (std::abs(v) > 1e-8 * std::max(1.0, y_scale)) {
            throw NumericalError(
                "filter: zero innovation variance with nonzero innovation at t=" +
                std::to_string(t + 1));
          }
          a_upd = a;
          P_upd = P;
          Pinf_upd = Pinf;
          if (store != nullptr) store->is_degenerate[idx] = true;
        }
      } else {
        if (degenerate_step(Fstar, y_scale)) {
          if (std::abs(v) > 1e-8 * std::max(1.0, y_scale)) {
            throw NumericalError("filter: non-positive innovation variance F at t=" +
                                 std::to_string(t + 1));
          }
          a_upd = a;
          P_upd = P;
          if (store != nullptr) store->is_degenerate[idx] = true;
        } else if (Fstar <= 0.0 || !std::isfinite(Fstar)) {
          throw NumericalError("filter: non-positive innovation variance F at t=" +
                               std::to_string(t + 1));
        } else {
          a_upd = a + Mstar * (v / Fstar);
          P_upd = P - Mstar * Mstar.transpose() / Fstar;
          loglik -= 0.5 * (kLog2Pi + std::log(Fstar) + v * v / Fstar);
          if (store != nullptr) store->e[idx] = v / std::sqrt(Fstar);
        }
      }
    }

    // Predict.
    a.noalias() = T * a_upd;
    P.noalias() = T * P_upd * T.transpose();
    P += RQR;
    P = 0.5 * (P + P.transpose()).eval();  // guard the rotation blocks
    if (diffuse) {
      Pinf.noalias() = T * Pinf_upd * T.transpose();
      Pinf = 0.5 * (Pinf + Pinf.transpose()).eval();
      if (remaining_rank <= 0 || Pinf.cwiseAbs().maxCoeff() <= kDiffuseExhausted) {
        Pinf.setZero();
        diffuse = false;
      }
    }
  }

  if (diffuse) {
    throw NumericalError("filter: diffuse initialization not resolved within the sample");
  }
  if (!std::isfinite(loglik)) {
    throw NumericalError("filter: non-finite log-likelihood");
  }
  if (store != nullptr) {
    store->a.push_back(a);
    store->P.push_back(P);
    store->d = d;
    store->loglik = loglik;
  }
  return loglik;
}

}  // namespace

std::vector<double> FilterOutput::standardized_innovations() const {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int t = 0; t < n; ++t) {
    const auto idx = static_cast<std::size_t>(t);
    if (!is_missing[idx] && !is_diffuse_step[idx] && !is_degenerate[idx]) {
      out.push_back(e[idx]);
    }
  }
  return out;
}

FilterOutput filter(const StateSpaceSystem& system, const TimeSeries& ts,
                    const FilterOptions& options) {
  FilterOutput out;
  run_filter(system, ts, options, &out);
  return out;
}

double filter_loglik(const StateSpaceSystem& system, const TimeSeries& ts) {
  return run_filter(system, ts, FilterOptions{}, nullptr);
}

SmootherOutput smooth(const StateSpaceSystem& system, const FilterOutput& filtered) {
  const int m = filtered.m;
  const int n = filtered.n;
  const int d = filtered.d;
  const Eigen::RowVectorXd& Z = system.Z;
  const Eigen::MatrixXd& T = system.T;
  const Eigen::MatrixXd ZtZ = Z.transpose() * Z;

  SmootherOutput out;
  out.alphahat.assign(static_cast<std::size_t>(n), Eigen::VectorXd::Zero(m));
  out.V.assign(static_cast<std::size_t>(n), Eigen::MatrixXd::Zero(m, m));

  Eigen::VectorXd r = Eigen::VectorXd::Zero(m);
  Eigen::MatrixXd N = Eigen::MatrixXd::Zero(m, m);
  Eigen::VectorXd M(m);
  Eigen::MatrixXd L(m, m);

  // Standard pass, t = n .. d+1.
  for (int t = n - 1; t >= d; --t) {
    const auto idx = static_cast<std::size_t>(t);
    const Eigen::VectorXd& a = filtered.a[idx];
    const Eigen::MatrixXd& P = filtered.P[idx];
    const bool usable = !filtered.is_missing[idx] && !filtered.is_degenerate[idx];
    if (usable) {
      const double F = filtered.F[idx];
      const double v = filtered.v[idx];
      M.noalias() = P * Z.transpose();
      L.noalias() = T - (T * M) * Z / F;
      r = (Z.transpose() * (v / F) + L.transpose() * r).eval();
      N = (ZtZ / F + L.transpose() * N * L).eval();
    } else {
      r = (T.transpose() * r).eval();
      N = (T.transpose() * N * T).eval();
    }
    out.alphahat[idx] = a + P * r;
    out.V[idx] = P - P * N * P;
    out.V[idx] = 0.5 * (out.V[idx] + out.V[idx].transpose()).eval();
  }

  if (d == 0) return out;

  // Diffuse pass, t = d .. 1: two-part backward recursion carrying the
  // proper (r0, N0) and diffuse (r1, N1, N2) sensitivities.
  Eigen::VectorXd r0 = r;
  Eigen::VectorXd r1 = Eigen::VectorXd::Zero(m);
  Eigen::MatrixXd N0 = N;
  Eigen::MatrixXd N1 = Eigen::MatrixXd::Zero(m, m);
  Eigen::MatrixXd N2 = Eigen::MatrixXd::Zero(m, m);
  Eigen::VectorXd Minf(m), Mstar(m);
  Eigen::MatrixXd L0(m, m), L1(m, m);

  for (int t = d - 1; t >= 0; --t) {
    const auto idx = static_cast<std::size_t>(t);
    const Eigen::VectorXd& a = filtered.a[idx];
    const Eigen::MatrixXd& Pstar = filtered.P[idx];
    const Eigen::MatrixXd& Pinf = filtered.P_inf[idx];
    const bool usable = !filtered.is_missing[idx] && !filtered.is_degenerate[idx];

    if (usable && filtered.used_diffuse_update[idx]) {
      const double Finf = filtered.F_inf[idx];
      const double Fstar = filtered.F[idx];
      const double v = filtered.v[idx];
      Minf.noalias() = Pinf * Z.transpose();
      Mstar.noalias() = Pstar * Z.transpose();
      L0.noalias() = T - (T * Minf) * Z / Finf;
      L1.noalias() = -(T * (Mstar / Finf - Minf * (Fstar / (Finf * Finf)))) * Z;

      const Eigen::VectorXd r0_new = L0.transpose() * r0;
      const Eigen::VectorXd r1_new =
          Z.transpose() * (v / Finf) + L0.transpose() * r1 + L1.transpose() * r0;
      const Eigen::MatrixXd N0_new = L0.transpose() * N0 * L0;
      const Eigen::MatrixXd N1_new =
          ZtZ / Finf + L0.transpose() * N1 * L0 + L1.transpose() * N0 * L0;
      const Eigen::MatrixXd N2_new = ZtZ * (-Fstar / (Finf * Finf)) +
                                     L0.transpose() * N2 * L0 + L0.transpose() * N1 * L1 +
                                     L1.transpose() * N1.transpose() * L0 +
                                     L1.transpose() * N0 * L1;
      r0 = r0_new;
      r1 = r1_new;
      N0 = N0_new;
      N1 = N1_new;
      N2 = N2_new;
    } else if (usable) {
      // Observation carries no diffuse information at this step.
      const double F = filtered.F[idx];
      const double v = filtered.v[idx];
      Mstar.noalias() = Pstar * Z.transpose();
      L0.noalias() = T - (T * Mstar) * Z / F;
      r0 = (Z.transpose() * (v / F) + L0.transpose() * r0).eval();
      N0 = (ZtZ / F + L0.transpose() * N0 * L0).eval();
      r1 = (T.transpose() * r1).eval();
      N1 = (T.transpose() * N1 * L0).eval();
      N2 = (T.transpose() * N2 * T).eval();
    } else {
      r0 = (T.transpose() * r0).eval();
      r1 = (T.transpose() * r1).eval();
      N0 = (T.transpose() * N0 * T).eval();
      N1 = (T.transpose() * N1 * T).eval();
      N2 = (T.transpose() * N2 * T).eval();
    }

    out.alphahat[idx] = a + Pstar * r0 + Pinf * r1;
    Eigen::MatrixXd V = Pstar - Pstar * N0 * Pstar - Pinf * N1 * Pstar -
                        (Pinf * N1 * Pstar).transpose() - Pinf * N2 * Pinf;
    out.V[idx] = 0.5 * (V + V.transpose()).eval();
  }
  return out;
}

ForecastResult forecast(const StateSpaceSystem& system, const FilterOutput& filtered,
                        const TimeSeries& ts, int horizon, double alpha) {
  if (horizon < 0) throw RangeError("forecast: horizon must be non-negative");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw RangeError("forecast: alpha must lie in (0, 1]");

  ForecastResult out;
  out.horizon = horizon;
  out.start = ts.end_month().plus_months(1);
  out.band_level = 1.0 - alpha;
  out.scale = ts.scale;
  if (horizon == 0) return out;

  const Eigen::RowVectorXd& Z = system.Z;
  const Eigen::MatrixXd& T = system.T;
  const Eigen::MatrixXd RQR = system.R * system.q_diag.asDiagonal() * system.R.transpose();

  // z at alpha = 1 is exactly 0: the bands collapse onto the mean.
  const double z = alpha >= 1.0 ? 0.0 : stats::normal_quantile(1.0 - alpha / 2.0);

  Eigen::VectorXd a = filtered.a.back();
  Eigen::MatrixXd P = filtered.P.back();
  out.mean.reserve(static_cast<std::size_t>(horizon));
  out.variance.reserve(static_cast<std::size_t>(horizon));
  for (int h = 0; h < horizon; ++h) {
    const double mean = Z.dot(a);
    const double var = std::max((Z * P * Z.transpose())(0, 0) + system.h, 0.0);
    out.mean.push_back(mean);
    out.variance.push_back(var);
    const double sd = std::sqrt(var);
    out.lower.push_back(mean - z * sd);
    out.upper.push_back(mean + z * sd);
    a = (T * a).eval();
    P = (T * P * T.transpose() + RQR).eval();
    P = 0.5 * (P + P.transpose()).eval();
  }
  return out;
}

}  // namespace ucts
