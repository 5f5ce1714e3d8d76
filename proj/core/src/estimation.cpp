#include "ucts/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <limits>
#include <numeric>

#include "ucts/rng.hpp"
#include "ucts/stats.hpp"

namespace ucts {

namespace {

constexpr double kLogVarFloor = -30.0;  // sigma^2 floor at e^-30
constexpr double kLogVarCeil = 40.0;
constexpr double kPenalty = 1e12;

struct ParamMap {
  // Names of the free log-variance coordinates, in order.
  std::vector<std::string> names;
  int level_slot = -1;
  int slope_slot = -1;
  int seasonal_first_slot = -1;
  int seasonal_slots = 0;
  int cycle_slot = -1;

  static ParamMap build(const ModelSpec& spec) {
    ParamMap map;
    map.names.push_back("irregular_var");
    int next = 1;
    const bool level = spec.trend == TrendKind::local_level ||
                       spec.trend == TrendKind::rw_drift || spec.trend == TrendKind::llt;
    const bool slope = spec.trend == TrendKind::irw || spec.trend == TrendKind::llt;
    if (level) {
      map.level_slot = next++;
      map.names.push_back("level_var");
    }
    if (slope) {
      map.slope_slot = next++;
      map.names.push_back("slope_var");
    }
    if (spec.seasonal) {
      const int slots = spec.seasonal->variance_mode == SeasonalVarianceMode::common
                            ? 1
                            : static_cast<int>(spec.seasonal->harmonics.size());
      map.seasonal_first_slot = next;
      map.seasonal_slots = slots;
      for (int i = 0; i < slots; ++i) {
        map.names.push_back(slots == 1 ? "seasonal_var"
                                       : "seasonal_var_" + std::to_string(i + 1));
        ++next;
      }
    }
    if (spec.cycle) {
      map.cycle_slot = next++;
      map.names.push_back("cycle_var");
    }
    return map;
  }

  int size() const { return static_cast<int>(names.size()); }

  ParamVector to_params(const Eigen::VectorXd& theta) const {
    auto var_of = [&](int slot) {
      return std::exp(std::clamp(theta(slot), kLogVarFloor, kLogVarCeil));
    };
    ParamVector p;
    p.irregular_var = var_of(0);
    if (level_slot >= 0) p.level_var = var_of(level_slot);
    if (slope_slot >= 0) p.slope_var = var_of(slope_slot);
    for (int i = 0; i < seasonal_slots; ++i) {
      p.seasonal_var.push_back(var_of(seasonal_first_slot + i));
    }
    if (cycle_slot >= 0) p.cycle_var = var_of(cycle_slot);
    return p;
  }

  Eigen::VectorXd to_theta(const ParamVector& p) const {
    auto log_of = [](double v) {
      return std::clamp(std::log(std::max(v, 1e-300)), kLogVarFloor, kLogVarCeil);
    };
    Eigen::VectorXd theta(size());
    theta(0) = log_of(p.irregular_var);
    if (level_slot >= 0) theta(level_slot) = log_of(p.level_var);
    if (slope_slot >= 0) theta(slope_slot) = log_of(p.slope_var);
    for (int i = 0; i < seasonal_slots; ++i) {
      double v = i < static_cast<int>(p.seasonal_var.size()) ? p.seasonal_var[i]
                 : p.seasonal_var.empty() ? 0.0
                                          : p.seasonal_var[0];
      theta(seasonal_first_slot + i) = log_of(v);
    }
    if (cycle_slot >= 0) theta(cycle_slot) = log_of(p.cycle_var);
    return theta;
  }
};

struct SimplexResult {
  Eigen::VectorXd x;
  double f = 0.0;
  int iterations = 0;
  bool collapsed = false;
};

SimplexResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                          const Eigen::VectorXd& x0, double step, double ftol, int max_iter) {
  const int p = static_cast<int>(x0.size());
  std::vector<Eigen::VectorXd> xs(static_cast<std::size_t>(p) + 1, x0);
  std::vector<double> fs(static_cast<std::size_t>(p) + 1);
  for (int i = 0; i < p; ++i) xs[static_cast<std::size_t>(i) + 1](i) += step;
  for (std::size_t i = 0; i < xs.size(); ++i) fs[i] = f(xs[i]);

  std::vector<std::size_t> order(xs.size());
  auto sort_simplex = [&] {
    std::iota(order.begin(), order.end(), 0u);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return fs[a] < fs[b]; });
  };

  SimplexResult res;
  int iter = 0;
  for (; iter < max_iter; ++iter) {
    sort_simplex();
    const std::size_t best = order.front();
    const std::size_t worst = order.back();
    const std::size_t second_worst = order[order.size() - 2];

    const double spread = std::abs(fs[worst] - fs[best]);
    if (spread <= ftol * (std::abs(fs[best]) + ftol)) {
      res.collapsed = true;
      break;
    }

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(p);
    for (std::size_t i = 0; i < xs.size(); ++i) {
      if (i != worst) centroid += xs[i];
    }
    centroid /= static_cast<double>(p);

    const Eigen::VectorXd reflected = centroid + (centroid - xs[worst]);
    const double f_reflected = f(reflected);
    if (f_reflected < fs[best]) {
      const Eigen::VectorXd expanded = centroid + 2.0 * (centroid - xs[worst]);
      const double f_expanded = f(expanded);
      if (f_expanded < f_reflected) {
        xs[worst] = expanded;
        fs[worst] = f_expanded;
      } else {
        xs[worst] = reflected;
        fs[worst] = f_reflected;
      }
    } else if (f_reflected < fs[second_worst]) {
      xs[worst] = reflected;
      fs[worst] = f_reflected;
    } else {
      const Eigen::VectorXd contracted = centroid + 0.5 * (xs[worst] - centroid);
      const double f_contracted = f(contracted);
      if (f_contracted < fs[worst]) {
        xs[worst] = contracted;
        fs[worst] = f_contracted;
      } else {
        for (std::size_t i = 0; i < xs.size(); ++i) {  // shrink toward best
          if (i == best) continue;
          xs[i] = xs[best] + 0.5 * (xs[i] - xs[best]);
          fs[i] = f(xs[i]);
        }
      }
    }
  }
  sort_simplex();
  res.x = xs[order.front()];
  res.f = fs[order.front()];
  res.iterations = iter;
  return res;
}

Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                            const Eigen::VectorXd& x) {
  // Central differences with step = cbrt(eps) * max(1, |theta_i|).
  const double base = std::cbrt(std::numeric_limits<double>::epsilon());
  const int p = static_cast<int>(x.size());
  Eigen::VectorXd g(p);
  Eigen::VectorXd xp = x;
  for (int i = 0; i < p; ++i) {
    const double h = base * std::max(1.0, std::abs(x(i)));
    xp(i) = x(i) + h;
    const double fp = f(xp);
    xp(i) = x(i) - h;
    const double fm = f(xp);
    xp(i) = x(i);
    g(i) = (fp - fm) / (2.0 * h);
  }
  return g;
}

struct BfgsResult {
  Eigen::VectorXd x;
  double f = 0.0;
  Eigen::VectorXd grad;
  int iterations = 0;
};

BfgsResult bfgs(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x0,
                double grad_tol, int max_iter) {
  const int p = static_cast<int>(x0.size());
  BfgsResult res;
  res.x = x0;
  res.f = f(x0);
  res.grad = fd_gradient(f, res.x);
  Eigen::MatrixXd Hinv = Eigen::MatrixXd::Identity(p, p);

  for (int iter = 0; iter < max_iter; ++iter) {
    res.iterations = iter;
    if (res.grad.lpNorm<Eigen::Infinity>() < grad_tol) break;

    Eigen::VectorXd direction = -Hinv * res.grad;
    double slope = res.grad.dot(direction);
    if (slope >= 0.0) {  // reset on loss of descent
      Hinv.setIdentity();
      direction = -res.grad;
      slope = res.grad.dot(direction);
      if (slope >= 0.0) break;
    }

    // Backtracking Armijo line search.
    double step = 1.0;
    double f_new = res.f;
    Eigen::VectorXd x_new = res.x;
    bool accepted = false;
    for (int ls = 0; ls < 40; ++ls) {
      x_new = res.x + step * direction;
      f_new = f(x_new);
      if (f_new <= res.f + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted || !(f_new < res.f)) break;

    const Eigen::VectorXd grad_new = fd_gradient(f, x_new);
    const Eigen::VectorXd s = x_new - res.x;
    const Eigen::VectorXd yv = grad_new - res.grad;
    const double sy = s.dot(yv);
    if (sy > 1e-12 * s.norm() * yv.norm()) {
      const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(p, p);
      const Eigen::MatrixXd V = I - (s * yv.transpose()) / sy;
      Hinv = V * Hinv * V.transpose() + (s * s.transpose()) / sy;
    }
    res.x = x_new;
    res.f = f_new;
    res.grad = grad_new;
  }
  return res;
}

double difference_variance(const TimeSeries& ts) {
  std::vector<double> diffs;
  std::optional<double> prev;
  for (const auto& v : ts.values) {
    if (v.has_value()) {
      if (prev.has_value()) diffs.push_back(*v - *prev);
      prev = v;
    }
  }
  if (diffs.size() < 2) return 1.0;
  double s2 = stats::variance(std::span<const double>(diffs.data(), diffs.size()));
  return s2 > 0.0 ? s2 : 1.0;
}

}  // namespace

std::uint64_t sample_fingerprint(const TimeSeries& ts) {
  std::uint64_t h = 1469598103934665603ull;  // FNV-1a
  auto mix = [&h](std::uint64_t v) {
    h ^= v;
    h *= 1099511628211ull;
  };
  mix(static_cast<std::uint64_t>(ts.start.year));
  mix(static_cast<std::uint64_t>(ts.start.month));
  mix(static_cast<std::uint64_t>(ts.scale));
  for (const auto& v : ts.values) {
    if (v.has_value()) {
      std::uint64_t bits;
      std::memcpy(&bits, &*v, sizeof bits);
      mix(bits);
    } else {
      mix(0x6d697373696e6721ull);
    }
  }
  return h;
}

InformationCriteria information_criteria(double loglik, int k, int n) {
  if (n <= k + 1) {
    throw RangeError("information_criteria: AICc undefined for n = " + std::to_string(n) +
                     ", k = " + std::to_string(k));
  }
  InformationCriteria ic;
  ic.aic = -2.0 * loglik + 2.0 * k;
  ic.bic = -2.0 * loglik + k * std::log(static_cast<double>(n));
  ic.aicc = ic.aic + 2.0 * k * (k + 1.0) / (n - k - 1.0);
  return ic;
}

double loglik_at(const ModelSpec& spec, const ParamVector& params, const TimeSeries& ts) {
  return filter_loglik(assemble(spec, params), ts);
}

FitResult fit(const ModelSpec& spec, const TimeSeries& ts, const FitOptions& options) {
  const ParamMap map = ParamMap::build(spec);
  const int p = map.size();

  // Probe system for dimensions and the data-sufficiency check.
  ParamVector probe = map.to_params(Eigen::VectorXd::Zero(p));
  if (spec.trend == TrendKind::rw_drift) probe.drift = 0.0;
  const StateSpaceSystem probe_sys = assemble(spec, probe);
  const int m = probe_sys.dim();
  const int n_obs = static_cast<int>(ts.observed_count());
  if (n_obs < m + p + 5) {
    throw DataError("fit: need at least m + hyperparameters + 5 = " +
                    std::to_string(m + p + 5) + " non-missing observations, got " +
                    std::to_string(n_obs));
  }

  const auto objective = [&](const Eigen::VectorXd& theta) -> double {
    ParamVector params = map.to_params(theta);
    try {
      return -filter_loglik(assemble(spec, params), ts);
    } catch (const NumericalError&) {
      return kPenalty;
    }
  };

  // Data-scaled starting point.
  const double s2 = difference_variance(ts);
  Eigen::VectorXd theta0(p);
  theta0(0) = std::log(0.5 * s2);
  if (map.level_slot >= 0) theta0(map.level_slot) = std::log(0.25 * s2);
  if (map.slope_slot >= 0) theta0(map.slope_slot) = std::log(0.01 * s2);
  for (int i = 0; i < map.seasonal_slots; ++i) {
    theta0(map.seasonal_first_slot + i) = std::log(0.01 * s2);
  }
  if (map.cycle_slot >= 0) theta0(map.cycle_slot) = std::log(0.1 * s2);
  if (options.start.has_value()) theta0 = map.to_theta(*options.start);

  struct Candidate {
    double f = kPenalty;
    Eigen::VectorXd x;
    bool collapsed = false;
    double grad_norm = std::numeric_limits<double>::infinity();
    int iterations = 0;
  };

  const int restarts = std::max(options.restarts, 1);
  std::optional<Candidate> best;
  int best_restart = 0;
  for (int r = 0; r < restarts; ++r) {
    Eigen::VectorXd start = theta0;
    if (r > 0) {
      RngStream rng(options.seed, static_cast<std::uint64_t>(r));
      for (int i = 0; i < p; ++i) start(i) += 4.0 * (rng.next_uniform() - 0.5);
    }
    SimplexResult nm =
        nelder_mead(objective, start, 1.0, 1e-10, options.max_iterations * std::max(p, 2));
    if (nm.f >= kPenalty) continue;  // this start never found a valid likelihood
    BfgsResult polish = bfgs(objective, nm.x, options.tolerance, options.max_iterations);

    Candidate cand;
    cand.f = std::min(nm.f, polish.f);
    cand.x = polish.f <= nm.f ? polish.x : nm.x;
    cand.collapsed = nm.collapsed;
    cand.grad_norm = polish.grad.lpNorm<Eigen::Infinity>();
    cand.iterations = nm.iterations + polish.iterations;
    if (!best.has_value() || cand.f < best->f) {
      best = cand;
      best_restart = r;
    }
  }

  if (!best.has_value()) {
    throw EstimationError("fit: every restart failed to evaluate a valid likelihood",
                          std::nullopt);
  }

  FitResult result;
  result.spec = spec;
  result.params = map.to_params(best->x);
  if (spec.trend == TrendKind::rw_drift) result.params.drift = 0.0;

  StateSpaceSystem system = assemble(spec, result.params);
  FilterOutput filtered = filter(system, ts);
  result.loglik = filtered.loglik;

  if (spec.trend == TrendKind::rw_drift) {
    // The drift state is constant; its smoothed value is the exact profile
    // estimate of C given the variances.
    SmootherOutput smoothed = smooth(system, filtered);
    result.params.drift = smoothed.alphahat.front()(system.layout.slope);
  }

  result.k = p + system.diffuse_count();
  result.n = filtered.observed;
  result.ic = information_criteria(result.loglik, result.k, result.n);
  result.converged = best->collapsed && best->grad_norm < options.tolerance;
  result.iterations = best->iterations;
  result.gradient_norm = best->grad_norm;
  result.restarts_used = restarts;
  result.best_restart = best_restart;
  result.sample_fingerprint = sample_fingerprint(ts);
  return result;
}

namespace {

std::vector<int> rank_by(const std::vector<FitResult>& fits,
                         const std::function<double(const FitResult&)>& criterion) {
  std::vector<int> order(fits.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    const double ca = criterion(fits[static_cast<std::size_t>(a)]);
    const double cb = criterion(fits[static_cast<std::size_t>(b)]);
    if (ca != cb) return ca < cb;
    return fits[static_cast<std::size_t>(a)].k < fits[static_cast<std::size_t>(b)].k;
  });
  return order;
}

}  // namespace

ModelRanking compare_models(const std::vector<FitResult>& fits) {
  if (fits.empty()) throw ConfigError("compare_models: no fits to compare");
  for (const auto& f : fits) {
    if (f.n != fits.front().n || f.sample_fingerprint != fits.front().sample_fingerprint) {
      throw ConfigError("compare_models: fits were not computed on the identical sample");
    }
  }
  ModelRanking ranking;
  ranking.by_aic = rank_by(fits, [](const FitResult& f) { return f.ic.aic; });
  ranking.by_bic = rank_by(fits, [](const FitResult& f) { return f.ic.bic; });
  ranking.by_aicc = rank_by(fits, [](const FitResult& f) { return f.ic.aicc; });
  ranking.rankings_agree =
      ranking.by_aic == ranking.by_bic && ranking.by_bic == ranking.by_aicc;
  return ranking;
}

}  // namespace ucts
