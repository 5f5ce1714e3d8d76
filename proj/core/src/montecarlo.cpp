#include "ucts/montecarlo.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <limits>
#include <numbers>
#include <thread>

#include "ucts/diagnostics.hpp"
#include "ucts/errors.hpp"
#include "ucts/estimation.hpp"
#include "ucts/kalman.hpp"
#include "ucts/stats.hpp"

namespace ucts {

TimeSeries simulate_ssm(const StateSpaceSystem& system, int length, RngStream& rng,
                        const Eigen::VectorXd* initial_state, MonthIndex start) {
  if (length < 1) throw RangeError("simulate_ssm: length must be positive");
  const int m = system.dim();
  const int r = system.n_disturbances();

  Eigen::VectorXd alpha = initial_state != nullptr ? *initial_state : system.a1;
  if (alpha.size() != m) {
    throw SpecError("simulate_ssm: initial state has dimension " +
                    std::to_string(alpha.size()) + ", expected " + std::to_string(m));
  }
  // Proper-prior states receive a draw from P_star (diagonal by
  // construction for assembled systems; general PSD handled via LDLT).
  if (system.P_star.cwiseAbs().maxCoeff() > 0.0) {
    if (system.P_star.isDiagonal(1e-14)) {
      for (int i = 0; i < m; ++i) {
        const double v = system.P_star(i, i);
        if (v > 0.0) alpha(i) += std::sqrt(v) * rng.next_normal();
      }
    } else {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(system.P_star);
      Eigen::VectorXd z(m);
      for (int i = 0; i < m; ++i) z(i) = rng.next_normal();
      alpha += es.eigenvectors() *
               es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() * z;
    }
  }

  const double obs_sd = std::sqrt(system.h);
  Eigen::VectorXd q_sd(r);
  for (int i = 0; i < r; ++i) q_sd(i) = std::sqrt(system.q_diag(i));

  TimeSeries out;
  out.start = start;
  out.scale = Scale::level;
  out.label = "simulated";
  out.values.reserve(static_cast<std::size_t>(length));

  Eigen::VectorXd eta(r);
  for (int t = 0; t < length; ++t) {
    // Draw order per step: observation noise first, then disturbances in
    // slot order; keeps streams reproducible.
    const double eps = obs_sd > 0.0 ? obs_sd * rng.next_normal() : 0.0;
    out.values.emplace_back(system.Z.dot(alpha) + eps);
    for (int i = 0; i < r; ++i) {
      eta(i) = q_sd(i) > 0.0 ? q_sd(i) * rng.next_normal() : 0.0;
    }
    alpha = (system.T * alpha).eval();
    if (r > 0) alpha += system.R * eta;
  }
  return out;
}

TimeSeries simulate_ssm(const StateSpaceSystem& system, int length, std::uint64_t seed,
                        const Eigen::VectorXd* initial_state, MonthIndex start) {
  RngStream rng(seed, 0);
  return simulate_ssm(system, length, rng, initial_state, start);
}

int parallel_replications(int n, int threads, const std::function<void(int)>& fn) {
  if (threads <= 0) {
    threads = static_cast<int>(std::thread::hardware_concurrency());
    if (threads <= 0) threads = 1;
  }
  threads = std::min(threads, n);
  std::atomic<int> failures{0};
  if (threads <= 1) {
    for (int i = 0; i < n; ++i) {
      try {
        fn(i);
      } catch (...) {
        failures.fetch_add(1, std::memory_order_relaxed);
      }
    }
    return failures.load();
  }
  std::atomic<int> next{0};
  std::vector<std::thread> workers;
  workers.reserve(static_cast<std::size_t>(threads));
  for (int w = 0; w < threads; ++w) {
    workers.emplace_back([&] {
      for (;;) {
        const int i = next.fetch_add(1, std::memory_order_relaxed);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          failures.fetch_add(1, std::memory_order_relaxed);
        }
      }
    });
  }
  for (auto& w : workers) w.join();
  return failures.load();
}

namespace {

// Squared-Brownian-bridge integral on a discrete grid: the T -> infinity
// null law of the cumulated-residual statistics.
double bridge_functional(RngStream& rng, int grid, std::vector<double>& scratch) {
  scratch.resize(static_cast<std::size_t>(grid));
  double sum = 0.0;
  for (int t = 0; t < grid; ++t) {
    scratch[static_cast<std::size_t>(t)] = rng.next_normal();
    sum += scratch[static_cast<std::size_t>(t)];
  }
  const double mean = sum / grid;
  double s = 0.0;
  double css = 0.0;
  double var = 0.0;
  for (int t = 0; t < grid; ++t) {
    const double e = scratch[static_cast<std::size_t>(t)] - mean;
    s += e;
    css += s * s;
    var += e * e;
  }
  var /= grid;
  return css / (static_cast<double>(grid) * grid * var);
}

double type7_quantile(std::vector<double>& sorted_values, double q) {
  const std::size_t n = sorted_values.size();
  const double pos = q * static_cast<double>(n - 1);
  const auto lo = static_cast<std::size_t>(pos);
  const double frac = pos - static_cast<double>(lo);
  if (lo + 1 >= n) return sorted_values[n - 1];
  return sorted_values[lo] * (1.0 - frac) + sorted_values[lo + 1] * frac;
}

}  // namespace

CvmTable generate_cvm_table(int max_df, int replications, int grid_length, std::uint64_t seed,
                            int threads) {
  if (max_df < 1 || replications < 100 || grid_length < 10) {
    throw RangeError("generate_cvm_table: need max_df >= 1, replications >= 100, grid >= 10");
  }
  // stats[rep * max_df + (df-1)] = generalized CvM(df) draw for this rep.
  std::vector<double> stats(static_cast<std::size_t>(replications) * max_df);
  parallel_replications(replications, threads, [&](int rep) {
    RngStream rng(seed, static_cast<std::uint64_t>(rep));
    std::vector<double> scratch;
    double acc = 0.0;
    for (int b = 0; b < max_df; ++b) {
      acc += bridge_functional(rng, grid_length, scratch);
      stats[static_cast<std::size_t>(rep) * max_df + b] = acc;
    }
  });

  CvmTable table;
  table.max_df = max_df;
  table.provenance = "mc-critvals replications=" + std::to_string(replications) +
                     " grid=" + std::to_string(grid_length) + " seed=" + std::to_string(seed);
  table.values.resize(static_cast<std::size_t>(max_df));
  std::vector<double> column(static_cast<std::size_t>(replications));
  for (int df = 1; df <= max_df; ++df) {
    for (int rep = 0; rep < replications; ++rep) {
      column[static_cast<std::size_t>(rep)] =
          stats[static_cast<std::size_t>(rep) * max_df + (df - 1)];
    }
    std::sort(column.begin(), column.end());
    table.values[static_cast<std::size_t>(df - 1)] = {type7_quantile(column, 0.90),
                                                      type7_quantile(column, 0.95),
                                                      type7_quantile(column, 0.99)};
  }
  return table;
}

namespace {

ExperimentTable rates_table(const std::string& name, const std::vector<std::string>& labels,
                            const std::vector<std::array<int, 3>>& hits,
                            const std::vector<int>& counts) {
  ExperimentTable table;
  table.name = name;
  table.columns = {"rate_10", "rate_5", "rate_1", "mcse_5"};
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double n = std::max(counts[i], 1);
    const double r10 = hits[i][0] / n;
    const double r5 = hits[i][1] / n;
    const double r1 = hits[i][2] / n;
    table.row_labels.push_back(labels[i]);
    table.rows.push_back({r10, r5, r1, std::sqrt(r5 * (1.0 - r5) / n)});
  }
  return table;
}

ExperimentReport experiment_simulate(const SimulationPlan& plan) {
  if (!plan.spec || !plan.params) {
    throw ConfigError("simulate experiment: model spec and params required");
  }
  const StateSpaceSystem system = assemble(*plan.spec, *plan.params);
  ExperimentReport report;
  report.kind = ExperimentKind::simulate;
  report.replications = plan.replications;
  ExperimentTable table;
  table.name = "simulated_series";
  table.columns = {"rep", "t", "value"};
  const Eigen::VectorXd* init = plan.initial_state.size() > 0 ? &plan.initial_state : nullptr;
  for (int rep = 0; rep < plan.replications; ++rep) {
    RngStream rng(plan.seed, static_cast<std::uint64_t>(rep));
    TimeSeries ts = simulate_ssm(system, plan.length, rng, init);
    for (std::size_t t = 0; t < ts.values.size(); ++t) {
      table.rows.push_back({static_cast<double>(rep), static_cast<double>(t + 1),
                            ts.values[t].value_or(0.0)});
    }
  }
  report.tables.push_back(std::move(table));
  return report;
}

ExperimentReport experiment_critvals(const SimulationPlan& plan) {
  CvmTable table = generate_cvm_table(plan.max_df, plan.replications, plan.grid_length,
                                      plan.seed, plan.threads);
  ExperimentReport report;
  report.kind = ExperimentKind::critvals;
  report.replications = plan.replications;
  ExperimentTable out;
  out.name = "cvm_critical_values";
  out.columns = {"crit_10", "crit_5", "crit_1"};
  for (int df = 1; df <= table.max_df; ++df) {
    out.row_labels.push_back("df_" + std::to_string(df));
    const auto& v = table.values[static_cast<std::size_t>(df - 1)];
    out.rows.push_back({v[0], v[1], v[2]});
  }
  report.tables.push_back(std::move(out));
  return report;
}

// Test battery under each null: white noise for the level test, a random
// walk with drift for the slope test, deterministic seasonality for the
// seasonal tests, iid normals for the normality and stability checks.
// alt_seasonal_ratio > 0 switches the seasonal DGP to stochastic
// trigonometric seasonality for power measurements.
ExperimentReport experiment_size_power(const SimulationPlan& plan) {
  const int T = plan.length;
  const int s = 12;
  const int n_freq = s / 2;

  std::vector<std::string> labels = {"level", "slope"};
  for (int j = 1; j <= n_freq; ++j) labels.push_back("seasonal_" + std::to_string(j));
  labels.push_back("seasonal_joint");
  labels.push_back("lobato_velasco");
  labels.push_back("cusum");
  const std::size_t n_tests = labels.size();

  std::vector<std::array<int, 3>> hits(n_tests, {0, 0, 0});
  std::vector<int> counts(n_tests, 0);
  std::vector<std::vector<std::array<int, 3>>> rep_hits(
      static_cast<std::size_t>(plan.replications));
  std::vector<std::vector<int>> rep_counts(static_cast<std::size_t>(plan.replications));

  VarianceTestOptions vt_options;
  const double seasonal_sd =
      plan.alt_seasonal_ratio > 0.0 ? std::sqrt(plan.alt_seasonal_ratio) : 0.0;

  const int failures = parallel_replications(plan.replications, plan.threads, [&](int rep) {
    RngStream rng(plan.seed, static_cast<std::uint64_t>(rep));
    std::vector<std::array<int, 3>> h(n_tests, {0, 0, 0});
    std::vector<int> c(n_tests, 0);
    auto record = [&](std::size_t row, const TestResult& tr) {
      c[row] += 1;
      if (tr.statistic >= tr.crit_10) h[row][0] += 1;
      if (tr.statistic >= tr.crit_05) h[row][1] += 1;
      if (tr.statistic >= tr.crit_01) h[row][2] += 1;
    };
    auto make_series = [&](const std::vector<double>& v) {
      TimeSeries ts;
      ts.start = MonthIndex{2000, 1};
      ts.scale = Scale::level;
      ts.values.assign(v.begin(), v.end());
      return ts;
    };

    // level: white noise around a constant.
    {
      std::vector<double> y(static_cast<std::size_t>(T));
      for (auto& v : y) v = rng.next_normal();
      record(0, level_test(make_series(y), vt_options));
    }
    // slope: random walk with drift, so the differences are iid.
    {
      std::vector<double> y(static_cast<std::size_t>(T));
      double mu = 0.0;
      for (auto& v : y) {
        v = mu;
        mu += 0.05 + rng.next_normal();
      }
      record(1, slope_test(make_series(y), vt_options));
    }
    // seasonal: fixed pattern + noise (null) or stochastic trigonometric
    // seasonality (alternative).
    {
      std::vector<double> gamma(static_cast<std::size_t>(n_freq)),
          gamma_star(static_cast<std::size_t>(n_freq));
      for (int j = 0; j < n_freq; ++j) {
        gamma[static_cast<std::size_t>(j)] = 0.6 / (j + 1);
        gamma_star[static_cast<std::size_t>(j)] = -0.4 / (j + 1);
      }
      std::vector<double> y(static_cast<std::size_t>(T));
      for (int t = 0; t < T; ++t) {
        double seasonal = 0.0;
        for (int j = 0; j < n_freq; ++j) seasonal += gamma[static_cast<std::size_t>(j)];
        y[static_cast<std::size_t>(t)] = 1.0 + seasonal + rng.next_normal();
        for (int j = 0; j < n_freq; ++j) {
          const double lambda = 2.0 * std::numbers::pi * (j + 1) / s;
          const double cg = std::cos(lambda), sg = std::sin(lambda);
          const double g = gamma[static_cast<std::size_t>(j)];
          const double gs = gamma_star[static_cast<std::size_t>(j)];
          double og = 0.0, ogs = 0.0;
          if (seasonal_sd > 0.0) {
            og = seasonal_sd * rng.next_normal();
            ogs = seasonal_sd * rng.next_normal();
          }
          gamma[static_cast<std::size_t>(j)] = g * cg + gs * sg + og;
          gamma_star[static_cast<std::size_t>(j)] = -g * sg + gs * cg + ogs;
        }
      }
      TimeSeries ts = make_series(y);
      for (int j = 1; j <= n_freq; ++j) {
        record(static_cast<std::size_t>(1 + j), seasonal_test(ts, SeasonalTarget::single(j), vt_options));
      }
      record(static_cast<std::size_t>(2 + n_freq), seasonal_test(ts, SeasonalTarget::all(), vt_options));
    }
    // normality and stability on iid normals.
    {
      std::vector<double> e(static_cast<std::size_t>(T));
      for (auto& v : e) v = rng.next_normal();
      NormalityResult lv = lobato_velasco(e);
      const std::size_t lv_row = n_tests - 2;
      c[lv_row] += 1;
      if (lv.p_value <= 0.10) h[lv_row][0] += 1;
      if (lv.p_value <= 0.05) h[lv_row][1] += 1;
      if (lv.p_value <= 0.01) h[lv_row][2] += 1;

      const std::size_t cu_row = n_tests - 1;
      c[cu_row] += 1;
      if (!cusum(e, 0.10).stable) h[cu_row][0] += 1;
      if (!cusum(e, 0.05).stable) h[cu_row][1] += 1;
      if (!cusum(e, 0.01).stable) h[cu_row][2] += 1;
    }
    rep_hits[static_cast<std::size_t>(rep)] = std::move(h);
    rep_counts[static_cast<std::size_t>(rep)] = std::move(c);
  });

  for (int rep = 0; rep < plan.replications; ++rep) {
    const auto& h = rep_hits[static_cast<std::size_t>(rep)];
    const auto& c = rep_counts[static_cast<std::size_t>(rep)];
    if (h.empty()) continue;  // failed replication
    for (std::size_t i = 0; i < n_tests; ++i) {
      for (int l = 0; l < 3; ++l) hits[i][static_cast<std::size_t>(l)] += h[i][static_cast<std::size_t>(l)];
      counts[i] += c[i];
    }
  }

  ExperimentReport report;
  report.kind = ExperimentKind::size_power;
  report.replications = plan.replications;
  report.failures = failures;
  report.tables.push_back(rates_table(
      plan.alt_seasonal_ratio > 0.0 ? "rejection_rates_alternative" : "rejection_rates_null",
      labels, hits, counts));
  return report;
}

ExperimentReport experiment_recovery(const SimulationPlan& plan) {
  if (!plan.spec || !plan.params) {
    throw ConfigError("recovery experiment: model spec and true params required");
  }
  const StateSpaceSystem truth = assemble(*plan.spec, *plan.params);
  const Eigen::VectorXd* init = plan.initial_state.size() > 0 ? &plan.initial_state : nullptr;

  struct Truth {
    std::string name;
    double value;
  };
  std::vector<Truth> targets;
  targets.push_back({"irregular_var", plan.params->irregular_var});
  if (plan.params->level_var > 0.0) targets.push_back({"level_var", plan.params->level_var});
  if (plan.params->slope_var > 0.0) targets.push_back({"slope_var", plan.params->slope_var});
  for (std::size_t i = 0; i < plan.params->seasonal_var.size(); ++i) {
    targets.push_back({plan.params->seasonal_var.size() == 1
                           ? "seasonal_var"
                           : "seasonal_var_" + std::to_string(i + 1),
                       plan.params->seasonal_var[i]});
  }
  if (plan.spec->cycle) targets.push_back({"cycle_var", plan.params->cycle_var});

  const std::size_t n_params = targets.size();
  std::vector<std::vector<double>> rel_errors(static_cast<std::size_t>(plan.replications));
  std::vector<double> drift_estimates(static_cast<std::size_t>(plan.replications),
                                      std::numeric_limits<double>::quiet_NaN());

  const int failures = parallel_replications(plan.replications, plan.threads, [&](int rep) {
    RngStream rng(plan.seed, static_cast<std::uint64_t>(rep));
    TimeSeries ts = simulate_ssm(truth, plan.length, rng, init);
    FitOptions fo;
    fo.restarts = plan.fit_restarts;
    fo.seed = plan.seed * 1000003ull + static_cast<std::uint64_t>(rep);
    FitResult fr = fit(*plan.spec, ts, fo);
    std::vector<double> errs;
    errs.reserve(n_params);
    auto estimated = [&](const std::string& name) -> double {
      if (name == "irregular_var") return fr.params.irregular_var;
      if (name == "level_var") return fr.params.level_var;
      if (name == "slope_var") return fr.params.slope_var;
      if (name == "cycle_var") return fr.params.cycle_var;
      if (name.rfind("seasonal_var", 0) == 0) {
        std::size_t idx = name == "seasonal_var" ? 0 : std::stoul(name.substr(13)) - 1;
        return fr.params.seasonal_var.at(idx);
      }
      throw InternalError("recovery: unknown parameter " + name);
    };
    for (const auto& target : targets) {
      errs.push_back(std::abs(estimated(target.name) - target.value) / target.value);
    }
    rel_errors[static_cast<std::size_t>(rep)] = std::move(errs);
    if (fr.params.drift.has_value()) {
      drift_estimates[static_cast<std::size_t>(rep)] = *fr.params.drift;
    }
  });

  ExperimentReport report;
  report.kind = ExperimentKind::recovery;
  report.replications = plan.replications;
  report.failures = failures;

  ExperimentTable var_table;
  var_table.name = "variance_recovery";
  var_table.columns = {"truth", "median_abs_rel_error", "replications"};
  for (std::size_t i = 0; i < n_params; ++i) {
    std::vector<double> errs;
    for (const auto& row : rel_errors) {
      if (row.size() == n_params) errs.push_back(row[i]);
    }
    std::sort(errs.begin(), errs.end());
    const double median = errs.empty() ? std::numeric_limits<double>::quiet_NaN()
                          : errs.size() % 2 == 1
                              ? errs[errs.size() / 2]
                              : 0.5 * (errs[errs.size() / 2 - 1] + errs[errs.size() / 2]);
    var_table.row_labels.push_back(targets[i].name);
    var_table.rows.push_back({targets[i].value, median, static_cast<double>(errs.size())});
  }
  report.tables.push_back(std::move(var_table));

  if (plan.params->drift.has_value()) {
    std::vector<double> drifts;
    for (double d : drift_estimates) {
      if (std::isfinite(d)) drifts.push_back(d);
    }
    ExperimentTable drift_table;
    drift_table.name = "drift_recovery";
    drift_table.columns = {"truth", "mean_estimate", "sd_estimate", "mc_se"};
    const double mean = stats::mean(drifts);
    const double sd = std::sqrt(stats::variance(drifts));
    drift_table.row_labels.push_back("drift");
    drift_table.rows.push_back(
        {*plan.params->drift, mean, sd, sd / std::sqrt(static_cast<double>(drifts.size()))});
    report.tables.push_back(std::move(drift_table));
  }
  return report;
}

ExperimentReport experiment_coverage(const SimulationPlan& plan) {
  if (!plan.spec || !plan.params) {
    throw ConfigError("coverage experiment: model spec and true params required");
  }
  const StateSpaceSystem truth = assemble(*plan.spec, *plan.params);
  const Eigen::VectorXd* init = plan.initial_state.size() > 0 ? &plan.initial_state : nullptr;
  const int max_h = *std::max_element(plan.horizons.begin(), plan.horizons.end());

  std::vector<std::vector<int>> covered(static_cast<std::size_t>(plan.replications));
  const int failures = parallel_replications(plan.replications, plan.threads, [&](int rep) {
    RngStream rng(plan.seed, static_cast<std::uint64_t>(rep));
    TimeSeries full = simulate_ssm(truth, plan.length + max_h, rng, init);
    TimeSeries train = slice(full, full.start, full.start.plus_months(plan.length - 1));

    FitOptions fo;
    fo.restarts = plan.fit_restarts;
    fo.seed = plan.seed * 1000003ull + static_cast<std::uint64_t>(rep);
    FitResult fr = fit(*plan.spec, train, fo);
    StateSpaceSystem fitted = assemble(*plan.spec, fr.params);
    FilterOutput filtered = filter(fitted, train);
    ForecastResult fc = forecast(fitted, filtered, train, max_h, 1.0 - plan.band_level);

    std::vector<int> ok(plan.horizons.size(), 0);
    for (std::size_t i = 0; i < plan.horizons.size(); ++i) {
      const int h = plan.horizons[i];
      const double y = *full.values[static_cast<std::size_t>(plan.length + h - 1)];
      const auto hi = static_cast<std::size_t>(h - 1);
      ok[i] = (y >= fc.lower[hi] && y <= fc.upper[hi]) ? 1 : 0;
    }
    covered[static_cast<std::size_t>(rep)] = std::move(ok);
  });

  ExperimentReport report;
  report.kind = ExperimentKind::coverage;
  report.replications = plan.replications;
  report.failures = failures;
  ExperimentTable table;
  table.name = "band_coverage";
  table.columns = {"horizon", "coverage", "mc_se", "replications"};
  for (std::size_t i = 0; i < plan.horizons.size(); ++i) {
    int hit = 0, n = 0;
    for (const auto& row : covered) {
      if (row.size() == plan.horizons.size()) {
        hit += row[i];
        n += 1;
      }
    }
    const double rate = n > 0 ? static_cast<double>(hit) / n : 0.0;
    table.row_labels.push_back("h_" + std::to_string(plan.horizons[i]));
    table.rows.push_back({static_cast<double>(plan.horizons[i]), rate,
                          std::sqrt(rate * (1.0 - rate) / std::max(n, 1)),
                          static_cast<double>(n)});
  }
  report.tables.push_back(std::move(table));
  return report;
}

}  // namespace

ExperimentReport run_experiment(const SimulationPlan& plan) {
  if (plan.replications < 1) throw RangeError("run_experiment: replications must be >= 1");
  switch (plan.kind) {
    case ExperimentKind::simulate:
      return experiment_simulate(plan);
    case ExperimentKind::critvals:
      return experiment_critvals(plan);
    case ExperimentKind::size_power:
      return experiment_size_power(plan);
    case ExperimentKind::recovery:
      return experiment_recovery(plan);
    case ExperimentKind::coverage:
      return experiment_coverage(plan);
  }
  throw InternalError("run_experiment: unknown experiment kind");
}

}  // namespace ucts
