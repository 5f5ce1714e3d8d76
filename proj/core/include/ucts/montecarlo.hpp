#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ucts/model_spec.hpp"
#include "ucts/rng.hpp"
#include "ucts/time_series.hpp"
#include "ucts/variance_tests.hpp"

namespace ucts {

// Forward simulation of an assembled system. Diffuse states start at the
// entries of initial_state (a1 when absent); proper-prior states add a
// draw from P_star. Disturbances are independent normals.
TimeSeries simulate_ssm(const StateSpaceSystem& system, int length, RngStream& rng,
                        const Eigen::VectorXd* initial_state = nullptr,
                        MonthIndex start = MonthIndex{2000, 1});

TimeSeries simulate_ssm(const StateSpaceSystem& system, int length, std::uint64_t seed,
                        const Eigen::VectorXd* initial_state = nullptr,
                        MonthIndex start = MonthIndex{2000, 1});

enum class ExperimentKind { simulate, critvals, size_power, recovery, coverage };

struct SimulationPlan {
  ExperimentKind kind = ExperimentKind::simulate;
  std::optional<ModelSpec> spec;
  std::optional<ParamVector> params;
  Eigen::VectorXd initial_state;  // may be empty
  int length = 150;
  int replications = 1;
  std::uint64_t seed = 1;
  int threads = 0;  // 0 -> hardware concurrency

  // critvals
  int max_df = 12;
  int grid_length = 2000;

  // size_power: test battery significance level
  double significance = 0.05;
  // alternative seasonal disturbance scale relative to sigma_eps^2; 0 keeps
  // the null DGP
  double alt_seasonal_ratio = 0.0;

  // coverage
  std::vector<int> horizons = {1, 12, 36};
  double band_level = 0.95;
  int fit_restarts = 2;
};

struct ExperimentTable {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
  std::vector<std::string> row_labels;
};

struct ExperimentReport {
  ExperimentKind kind = ExperimentKind::simulate;
  std::vector<ExperimentTable> tables;
  int replications = 0;
  int failures = 0;  // replications that threw; counted, never dropped
};

// Deterministic given the plan: replication i always uses substream
// (seed, i) and reductions run in replication order, so results are
// identical across thread counts.
ExperimentReport run_experiment(const SimulationPlan& plan);

// Monte Carlo table of the generalized Cramer-von Mises distribution:
// quantiles of sums of df independent squared-Brownian-bridge integrals
// discretized at grid_length points.
CvmTable generate_cvm_table(int max_df, int replications, int grid_length,
                            std::uint64_t seed, int threads = 0);

// Runs fn(rep) for rep in [0, n) across up to `threads` workers; results
// must be written into per-rep slots by the caller. Failures are counted.
int parallel_replications(int n, int threads, const std::function<void(int)>& fn);

}  // namespace ucts
