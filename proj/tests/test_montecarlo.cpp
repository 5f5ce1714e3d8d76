#include <doctest.h>

#include <cmath>

#include "ucts/montecarlo.hpp"

using namespace ucts;

TEST_CASE("deterministic recursion: level 5 with unit drift counts upward") {
  ModelSpec spec;
  spec.trend = TrendKind::rw_drift;
  ParamVector p;
  p.drift = 1.0;
  auto sys = assemble(spec, p);
  Eigen::VectorXd init(2);
  init << 5.0, 1.0;
  TimeSeries ts = simulate_ssm(sys, 5, 1u, &init);
  for (int t = 0; t < 5; ++t) {
    CHECK(*ts.values[static_cast<std::size_t>(t)] == doctest::Approx(5.0 + t));
  }
}

TEST_CASE("pure irregular matches its moments over ten thousand draws") {
  ModelSpec spec;
  spec.trend = TrendKind::deterministic;
  ParamVector p;
  p.irregular_var = 1.0;
  auto sys = assemble(spec, p);
  Eigen::VectorXd init = Eigen::VectorXd::Zero(1);
  init(0) = 7.0;
  TimeSeries ts = simulate_ssm(sys, 10000, 42u, &init);
  double sum = 0.0, ss = 0.0;
  for (const auto& v : ts.values) {
    sum += *v;
    ss += (*v) * (*v);
  }
  const double mean = sum / 10000.0;
  const double var = ss / 10000.0 - mean * mean;
  CHECK(mean == doctest::Approx(7.0).epsilon(0.005));
  CHECK(var == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("noise-free undamped cycle is an exact sinusoid of the set period") {
  ModelSpec spec;
  spec.trend = TrendKind::deterministic;
  spec.cycle = CycleSpec{96.0, 1.0};
  ParamVector p;  // all variances zero
  auto sys = assemble(spec, p);
  Eigen::VectorXd init = Eigen::VectorXd::Zero(3);
  init(sys.layout.cycle) = 1.0;
  init(sys.layout.cycle + 1) = 0.0;
  TimeSeries ts = simulate_ssm(sys, 200, 9u, &init);
  const double lambda = 2.0 * M_PI / 96.0;
  for (int t = 0; t < 200; ++t) {
    CHECK(*ts.values[static_cast<std::size_t>(t)] ==
          doctest::Approx(std::cos(lambda * t)).epsilon(1e-9));
  }
  // exact periodicity after 96 steps
  CHECK(*ts.values[96] == doctest::Approx(*ts.values[0]).epsilon(1e-10));
}

TEST_CASE("simulation plans are bit-reproducible across thread counts") {
  SimulationPlan plan;
  plan.kind = ExperimentKind::critvals;
  plan.max_df = 3;
  plan.replications = 500;
  plan.grid_length = 200;
  plan.seed = 31;

  plan.threads = 1;
  auto serial = run_experiment(plan);
  plan.threads = 4;
  auto threaded = run_experiment(plan);
  REQUIRE(serial.tables.size() == threaded.tables.size());
  for (std::size_t t = 0; t < serial.tables.size(); ++t) {
    CHECK(serial.tables[t].rows == threaded.tables[t].rows);  // bit identical
  }
}

TEST_CASE("same plan and seed reproduce identical simulated series") {
  ModelSpec spec;
  spec.trend = TrendKind::local_level;
  ParamVector p;
  p.irregular_var = 1.0;
  p.level_var = 0.3;
  auto sys = assemble(spec, p);
  TimeSeries a = simulate_ssm(sys, 100, 123u);
  TimeSeries b = simulate_ssm(sys, 100, 123u);
  for (std::size_t t = 0; t < a.values.size(); ++t) {
    CHECK(*a.values[t] == *b.values[t]);
  }
}

TEST_CASE("critvals experiment reproduces the bridge distribution") {
  SimulationPlan plan;
  plan.kind = ExperimentKind::critvals;
  plan.max_df = 2;
  plan.replications = 4000;
  plan.grid_length = 500;
  plan.seed = 8675309;
  auto report = run_experiment(plan);
  REQUIRE(report.tables.size() == 1);
  const auto& table = report.tables[0];
  // df=1 5% near 0.461, df=2 5% near 0.749 (published values)
  CHECK(table.rows[0][1] == doctest::Approx(0.461).epsilon(0.06));
  CHECK(table.rows[1][1] == doctest::Approx(0.749).epsilon(0.06));
}

TEST_CASE("size experiment holds 5% within Monte Carlo noise on a quick run") {
  SimulationPlan plan;
  plan.kind = ExperimentKind::size_power;
  plan.length = 150;
  plan.replications = 300;
  plan.seed = 7;
  plan.threads = 1;
  auto report = run_experiment(plan);
  REQUIRE(report.tables.size() == 1);
  CHECK(report.failures == 0);
  const auto& table = report.tables[0];
  for (std::size_t row = 0; row < table.rows.size(); ++row) {
    const double rate5 = table.rows[row][1];
    INFO(table.row_labels[row]);
    CHECK(rate5 > 0.005);
    CHECK(rate5 < 0.13);
  }
}

TEST_CASE("power experiment rejects more often than size under the alternative") {
  SimulationPlan null_plan;
  null_plan.kind = ExperimentKind::size_power;
  null_plan.length = 150;
  null_plan.replications = 200;
  null_plan.seed = 99;
  auto null_report = run_experiment(null_plan);

  SimulationPlan alt_plan = null_plan;
  alt_plan.alt_seasonal_ratio = 0.1;
  auto alt_report = run_experiment(alt_plan);

  // Compare the joint seasonal row.
  const auto& labels = null_report.tables[0].row_labels;
  std::size_t joint_row = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == "seasonal_joint") joint_row = i;
  }
  CHECK(alt_report.tables[0].rows[joint_row][1] > null_report.tables[0].rows[joint_row][1]);
}

TEST_CASE("experiment plans validate their inputs") {
  SimulationPlan plan;
  plan.kind = ExperimentKind::recovery;
  plan.replications = 5;
  CHECK_THROWS_AS(run_experiment(plan), ConfigError);  // needs spec + params
  plan.kind = ExperimentKind::simulate;
  plan.replications = 0;
  CHECK_THROWS_AS(run_experiment(plan), RangeError);
}
