#include <CLI11.hpp>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <sstream>

#include "ucts/counterfactual.hpp"
#include "ucts/diagnostics.hpp"
#include "ucts/errors.hpp"
#include "ucts/estimation.hpp"
#include "ucts/kalman.hpp"
#include "ucts/model_spec.hpp"
#include "ucts/montecarlo.hpp"
#include "ucts/series.hpp"
#include "ucts/variance_tests.hpp"
#include "ucts/version.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace ucts;

namespace {

// ---------------------------------------------------------------------------
// Run plumbing: effective config echo, hashing, atomic writes.

struct RunContext {
  std::string out_dir = ".";
  std::uint64_t seed = 1;
  bool quiet = false;
  std::vector<std::pair<std::string, std::string>> config;  // insertion order

  void set(const std::string& key, const std::string& value) { config.emplace_back(key, value); }
  void set(const std::string& key, std::uint64_t value) { set(key, std::to_string(value)); }
  void set(const std::string& key, int value) { set(key, std::to_string(value)); }
  void set(const std::string& key, double value) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    set(key, std::string(buf));
  }

  std::string canonical() const {
    std::string out;
    for (const auto& [k, v] : config) out += k + " = " + v + "\n";
    return out;
  }

  std::string hash() const {
    std::uint64_t h = 1469598103934665603ull;
    for (char c : canonical()) {
      h ^= static_cast<unsigned char>(c);
      h *= 1099511628211ull;
    }
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
  }

  std::string file_banner() const {
    return std::string("ucts ") + ucts::version() + " config=" + hash();
  }

  void attach_meta(json& j) const {
    j["tool"] = "ucts";
    j["version"] = ucts::version();
    j["config_hash"] = hash();
    json cfg = json::object();
    for (const auto& [k, v] : config) cfg[k] = v;
    j["effective_config"] = cfg;
  }
};

void atomic_write(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write to '" + tmp.string() + "'");
    out << content;
  }
  fs::rename(tmp, path);
}

std::string format_double(double v, int precision = 6) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.*f", precision, v);
  return std::string(buf);
}

std::string format_g(double v) {
  char buf[40];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  return std::string(buf, ptr);
}

TimeSeries load_series(const std::string& path, bool take_log, const std::string& label) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open series file '" + path + "'");
  TimeSeries ts = read_series_csv(in, label.empty() ? fs::path(path).stem().string() : label);
  return take_log ? log_transform(ts) : ts;
}

json params_to_json(const ParamVector& p) {
  json j;
  j["irregular_var"] = p.irregular_var;
  j["level_var"] = p.level_var;
  j["slope_var"] = p.slope_var;
  j["seasonal_var"] = p.seasonal_var;
  j["cycle_var"] = p.cycle_var;
  if (p.drift.has_value()) {
    j["drift"] = *p.drift;
  } else {
    j["drift"] = nullptr;
  }
  return j;
}

json model_to_json(const ModelSpec& spec) {
  json j;
  j["trend"] = to_string(spec.trend);
  if (spec.seasonal) {
    j["seasonal"] = {{"period", spec.seasonal->period},
                     {"harmonics", spec.seasonal->harmonics},
                     {"variance_mode",
                      spec.seasonal->variance_mode == SeasonalVarianceMode::common
                          ? "common"
                          : "per_harmonic"}};
  } else {
    j["seasonal"] = nullptr;
  }
  if (spec.cycle) {
    j["cycle"] = {{"period", spec.cycle->period}, {"damping", spec.cycle->damping}};
  } else {
    j["cycle"] = nullptr;
  }
  return j;
}

json fit_to_json(const FitResult& fr) {
  json j;
  j["model"] = model_to_json(fr.spec);
  j["params"] = params_to_json(fr.params);
  j["loglik"] = fr.loglik;
  j["k"] = fr.k;
  j["n"] = fr.n;
  j["aic"] = fr.ic.aic;
  j["bic"] = fr.ic.bic;
  j["aicc"] = fr.ic.aicc;
  j["converged"] = fr.converged;
  j["iterations"] = fr.iterations;
  j["gradient_norm"] = fr.gradient_norm;
  j["restarts"] = fr.restarts_used;
  j["best_restart"] = fr.best_restart;
  return j;
}

ParamVector params_from_sets(const ModelSpec& spec, const std::vector<std::string>& sets) {
  ParamVector p;
  if (spec.seasonal) {
    const std::size_t slots = spec.seasonal->variance_mode == SeasonalVarianceMode::common
                                  ? 1
                                  : spec.seasonal->harmonics.size();
    p.seasonal_var.assign(slots, 0.0);
  }
  for (const auto& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("--set expects name=value, got '" + kv + "'");
    }
    const std::string key = kv.substr(0, eq);
    const double value = std::stod(kv.substr(eq + 1));
    if (key == "irregular_var") {
      p.irregular_var = value;
    } else if (key == "level_var") {
      p.level_var = value;
    } else if (key == "slope_var") {
      p.slope_var = value;
    } else if (key == "cycle_var") {
      p.cycle_var = value;
    } else if (key == "drift") {
      p.drift = value;
    } else if (key == "seasonal_var") {
      if (p.seasonal_var.empty()) throw ConfigError("seasonal_var set without a seasonal spec");
      std::fill(p.seasonal_var.begin(), p.seasonal_var.end(), value);
    } else if (key.rfind("seasonal_var_", 0) == 0) {
      const std::size_t idx = std::stoul(key.substr(13));
      if (idx < 1 || idx > p.seasonal_var.size()) {
        throw ConfigError("seasonal_var index out of range in '" + kv + "'");
      }
      p.seasonal_var[idx - 1] = value;
    } else {
      throw ConfigError("unknown parameter '" + key + "' in --set");
    }
  }
  return p;
}

// ---------------------------------------------------------------------------
// Subcommands.

int cmd_ingest(RunContext& ctx, const std::string& input, const ColumnMapping& mapping,
               const std::string& label) {
  ctx.set("command", "ingest");
  ctx.set("input", input);
  ctx.set("date_column", mapping.date_column);
  ctx.set("price_column", mapping.price_column);
  ctx.set("shares_column", mapping.shares_column);
  ctx.set("mdy_dates", mapping.mdy_dates ? "true" : "false");
  ctx.set("label", label);

  std::ifstream in(input);
  if (!in) throw ConfigError("cannot open input file '" + input + "'");
  IngestResult result = ingest_daily_csv(in, mapping);
  if (result.quotes.empty()) throw DataError("ingest: no usable rows in '" + input + "'");
  TimeSeries monthly = to_monthly_market_cap(result.quotes, label);

  std::ostringstream series;
  write_series_csv(series, monthly, ctx.file_banner());
  atomic_write(fs::path(ctx.out_dir) / "series.csv", series.str());

  json report;
  ctx.attach_meta(report);
  report["rows_ingested"] = result.quotes.size();
  report["rows_skipped"] = result.skipped.size();
  json skips = json::array();
  for (const auto& s : result.skipped) {
    skips.push_back({{"line", s.line_number}, {"reason", s.reason}});
  }
  report["skipped"] = skips;
  report["months"] = monthly.values.size();
  report["missing_months"] = monthly.values.size() - monthly.observed_count();
  report["start"] = monthly.start.to_string();
  report["end"] = monthly.end_month().to_string();
  atomic_write(fs::path(ctx.out_dir) / "ingest_report.json", report.dump(2) + "\n");

  if (!ctx.quiet) {
    std::cout << "ingested " << result.quotes.size() << " daily rows ("
              << result.skipped.size() << " skipped) -> " << monthly.values.size()
              << " months [" << monthly.start.to_string() << " .. "
              << monthly.end_month().to_string() << "], "
              << monthly.values.size() - monthly.observed_count() << " missing\n"
              << "wrote " << (fs::path(ctx.out_dir) / "series.csv").string() << "\n";
  }
  return 0;
}

int cmd_fit(RunContext& ctx, const std::string& series_path, const std::string& model_path,
            bool take_log, const FitOptions& options) {
  ctx.set("command", "fit");
  ctx.set("series", series_path);
  ctx.set("model", model_path);
  ctx.set("log", take_log ? "true" : "false");
  ctx.set("restarts", options.restarts);
  ctx.set("tolerance", options.tolerance);
  ctx.set("max_iterations", options.max_iterations);
  ctx.set("seed", options.seed);

  const ModelSpec spec = parse_model_spec_file(model_path);
  const TimeSeries ts = load_series(series_path, take_log, "");
  const FitResult fr = fit(spec, ts, options);

  json j;
  ctx.attach_meta(j);
  j.update(fit_to_json(fr));
  j["sample"] = {{"start", ts.start.to_string()},
                 {"end", ts.end_month().to_string()},
                 {"observed", fr.n},
                 {"scale", ts.scale == Scale::log ? "log" : "level"},
                 {"label", ts.label}};
  j["classification"] = classify(fr.params, spec.trend).label();
  atomic_write(fs::path(ctx.out_dir) / "fit.json", j.dump(2) + "\n");

  if (!ctx.quiet) {
    std::cout << "model: " << canonical_model_spec(spec);
    std::cout << "loglik " << format_double(fr.loglik, 3) << "  AIC "
              << format_double(fr.ic.aic, 3) << "  BIC " << format_double(fr.ic.bic, 3)
              << "  AICc " << format_double(fr.ic.aicc, 3) << "  (k=" << fr.k << ", n=" << fr.n
              << ")\n"
              << (fr.converged ? "converged" : "NOT converged") << " after " << fr.iterations
              << " iterations, gradient norm " << format_g(fr.gradient_norm) << "\n"
              << "wrote " << (fs::path(ctx.out_dir) / "fit.json").string() << "\n";
  }
  return 0;
}

void print_test_row(std::ostream& out, const TestResult& r) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "  %-22s %10.4f%-4s df=%-3d [10%%: %.3f  5%%: %.3f  1%%: %.3f]\n",
                r.name.c_str(), r.statistic, r.star_string().c_str(), r.df, r.crit_10, r.crit_05,
                r.crit_01);
  out << buf;
}

int cmd_test(RunContext& ctx, const std::string& series_path, bool take_log,
             const VarianceTestOptions& options) {
  ctx.set("command", "test");
  ctx.set("series", series_path);
  ctx.set("log", take_log ? "true" : "false");
  ctx.set("period", options.period);
  ctx.set("nw_lags", options.nw_lags);

  const TimeSeries ts = load_series(series_path, take_log, "");

  std::vector<TestResult> results;
  results.push_back(level_test(ts, options));
  results.push_back(slope_test(ts, options));
  const int n_freq = options.period / 2;
  std::vector<int> group_rest;
  for (int j = 1; j <= n_freq; ++j) {
    results.push_back(seasonal_test(ts, SeasonalTarget::single(j), options));
    if (j > 1) group_rest.push_back(j);
  }
  results.push_back(seasonal_test(ts, SeasonalTarget::group({1}), options));
  if (!group_rest.empty()) {
    results.push_back(seasonal_test(ts, SeasonalTarget::group(group_rest), options));
  }
  results.push_back(seasonal_test(ts, SeasonalTarget::all(), options));

  std::ostringstream text;
  text << "# " << ctx.file_banner() << "\n";
  text << "Variance tests (" << ts.label << ", " << ts.start.to_string() << " .. "
       << ts.end_month().to_string() << ")\n";
  text << "stars: * 10%  ** 5%  *** 1% (generalized Cramer-von Mises)\n";
  for (const auto& r : results) print_test_row(text, r);
  atomic_write(fs::path(ctx.out_dir) / "test_report.txt", text.str());

  json j;
  ctx.attach_meta(j);
  json rows = json::array();
  for (const auto& r : results) {
    rows.push_back({{"name", r.name},
                    {"statistic", r.statistic},
                    {"df", r.df},
                    {"crit_10", r.crit_10},
                    {"crit_05", r.crit_05},
                    {"crit_01", r.crit_01},
                    {"stars", r.stars},
                    {"reject_at_5", r.reject_at_5},
                    {"residual_source", r.residual_source}});
  }
  j["tests"] = rows;
  atomic_write(fs::path(ctx.out_dir) / "test_report.json", j.dump(2) + "\n");

  if (!ctx.quiet) {
    std::cout << text.str() << "wrote " << (fs::path(ctx.out_dir) / "test_report.json").string()
              << "\n";
  }
  return 0;
}

int cmd_diagnose(RunContext& ctx, const std::string& series_path, const std::string& model_path,
                 bool take_log, const FitOptions& fit_options, DiagnosticsOptions options) {
  ctx.set("command", "diagnose");
  ctx.set("series", series_path);
  ctx.set("model", model_path);
  ctx.set("log", take_log ? "true" : "false");
  ctx.set("ljung_box_lags", options.ljung_box_lags);
  ctx.set("seed", fit_options.seed);

  const ModelSpec spec = parse_model_spec_file(model_path);
  const TimeSeries ts = load_series(series_path, take_log, "");
  const FitResult fr = fit(spec, ts, fit_options);
  const StateSpaceSystem system = assemble(spec, fr.params);
  const FilterOutput filtered = filter(system, ts);
  const SmootherOutput smoothed = smooth(system, filtered);
  const std::vector<double> e = filtered.standardized_innovations();

  options.fitted_params = fr.k;
  const DiagnosticsReport report = diagnose(e, options);

  std::ostringstream text;
  text << "# " << ctx.file_banner() << "\n";
  text << "Diagnostics (" << ts.label << ", n=" << e.size() << " standardized innovations)\n";
  char buf[200];
  std::snprintf(buf, sizeof(buf), "  Ljung-Box[%d]      Q = %8.3f   p = %.4f (df=%d; raw-df p = %.4f)\n",
                report.ljung_box.lags, report.ljung_box.q, report.ljung_box.p_value,
                report.ljung_box.df, report.ljung_box.p_value_raw);
  text << buf;
  std::snprintf(buf, sizeof(buf), "  Heteroskedasticity H(%d) = %8.3f   p = %.4f\n",
                report.hetero.h, report.hetero.h_stat, report.hetero.p_value);
  text << buf;
  std::snprintf(buf, sizeof(buf), "  LV normality       G = %8.3f   p = %.4f\n",
                report.normality.statistic, report.normality.p_value);
  text << buf;
  std::snprintf(buf, sizeof(buf), "  CUSUM              %s (5%% boundaries)\n",
                report.cusum.stable ? "stable" : "UNSTABLE");
  text << buf;
  std::snprintf(buf, sizeof(buf), "  Log-likelihood %10.3f   AIC %10.3f   BIC %10.3f   AICc %10.3f\n",
                fr.loglik, fr.ic.aic, fr.ic.bic, fr.ic.aicc);
  text << buf;
  atomic_write(fs::path(ctx.out_dir) / "diagnostics.txt", text.str());

  json j;
  ctx.attach_meta(j);
  j["fit"] = fit_to_json(fr);
  j["ljung_box"] = {{"q", report.ljung_box.q},
                    {"lags", report.ljung_box.lags},
                    {"df", report.ljung_box.df},
                    {"p_value", report.ljung_box.p_value},
                    {"p_value_raw", report.ljung_box.p_value_raw}};
  j["heteroskedasticity"] = {{"h_stat", report.hetero.h_stat},
                             {"h", report.hetero.h},
                             {"p_value", report.hetero.p_value}};
  j["normality"] = {{"statistic", report.normality.statistic},
                    {"p_value", report.normality.p_value},
                    {"skewness_component", report.normality.skewness_component},
                    {"kurtosis_component", report.normality.kurtosis_component}};
  j["cusum"] = {{"stable", report.cusum.stable}, {"boundary_a", report.cusum.boundary_a}};
  atomic_write(fs::path(ctx.out_dir) / "diagnostics.json", j.dump(2) + "\n");

  // Appendix-style data files.
  {
    std::ostringstream csv;
    csv << "# " << ctx.file_banner() << "\n";
    csv << "t,residual\n";
    for (std::size_t i = 0; i < report.residuals.size(); ++i) {
      csv << (i + 1) << ',' << format_g(report.residuals[i]) << '\n';
    }
    atomic_write(fs::path(ctx.out_dir) / "residuals.csv", csv.str());
  }
  {
    std::ostringstream csv;
    csv << "# " << ctx.file_banner() << "\n";
    csv << "lag,acf\n";
    for (std::size_t k = 0; k < report.acf.size(); ++k) {
      csv << k << ',' << format_g(report.acf[k]) << '\n';
    }
    atomic_write(fs::path(ctx.out_dir) / "acf.csv", csv.str());
  }
  {
    std::ostringstream csv;
    csv << "# " << ctx.file_banner() << "\n";
    csv << "theoretical,empirical\n";
    for (const auto& [q, v] : report.qq) csv << format_g(q) << ',' << format_g(v) << '\n';
    atomic_write(fs::path(ctx.out_dir) / "qq.csv", csv.str());
  }
  {
    std::ostringstream csv;
    csv << "# " << ctx.file_banner() << "\n";
    csv << "t,path,lower,upper\n";
    for (std::size_t i = 0; i < report.cusum.path.size(); ++i) {
      csv << (i + 1) << ',' << format_g(report.cusum.path[i]) << ','
          << format_g(report.cusum.lower[i]) << ',' << format_g(report.cusum.upper[i]) << '\n';
    }
    atomic_write(fs::path(ctx.out_dir) / "cusum.csv", csv.str());
  }
  {
    // Full filter path: observed, smoothed fit, innovation, its variance,
    // and the standardized innovation where defined.
    std::ostringstream csv;
    csv << "# " << ctx.file_banner() << "\n";
    csv << "t,observed,fitted,v,F,e\n";
    for (int t = 0; t < filtered.n; ++t) {
      const auto i = static_cast<std::size_t>(t);
      csv << (t + 1) << ',';
      if (ts.values[i].has_value()) csv << format_g(*ts.values[i]);
      csv << ',' << format_g(system.Z.dot(smoothed.alphahat[i])) << ',';
      if (!std::isnan(filtered.v[i])) csv << format_g(filtered.v[i]);
      csv << ',';
      if (!std::isnan(filtered.F[i])) csv << format_g(filtered.F[i]);
      csv << ',';
      if (!std::isnan(filtered.e[i])) csv << format_g(filtered.e[i]);
      csv << '\n';
    }
    atomic_write(fs::path(ctx.out_dir) / "filter.csv", csv.str());
  }

  if (!ctx.quiet) {
    std::cout << text.str()
              << "wrote diagnostics.json, residuals.csv, acf.csv, qq.csv, cusum.csv, filter.csv in "
              << ctx.out_dir << "\n";
  }
  return 0;
}

int cmd_impact(RunContext& ctx, const std::string& series_path, const std::string& model_path,
               const EventStudyConfig& config, const FitOptions& fit_options) {
  ctx.set("command", "impact");
  ctx.set("series", series_path);
  ctx.set("model", model_path);
  ctx.set("train_start", config.train_start.to_string());
  ctx.set("train_end", config.train_end.to_string());
  ctx.set("event_month", config.event_month.to_string());
  ctx.set("horizon_months", config.horizon_months);
  ctx.set("band_level", config.band_level);
  ctx.set("persistence_months", config.persistence_months);
  ctx.set("discount_rate", config.discount_rate);
  ctx.set("mean_correction",
          config.mean_correction == MeanCorrection::median ? "median" : "lognormal_mean");
  ctx.set("seed", fit_options.seed);

  const ModelSpec spec = parse_model_spec_file(model_path);
  const TimeSeries ts = load_series(series_path, false, "");
  const EventStudyResult result = run_event_study(ts, spec, config, fit_options);

  // bands.csv: the observed-vs-counterfactual figure data.
  {
    std::ostringstream csv;
    csv << "# " << ctx.file_banner() << "\n";
    csv << "year,month,observed,counterfactual,lower,upper\n";
    for (std::size_t h = 0; h < result.counterfactual.values.size(); ++h) {
      const MonthIndex m = result.counterfactual.month_at(h);
      csv << m.year << ',' << m.month << ',';
      const auto obs_idx = ts.index_of(m);
      if (obs_idx.has_value() && ts.values[*obs_idx].has_value()) {
        csv << format_g(*ts.values[*obs_idx]);
      }
      csv << ',' << format_g(*result.counterfactual.values[h]) << ','
          << format_g(*result.band_lower.values[h]) << ','
          << format_g(*result.band_upper.values[h]) << '\n';
    }
    atomic_write(fs::path(ctx.out_dir) / "bands.csv", csv.str());
  }

  // losses.csv: the loss-of-value table.
  {
    std::ostringstream csv;
    csv << "# " << ctx.file_banner() << "\n";
    csv << "window_years,avg_loss,pct_loss,months_used,partial\n";
    for (const auto& row : result.report.rows) {
      csv << row.window_years << ',' << format_g(row.avg_loss) << ',' << format_g(row.pct_loss)
          << ',' << row.months_used << ',' << (row.partial ? 1 : 0) << '\n';
    }
    atomic_write(fs::path(ctx.out_dir) / "losses.csv", csv.str());
  }

  json j;
  ctx.attach_meta(j);
  j["fit"] = fit_to_json(result.fit);
  json rows = json::array();
  for (const auto& row : result.report.rows) {
    rows.push_back({{"window_years", row.window_years},
                    {"avg_loss", row.avg_loss},
                    {"pct_loss", row.pct_loss},
                    {"months_used", row.months_used},
                    {"partial", row.partial}});
  }
  j["losses"] = rows;
  j["recovery_month"] = result.report.recovery_month.has_value()
                            ? json(result.report.recovery_month->to_string())
                            : json(nullptr);
  json excluded = json::array();
  for (const auto& m : result.report.excluded_months) excluded.push_back(m.to_string());
  j["excluded_months"] = excluded;
  j["baseline_prebreak_avg"] = result.report.baseline_prebreak_avg;
  j["baseline_months"] = result.report.baseline_months;
  j["one_year_drop_pct"] = result.report.one_year_drop_pct;
  atomic_write(fs::path(ctx.out_dir) / "report.json", j.dump(2) + "\n");

  if (!ctx.quiet) {
    std::cout << "Loss of value after " << config.event_month.to_string() << " ("
              << ts.label << ")\n";
    for (const auto& row : result.report.rows) {
      std::cout << "  " << row.window_years << "-yr average: " << format_double(row.avg_loss, 2)
                << "  (" << format_double(row.pct_loss, 2) << "%)"
                << (row.partial ? " [partial]" : "") << "\n";
    }
    std::cout << "  recovery: "
              << (result.report.recovery_month.has_value()
                      ? result.report.recovery_month->to_string()
                      : std::string("none within horizon"))
              << ", 1-yr average drop " << format_double(result.report.one_year_drop_pct, 1)
              << "%\n"
              << "wrote report.json, bands.csv, losses.csv in " << ctx.out_dir << "\n";
  }
  return 0;
}

int cmd_simulate(RunContext& ctx, const std::string& model_path,
                 const std::vector<std::string>& sets, int length, int reps,
                 const std::string& initial) {
  ctx.set("command", "simulate");
  ctx.set("model", model_path);
  for (const auto& s : sets) ctx.set("set", s);
  ctx.set("length", length);
  ctx.set("replications", reps);
  ctx.set("seed", ctx.seed);
  ctx.set("initial", initial);

  const ModelSpec spec = parse_model_spec_file(model_path);
  const ParamVector params = params_from_sets(spec, sets);
  const StateSpaceSystem system = assemble(spec, params);

  Eigen::VectorXd init;
  if (!initial.empty()) {
    std::stringstream ss(initial);
    std::string tok;
    std::vector<double> vals;
    while (std::getline(ss, tok, ',')) vals.push_back(std::stod(tok));
    if (static_cast<int>(vals.size()) != system.dim()) {
      throw ConfigError("--initial needs " + std::to_string(system.dim()) + " values");
    }
    init = Eigen::Map<Eigen::VectorXd>(vals.data(), static_cast<long>(vals.size()));
  }

  std::ostringstream csv;
  if (reps == 1) {
    // Plain series schema so the file feeds straight into `fit`/`test`.
    RngStream rng(ctx.seed, 0);
    TimeSeries ts = simulate_ssm(system, length, rng, init.size() > 0 ? &init : nullptr);
    ts.label = "simulated";
    write_series_csv(csv, ts, ctx.file_banner());
  } else {
    csv << "# " << ctx.file_banner() << "\n";
    csv << "rep,year,month,value\n";
    for (int rep = 0; rep < reps; ++rep) {
      RngStream rng(ctx.seed, static_cast<std::uint64_t>(rep));
      TimeSeries ts = simulate_ssm(system, length, rng, init.size() > 0 ? &init : nullptr);
      for (std::size_t t = 0; t < ts.values.size(); ++t) {
        const MonthIndex m = ts.month_at(t);
        csv << rep << ',' << m.year << ',' << m.month << ',' << format_g(*ts.values[t]) << '\n';
      }
    }
  }
  atomic_write(fs::path(ctx.out_dir) / "simulated.csv", csv.str());
  if (!ctx.quiet) {
    std::cout << "simulated " << reps << " x " << length << " months (m=" << system.dim()
              << ") -> " << (fs::path(ctx.out_dir) / "simulated.csv").string() << "\n";
  }
  return 0;
}

int cmd_mc_critvals(RunContext& ctx, int max_df, int replications, int grid, int threads) {
  ctx.set("command", "mc-critvals");
  ctx.set("max_df", max_df);
  ctx.set("replications", replications);
  ctx.set("grid", grid);
  ctx.set("seed", ctx.seed);

  CvmTable table = generate_cvm_table(max_df, replications, grid, ctx.seed, threads);
  table.provenance += " config=" + ctx.hash();
  std::ostringstream out;
  write_cvm_table(out, table);
  atomic_write(fs::path(ctx.out_dir) / "cvm_critical_values.csv", out.str());
  if (!ctx.quiet) {
    std::cout << "wrote " << (fs::path(ctx.out_dir) / "cvm_critical_values.csv").string()
              << " (df 1.." << max_df << ", " << replications << " replications)\n";
    for (int df : {1, 2, 11}) {
      if (df <= table.max_df) {
        std::cout << "  df=" << df << ": 10% " << format_double(table.at(df, 0.10), 3) << "  5% "
                  << format_double(table.at(df, 0.05), 3) << "  1% "
                  << format_double(table.at(df, 0.01), 3) << "\n";
      }
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ucts - structural time-series models, stationarity tests, and counterfactual "
               "event studies"};
  app.set_config("--config");
  app.require_subcommand(1);

  RunContext ctx;
  app.add_option("--out", ctx.out_dir, "Output directory")->capture_default_str();
  app.add_option("--seed", ctx.seed, "Random seed")->capture_default_str();
  app.add_flag("--quiet", ctx.quiet, "Suppress the stdout summary");

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Daily quote CSV -> monthly market-cap series");
  std::string in_path, label = "market_cap";
  ColumnMapping mapping;
  ingest->add_option("--input", in_path, "Daily CSV file")->required();
  ingest->add_option("--date-col", mapping.date_column)->capture_default_str();
  ingest->add_option("--price-col", mapping.price_column)->capture_default_str();
  ingest->add_option("--shares-col", mapping.shares_column)->capture_default_str();
  ingest->add_flag("--mdy", mapping.mdy_dates, "Parse dates as M/D/YYYY instead of ISO");
  ingest->add_option("--label", label)->capture_default_str();

  // shared fit options
  FitOptions fit_options;
  std::string series_path, model_path;
  bool take_log = false;

  auto add_fit_options = [&](CLI::App* cmd) {
    cmd->add_option("--series", series_path, "Monthly series CSV")->required();
    cmd->add_option("--model", model_path, "Model spec file")->required();
    cmd->add_flag("--log", take_log, "Log-transform the series first");
    cmd->add_option("--restarts", fit_options.restarts)->capture_default_str();
    cmd->add_option("--tol", fit_options.tolerance)->capture_default_str();
    cmd->add_option("--max-iter", fit_options.max_iterations)->capture_default_str();
  };

  auto* fit_cmd = app.add_subcommand("fit", "Quasi-maximum-likelihood fit");
  add_fit_options(fit_cmd);

  // test
  auto* test_cmd = app.add_subcommand("test", "Level/slope/seasonal variance test battery");
  std::string test_series;
  bool test_log = false;
  VarianceTestOptions vt_options;
  test_cmd->add_option("--series", test_series, "Monthly series CSV")->required();
  test_cmd->add_flag("--log", test_log, "Log-transform the series first");
  test_cmd->add_option("--period", vt_options.period)->capture_default_str();
  test_cmd->add_option("--nw-lags", vt_options.nw_lags,
                       "Newey-West lags (-1: automatic, 0: none)")->capture_default_str();

  // diagnose
  auto* diag_cmd = app.add_subcommand("diagnose", "Post-fit residual diagnostics");
  DiagnosticsOptions diag_options;
  add_fit_options(diag_cmd);
  diag_cmd->add_option("--lags", diag_options.ljung_box_lags, "Ljung-Box lags")
      ->capture_default_str();

  // impact
  auto* impact_cmd = app.add_subcommand("impact", "Counterfactual event study");
  EventStudyConfig event_config;
  std::string train_start, train_end, event_month, mean_correction = "median", windows = "1,2,3,5";
  impact_cmd->add_option("--series", series_path, "Monthly level series CSV")->required();
  impact_cmd->add_option("--model", model_path, "Model spec file")->required();
  impact_cmd->add_option("--train-start", train_start, "YYYY-MM")->required();
  impact_cmd->add_option("--train-end", train_end, "YYYY-MM")->required();
  impact_cmd->add_option("--event", event_month, "Event month YYYY-MM")->required();
  impact_cmd->add_option("--horizon", event_config.horizon_months, "Forecast months")
      ->capture_default_str();
  impact_cmd->add_option("--band", event_config.band_level)->capture_default_str();
  impact_cmd->add_option("--persistence", event_config.persistence_months)->capture_default_str();
  impact_cmd->add_option("--discount", event_config.discount_rate, "Per-month discount rate")
      ->capture_default_str();
  impact_cmd->add_option("--mean-correction", mean_correction, "median | lognormal_mean")
      ->capture_default_str();
  impact_cmd->add_option("--windows", windows, "Loss windows in years")->capture_default_str();
  impact_cmd->add_option("--restarts", fit_options.restarts)->capture_default_str();

  // simulate
  auto* sim_cmd = app.add_subcommand("simulate", "Simulate from an assembled model");
  std::vector<std::string> sets;
  int sim_length = 150, sim_reps = 1;
  std::string sim_initial;
  sim_cmd->add_option("--model", model_path, "Model spec file")->required();
  sim_cmd->add_option("--set", sets, "Parameter assignments name=value (repeatable)");
  sim_cmd->add_option("--length", sim_length)->capture_default_str();
  sim_cmd->add_option("--reps", sim_reps)->capture_default_str();
  sim_cmd->add_option("--initial", sim_initial, "Comma-separated initial state");

  // mc-critvals
  auto* mc_cmd = app.add_subcommand("mc-critvals", "Monte Carlo Cramer-von Mises table");
  int mc_df = 12, mc_reps = 100000, mc_grid = 2000, mc_threads = 0;
  mc_cmd->add_option("--max-df", mc_df)->capture_default_str();
  mc_cmd->add_option("--replications", mc_reps)->capture_default_str();
  mc_cmd->add_option("--grid", mc_grid)->capture_default_str();
  mc_cmd->add_option("--threads", mc_threads)->capture_default_str();

  // Global flags may trail the subcommand arguments.
  for (CLI::App* sub : {ingest, fit_cmd, test_cmd, diag_cmd, impact_cmd, sim_cmd, mc_cmd}) {
    sub->fallthrough();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    fit_options.seed = ctx.seed;
    if (ingest->parsed()) return cmd_ingest(ctx, in_path, mapping, label);
    if (fit_cmd->parsed()) return cmd_fit(ctx, series_path, model_path, take_log, fit_options);
    if (test_cmd->parsed()) return cmd_test(ctx, test_series, test_log, vt_options);
    if (diag_cmd->parsed()) {
      return cmd_diagnose(ctx, series_path, model_path, take_log, fit_options, diag_options);
    }
    if (impact_cmd->parsed()) {
      event_config.train_start = MonthIndex::parse(train_start);
      event_config.train_end = MonthIndex::parse(train_end);
      event_config.event_month = MonthIndex::parse(event_month);
      if (mean_correction == "median") {
        event_config.mean_correction = MeanCorrection::median;
      } else if (mean_correction == "lognormal_mean") {
        event_config.mean_correction = MeanCorrection::lognormal_mean;
      } else {
        throw ConfigError("--mean-correction must be median or lognormal_mean");
      }
      event_config.windows_years.clear();
      std::stringstream ss(windows);
      std::string tok;
      while (std::getline(ss, tok, ',')) event_config.windows_years.push_back(std::stoi(tok));
      return cmd_impact(ctx, series_path, model_path, event_config, fit_options);
    }
    if (sim_cmd->parsed()) {
      return cmd_simulate(ctx, model_path, sets, sim_length, sim_reps, sim_initial);
    }
    if (mc_cmd->parsed()) return cmd_mc_critvals(ctx, mc_df, mc_reps, mc_grid, mc_threads);
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
