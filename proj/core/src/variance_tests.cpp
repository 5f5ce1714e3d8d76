#include "ucts/variance_tests.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <numbers>
#include <optional>
#include <ostream>
#include <sstream>

#include "ucts/errors.hpp"
#include "ucts/stats.hpp"
#include "ucts/version.hpp"

#ifndef UCTS_DEFAULT_CRITVALS_PATH
#define UCTS_DEFAULT_CRITVALS_PATH "data/cvm_critical_values.csv"
#endif

namespace ucts {

namespace {

struct ObservedSample {
  std::vector<double> values;
  std::vector<int> month_offsets;  // calendar offsets, keeps seasonal phase with gaps
};

ObservedSample compact(const TimeSeries& ts) {
  ObservedSample out;
  out.values.reserve(ts.values.size());
  for (std::size_t i = 0; i < ts.values.size(); ++i) {
    if (ts.values[i].has_value()) {
      out.values.push_back(*ts.values[i]);
      out.month_offsets.push_back(static_cast<int>(i));
    }
  }
  return out;
}

int default_nw_lags(int T) {
  return static_cast<int>(std::floor(4.0 * std::pow(T / 100.0, 2.0 / 9.0)));
}

// Newey-West long-run variance of (near) mean-zero residuals. dof counts
// the regressors behind the residuals; without the T/(T - dof) correction
// the statistics over-reject noticeably at T ~ 150 with the 12-column
// seasonal null regression.
double long_run_variance(const std::vector<double>& e, int lags, int dof) {
  const int T = static_cast<int>(e.size());
  double gamma0 = 0.0;
  for (double v : e) gamma0 += v * v;
  gamma0 /= T;
  double lrv = gamma0;
  for (int l = 1; l <= lags; ++l) {
    double gl = 0.0;
    for (int t = l; t < T; ++t) gl += e[static_cast<std::size_t>(t)] * e[static_cast<std::size_t>(t - l)];
    gl /= T;
    lrv += 2.0 * (1.0 - static_cast<double>(l) / (lags + 1)) * gl;
  }
  if (dof > 0 && dof < T) lrv *= static_cast<double>(T) / (T - dof);
  return lrv;
}

// eta = sum_t S_t^2 / (T^2 s2), the locally-best-invariant statistic.
double cumulated_statistic(const std::vector<double>& e, int nw_lags, int dof) {
  const int T = static_cast<int>(e.size());
  const int lags = nw_lags < 0 ? default_nw_lags(T) : nw_lags;
  const double s2 = long_run_variance(e, lags, dof);
  if (!(s2 > 0.0)) throw DataError("variance test: degenerate residual variance");
  double s = 0.0;
  double css = 0.0;
  for (double v : e) {
    s += v;
    css += s * s;
  }
  return css / (static_cast<double>(T) * T * s2);
}

void attach_critical_values(TestResult& result) {
  result.crit_10 = cvm_critical_value(result.df, 0.10);
  result.crit_05 = cvm_critical_value(result.df, 0.05);
  result.crit_01 = cvm_critical_value(result.df, 0.01);
  result.reject_at_5 = result.statistic >= result.crit_05;
  result.stars = result.statistic >= result.crit_01   ? 3
                 : result.statistic >= result.crit_05 ? 2
                 : result.statistic >= result.crit_10 ? 1
                                                      : 0;
}

}  // namespace

TestResult level_test(const TimeSeries& ts, const VarianceTestOptions& options) {
  ObservedSample sample = compact(ts);
  const int T = static_cast<int>(sample.values.size());
  if (T < 20) {
    throw DataError("level_test: need at least 20 non-missing observations, got " +
                    std::to_string(T));
  }
  const double mean = stats::mean(sample.values);
  std::vector<double> e = sample.values;
  for (double& v : e) v -= mean;

  TestResult result;
  result.name = "level";
  result.df = 1;
  result.statistic = cumulated_statistic(e, options.nw_lags, 1);
  result.residual_source = "series demeaned by OLS on a constant";
  attach_critical_values(result);
  return result;
}

TestResult slope_test(const TimeSeries& ts, const VarianceTestOptions& options) {
  ObservedSample sample = compact(ts);
  std::vector<double> diffs;
  diffs.reserve(sample.values.size());
  for (std::size_t i = 1; i < sample.values.size(); ++i) {
    // Differences across a gap are not one-month increments; skip them.
    if (sample.month_offsets[i] - sample.month_offsets[i - 1] == 1) {
      diffs.push_back(sample.values[i] - sample.values[i - 1]);
    }
  }
  const int T = static_cast<int>(diffs.size());
  if (T < 20) {
    throw DataError("slope_test: need at least 20 consecutive differences, got " +
                    std::to_string(T));
  }
  const double mean = stats::mean(diffs);
  for (double& v : diffs) v -= mean;

  TestResult result;
  result.name = "slope";
  result.df = 1;
  result.statistic = cumulated_statistic(diffs, options.nw_lags, 1);
  result.residual_source = "first differences with the drift removed";
  attach_critical_values(result);
  return result;
}

TestResult seasonal_test(const TimeSeries& ts, const SeasonalTarget& target,
                         const VarianceTestOptions& options) {
  const int s = options.period;
  if (s < 2) throw SpecError("seasonal_test: period must be >= 2");
  const int n_freq = s / 2;

  std::vector<int> freqs;
  switch (target.kind) {
    case SeasonalTarget::Kind::single:
    case SeasonalTarget::Kind::group:
      freqs = target.frequencies;
      break;
    case SeasonalTarget::Kind::all:
      for (int j = 1; j <= n_freq; ++j) freqs.push_back(j);
      break;
  }
  if (freqs.empty()) throw SpecError("seasonal_test: empty frequency set");
  std::sort(freqs.begin(), freqs.end());
  freqs.erase(std::unique(freqs.begin(), freqs.end()), freqs.end());
  for (int j : freqs) {
    if (j < 1 || j > n_freq) {
      throw SpecError("seasonal_test: frequency " + std::to_string(j) + " outside 1.." +
                      std::to_string(n_freq));
    }
  }

  ObservedSample sample = compact(ts);
  const int T = static_cast<int>(sample.values.size());
  if (T < 3 * s) {
    throw DataError("seasonal_test: need at least 3 periods of data, got " + std::to_string(T));
  }

  // Null regression: constant plus the full set of trigonometric seasonal
  // regressors; untested frequencies stay in as nuisance terms.
  int n_cols = 1;
  for (int j = 1; j <= n_freq; ++j) n_cols += (2 * j == s) ? 1 : 2;
  Eigen::MatrixXd X(T, n_cols);
  Eigen::VectorXd y(T);
  std::vector<int> col_of_freq(static_cast<std::size_t>(n_freq) + 1, 0);
  {
    int col = 1;
    for (int j = 1; j <= n_freq; ++j) {
      col_of_freq[static_cast<std::size_t>(j)] = col;
      col += (2 * j == s) ? 1 : 2;
    }
  }
  for (int i = 0; i < T; ++i) {
    X(i, 0) = 1.0;
    y(i) = sample.values[static_cast<std::size_t>(i)];
    const double t = static_cast<double>(sample.month_offsets[static_cast<std::size_t>(i)] + 1);
    for (int j = 1; j <= n_freq; ++j) {
      const double lambda = 2.0 * std::numbers::pi * j / s;
      const int col = col_of_freq[static_cast<std::size_t>(j)];
      X(i, col) = std::cos(lambda * t);
      if (2 * j != s) X(i, col + 1) = std::sin(lambda * t);
    }
  }
  const Eigen::VectorXd resid = stats::ols_residuals(y, X);
  std::vector<double> e(resid.data(), resid.data() + resid.size());

  const int lags = options.nw_lags < 0 ? default_nw_lags(T) : options.nw_lags;

  // Per-frequency statistic: cumulated trig-weighted residuals studentized
  // by a Bartlett-weighted HAC estimate of the weighted process itself,
  // which captures the residual spectrum locally at that frequency. Group
  // and joint statistics are sums over members, so df adds up (2 per
  // interior frequency, 1 at pi).
  double statistic = 0.0;
  int df = 0;
  for (int j : freqs) {
    const int dim = (2 * j == s) ? 1 : 2;
    const int col = col_of_freq[static_cast<std::size_t>(j)];
    std::vector<Eigen::VectorXd> v(static_cast<std::size_t>(T));
    for (int i = 0; i < T; ++i) {
      Eigen::VectorXd x(dim);
      x(0) = X(i, col);
      if (dim == 2) x(1) = X(i, col + 1);
      v[static_cast<std::size_t>(i)] = x * e[static_cast<std::size_t>(i)];
    }
    Eigen::MatrixXd omega = Eigen::MatrixXd::Zero(dim, dim);
    for (int i = 0; i < T; ++i) {
      omega += v[static_cast<std::size_t>(i)] * v[static_cast<std::size_t>(i)].transpose();
    }
    for (int l = 1; l <= lags; ++l) {
      Eigen::MatrixXd gamma_l = Eigen::MatrixXd::Zero(dim, dim);
      for (int i = l; i < T; ++i) {
        gamma_l +=
            v[static_cast<std::size_t>(i)] * v[static_cast<std::size_t>(i - l)].transpose();
      }
      const double w = 1.0 - static_cast<double>(l) / (lags + 1);
      omega += w * (gamma_l + gamma_l.transpose());
    }
    // Each frequency's weighted process loses its own regressors' degrees
    // of freedom plus a share of the constant.
    omega /= static_cast<double>(T - dim - 1);
    if (!(omega.determinant() > 0.0)) {
      throw DataError("seasonal_test: degenerate weighted-residual covariance");
    }
    const Eigen::MatrixXd omega_inv = omega.inverse();

    Eigen::VectorXd S = Eigen::VectorXd::Zero(dim);
    double quad = 0.0;
    for (int i = 0; i < T; ++i) {
      S += v[static_cast<std::size_t>(i)];
      quad += S.dot(omega_inv * S);
    }
    statistic += quad / (static_cast<double>(T) * T);
    df += dim;
  }

  TestResult result;
  switch (target.kind) {
    case SeasonalTarget::Kind::single:
      result.name = "seasonal_" + std::to_string(freqs.front());
      break;
    case SeasonalTarget::Kind::group: {
      std::string name = "seasonal_group{";
      for (std::size_t i = 0; i < freqs.size(); ++i) {
        if (i) name += ",";
        name += std::to_string(freqs[i]);
      }
      result.name = name + "}";
      break;
    }
    case SeasonalTarget::Kind::all:
      result.name = "seasonal_joint";
      break;
  }
  result.statistic = statistic;
  result.df = df;
  result.residual_source = "OLS residuals from constant + trigonometric seasonal regressors";
  attach_critical_values(result);
  return result;
}

double CvmTable::at(int df, double level) const {
  if (df < 1 || df > max_df) {
    throw RangeError("cvm critical values: df " + std::to_string(df) + " not tabulated (1.." +
                     std::to_string(max_df) + ")");
  }
  int idx;
  if (std::abs(level - 0.10) < 1e-9) {
    idx = 0;
  } else if (std::abs(level - 0.05) < 1e-9) {
    idx = 1;
  } else if (std::abs(level - 0.01) < 1e-9) {
    idx = 2;
  } else {
    throw RangeError("cvm critical values: level must be 0.10, 0.05 or 0.01");
  }
  return values[static_cast<std::size_t>(df - 1)][static_cast<std::size_t>(idx)];
}

namespace {

std::mutex g_table_mutex;
std::optional<CvmTable> g_table;

}  // namespace

CvmTable load_cvm_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open critical-value table '" + path + "'");
  CvmTable table;
  std::string line;
  std::vector<std::array<double, 3>> rows;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      const std::string kSchema = "# schema_version=";
      const std::string kProv = "# generated_by=";
      if (line.rfind(kSchema, 0) == 0) table.schema_version = std::stoi(line.substr(kSchema.size()));
      if (line.rfind(kProv, 0) == 0) table.provenance = line.substr(kProv.size());
      continue;
    }
    if (line.rfind("df,", 0) == 0) continue;  // header
    std::stringstream ss(line);
    std::string tok;
    std::vector<double> fields;
    while (std::getline(ss, tok, ',')) fields.push_back(std::stod(tok));
    if (fields.size() != 3) throw DataError("critical-value table: malformed row '" + line + "'");
    const int df = static_cast<int>(fields[0]);
    const double level = fields[1];
    if (static_cast<int>(rows.size()) < df) rows.resize(static_cast<std::size_t>(df));
    int idx = std::abs(level - 0.10) < 1e-9 ? 0 : std::abs(level - 0.05) < 1e-9 ? 1 : 2;
    rows[static_cast<std::size_t>(df - 1)][static_cast<std::size_t>(idx)] = fields[2];
  }
  if (rows.empty()) throw DataError("critical-value table: no rows in '" + path + "'");
  table.values = std::move(rows);
  table.max_df = static_cast<int>(table.values.size());
  // Sanity: critical values must increase in df and in confidence.
  for (int df = 1; df <= table.max_df; ++df) {
    const auto& v = table.values[static_cast<std::size_t>(df - 1)];
    if (!(v[0] < v[1] && v[1] < v[2])) {
      throw DataError("critical-value table: levels not increasing at df " + std::to_string(df));
    }
    if (df > 1 && !(table.values[static_cast<std::size_t>(df - 2)][1] < v[1])) {
      throw DataError("critical-value table: values not increasing in df at df " +
                      std::to_string(df));
    }
  }
  return table;
}

void write_cvm_table(std::ostream& out, const CvmTable& table) {
  out << "# ucts " << UCTS_VERSION_STRING << " generalized Cramer-von Mises critical values\n";
  out << "# schema_version=" << table.schema_version << "\n";
  out << "# generated_by=" << table.provenance << "\n";
  out << "df,level,value\n";
  const double levels[3] = {0.10, 0.05, 0.01};
  for (int df = 1; df <= table.max_df; ++df) {
    for (int i = 0; i < 3; ++i) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%d,%.2f,%.6f\n", df, levels[i],
                    table.values[static_cast<std::size_t>(df - 1)][static_cast<std::size_t>(i)]);
      out << buf;
    }
  }
}

void set_cvm_table(CvmTable table) {
  std::lock_guard lock(g_table_mutex);
  g_table = std::move(table);
}

const CvmTable& cvm_table() {
  std::lock_guard lock(g_table_mutex);
  if (!g_table.has_value()) {
    const char* env = std::getenv("UC_CF_CRITVALS");
    if (env != nullptr && env[0] != '\0') {
      // The override is exclusive: a broken path is an error, not a fallback.
      g_table = load_cvm_table(env);
      return *g_table;
    }
    std::string tried;
    for (const char* path : {UCTS_DEFAULT_CRITVALS_PATH, "data/cvm_critical_values.csv"}) {
      std::ifstream probe(path);
      if (probe) {
        g_table = load_cvm_table(path);
        break;
      }
      tried += (tried.empty() ? "" : ", ") + std::string(path);
    }
    if (!g_table.has_value()) {
      throw ConfigError("no Cramer-von Mises critical-value table found (tried: " + tried +
                        "); set UC_CF_CRITVALS or run `ucts mc-critvals`");
    }
  }
  return *g_table;
}

double cvm_critical_value(int df, double level) { return cvm_table().at(df, level); }

}  // namespace ucts
