#include "ucts/model_spec.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "ucts/errors.hpp"
#include "ucts/kalman.hpp"

namespace ucts {

std::string to_string(TrendKind kind) {
  switch (kind) {
    case TrendKind::deterministic: return "deterministic";
    case TrendKind::local_level: return "local_level";
    case TrendKind::rw_drift: return "rw_drift";
    case TrendKind::irw: return "irw";
    case TrendKind::llt: return "llt";
  }
  throw InternalError("unknown TrendKind");
}

TrendKind trend_kind_from_string(const std::string& name) {
  if (name == "deterministic") return TrendKind::deterministic;
  if (name == "local_level") return TrendKind::local_level;
  if (name == "rw_drift" || name == "random_walk_drift") return TrendKind::rw_drift;
  if (name == "irw" || name == "integrated_random_walk") return TrendKind::irw;
  if (name == "llt" || name == "local_linear_trend") return TrendKind::llt;
  throw SpecError("unknown trend kind '" + name + "'");
}

SeasonalSpec SeasonalSpec::all_harmonics(int period) {
  SeasonalSpec s;
  s.period = period;
  for (int j = 1; j <= period / 2; ++j) s.harmonics.push_back(j);
  return s;
}

namespace {

bool trend_has_slope(TrendKind kind) {
  return kind == TrendKind::rw_drift || kind == TrendKind::irw || kind == TrendKind::llt;
}

bool trend_uses_level_var(TrendKind kind) {
  return kind == TrendKind::local_level || kind == TrendKind::rw_drift || kind == TrendKind::llt;
}

bool trend_uses_slope_var(TrendKind kind) {
  return kind == TrendKind::irw || kind == TrendKind::llt;
}

std::vector<int> validated_harmonics(const SeasonalSpec& seasonal) {
  if (seasonal.period < 2) {
    throw SpecError("seasonal period must be >= 2, got " + std::to_string(seasonal.period));
  }
  if (seasonal.harmonics.empty()) {
    throw SpecError("seasonal component declared with an empty harmonic set");
  }
  std::vector<int> js = seasonal.harmonics;
  std::sort(js.begin(), js.end());
  js.erase(std::unique(js.begin(), js.end()), js.end());
  const int max_j = seasonal.period / 2;
  for (int j : js) {
    if (j < 1 || j > max_j) {
      throw SpecError("harmonic " + std::to_string(j) + " outside 1.." + std::to_string(max_j) +
                      " for period " + std::to_string(seasonal.period));
    }
  }
  return js;
}

void check_variance(double v, const char* name) {
  if (!(v >= 0.0) || !std::isfinite(v)) {
    throw SpecError(std::string(name) + " must be finite and non-negative");
  }
}

}  // namespace

int free_variance_count(const ModelSpec& spec) {
  int k = 1;  // irregular
  if (trend_uses_level_var(spec.trend)) ++k;
  if (trend_uses_slope_var(spec.trend)) ++k;
  if (spec.seasonal) {
    auto js = validated_harmonics(*spec.seasonal);
    k += spec.seasonal->variance_mode == SeasonalVarianceMode::common
             ? 1
             : static_cast<int>(js.size());
  }
  if (spec.cycle) ++k;
  return k;
}

StateSpaceSystem assemble(const ModelSpec& spec, const ParamVector& params) {
  check_variance(params.irregular_var, "sigma_eps^2");
  check_variance(params.level_var, "sigma_xi^2");
  check_variance(params.slope_var, "sigma_zeta^2");
  check_variance(params.cycle_var, "sigma_kappa^2");
  if (params.drift.has_value() && spec.trend != TrendKind::rw_drift) {
    throw SpecError("drift constant is only meaningful for the rw_drift trend");
  }

  std::vector<int> harmonics;
  if (spec.seasonal) harmonics = validated_harmonics(*spec.seasonal);
  if (spec.cycle) {
    if (!(spec.cycle->damping > 0.0 && spec.cycle->damping <= 1.0)) {
      throw SpecError("cycle damping must lie in (0, 1]");
    }
    if (!(spec.cycle->period > 2.0)) {
      throw SpecError("cycle period must exceed 2 months");
    }
  }

  // State count.
  StateLayout layout;
  int m = 1;  // level always present
  layout.level = 0;
  if (trend_has_slope(spec.trend)) {
    layout.slope = 1;
    m = 2;
  }
  for (int j : harmonics) {
    const bool nyquist = spec.seasonal->period == 2 * j;
    layout.seasonal.push_back({j, m, nyquist ? 1 : 2});
    m += nyquist ? 1 : 2;
  }
  if (spec.cycle) {
    layout.cycle = m;
    m += 2;
  }
  layout.dim = m;

  // Disturbance slots.
  int r = 0;
  if (trend_uses_level_var(spec.trend)) ++r;
  if (trend_uses_slope_var(spec.trend)) ++r;
  for (const auto& blk : layout.seasonal) r += blk.n_states;
  if (spec.cycle) r += 2;

  StateSpaceSystem sys;
  sys.layout = layout;
  sys.Z = Eigen::RowVectorXd::Zero(m);
  sys.T = Eigen::MatrixXd::Zero(m, m);
  sys.R = Eigen::MatrixXd::Zero(m, std::max(r, 1));
  sys.q_diag = Eigen::VectorXd::Zero(std::max(r, 1));
  if (r == 0) {
    sys.R = Eigen::MatrixXd::Zero(m, 0);
    sys.q_diag = Eigen::VectorXd::Zero(0);
  }
  sys.h = params.irregular_var;
  sys.a1 = Eigen::VectorXd::Zero(m);
  sys.P_star = Eigen::MatrixXd::Zero(m, m);
  sys.p_inf = Eigen::VectorXd::Zero(m);

  // Trend block.
  sys.Z(0, layout.level) = 1.0;
  sys.T(layout.level, layout.level) = 1.0;
  sys.p_inf(layout.level) = 1.0;
  if (layout.slope >= 0) {
    sys.T(layout.level, layout.slope) = 1.0;
    sys.T(layout.slope, layout.slope) = 1.0;
    sys.p_inf(layout.slope) = 1.0;
    if (spec.trend == TrendKind::rw_drift) {
      sys.a1(layout.slope) = params.drift.value_or(0.0);
    }
  }
  int slot = 0;
  if (trend_uses_level_var(spec.trend)) {
    sys.R(layout.level, slot) = 1.0;
    sys.q_diag(slot) = params.level_var;
    ++slot;
  }
  if (trend_uses_slope_var(spec.trend)) {
    sys.R(layout.slope, slot) = 1.0;
    sys.q_diag(slot) = params.slope_var;
    ++slot;
  }

  // Trigonometric seasonal blocks.
  if (spec.seasonal) {
    const auto mode = spec.seasonal->variance_mode;
    const std::size_t expected =
        mode == SeasonalVarianceMode::common ? 1u : harmonics.size();
    if (params.seasonal_var.size() != expected) {
      throw SpecError("seasonal_var holds " + std::to_string(params.seasonal_var.size()) +
                      " entries, expected " + std::to_string(expected));
    }
    for (double v : params.seasonal_var) check_variance(v, "sigma_omega^2");
    for (std::size_t b = 0; b < layout.seasonal.size(); ++b) {
      const auto& blk = layout.seasonal[b];
      const double lambda = 2.0 * std::numbers::pi * blk.harmonic / spec.seasonal->period;
      const double var =
          mode == SeasonalVarianceMode::common ? params.seasonal_var[0] : params.seasonal_var[b];
      const int i = blk.index;
      sys.Z(0, i) = 1.0;
      sys.p_inf(i) = 1.0;
      if (blk.n_states == 1) {
        sys.T(i, i) = std::cos(lambda);  // -1 at the Nyquist frequency
        sys.R(i, slot) = 1.0;
        sys.q_diag(slot) = var;
        ++slot;
      } else {
        const double c = std::cos(lambda);
        const double s = std::sin(lambda);
        sys.T(i, i) = c;
        sys.T(i, i + 1) = s;
        sys.T(i + 1, i) = -s;
        sys.T(i + 1, i + 1) = c;
        sys.p_inf(i + 1) = 1.0;
        for (int k = 0; k < 2; ++k) {
          sys.R(i + k, slot) = 1.0;
          sys.q_diag(slot) = var;
          ++slot;
        }
      }
    }
  }

  // Cycle block.
  if (spec.cycle) {
    const double lambda_c = 2.0 * std::numbers::pi / spec.cycle->period;
    const double rho = spec.cycle->damping;
    const double c = std::cos(lambda_c);
    const double s = std::sin(lambda_c);
    const int i = layout.cycle;
    sys.Z(0, i) = 1.0;
    sys.T(i, i) = rho * c;
    sys.T(i, i + 1) = rho * s;
    sys.T(i + 1, i) = -rho * s;
    sys.T(i + 1, i + 1) = rho * c;
    for (int k = 0; k < 2; ++k) {
      sys.R(i + k, slot) = 1.0;
      sys.q_diag(slot) = params.cycle_var;
      ++slot;
    }
    if (rho < 1.0) {
      const double var = params.cycle_var / (1.0 - rho * rho);
      sys.P_star(i, i) = var;
      sys.P_star(i + 1, i + 1) = var;
    } else {
      sys.p_inf(i) = 1.0;
      sys.p_inf(i + 1) = 1.0;
    }
  }

  return sys;
}

std::string Classification::label() const {
  std::string out = taxonomy + ", I(" + std::to_string(integration_order) + ")";
  if (!note.empty()) out += ", " + note;
  return out;
}

Classification classify(const ParamVector& params, TrendKind kind) {
  const bool level_stochastic = params.level_var > 0.0 && trend_uses_level_var(kind);
  const bool slope_stochastic = params.slope_var > 0.0 && trend_uses_slope_var(kind);
  const bool has_drift =
      kind == TrendKind::rw_drift && params.drift.has_value() && *params.drift != 0.0;

  Classification c;
  if (!level_stochastic && slope_stochastic) {
    c = {"Integrated Random Walk", 2, false, ""};
  } else if (level_stochastic && !slope_stochastic) {
    if (kind == TrendKind::rw_drift) {
      c = {"Random Walk plus drift", 1, true, "deterministic trend dominates"};
    } else {
      c = {"Random Walk", 1, false, ""};
    }
  } else if (level_stochastic && slope_stochastic) {
    c = {"Local Level Trend", 2, false, "I(2) dominates the I(1) part"};
  } else {
    c = {"Local Level", 0, has_drift, has_drift ? "trend stationary" : "stationary"};
  }
  return c;
}

Components extract_components(const StateSpaceSystem& system, const SmootherOutput& smoothed,
                              const TimeSeries& y) {
  const std::size_t n = y.values.size();
  if (smoothed.alphahat.size() != n) {
    throw InternalError("extract_components: smoothed states do not match the series length");
  }
  const auto& layout = system.layout;
  if (layout.dim != system.dim() ||
      (n > 0 && smoothed.alphahat[0].size() != system.dim())) {
    throw InternalError("extract_components: layout does not match the state dimension");
  }

  auto blank = [&](const char* suffix) {
    TimeSeries ts;
    ts.start = y.start;
    ts.scale = y.scale;
    ts.label = y.label.empty() ? suffix : y.label + "." + suffix;
    ts.values.assign(n, std::nullopt);
    return ts;
  };
  Components out{blank("trend"), blank("seasonal"), blank("cycle"), blank("irregular")};

  for (std::size_t t = 0; t < n; ++t) {
    const Eigen::VectorXd& a = smoothed.alphahat[t];
    const double trend = a(layout.level);
    double seasonal = 0.0;
    for (const auto& blk : layout.seasonal) seasonal += a(blk.index);
    const double cycle = layout.cycle >= 0 ? a(layout.cycle) : 0.0;
    out.trend.values[t] = trend;
    out.seasonal.values[t] = seasonal;
    out.cycle.values[t] = cycle;
    if (y.values[t].has_value()) {
      out.irregular.values[t] = *y.values[t] - (trend + seasonal + cycle);
    }
  }
  return out;
}

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  std::size_t e = s.find_last_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, e - b + 1);
}

}  // namespace

ModelSpec parse_model_spec(std::istream& in) {
  ModelSpec spec;
  bool trend_seen = false;
  bool seasonal_seen = false;
  bool cycle_seen = false;
  SeasonalSpec seasonal;
  CycleSpec cycle;

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string s = trim(line);
    if (s.empty() || s[0] == '#') continue;
    std::size_t eq = s.find('=');
    if (eq == std::string::npos) {
      throw SpecError("model spec line " + std::to_string(line_no) + ": expected key = value");
    }
    std::string key = trim(s.substr(0, eq));
    std::string value = trim(s.substr(eq + 1));
    if (key == "trend") {
      spec.trend = trend_kind_from_string(value);
      trend_seen = true;
    } else if (key == "seasonal.period") {
      seasonal.period = std::stoi(value);
      seasonal_seen = true;
    } else if (key == "seasonal.harmonics") {
      seasonal_seen = true;
      seasonal.harmonics.clear();
      if (value == "all") {
        // resolved after the period is known
        seasonal.harmonics.push_back(-1);
      } else {
        std::stringstream ss(value);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
          tok = trim(tok);
          if (!tok.empty()) seasonal.harmonics.push_back(std::stoi(tok));
        }
      }
    } else if (key == "seasonal.variance_mode") {
      seasonal_seen = true;
      if (value == "common") {
        seasonal.variance_mode = SeasonalVarianceMode::common;
      } else if (value == "per_harmonic") {
        seasonal.variance_mode = SeasonalVarianceMode::per_harmonic;
      } else {
        throw SpecError("seasonal.variance_mode must be common or per_harmonic");
      }
    } else if (key == "cycle.period") {
      cycle.period = std::stod(value);
      cycle_seen = true;
    } else if (key == "cycle.damping") {
      cycle.damping = std::stod(value);
      cycle_seen = true;
    } else {
      throw SpecError("model spec line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
  }
  if (!trend_seen) throw SpecError("model spec: missing 'trend'");
  if (seasonal_seen) {
    if (seasonal.harmonics.size() == 1 && seasonal.harmonics[0] == -1) {
      seasonal = SeasonalSpec::all_harmonics(seasonal.period);
    }
    spec.seasonal = seasonal;
    validated_harmonics(*spec.seasonal);
  }
  if (cycle_seen) {
    spec.cycle = cycle;
    if (!(cycle.damping > 0.0 && cycle.damping <= 1.0)) {
      throw SpecError("cycle damping must lie in (0, 1]");
    }
  }
  return spec;
}

ModelSpec parse_model_spec_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open model spec file '" + path + "'");
  return parse_model_spec(in);
}

std::string canonical_model_spec(const ModelSpec& spec) {
  std::ostringstream out;
  out << "trend = " << to_string(spec.trend) << "\n";
  if (spec.seasonal) {
    auto js = validated_harmonics(*spec.seasonal);
    out << "seasonal.period = " << spec.seasonal->period << "\n";
    out << "seasonal.harmonics = ";
    for (std::size_t i = 0; i < js.size(); ++i) {
      if (i) out << ",";
      out << js[i];
    }
    out << "\n";
    out << "seasonal.variance_mode = "
        << (spec.seasonal->variance_mode == SeasonalVarianceMode::common ? "common"
                                                                         : "per_harmonic")
        << "\n";
  }
  if (spec.cycle) {
    out << "cycle.period = " << spec.cycle->period << "\n";
    out << "cycle.damping = " << spec.cycle->damping << "\n";
  }
  return out.str();
}

}  // namespace ucts
