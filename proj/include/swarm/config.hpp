#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "swarm/continuum.hpp"
#include "swarm/core.hpp"
#include "swarm/particle.hpp"
#include "swarm/potentials.hpp"
#include "swarm/sampling.hpp"

namespace swarm {

enum class ExperimentKind { MeanFieldScan, InertiaScan, SingleRun, DissipationCheck };

struct DensityConfig {
  std::string kind = "gaussian";  // gaussian | uniform
  double mean = 0.0;
  double sigma = 1.0;
};

struct VelocityConfig {
  std::string kind = "zero";  // zero | linear | tanh
  double slope = 0.0;
  double amplitude = 0.0;
};

/// One pass/fail condition evaluated on a finished experiment.
///   decreasing:   column strictly decreasing along the scan axis
///   slope:        log-log slope of column vs axis in [min, max]
///   at_most:      every value <= value
///   at_least:     every value >= value
///   greater_than: every value > value
/// `column` may also name a scalar result (see ExperimentResult::scalars).
struct CheckSpec {
  std::string kind;
  std::string column;
  double min = 0.0;
  double max = 0.0;
  double value = 0.0;
};

struct ExperimentConfig {
  std::string id = "experiment";
  ExperimentKind experiment = ExperimentKind::SingleRun;
  PotentialSpec potential{};

  double a = -4.0;
  double b = 4.0;
  DensityConfig density{};
  VelocityConfig velocity{};
  SamplingMode sampling = SamplingMode::Quantile;
  std::uint64_t seed = 0;
  double delta = 0.0;        // fixed perturbation (mean-field and single runs)
  double delta_scale = 1.0;  // inertia scan: delta = delta_scale * sqrt(epsilon)

  double gamma = 1.0;
  double epsilon = 1.0;
  double T = 1.0;
  double dt = 1e-3;
  double reference_dt = 1e-2;
  std::size_t M = 0;
  std::size_t N = 0;
  std::vector<std::size_t> N_list;
  std::vector<double> epsilon_list;
  Integrator integrator = Integrator::RK4;
  std::size_t sample_every = 1;
  std::string output_dir = "out";
  std::vector<CheckSpec> checks;

  void validate() const;
};

namespace detail {

inline void expect_keys(const nlohmann::json& j, const std::set<std::string>& allowed,
                        const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <class T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

template <class T>
T require(const nlohmann::json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw ConfigError("missing key '" + std::string(key) + "' in " + where);
  return get_or<T>(j, key, T{});
}

inline Interaction parse_interaction(const nlohmann::json& j) {
  const auto kind = require<std::string>(j, "kind", "interaction");
  if (kind == "none") {
    expect_keys(j, {"kind"}, "interaction");
    return NoInteraction{};
  }
  if (kind == "gaussian") {
    expect_keys(j, {"kind", "amplitude", "width"}, "interaction");
    return GaussianKernel{get_or(j, "amplitude", 1.0), get_or(j, "width", 1.0)};
  }
  if (kind == "coulomb") {
    expect_keys(j, {"kind"}, "interaction");
    return Coulomb{};
  }
  if (kind == "riesz") {
    expect_keys(j, {"kind", "exponent"}, "interaction");
    return Riesz{require<double>(j, "exponent", "interaction")};
  }
  if (kind == "log") {
    expect_keys(j, {"kind"}, "interaction");
    return LogKernel{};
  }
  throw ConfigError("unknown interaction kind '" + kind + "'");
}

inline Communication parse_communication(const nlohmann::json& j) {
  const auto kind = require<std::string>(j, "kind", "communication");
  if (kind == "none") {
    expect_keys(j, {"kind"}, "communication");
    return NoCommunication{};
  }
  if (kind == "bump") {
    expect_keys(j, {"kind", "radius", "strength"}, "communication");
    return CompactBump{get_or(j, "radius", 1.0), get_or(j, "strength", 1.0)};
  }
  throw ConfigError("unknown communication kind '" + kind + "'");
}

inline ExperimentKind parse_kind(const std::string& s) {
  if (s == "MeanFieldScan") return ExperimentKind::MeanFieldScan;
  if (s == "InertiaScan") return ExperimentKind::InertiaScan;
  if (s == "SingleRun") return ExperimentKind::SingleRun;
  if (s == "DissipationCheck") return ExperimentKind::DissipationCheck;
  throw ConfigError("unknown experiment '" + s + "'");
}

inline Integrator parse_integrator(const std::string& s) {
  if (s == "rk4") return Integrator::RK4;
  if (s == "semi_implicit") return Integrator::SemiImplicitEuler;
  throw ConfigError("unknown integrator '" + s + "' (rk4 | semi_implicit)");
}

}  // namespace detail

namespace detail {

inline ExperimentConfig parse_config_unchecked(const nlohmann::json& j) {
  using detail::expect_keys;
  using detail::get_or;
  expect_keys(j,
              {"id", "experiment", "dimension", "potential", "initial", "gamma", "epsilon", "T",
               "dt", "reference_dt", "M", "N", "N_list", "epsilon_list", "integrator",
               "sample_every", "output_dir", "checks"},
              "config");
  ExperimentConfig c;
  c.id = get_or<std::string>(j, "id", c.id);
  c.experiment = detail::parse_kind(detail::require<std::string>(j, "experiment", "config"));
  c.potential.dimension = get_or(j, "dimension", 1);

  if (j.contains("potential")) {
    const auto& p = j.at("potential");
    expect_keys(p, {"confinement", "interaction", "communication"}, "potential");
    const auto conf = get_or<std::string>(p, "confinement", "none");
    if (conf == "quadratic") {
      c.potential.confinement = Confinement::Quadratic;
    } else if (conf == "none") {
      c.potential.confinement = Confinement::None;
    } else {
      throw ConfigError("unknown confinement '" + conf + "'");
    }
    if (p.contains("interaction")) c.potential.interaction = detail::parse_interaction(p.at("interaction"));
    if (p.contains("communication")) {
      c.potential.communication = detail::parse_communication(p.at("communication"));
    }
  }

  if (j.contains("initial")) {
    const auto& in = j.at("initial");
    expect_keys(in, {"interval", "density", "velocity", "sampling", "seed", "delta", "delta_scale"},
                "initial");
    if (in.contains("interval")) {
      const auto iv = in.at("interval").get<std::vector<double>>();
      if (iv.size() != 2) throw ConfigError("initial.interval must be [a, b]");
      c.a = iv[0];
      c.b = iv[1];
    }
    if (in.contains("density")) {
      const auto& d = in.at("density");
      expect_keys(d, {"kind", "mean", "sigma"}, "initial.density");
      c.density.kind = detail::require<std::string>(d, "kind", "initial.density");
      c.density.mean = get_or(d, "mean", 0.0);
      c.density.sigma = get_or(d, "sigma", 1.0);
      if (c.density.kind != "gaussian" && c.density.kind != "uniform") {
        throw ConfigError("unknown density kind '" + c.density.kind + "'");
      }
    }
    if (in.contains("velocity")) {
      const auto& v = in.at("velocity");
      expect_keys(v, {"kind", "slope", "amplitude"}, "initial.velocity");
      c.velocity.kind = detail::require<std::string>(v, "kind", "initial.velocity");
      c.velocity.slope = get_or(v, "slope", 0.0);
      c.velocity.amplitude = get_or(v, "amplitude", 0.0);
      if (c.velocity.kind != "zero" && c.velocity.kind != "linear" && c.velocity.kind != "tanh") {
        throw ConfigError("unknown velocity kind '" + c.velocity.kind + "'");
      }
    }
    const auto mode = get_or<std::string>(in, "sampling", "quantile");
    if (mode == "quantile") {
      c.sampling = SamplingMode::Quantile;
    } else if (mode == "iid") {
      c.sampling = SamplingMode::IID;
    } else {
      throw ConfigError("unknown sampling mode '" + mode + "'");
    }
    c.seed = get_or<std::uint64_t>(in, "seed", 0);
    c.delta = get_or(in, "delta", 0.0);
    c.delta_scale = get_or(in, "delta_scale", 1.0);
  }

  c.gamma = get_or(j, "gamma", c.gamma);
  c.epsilon = get_or(j, "epsilon", c.epsilon);
  c.T = get_or(j, "T", c.T);
  c.dt = get_or(j, "dt", c.dt);
  c.reference_dt = get_or(j, "reference_dt", c.reference_dt);
  c.M = get_or<std::size_t>(j, "M", 0);
  c.N = get_or<std::size_t>(j, "N", 0);
  c.N_list = get_or(j, "N_list", std::vector<std::size_t>{});
  c.epsilon_list = get_or(j, "epsilon_list", std::vector<double>{});
  c.integrator = detail::parse_integrator(get_or<std::string>(j, "integrator", "rk4"));
  c.sample_every = get_or<std::size_t>(j, "sample_every", 1);
  c.output_dir = get_or<std::string>(j, "output_dir", c.output_dir);

  if (j.contains("checks")) {
    for (const auto& cj : j.at("checks")) {
      expect_keys(cj, {"kind", "column", "min", "max", "value"}, "checks[]");
      CheckSpec s;
      s.kind = detail::require<std::string>(cj, "kind", "checks[]");
      s.column = detail::require<std::string>(cj, "column", "checks[]");
      s.min = get_or(cj, "min", 0.0);
      s.max = get_or(cj, "max", 0.0);
      s.value = get_or(cj, "value", 0.0);
      static const std::set<std::string> kinds = {"decreasing", "slope", "at_most", "at_least",
                                                  "greater_than"};
      if (!kinds.count(s.kind)) throw ConfigError("unknown check kind '" + s.kind + "'");
      c.checks.push_back(s);
    }
  }
  return c;
}

}  // namespace detail

/// Strict parse: unknown keys, wrong types and invalid values all raise
/// ConfigError.
inline ExperimentConfig parse_config(const nlohmann::json& j) {
  ExperimentConfig c;
  try {
    c = detail::parse_config_unchecked(j);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  c.validate();
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("invalid JSON in '" + path + "': " + e.what());
  }
  return parse_config(j);
}

inline void ExperimentConfig::validate() const {
  try {
    potential.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  if (!(T > 0.0)) throw ConfigError("T must be > 0");
  if (!(dt > 0.0)) throw ConfigError("dt must be > 0");
  if (!(reference_dt > 0.0)) throw ConfigError("reference_dt must be > 0");
  if (!(gamma >= 0.0)) throw ConfigError("gamma must be >= 0");
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be > 0");
  if (!(b > a)) throw ConfigError("initial.interval must satisfy a < b");
  if (!(delta >= 0.0) || !(delta_scale >= 0.0)) throw ConfigError("perturbations must be >= 0");
  if (sample_every == 0) throw ConfigError("sample_every must be >= 1");
  if (density.kind == "gaussian" && !(density.sigma > 0.0)) throw ConfigError("sigma must be > 0");
  const int d = potential.dimension;
  if (d < 1 || d > 3) throw ConfigError("dimension must be 1, 2 or 3");
  switch (experiment) {
    case ExperimentKind::MeanFieldScan:
    case ExperimentKind::InertiaScan: {
      if (d != 1) throw ConfigError("scans compare against a 1D continuum and need dimension 1");
      const bool mf = experiment == ExperimentKind::MeanFieldScan;
      if (mf && N_list.empty()) throw ConfigError("MeanFieldScan needs N_list");
      if (!mf && epsilon_list.empty()) throw ConfigError("InertiaScan needs epsilon_list");
      if (!mf && N == 0) throw ConfigError("InertiaScan needs N");
      std::size_t nmax = N;
      for (auto n : N_list) {
        if (n == 0) throw ConfigError("N_list entries must be >= 1");
        nmax = std::max(nmax, n);
      }
      for (double e : epsilon_list) {
        if (!(e > 0.0)) throw ConfigError("epsilon_list entries must be > 0");
      }
      if (M < 4 * nmax) throw ConfigError("reference resolution M must be >= 4 * max(N)");
      if (!mf && !(gamma > 0.0)) throw ConfigError("InertiaScan needs gamma > 0");
      break;
    }
    case ExperimentKind::SingleRun:
    case ExperimentKind::DissipationCheck:
      if (N == 0) throw ConfigError("N must be >= 1");
      if (d > 1 && sampling == SamplingMode::Quantile) {
        throw ConfigError("quantile sampling is 1D; use \"iid\" for dimension > 1");
      }
      if (M != 0 && d != 1) throw ConfigError("a continuum reference (M > 0) needs dimension 1");
      break;
  }
}

/// Truncated, renormalized density on [a, b].
inline DensityFn make_density(const ExperimentConfig& c) {
  if (c.density.kind == "uniform") {
    const double h = 1.0 / (c.b - c.a);
    return [h](double) { return h; };
  }
  const double mu = c.density.mean;
  const double s = c.density.sigma;
  const double z = 0.5 * (std::erf((c.b - mu) / (s * std::numbers::sqrt2)) -
                          std::erf((c.a - mu) / (s * std::numbers::sqrt2)));
  const double norm = 1.0 / (z * s * std::sqrt(2.0 * std::numbers::pi));
  return [mu, s, norm](double x) {
    const double y = (x - mu) / s;
    return norm * std::exp(-0.5 * y * y);
  };
}

inline VelocityFn make_velocity(const ExperimentConfig& c) {
  if (c.velocity.kind == "linear") {
    const double k = c.velocity.slope;
    return [k](double x) { return k * x; };
  }
  if (c.velocity.kind == "tanh") {
    const double amp = c.velocity.amplitude;
    return [amp](double x) { return amp * std::tanh(x); };
  }
  return [](double) { return 0.0; };
}

inline InitialData make_initial_data(const ExperimentConfig& c) {
  InitialData d;
  d.density = make_density(c);
  d.a = c.a;
  d.b = c.b;
  d.velocity = make_velocity(c);
  d.mode = c.sampling;
  d.seed = c.seed;
  d.delta = c.delta;
  return d;
}

}  // namespace swarm
