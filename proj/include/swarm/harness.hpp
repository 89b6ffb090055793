#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "swarm/config.hpp"
#include "swarm/continuum.hpp"
#include "swarm/core.hpp"
#include "swarm/io.hpp"
#include "swarm/metrics.hpp"
#include "swarm/particle.hpp"
#include "swarm/potentials.hpp"
#include "swarm/sampling.hpp"

namespace swarm {

struct SlopeFit {
  double slope = 0.0;
  double intercept = 0.0;
  double residual = 0.0;  // RMS of the log-log residuals
  std::size_t points = 0;
};

/// Ordinary least squares of log(value) on log(axis).
inline SlopeFit fit_slope(std::span<const double> axis, std::span<const double> values) {
  if (axis.size() != values.size()) throw InvalidArgument("fit_slope: axis/value length mismatch");
  const std::size_t n = axis.size();
  if (n < 4) throw InvalidArgument("fit_slope needs at least 4 points, got " + std::to_string(n));
  std::vector<double> lx(n), ly(n);
  for (std::size_t k = 0; k < n; ++k) {
    if (!(axis[k] > 0.0) || !(values[k] > 0.0)) {
      throw NonPositiveValue("fit_slope: log of non-positive value at point " + std::to_string(k));
    }
    lx[k] = std::log(axis[k]);
    ly[k] = std::log(values[k]);
  }
  double mx = 0.0, my = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    mx += lx[k];
    my += ly[k];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    sxx += (lx[k] - mx) * (lx[k] - mx);
    sxy += (lx[k] - mx) * (ly[k] - my);
  }
  if (!(sxx > 0.0)) throw InvalidArgument("fit_slope: axis values must not all coincide");
  SlopeFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double ss = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double e = ly[k] - (f.intercept + f.slope * lx[k]);
    ss += e * e;
  }
  f.residual = std::sqrt(ss / static_cast<double>(n));
  f.points = n;
  return f;
}

struct CheckOutcome {
  CheckSpec spec;
  bool passed = false;
  std::string detail;
};

struct ExperimentResult {
  std::string id;
  ExperimentKind kind = ExperimentKind::SingleRun;
  std::string axis;  // column the scan runs along
  io::Table table;
  std::map<std::string, double> scalars;
  std::map<std::string, SlopeFit> slopes;
  std::vector<std::string> unfitted;  // columns whose fit was impossible (non-positive values)
  std::map<std::string, std::string> artifacts;  // extra output files: name -> contents
  bool complete = true;
  std::string abort_reason;
  double runtime_seconds = 0.0;  // wall clock; never written to the reproducible outputs
};

/// Thrown when a scan cannot finish. Carries the rows computed so far and the
/// original exception.
class ScanAborted : public Error {
 public:
  ScanAborted(const std::string& what, ExperimentResult partial, std::exception_ptr cause)
      : Error(what), partial_(std::make_shared<ExperimentResult>(std::move(partial))),
        cause_(std::move(cause)) {}
  const ExperimentResult& partial() const { return *partial_; }
  std::exception_ptr cause() const { return cause_; }

 private:
  std::shared_ptr<ExperimentResult> partial_;
  std::exception_ptr cause_;
};

/// Dense output over stored continuum samples: cubic Hermite for the node
/// positions (their time derivative is the nodal velocity), linear in time for
/// the velocities.
class ReferenceHistory {
 public:
  explicit ReferenceHistory(std::vector<ContinuumState> samples) : samples_(std::move(samples)) {
    if (samples_.empty()) throw InvalidArgument("reference history is empty");
  }

  const ContinuumState& initial() const { return samples_.front(); }
  const ContinuumState& final() const { return samples_.back(); }
  std::size_t size() const { return samples_.size(); }

  ContinuumState at(double t) const {
    const double tol = 1e-9 * std::max(1.0, std::abs(t));
    if (t <= samples_.front().t + tol) return with_time(samples_.front(), t);
    if (t >= samples_.back().t - tol) return with_time(samples_.back(), t);
    const auto it = std::upper_bound(samples_.begin(), samples_.end(), t,
                                     [](double q, const ContinuumState& s) { return q < s.t; });
    const auto& s1 = *it;
    const auto& s0 = *(it - 1);
    if (std::abs(t - s0.t) <= tol) return with_time(s0, t);
    if (std::abs(t - s1.t) <= tol) return with_time(s1, t);
    const double h = s1.t - s0.t;
    const double s = (t - s0.t) / h;
    const double h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
    const double h10 = s * (1.0 - s) * (1.0 - s);
    const double h01 = s * s * (3.0 - 2.0 * s);
    const double h11 = s * s * (s - 1.0);
    ContinuumState out;
    out.t = t;
    out.weights = s0.weights;
    out.nodes.resize(s0.size());
    out.velocities.resize(s0.size());
    for (std::size_t k = 0; k < s0.size(); ++k) {
      out.nodes[k] = h00 * s0.nodes[k] + h10 * h * s0.velocities[k] + h01 * s1.nodes[k] +
                     h11 * h * s1.velocities[k];
      out.velocities[k] = (1.0 - s) * s0.velocities[k] + s * s1.velocities[k];
    }
    return out;
  }

 private:
  static ContinuumState with_time(const ContinuumState& s, double t) {
    ContinuumState c = s;
    c.t = t;
    return c;
  }
  std::vector<ContinuumState> samples_;
};

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

/// Runs f(0..n-1) on up to `threads` workers. Results land in caller-owned
/// slots by index, so the output order never depends on scheduling; a failure
/// is stored in errors[k].
inline void parallel_for(std::size_t n, std::size_t threads,
                         const std::function<void(std::size_t)>& f,
                         std::vector<std::exception_ptr>& errors) {
  errors.assign(n, nullptr);
  const std::size_t workers = std::max<std::size_t>(1, std::min(threads, n));
  if (workers == 1) {
    for (std::size_t k = 0; k < n; ++k) {
      try {
        f(k);
      } catch (...) {
        errors[k] = std::current_exception();
        return;  // later points would be discarded anyway
      }
    }
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&]() {
      for (std::size_t k = next++; k < n; k = next++) {
        try {
          f(k);
        } catch (...) {
          errors[k] = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
}

inline std::string describe(std::exception_ptr e) {
  try {
    std::rethrow_exception(e);
  } catch (const std::exception& ex) {
    return ex.what();
  } catch (...) {
    return "unknown error";
  }
}

struct TrackedRun {
  ParticleState<1> final;
  double sup_energy = 0.0;
  double int_energy = 0.0;
  double min_distance = std::numeric_limits<double>::infinity();
};

/// Integrates the particles to T, evaluating E^N against the reference at
/// every step (sup and trapezoid time integral) and monitoring the minimum
/// pairwise distance.
inline TrackedRun track_against_reference(ParticleState<1> p, const PotentialSpec& spec, double dt,
                                          double T, Integrator method,
                                          const ReferenceHistory& ref) {
  const std::size_t steps = step_count(dt, T);
  check_step(dt, p.gamma, p.epsilon, method);
  const double t0 = p.t;
  TrackedRun r;
  double e_prev = modulated_kinetic_energy(p, ref.at(t0));
  r.sup_energy = e_prev;
  r.min_distance = min_pairwise_distance<1>(p);
  for (std::size_t k = 1; k <= steps; ++k) {
    p = step_unchecked<1>(std::move(p), spec, dt, method);
    p.t = t0 + static_cast<double>(k) * dt;
    const double e = modulated_kinetic_energy(p, ref.at(p.t));
    r.sup_energy = std::max(r.sup_energy, e);
    r.int_energy += 0.5 * dt * (e_prev + e);
    e_prev = e;
    r.min_distance = std::min(r.min_distance, min_pairwise_distance<1>(p));
  }
  r.final = std::move(p);
  return r;
}

inline ContinuumState initial_continuum(const ExperimentConfig& cfg, std::size_t m) {
  return init_from_density(make_density(cfg), cfg.a, cfg.b, m, make_velocity(cfg));
}

inline ReferenceHistory euler_alignment_reference(const ExperimentConfig& cfg, std::size_t m) {
  auto traj = evolve(initial_continuum(cfg, m), cfg.potential,
                     EulerAlignmentModel{cfg.gamma, cfg.epsilon, Integrator::RK4},
                     cfg.reference_dt, cfg.T);
  return ReferenceHistory(std::move(traj.samples));
}

/// Velocity discrepancy of a coarser reference against a finer one, measured
/// on the fine nodes: (1/2) sum_k w_k |u_fine_k - u_coarse(x_k)|^2.
inline double reference_energy_gap(const ContinuumState& fine, const ContinuumState& coarse) {
  double s = 0.0;
  for (std::size_t k = 0; k < fine.size(); ++k) {
    const double du = fine.velocities[k] - eval_velocity(coarse, fine.nodes[k]);
    s += 0.5 * fine.weights[k] * du * du;
  }
  return s;
}

inline void fit_columns(ExperimentResult& r, const std::vector<std::string>& columns) {
  const auto axis = r.table.column(r.axis);
  for (const auto& c : columns) {
    if (!r.table.has(c)) continue;
    try {
      r.slopes[c] = fit_slope(axis, r.table.column(c));
    } catch (const NonPositiveValue&) {
      r.unfitted.push_back(c);
    }
  }
}

inline void require_fit_points(std::size_t n) {
  if (n < 4) {
    throw InvalidArgument("a scan needs at least 4 axis values for its slope fits, got " +
                          std::to_string(n));
  }
}

template <class Fill>
void run_rows(ExperimentResult& result, std::size_t n, std::size_t threads, const Fill& fill,
              const std::function<std::string(std::size_t)>& label) {
  std::vector<std::vector<double>> rows(n);
  std::vector<std::exception_ptr> errors;
  parallel_for(n, threads, [&](std::size_t k) { rows[k] = fill(k); }, errors);
  for (std::size_t k = 0; k < n; ++k) {
    if (errors[k]) {
      result.complete = false;
      result.abort_reason = label(k) + ": " + describe(errors[k]);
      throw ScanAborted("scan aborted at " + result.abort_reason, result, errors[k]);
    }
    result.table.rows.push_back(std::move(rows[k]));
  }
}

}  // namespace detail

/// N-scan against an Euler-alignment reference at resolution M (and M/2 for
/// the self-convergence estimate).
inline ExperimentResult run_mean_field_scan(const ExperimentConfig& cfg, std::size_t threads = 1) {
  cfg.validate();
  if (cfg.experiment != ExperimentKind::MeanFieldScan) throw InvalidArgument("not a MeanFieldScan");
  detail::require_fit_points(cfg.N_list.size());
  const auto t_start = std::chrono::steady_clock::now();
  const auto& spec = cfg.potential;
  const bool singular = spec.singular();

  ExperimentResult result;
  result.id = cfg.id;
  result.kind = cfg.experiment;
  result.axis = "N";
  result.table.columns = {"t",        "N",         "epsilon",    "M",          "energy_0",
                          "dbl_0",    "w1_0",      "error_0",    "energy_T",   "dbl_T",
                          "w1_T",     "error_T",   "error_ratio", "sup_energy", "int_energy",
                          "min_distance", "moment_momentum_T", "moment_energy_T"};
  if (singular) {
    for (const char* c : {"potential_0", "potential_T", "total_0", "total_T"}) {
      result.table.columns.push_back(c);
    }
  }

  // The two references are independent; run them side by side when allowed.
  std::vector<std::unique_ptr<ReferenceHistory>> refs(2);
  {
    const std::size_t sizes[2] = {cfg.M, cfg.M / 2};
    std::vector<std::exception_ptr> errors;
    detail::parallel_for(2, threads, [&](std::size_t k) {
      refs[k] = std::make_unique<ReferenceHistory>(detail::euler_alignment_reference(cfg, sizes[k]));
    }, errors);
    for (std::size_t k = 0; k < 2; ++k) {
      if (errors[k]) {
        result.complete = false;
        result.abort_reason = "reference M = " + std::to_string(sizes[k]) + ": " +
                              detail::describe(errors[k]);
        throw ScanAborted("scan aborted at " + result.abort_reason, result, errors[k]);
      }
    }
  }
  const ReferenceHistory& ref = *refs[0];
  result.scalars["reference_selfconv_dbl"] =
      dbl<1>(quadrature_measure(ref.final()), quadrature_measure(refs[1]->final()));
  result.scalars["reference_selfconv_energy"] =
      detail::reference_energy_gap(ref.final(), refs[1]->final());

  const auto data = make_initial_data(cfg);
  const auto fill = [&](std::size_t k) {
    const std::size_t n = cfg.N_list[k];
    auto p0 = sample_particles(data, n, cfg.epsilon, cfg.gamma);
    const auto& r0 = ref.initial();
    const auto m0 = modulated_energy_report(p0, r0, spec);
    const auto run = detail::track_against_reference(p0, spec, cfg.dt, cfg.T, cfg.integrator, ref);
    const auto rT = ref.at(run.final.t);
    const auto mT = modulated_energy_report(run.final, rT, spec);
    const auto moments = local_moment_errors(run.final, rT);
    const double err0 = m0.kinetic + m0.dbl * m0.dbl;
    const double errT = mT.kinetic + mT.dbl * mT.dbl;
    std::vector<double> row = {cfg.T,        static_cast<double>(n),
                               cfg.epsilon,  static_cast<double>(cfg.M),
                               m0.kinetic,   m0.dbl,
                               m0.w1,        err0,
                               mT.kinetic,   mT.dbl,
                               mT.w1,        errT,
                               errT / err0,  run.sup_energy,
                               run.int_energy, run.min_distance,
                               moments.dbl_momentum, moments.dbl_energy};
    if (singular) {
      row.push_back(*m0.potential);
      row.push_back(*mT.potential);
      row.push_back(*m0.potential + err0);
      row.push_back(*mT.potential + errT);
    }
    return row;
  };
  detail::run_rows(result, cfg.N_list.size(), threads, fill,
                   [&](std::size_t k) { return "N = " + std::to_string(cfg.N_list[k]); });

  double max_ratio = 0.0;
  for (double r : result.table.column("error_ratio")) max_ratio = std::max(max_ratio, r);
  result.scalars["max_error_ratio"] = max_ratio;
  double min_dist = std::numeric_limits<double>::infinity();
  for (double d : result.table.column("min_distance")) min_dist = std::min(min_dist, d);
  result.scalars["min_distance"] = min_dist;
  detail::fit_columns(result, {"energy_T", "dbl_T", "w1_T", "error_T", "sup_energy", "int_energy",
                               "dbl_0", "potential_T", "total_T"});
  result.runtime_seconds = detail::seconds_since(t_start);
  return result;
}

/// epsilon-scan at fixed N against the aggregation reference. Initial data
/// are well prepared: v_i = ubar_0(x_i) + delta_scale sqrt(eps) xi_i.
inline ExperimentResult run_inertia_scan(const ExperimentConfig& cfg, std::size_t threads = 1) {
  cfg.validate();
  if (cfg.experiment != ExperimentKind::InertiaScan) throw InvalidArgument("not an InertiaScan");
  detail::require_fit_points(cfg.epsilon_list.size());
  const auto t_start = std::chrono::steady_clock::now();
  const auto& spec = cfg.potential;

  ExperimentResult result;
  result.id = cfg.id;
  result.kind = cfg.experiment;
  result.axis = "epsilon";
  result.table.columns = {"t",          "N",          "epsilon",     "M",
                          "delta",      "energy_0",   "dbl_0",       "energy_T",
                          "dbl_T",      "w1_T",       "sup_energy",  "int_energy",
                          "sup_energy_over_eps", "int_energy_over_eps2", "dbl_T_over_eps",
                          "min_distance"};

  ContinuumTrajectory traj;
  try {
    traj = evolve(detail::initial_continuum(cfg, cfg.M), spec, AggregationModel{cfg.gamma, {}},
                  cfg.reference_dt, cfg.T);
  } catch (...) {
    result.complete = false;
    result.abort_reason = "aggregation reference: " + detail::describe(std::current_exception());
    throw ScanAborted("scan aborted at " + result.abort_reason, result, std::current_exception());
  }
  result.scalars["max_relation_residual"] = traj.max_relation_residual;
  result.scalars["max_material_acceleration"] = traj.max_material_acceleration;
  result.scalars["direct_solves"] = static_cast<double>(traj.direct_solves);
  const ReferenceHistory ref(std::move(traj.samples));

  const auto data = make_initial_data(cfg);
  const auto positions = sample_positions(data, cfg.N);
  const auto fill = [&](std::size_t k) {
    const double eps = cfg.epsilon_list[k];
    const double delta = cfg.delta_scale * std::sqrt(eps);
    ParticleState<1> p0;
    p0.gamma = cfg.gamma;
    p0.epsilon = eps;
    for (std::size_t i = 0; i < positions.size(); ++i) {
      p0.x.push_back({positions[i]});
      p0.v.push_back({eval_velocity(ref.initial(), positions[i]) + delta * alternating_sign(i)});
    }
    const double e0 = modulated_kinetic_energy(p0, ref.initial());
    const double d0 = dbl<1>(empirical_measure<1>(p0), quadrature_measure(ref.initial()));
    const auto run = detail::track_against_reference(p0, spec, cfg.dt, cfg.T, cfg.integrator, ref);
    const auto rT = ref.at(run.final.t);
    const auto mu = empirical_measure<1>(run.final);
    const auto nu = quadrature_measure(rT);
    const double eT = modulated_kinetic_energy(run.final, rT);
    const double dT = dbl<1>(mu, nu);
    return std::vector<double>{cfg.T,
                               static_cast<double>(cfg.N),
                               eps,
                               static_cast<double>(cfg.M),
                               delta,
                               e0,
                               d0,
                               eT,
                               dT,
                               w1_1d(mu, nu),
                               run.sup_energy,
                               run.int_energy,
                               run.sup_energy / eps,
                               run.int_energy / (eps * eps),
                               dT / eps,
                               run.min_distance};
  };
  detail::run_rows(result, cfg.epsilon_list.size(), threads, fill, [&](std::size_t k) {
    return "epsilon = " + io::fmt(cfg.epsilon_list[k]);
  });
  detail::fit_columns(result, {"sup_energy", "int_energy", "dbl_T", "energy_T", "w1_T"});
  result.runtime_seconds = detail::seconds_since(t_start);
  return result;
}

namespace detail {

template <int D>
ParticleState<D> sample_nd(const ExperimentConfig& cfg) {
  const auto data = make_initial_data(cfg);
  if constexpr (D == 1) {
    return sample_particles(data, cfg.N, cfg.epsilon, cfg.gamma);
  } else {
    // Independent coordinates, each from rho0, with decorrelated seeds.
    ParticleState<D> p;
    p.gamma = cfg.gamma;
    p.epsilon = cfg.epsilon;
    p.x.assign(cfg.N, zero_vec<D>());
    p.v.assign(cfg.N, zero_vec<D>());
    const auto u0 = make_velocity(cfg);
    for (int c = 0; c < D; ++c) {
      auto dc = data;
      dc.seed = data.seed + 0x9E3779B97F4A7C15ull * static_cast<std::uint64_t>(c);
      const auto xs = sample_positions(dc, cfg.N);
      for (std::size_t i = 0; i < cfg.N; ++i) {
        p.x[i][c] = xs[i];
        p.v[i][c] = u0(xs[i]) + cfg.delta * alternating_sign(i);
      }
    }
    return p;
  }
}

template <int D>
ExperimentResult run_single_impl(const ExperimentConfig& cfg) {
  const auto t_start = std::chrono::steady_clock::now();
  const auto& spec = cfg.potential;
  ExperimentResult result;
  result.id = cfg.id;
  result.kind = cfg.experiment;
  result.axis = "t";
  result.table.columns = {"t",           "N",           "epsilon",     "M",
                          "free_energy", "kinetic",     "confinement", "interaction",
                          "dissipation", "min_distance", "momentum"};
  const bool with_ref = D == 1 && cfg.M > 0;
  if (with_ref) {
    for (const char* c : {"energy", "dbl", "w1"}) result.table.columns.push_back(c);
    if (spec.singular()) result.table.columns.push_back("potential");
  }
  std::unique_ptr<ReferenceHistory> ref;
  if constexpr (D == 1) {
    if (with_ref) ref = std::make_unique<ReferenceHistory>(euler_alignment_reference(cfg, cfg.M));
  }

  auto p = sample_nd<D>(cfg);
  std::ostringstream csv;
  io::write_particle_csv_header<D>(csv);
  const std::size_t steps = step_count(cfg.dt, cfg.T);
  const auto record = [&](const ParticleState<D>& s) {
    const auto f = free_energy<D>(s, spec);
    std::vector<double> row = {s.t, static_cast<double>(s.size()), s.epsilon,
                               static_cast<double>(cfg.M), f.total, f.kinetic, f.confinement,
                               f.interaction, dissipation_rate<D>(s, spec),
                               min_pairwise_distance<D>(s), norm(total_momentum<D>(s))};
    if constexpr (D == 1) {
      if (with_ref) {
        const auto r = modulated_energy_report(s, ref->at(s.t), spec);
        row.push_back(r.kinetic);
        row.push_back(r.dbl);
        row.push_back(r.w1);
        if (r.potential) row.push_back(*r.potential);
      }
    }
    result.table.rows.push_back(std::move(row));
    io::write_particle_csv<D>(csv, s);
  };
  record(p);
  check_step(cfg.dt, p.gamma, p.epsilon, cfg.integrator);
  double min_dist = min_pairwise_distance<D>(p);
  for (std::size_t k = 1; k <= steps; ++k) {
    p = step_unchecked<D>(std::move(p), spec, cfg.dt, cfg.integrator);
    p.t = static_cast<double>(k) * cfg.dt;
    min_dist = std::min(min_dist, min_pairwise_distance<D>(p));
    if (k % cfg.sample_every == 0 || k == steps) record(p);
  }
  result.scalars["min_distance"] = min_dist;
  result.artifacts[cfg.id + "_trajectory.csv"] = csv.str();
  std::ostringstream bin;
  io::write_checkpoint<D>(bin, p);
  result.artifacts[cfg.id + "_final.bin"] = bin.str();
  result.runtime_seconds = seconds_since(t_start);
  return result;
}

template <int D>
std::vector<ParticleState<D>> resolved_trajectory(ParticleState<D> p, const PotentialSpec& spec,
                                                  double dt, double T, Integrator method) {
  const std::size_t steps = step_count(dt, T);
  check_step(dt, p.gamma, p.epsilon, method);
  std::vector<ParticleState<D>> traj;
  traj.reserve(steps + 1);
  traj.push_back(p);
  for (std::size_t k = 1; k <= steps; ++k) {
    p = step_unchecked<D>(std::move(p), spec, dt, method);
    p.t = static_cast<double>(k) * dt;
    traj.push_back(p);
  }
  return traj;
}

template <int D>
ExperimentResult run_dissipation_impl(const ExperimentConfig& cfg) {
  const auto t_start = std::chrono::steady_clock::now();
  const auto& spec = cfg.potential;
  ExperimentResult result;
  result.id = cfg.id;
  result.kind = cfg.experiment;
  result.axis = "dt";
  result.table.columns = {"t", "N", "epsilon", "M", "dt", "dissipation_residual"};
  const auto p0 = sample_nd<D>(cfg);
  double residual[2] = {0.0, 0.0};
  double corrected[2] = {0.0, 0.0};
  for (int h = 0; h < 2; ++h) {
    const double dt = cfg.dt / (h == 0 ? 1.0 : 2.0);
    const auto traj = resolved_trajectory<D>(p0, spec, dt, cfg.T, cfg.integrator);
    const std::span<const ParticleState<D>> view(traj);
    residual[h] = dissipation_residual<D>(view, spec);
    corrected[h] = dissipation_residual<D>(view, spec, DissipationQuadrature::CorrectedTrapezoid);
    result.table.rows.push_back({cfg.T, static_cast<double>(cfg.N), cfg.epsilon,
                                 static_cast<double>(cfg.M), dt, residual[h]});
  }
  result.scalars["dissipation_residual"] = residual[0];
  result.scalars["dissipation_residual_half"] = residual[1];
  result.scalars["residual_ratio"] = residual[0] / residual[1];
  // Endpoint-corrected quadrature: the time-integration error of the scheme itself.
  result.scalars["corrected_residual"] = corrected[0];
  result.scalars["corrected_residual_ratio"] = corrected[0] / corrected[1];

  // Conservative companion run: no damping, no alignment, same initial data.
  PotentialSpec conservative = spec;
  conservative.communication = NoCommunication{};
  auto q = p0;
  q.gamma = 0.0;
  const auto traj = resolved_trajectory<D>(q, conservative, cfg.dt, cfg.T, cfg.integrator);
  result.scalars["conservative_drift"] =
      std::abs(free_energy_change<D>(traj.front(), traj.back(), conservative));
  double rise = 0.0;
  const auto damped = resolved_trajectory<D>(p0, spec, cfg.dt, cfg.T, cfg.integrator);
  for (std::size_t k = 1; k < damped.size(); ++k) {
    rise = std::max(rise, free_energy_change<D>(damped[k - 1], damped[k], spec));
  }
  result.scalars["max_free_energy_increase"] = rise;
  result.runtime_seconds = seconds_since(t_start);
  return result;
}

template <template <int> class F>
ExperimentResult dispatch_dimension(const ExperimentConfig& cfg) {
  switch (cfg.potential.dimension) {
    case 1:
      return F<1>::run(cfg);
    case 2:
      return F<2>::run(cfg);
    case 3:
      return F<3>::run(cfg);
    default:
      throw ConfigError("dimension must be 1, 2 or 3");
  }
}

template <int D>
struct SingleRunner {
  static ExperimentResult run(const ExperimentConfig& cfg) { return run_single_impl<D>(cfg); }
};

template <int D>
struct DissipationRunner {
  static ExperimentResult run(const ExperimentConfig& cfg) { return run_dissipation_impl<D>(cfg); }
};

}  // namespace detail

inline ExperimentResult run_single(const ExperimentConfig& cfg) {
  cfg.validate();
  return detail::dispatch_dimension<detail::SingleRunner>(cfg);
}

inline ExperimentResult run_dissipation_check(const ExperimentConfig& cfg) {
  cfg.validate();
  return detail::dispatch_dimension<detail::DissipationRunner>(cfg);
}

inline ExperimentResult run_experiment(const ExperimentConfig& cfg, std::size_t threads = 1) {
  switch (cfg.experiment) {
    case ExperimentKind::MeanFieldScan:
      return run_mean_field_scan(cfg, threads);
    case ExperimentKind::InertiaScan:
      return run_inertia_scan(cfg, threads);
    case ExperimentKind::SingleRun:
      return run_single(cfg);
    case ExperimentKind::DissipationCheck:
      return run_dissipation_check(cfg);
  }
  throw InvalidArgument("unknown experiment kind");
}

namespace detail {

inline std::vector<double> check_values(const ExperimentResult& r, const std::string& column) {
  if (column == "runtime_seconds") return {r.runtime_seconds};
  if (const auto it = r.scalars.find(column); it != r.scalars.end()) return {it->second};
  if (r.table.has(column)) return r.table.column(column);
  throw ConfigError("check refers to unknown column '" + column + "'");
}

}  // namespace detail

inline CheckOutcome evaluate_check(const ExperimentResult& r, const CheckSpec& c) {
  CheckOutcome out{c, false, ""};
  const auto values = detail::check_values(r, c.column);
  std::ostringstream msg;
  if (c.kind == "decreasing") {
    out.passed = values.size() >= 2;
    for (std::size_t k = 1; k < values.size(); ++k) {
      if (!(values[k] < values[k - 1])) out.passed = false;
    }
    msg << c.column << " values:";
    for (double v : values) msg << ' ' << io::fmt(v);
  } else if (c.kind == "slope") {
    const auto it = r.slopes.find(c.column);
    if (it == r.slopes.end()) {
      msg << "no slope fitted for " << c.column;
    } else {
      out.passed = it->second.slope >= c.min && it->second.slope <= c.max;
      msg << "slope " << io::fmt(it->second.slope) << " in [" << io::fmt(c.min) << ", "
          << io::fmt(c.max) << "], fit residual " << io::fmt(it->second.residual);
    }
  } else {
    double worst = c.kind == "at_most" ? -std::numeric_limits<double>::infinity()
                                       : std::numeric_limits<double>::infinity();
    out.passed = !values.empty();
    for (double v : values) {
      bool ok = false;
      if (c.kind == "at_most") {
        ok = v <= c.value;
        worst = std::max(worst, v);
      } else if (c.kind == "at_least") {
        ok = v >= c.value;
        worst = std::min(worst, v);
      } else if (c.kind == "greater_than") {
        ok = v > c.value;
        worst = std::min(worst, v);
      } else {
        throw ConfigError("unknown check kind '" + c.kind + "'");
      }
      out.passed = out.passed && ok;
    }
    msg << c.column << " worst " << io::fmt(worst) << " vs " << c.kind << ' ' << io::fmt(c.value);
  }
  out.detail = msg.str();
  return out;
}

inline std::vector<CheckOutcome> evaluate_checks(const ExperimentResult& r,
                                                 const std::vector<CheckSpec>& checks) {
  std::vector<CheckOutcome> out;
  for (const auto& c : checks) out.push_back(evaluate_check(r, c));
  return out;
}

/// Writes <id>.csv, <id>.dat, <id>_slopes.csv, <id>_scalars.csv and any
/// artifacts. An incomplete result gets a trailing "# partial" marker line.
inline void write_outputs(const ExperimentResult& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto open = [&](const std::string& name) {
    std::ofstream f(dir / name, std::ios::binary);
    if (!f) throw InvalidArgument("cannot write " + (dir / name).string());
    return f;
  };
  {
    auto f = open(r.id + ".csv");
    io::write_report_csv(f, r.id, r.table);
    if (!r.complete) f << "# partial: " << r.abort_reason << '\n';
  }
  {
    auto f = open(r.id + ".dat");
    io::write_gnuplot(f, r.table);
    if (!r.complete) f << "# partial: " << r.abort_reason << '\n';
  }
  if (!r.slopes.empty() || !r.unfitted.empty()) {
    auto f = open(r.id + "_slopes.csv");
    f << "experiment,column,axis,slope,intercept,residual,points\n";
    for (const auto& [col, s] : r.slopes) {
      f << r.id << ',' << col << ',' << r.axis << ',' << io::fmt(s.slope) << ','
        << io::fmt(s.intercept) << ',' << io::fmt(s.residual) << ',' << s.points << '\n';
    }
    for (const auto& col : r.unfitted) f << r.id << ',' << col << ',' << r.axis << ",nan,nan,nan,0\n";
  }
  {
    auto f = open(r.id + "_scalars.csv");
    f << "experiment,name,value\n";
    for (const auto& [name, v] : r.scalars) f << r.id << ',' << name << ',' << io::fmt(v) << '\n';
  }
  for (const auto& [name, content] : r.artifacts) {
    auto f = open(name);
    f << content;
  }
}

}  // namespace swarm
