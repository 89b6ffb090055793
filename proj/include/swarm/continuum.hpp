#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "swarm/core.hpp"
#include "swarm/particle.hpp"
#include "swarm/potentials.hpp"

namespace swarm {

/// Lagrangian discretization of a 1D density: quadrature nodes carried by the
/// flow, fixed weights (mass never moves between nodes), nodal velocities.
struct ContinuumState {
  std::vector<double> nodes;
  std::vector<double> weights;
  std::vector<double> velocities;
  double t = 0.0;

  std::size_t size() const { return nodes.size(); }

  void validate() const {
    if (nodes.size() != weights.size() || nodes.size() != velocities.size()) {
      throw InvalidArgument("continuum nodes, weights and velocities must have equal length");
    }
  }
};

using DensityFn = std::function<double(double)>;
using VelocityFn = std::function<double(double)>;

/// Midpoint rule on [a, b] with M cells; weights rho0(x_k) dx renormalized to
/// total mass 1.
inline ContinuumState init_from_density(const DensityFn& density, double a, double b,
                                        std::size_t M, const VelocityFn& u0) {
  if (M < 2) throw InvalidArgument("continuum resolution M must be >= 2");
  if (!(b > a)) throw InvalidArgument("density interval must satisfy a < b");
  ContinuumState s;
  s.nodes.resize(M);
  s.weights.resize(M);
  s.velocities.resize(M);
  const double dx = (b - a) / static_cast<double>(M);
  double total = 0.0;
  for (std::size_t k = 0; k < M; ++k) {
    const double x = a + (static_cast<double>(k) + 0.5) * dx;
    const double rho = density(x);
    if (!(rho > 0.0) || !std::isfinite(rho)) {
      throw NonPositiveDensity("density is not positive at x = " + std::to_string(x));
    }
    s.nodes[k] = x;
    s.weights[k] = rho * dx;
    total += s.weights[k];
  }
  for (std::size_t k = 0; k < M; ++k) {
    s.weights[k] /= total;
    s.velocities[k] = u0 ? u0(s.nodes[k]) : 0.0;
  }
  return s;
}

namespace detail {

inline std::vector<Vec<1>> as_points(std::span<const double> xs) {
  std::vector<Vec<1>> p(xs.size());
  for (std::size_t k = 0; k < xs.size(); ++k) p[k] = {xs[k]};
  return p;
}

inline std::vector<double> as_scalars(std::span<const Vec<1>> p) {
  std::vector<double> xs(p.size());
  for (std::size_t k = 0; k < p.size(); ++k) xs[k] = p[k][0];
  return xs;
}

inline void check_ordering(std::span<const double> nodes, double t) {
  for (std::size_t k = 1; k < nodes.size(); ++k) {
    if (!(nodes[k] > nodes[k - 1])) {
      throw CharacteristicCrossing(
          "Lagrangian nodes " + std::to_string(k - 1) + " and " + std::to_string(k) +
              " crossed at t = " + std::to_string(t),
          t);
    }
  }
}

}  // namespace detail

/// Weighted-quadrature transcription of the Euler-alignment system along
/// characteristics. Goes through the same pair-sum path as the particle rhs.
inline Derivative<1> euler_alignment_rhs(const ContinuumState& state, const PotentialSpec& spec,
                                         double gamma, double epsilon) {
  state.validate();
  detail::check_dimension(spec, 1);
  if (!(epsilon > 0.0)) throw InvalidArgument("epsilon must be > 0");
  const auto x = detail::as_points(state.nodes);
  const auto v = detail::as_points(state.velocities);
  Derivative<1> out;
  detail::weighted_rhs<1>(x, v, state.weights, spec, gamma, epsilon, out.dx, out.dv);
  return out;
}

struct AggregationOptions {
  double damping = 0.5;
  std::size_t max_iters = 10000;
  double tolerance = 1e-12;
  bool direct_fallback = true;
};

struct AggregationSolve {
  std::vector<double> velocity;
  double residual = 0.0;
  std::size_t iterations = 0;
  bool used_direct = false;
};

namespace detail {

// Sparse rows of w_j psi(x_k - x_j), j != k. Nodes must be sorted so the
// compact support can be scanned as a window.
struct AlignmentRows {
  std::vector<std::size_t> offsets;
  std::vector<std::size_t> cols;
  std::vector<double> vals;
  std::vector<double> mass;
};

inline AlignmentRows alignment_rows(std::span<const double> nodes, std::span<const double> weights,
                                    const PotentialSpec& spec) {
  const std::size_t m = nodes.size();
  AlignmentRows rows;
  rows.offsets.assign(m + 1, 0);
  rows.mass.assign(m, 0.0);
  const auto* bump = std::get_if<CompactBump>(&spec.communication);
  if (bump == nullptr) return rows;
  const bool sorted = std::is_sorted(nodes.begin(), nodes.end());
  for (std::size_t k = 0; k < m; ++k) {
    std::size_t lo = 0;
    std::size_t hi = m;
    if (sorted) {
      lo = static_cast<std::size_t>(
          std::lower_bound(nodes.begin(), nodes.end(), nodes[k] - bump->radius) - nodes.begin());
      hi = static_cast<std::size_t>(
          std::upper_bound(nodes.begin(), nodes.end(), nodes[k] + bump->radius) - nodes.begin());
    }
    for (std::size_t j = lo; j < hi; ++j) {
      if (j == k) continue;
      const double p = comm_value<1>(*bump, Vec<1>{nodes[k] - nodes[j]});
      if (p == 0.0) continue;
      rows.cols.push_back(j);
      rows.vals.push_back(weights[j] * p);
      rows.mass[k] += weights[j] * p;
    }
    rows.offsets[k + 1] = rows.cols.size();
  }
  return rows;
}

// r = b - gamma u - L u, with (L u)_k = mass_k u_k - sum_j a_kj u_j.
inline double alignment_residual(const AlignmentRows& rows, double gamma,
                                 std::span<const double> b, std::span<const double> u,
                                 std::vector<double>& r) {
  const std::size_t m = b.size();
  r.resize(m);
  double worst = 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    double a = 0.0;
    for (std::size_t e = rows.offsets[k]; e < rows.offsets[k + 1]; ++e) a += rows.vals[e] * u[rows.cols[e]];
    r[k] = b[k] - gamma * u[k] - (rows.mass[k] * u[k] - a);
    worst = std::max(worst, std::abs(r[k]));
  }
  return worst;
}

inline std::vector<double> alignment_direct_solve(const AlignmentRows& rows, double gamma,
                                                  std::span<const double> b) {
  const auto m = static_cast<Eigen::Index>(b.size());
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(m, m);
  Eigen::VectorXd rhs(m);
  for (Eigen::Index k = 0; k < m; ++k) {
    a(k, k) = gamma + rows.mass[static_cast<std::size_t>(k)];
    for (std::size_t e = rows.offsets[static_cast<std::size_t>(k)];
         e < rows.offsets[static_cast<std::size_t>(k) + 1]; ++e) {
      a(k, static_cast<Eigen::Index>(rows.cols[e])) -= rows.vals[e];
    }
    rhs(k) = b[static_cast<std::size_t>(k)];
  }
  const Eigen::VectorXd u = a.partialPivLu().solve(rhs);
  return std::vector<double>(u.data(), u.data() + m);
}

}  // namespace detail

/// Solves gamma u_k + sum_j w_j psi_kj (u_k - u_j) = b_k by damped fixed-point
/// iteration u <- (1-theta) u + theta (b - L u) / gamma. The map contracts
/// when the alignment mass is small against gamma; a divergent or exhausted
/// iteration raises NoConvergence, a roundoff plateau falls back to a dense
/// LU solve.
inline AggregationSolve solve_alignment_system(std::span<const double> nodes,
                                               std::span<const double> weights,
                                               const PotentialSpec& spec, double gamma,
                                               std::span<const double> b,
                                               const AggregationOptions& opts = {},
                                               std::span<const double> warm_start = {}) {
  if (!(gamma > 0.0)) throw InvalidArgument("aggregation velocity needs gamma > 0");
  const std::size_t m = nodes.size();
  AggregationSolve out;
  const auto rows = detail::alignment_rows(nodes, weights, spec);
  if (warm_start.size() == m) {
    out.velocity.assign(warm_start.begin(), warm_start.end());
  } else {
    out.velocity.assign(m, 0.0);
  }
  std::vector<double> r;
  if (rows.cols.empty()) {
    // No alignment coupling: the system is diagonal.
    for (std::size_t k = 0; k < m; ++k) out.velocity[k] = b[k] / gamma;
    out.residual = detail::alignment_residual(rows, gamma, b, out.velocity, r);
    return out;
  }
  double res = detail::alignment_residual(rows, gamma, b, out.velocity, r);
  const double initial = res;
  double best = res;
  std::size_t best_iter = 0;
  std::size_t it = 0;
  constexpr std::size_t kStallWindow = 200;
  while (res > opts.tolerance) {
    if (it >= opts.max_iters) {
      throw NoConvergence("aggregation velocity: residual " + std::to_string(res) + " after " +
                          std::to_string(it) + " iterations");
    }
    if (!std::isfinite(res) || res > 1e6 * std::max(initial, 1.0)) {
      throw NoConvergence("aggregation velocity iteration diverges (gamma too small relative "
                          "to the alignment mass)");
    }
    if (it - best_iter > kStallWindow) {
      if (!opts.direct_fallback) {
        throw NoConvergence("aggregation velocity iteration stalled at residual " +
                            std::to_string(res));
      }
      out.velocity = detail::alignment_direct_solve(rows, gamma, b);
      out.used_direct = true;
      res = detail::alignment_residual(rows, gamma, b, out.velocity, r);
      break;
    }
    for (std::size_t k = 0; k < m; ++k) out.velocity[k] += opts.damping * r[k] / gamma;
    res = detail::alignment_residual(rows, gamma, b, out.velocity, r);
    ++it;
    if (res < 0.9 * best) {
      best = res;
      best_iter = it;
    }
  }
  out.residual = res;
  out.iterations = it;
  return out;
}

/// Forcing of the aggregation relation: -grad V(x_k) - sum_j w_j grad W(x_k - x_j).
inline std::vector<double> aggregation_forcing(const ContinuumState& state,
                                               const PotentialSpec& spec) {
  const auto x = detail::as_points(state.nodes);
  const auto s = detail::pair_sums<1>(x, x, state.weights, spec, /*with_alignment=*/false);
  std::vector<double> b(state.size());
  for (std::size_t k = 0; k < state.size(); ++k) {
    b[k] = s.force[k][0] - grad_V<1>(spec, x[k])[0];
  }
  return b;
}

inline AggregationSolve solve_aggregation_velocity(const ContinuumState& state,
                                                   const PotentialSpec& spec, double gamma,
                                                   const AggregationOptions& opts = {},
                                                   std::span<const double> warm_start = {}) {
  state.validate();
  detail::check_dimension(spec, 1);
  const auto b = aggregation_forcing(state, spec);
  return solve_alignment_system(state.nodes, state.weights, spec, gamma, b, opts, warm_start);
}

inline std::vector<double> aggregation_velocity(const ContinuumState& state,
                                                const PotentialSpec& spec, double gamma) {
  return solve_aggregation_velocity(state, spec, gamma).velocity;
}

/// Max-norm residual of gamma u + L u = b evaluated through the generic pair
/// sums (independent of the sparse rows used by the solver).
inline double aggregation_relation_residual(const ContinuumState& state, const PotentialSpec& spec,
                                            double gamma, std::span<const double> u) {
  const auto x = detail::as_points(state.nodes);
  const auto uv = detail::as_points(u);
  const auto s = detail::pair_sums<1>(x, uv, state.weights, spec);
  double worst = 0.0;
  for (std::size_t k = 0; k < state.size(); ++k) {
    const double lhs = gamma * u[k] + s.mass[k] * u[k] - s.align[k][0];
    const double rhs = s.force[k][0] - grad_V<1>(spec, x[k])[0];
    worst = std::max(worst, std::abs(lhs - rhs));
  }
  return worst;
}

struct EulerAlignmentModel {
  double gamma = 0.0;
  double epsilon = 1.0;
  Integrator method = Integrator::RK4;
};

struct AggregationModel {
  double gamma = 1.0;
  AggregationOptions options{};
};

using ContinuumModel = std::variant<EulerAlignmentModel, AggregationModel>;

struct ContinuumTrajectory {
  std::vector<ContinuumState> samples;
  // Aggregation only: max |(u_k(t+dt) - u_k(t)) / dt| following nodes, a
  // Lagrangian estimate of the material acceleration d_t u + u d_x u.
  double max_material_acceleration = 0.0;
  double max_relation_residual = 0.0;
  std::size_t direct_solves = 0;
};

namespace detail {

inline std::size_t step_count(double dt, double T) {
  if (!(dt > 0.0)) throw InvalidArgument("time step must be positive");
  if (!(T >= 0.0)) throw InvalidArgument("final time must be >= 0");
  const double n = std::round(T / dt);
  if (std::abs(n * dt - T) > 1e-9 * std::max(T, dt)) {
    throw InvalidArgument("final time must be an integer multiple of dt");
  }
  return static_cast<std::size_t>(n);
}

}  // namespace detail

/// Fixed-step evolution to time T, keeping every `sample_every`-th state
/// (always including t = 0 and t = T). The 1D node ordering is checked after
/// every step.
inline ContinuumTrajectory evolve(ContinuumState state, const PotentialSpec& spec,
                                  const ContinuumModel& model, double dt, double T,
                                  std::size_t sample_every = 1) {
  state.validate();
  detail::check_dimension(spec, 1);
  if (sample_every == 0) throw InvalidArgument("sample_every must be >= 1");
  const std::size_t steps = detail::step_count(dt, T);
  const double t0 = state.t;
  detail::check_ordering(state.nodes, t0);
  ContinuumTrajectory traj;
  const auto record = [&](std::size_t k) {
    return k % sample_every == 0 || k == steps;
  };

  if (const auto* ea = std::get_if<EulerAlignmentModel>(&model)) {
    detail::check_step(dt, ea->gamma, ea->epsilon, ea->method);
    auto x = detail::as_points(state.nodes);
    auto v = detail::as_points(state.velocities);
    traj.samples.push_back(state);
    for (std::size_t k = 1; k <= steps; ++k) {
      detail::weighted_step<1>(x, v, state.weights, spec, ea->gamma, ea->epsilon, dt, ea->method);
      state.t = t0 + static_cast<double>(k) * dt;
      state.nodes = detail::as_scalars(x);
      detail::check_ordering(state.nodes, state.t);
      if (record(k)) {
        state.velocities = detail::as_scalars(v);
        traj.samples.push_back(state);
      }
    }
    return traj;
  }

  const auto& agg = std::get<AggregationModel>(model);
  std::vector<double> u_prev;
  for (std::size_t k = 0;; ++k) {
    state.t = t0 + static_cast<double>(k) * dt;
    const auto sol = solve_aggregation_velocity(state, spec, agg.gamma, agg.options, u_prev);
    traj.direct_solves += sol.used_direct ? 1 : 0;
    traj.max_relation_residual = std::max(traj.max_relation_residual, sol.residual);
    if (!u_prev.empty()) {
      for (std::size_t j = 0; j < state.size(); ++j) {
        traj.max_material_acceleration =
            std::max(traj.max_material_acceleration, std::abs(sol.velocity[j] - u_prev[j]) / dt);
      }
    }
    state.velocities = sol.velocity;
    if (record(k)) traj.samples.push_back(state);
    if (k == steps) break;
    // Heun (RK2) on the node positions.
    ContinuumState mid = state;
    for (std::size_t j = 0; j < state.size(); ++j) mid.nodes[j] += dt * sol.velocity[j];
    const auto sol2 = solve_aggregation_velocity(mid, spec, agg.gamma, agg.options, sol.velocity);
    traj.direct_solves += sol2.used_direct ? 1 : 0;
    traj.max_relation_residual = std::max(traj.max_relation_residual, sol2.residual);
    for (std::size_t j = 0; j < state.size(); ++j) {
      state.nodes[j] += 0.5 * dt * (sol.velocity[j] + sol2.velocity[j]);
    }
    detail::check_ordering(state.nodes, t0 + static_cast<double>(k + 1) * dt);
    u_prev = sol.velocity;
  }
  return traj;
}

/// Piecewise-linear interpolation of the nodal velocity; constant
/// extrapolation outside [nodes.front(), nodes.back()].
inline double eval_velocity(const ContinuumState& state, double q) {
  const auto& xs = state.nodes;
  if (xs.empty()) throw InvalidArgument("eval_velocity on an empty state");
  if (q <= xs.front()) return state.velocities.front();
  if (q >= xs.back()) return state.velocities.back();
  const auto it = std::upper_bound(xs.begin(), xs.end(), q);
  const auto k = static_cast<std::size_t>(it - xs.begin()) - 1;
  const double s = (q - xs[k]) / (xs[k + 1] - xs[k]);
  return state.velocities[k] + s * (state.velocities[k + 1] - state.velocities[k]);
}

inline std::vector<double> eval_velocity(const ContinuumState& state,
                                         std::span<const double> queries) {
  detail::check_ordering(state.nodes, state.t);
  std::vector<double> out(queries.size());
  for (std::size_t i = 0; i < queries.size(); ++i) out[i] = eval_velocity(state, queries[i]);
  return out;
}

}  // namespace swarm
