#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "swarm/core.hpp"
#include "swarm/potentials.hpp"

namespace swarm {

enum class Integrator { RK4, SemiImplicitEuler };

/// N particles in R^D. The model parameters (damping gamma,
/// inertia epsilon) travel with the state.
template <int D>
struct ParticleState {
  std::vector<Vec<D>> x;
  std::vector<Vec<D>> v;
  double gamma = 0.0;
  double epsilon = 1.0;
  double t = 0.0;

  std::size_t size() const { return x.size(); }

  void validate() const {
    if (x.empty()) throw InvalidArgument("particle state needs N >= 1");
    if (x.size() != v.size()) throw InvalidArgument("x and v must have the same length");
    if (!(gamma >= 0.0)) throw InvalidArgument("gamma must be >= 0");
    if (!(epsilon > 0.0)) throw InvalidArgument("epsilon must be > 0");
  }
};

template <int D>
struct Derivative {
  std::vector<Vec<D>> dx;
  std::vector<Vec<D>> dv;
};

/// Discrete free energy. The kinetic part is the unnormalized sum
/// (epsilon/2) sum_i |v_i|^2; with epsilon = 1 this is the usual
/// (1/2) sum_i |v_i|^2.
struct DiscreteFreeEnergy {
  double kinetic = 0.0;
  double confinement = 0.0;
  double interaction = 0.0;
  double total = 0.0;
};

namespace detail {

/// Weighted pair sums shared by the particle system (w_j = 1/N) and the
/// Lagrangian continuum discretization (w_j = quadrature weights):
///   force_i = -sum_{j != i} w_j grad W(x_i - x_j)
///   align_i =  sum_{j != i} w_j psi(x_i - x_j) v_j
///   mass_i  =  sum_{j != i} w_j psi(x_i - x_j)
/// Both callers go through this one function, so their right-hand sides agree
/// bit-for-bit when the weights agree.
template <int D>
struct PairSums {
  std::vector<Vec<D>> force;
  std::vector<Vec<D>> align;
  std::vector<double> mass;
};

template <int D, class Kernel, class Comm>
void pair_sums_impl(std::span<const Vec<D>> x, std::span<const Vec<D>> v,
                    std::span<const double> w, const Kernel& kernel, const Comm& comm,
                    PairSums<D>& out) {
  const std::size_t n = x.size();
  constexpr bool with_force = !std::is_same_v<Kernel, NoInteraction>;
  constexpr bool with_align = !std::is_same_v<Comm, NoCommunication>;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const Vec<D> r = x[i] - x[j];
      if constexpr (with_force) {
        const Vec<D> g = kernel_grad<D>(kernel, r);
        out.force[i] -= w[j] * g;
        out.force[j] += w[i] * g;
      }
      if constexpr (with_align) {
        const double p = comm_value<D>(comm, r);
        if (p != 0.0) {
          out.align[i] += (w[j] * p) * v[j];
          out.align[j] += (w[i] * p) * v[i];
          out.mass[i] += w[j] * p;
          out.mass[j] += w[i] * p;
        }
      }
    }
  }
}

template <int D>
PairSums<D> pair_sums(std::span<const Vec<D>> x, std::span<const Vec<D>> v,
                      std::span<const double> w, const PotentialSpec& spec,
                      bool with_alignment = true) {
  const std::size_t n = x.size();
  PairSums<D> out{std::vector<Vec<D>>(n, zero_vec<D>()), std::vector<Vec<D>>(n, zero_vec<D>()),
                  std::vector<double>(n, 0.0)};
  std::visit(
      [&](const auto& kernel) {
        if (with_alignment) {
          std::visit([&](const auto& comm) { pair_sums_impl<D>(x, v, w, kernel, comm, out); },
                     spec.communication);
        } else {
          pair_sums_impl<D>(x, v, w, kernel, NoCommunication{}, out);
        }
      },
      spec.interaction);
  return out;
}

inline void check_dimension(const PotentialSpec& spec, int d) {
  if (spec.dimension != d) {
    throw InvalidArgument("potential spec dimension " + std::to_string(spec.dimension) +
                          " does not match state dimension " + std::to_string(d));
  }
}

template <int D>
void weighted_rhs(std::span<const Vec<D>> x, std::span<const Vec<D>> v, std::span<const double> w,
                  const PotentialSpec& spec, double gamma, double epsilon,
                  std::vector<Vec<D>>& dx, std::vector<Vec<D>>& dv) {
  const std::size_t n = x.size();
  const PairSums<D> s = pair_sums<D>(x, v, w, spec);
  dx.assign(v.begin(), v.end());
  dv.resize(n);
  const double inv_eps = 1.0 / epsilon;
  for (std::size_t i = 0; i < n; ++i) {
    Vec<D> a = s.force[i] - gamma * v[i] - grad_V<D>(spec, x[i]);
    a += s.align[i] - s.mass[i] * v[i];
    dv[i] = inv_eps * a;
  }
}

template <int D>
void weighted_step(std::vector<Vec<D>>& x, std::vector<Vec<D>>& v, std::span<const double> w,
                   const PotentialSpec& spec, double gamma, double epsilon, double dt,
                   Integrator method) {
  const std::size_t n = x.size();
  if (method == Integrator::SemiImplicitEuler) {
    // Damping and the diagonal alignment term use the new velocity:
    //   (eps + dt (gamma + mass_i)) v_i' = eps v_i + dt (F_i - grad V + align_i)
    const PairSums<D> s = pair_sums<D>(x, v, w, spec);
    for (std::size_t i = 0; i < n; ++i) {
      const Vec<D> explicit_part = s.force[i] - grad_V<D>(spec, x[i]) + s.align[i];
      const double denom = epsilon + dt * (gamma + s.mass[i]);
      v[i] = (1.0 / denom) * (epsilon * v[i] + dt * explicit_part);
      x[i] += dt * v[i];
    }
    return;
  }
  std::vector<Vec<D>> k1x, k1v, k2x, k2v, k3x, k3v, k4x, k4v;
  std::vector<Vec<D>> xs(n), vs(n);
  weighted_rhs<D>(x, v, w, spec, gamma, epsilon, k1x, k1v);
  for (std::size_t i = 0; i < n; ++i) {
    xs[i] = x[i] + (0.5 * dt) * k1x[i];
    vs[i] = v[i] + (0.5 * dt) * k1v[i];
  }
  weighted_rhs<D>(xs, vs, w, spec, gamma, epsilon, k2x, k2v);
  for (std::size_t i = 0; i < n; ++i) {
    xs[i] = x[i] + (0.5 * dt) * k2x[i];
    vs[i] = v[i] + (0.5 * dt) * k2v[i];
  }
  weighted_rhs<D>(xs, vs, w, spec, gamma, epsilon, k3x, k3v);
  for (std::size_t i = 0; i < n; ++i) {
    xs[i] = x[i] + dt * k3x[i];
    vs[i] = v[i] + dt * k3v[i];
  }
  weighted_rhs<D>(xs, vs, w, spec, gamma, epsilon, k4x, k4v);
  const double c = dt / 6.0;
  for (std::size_t i = 0; i < n; ++i) {
    x[i] += c * (k1x[i] + 2.0 * k2x[i] + 2.0 * k3x[i] + k4x[i]);
    v[i] += c * (k1v[i] + 2.0 * k2v[i] + 2.0 * k3v[i] + k4v[i]);
  }
}

inline void check_step(double dt, double gamma, double epsilon, Integrator method) {
  if (!(dt > 0.0)) throw InvalidArgument("time step must be positive");
  if (method == Integrator::RK4 && gamma > 0.0 && dt > 0.5 * epsilon / gamma) {
    throw StiffnessWarning("RK4 with dt > eps/(2 gamma) is likely unstable; use "
                           "SemiImplicitEuler");
  }
}

}  // namespace detail

inline std::vector<double> uniform_weights(std::size_t n) {
  return std::vector<double>(n, 1.0 / static_cast<double>(n));
}

template <int D>
Derivative<D> rhs(const ParticleState<D>& state, const PotentialSpec& spec) {
  state.validate();
  detail::check_dimension(spec, D);
  const auto w = uniform_weights(state.size());
  Derivative<D> out;
  detail::weighted_rhs<D>(state.x, state.v, w, spec, state.gamma, state.epsilon, out.dx, out.dv);
  return out;
}

/// One fixed step. Throws StiffnessWarning for RK4 when dt > eps/(2 gamma);
/// step_unchecked skips that guard.
template <int D>
ParticleState<D> step_unchecked(ParticleState<D> state, const PotentialSpec& spec, double dt,
                                Integrator method) {
  if (!(dt > 0.0)) throw InvalidArgument("time step must be positive");
  const auto w = uniform_weights(state.size());
  detail::weighted_step<D>(state.x, state.v, w, spec, state.gamma, state.epsilon, dt, method);
  state.t += dt;
  return state;
}

template <int D>
ParticleState<D> step(ParticleState<D> state, const PotentialSpec& spec, double dt,
                      Integrator method) {
  state.validate();
  detail::check_dimension(spec, D);
  detail::check_step(dt, state.gamma, state.epsilon, method);
  return step_unchecked<D>(std::move(state), spec, dt, method);
}

template <int D>
DiscreteFreeEnergy free_energy(const ParticleState<D>& state, const PotentialSpec& spec) {
  DiscreteFreeEnergy e;
  const std::size_t n = state.size();
  for (std::size_t i = 0; i < n; ++i) {
    e.kinetic += 0.5 * state.epsilon * norm2(state.v[i]);
    e.confinement += V<D>(spec, state.x[i]);
  }
  if (has_interaction(spec)) {
    double pair = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) pair += W<D>(spec, state.x[i] - state.x[j]);
    }
    // (1/2N) sum_{i != j} counts each unordered pair twice.
    e.interaction = pair / static_cast<double>(n);
  }
  e.total = e.kinetic + e.confinement + e.interaction;
  return e;
}

/// gamma sum_i |v_i|^2 + (1/2N) sum_{i,j} psi(x_i - x_j) |v_j - v_i|^2,
/// the rate at which the free energy decreases.
template <int D>
double dissipation_rate(const ParticleState<D>& state, const PotentialSpec& spec) {
  const std::size_t n = state.size();
  double damp = 0.0;
  for (const auto& vi : state.v) damp += norm2(vi);
  double align = 0.0;
  if (has_communication(spec)) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        align += psi<D>(spec, state.x[i] - state.x[j]) * norm2(state.v[j] - state.v[i]);
      }
    }
  }
  return state.gamma * damp + align / static_cast<double>(n);
}

/// Time derivative of dissipation_rate along the flow.
template <int D>
double dissipation_rate_derivative(const ParticleState<D>& state, const PotentialSpec& spec) {
  const std::size_t n = state.size();
  const Derivative<D> d = rhs<D>(state, spec);
  double damp = 0.0;
  for (std::size_t i = 0; i < n; ++i) damp += 2.0 * dot(state.v[i], d.dv[i]);
  double align = 0.0;
  if (has_communication(spec)) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        const Vec<D> r = state.x[i] - state.x[j];
        const Vec<D> dvij = state.v[j] - state.v[i];
        const Vec<D> daij = d.dv[j] - d.dv[i];
        align += dot(grad_psi<D>(spec, r), -1.0 * dvij) * norm2(dvij) +
                 2.0 * psi<D>(spec, r) * dot(dvij, daij);
      }
    }
  }
  return state.gamma * damp + align / static_cast<double>(n);
}

namespace detail {

// W(r1) - W(r0) without forming the two values first where the kernel allows.
template <int D, class Kernel>
double kernel_change(const Kernel& k, const Vec<D>& r0, const Vec<D>& r1) {
  if constexpr (std::is_same_v<Kernel, NoInteraction>) {
    return 0.0;
  } else if constexpr (std::is_same_v<Kernel, GaussianKernel>) {
    const double s = 0.5 / (k.width * k.width);
    const double dq = dot(r1 - r0, r1 + r0);
    return k.amplitude * std::exp(-s * norm2(r0)) * std::expm1(-s * dq);
  } else {
    return kernel_value<D>(k, r1) - kernel_value<D>(k, r0);
  }
}

}  // namespace detail

/// F(b) - F(a) summed term by term (per particle, per pair), so that the
/// change between nearby states keeps its relative accuracy instead of
/// inheriting the rounding of the O(N) totals.
template <int D>
double free_energy_change(const ParticleState<D>& a, const ParticleState<D>& b,
                          const PotentialSpec& spec) {
  const std::size_t n = a.size();
  if (b.size() != n) throw InvalidArgument("free_energy_change needs equal particle counts");
  double kinetic = 0.0;
  double confinement = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    kinetic += dot(b.v[i] - a.v[i], b.v[i] + a.v[i]);
    if (spec.confinement == Confinement::Quadratic) {
      confinement += dot(b.x[i] - a.x[i], b.x[i] + a.x[i]);
    }
  }
  double pair = 0.0;
  std::visit(
      [&](const auto& k) {
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = i + 1; j < n; ++j) {
            pair += detail::kernel_change<D>(k, a.x[i] - a.x[j], b.x[i] - b.x[j]);
          }
        }
      },
      spec.interaction);
  return 0.5 * a.epsilon * kinetic + 0.5 * confinement + pair / static_cast<double>(n);
}

enum class DissipationQuadrature {
  Trapezoid,           // h/2 (D_k + D_{k+1}); local error h^3/12 D''
  CorrectedTrapezoid,  // adds h^2/12 (D'_k - D'_{k+1}); local error O(h^5) for smooth D
};

/// max_k |F(t_{k+1}) - F(t_k) + int_{t_k}^{t_{k+1}} D dt| over a uniformly
/// sampled trajectory.
template <int D>
double dissipation_residual(std::span<const ParticleState<D>> trajectory,
                            const PotentialSpec& spec,
                            DissipationQuadrature rule = DissipationQuadrature::Trapezoid) {
  if (trajectory.size() < 2) return 0.0;
  const double h = trajectory[1].t - trajectory[0].t;
  if (!(h > 0.0)) throw InvalidArgument("trajectory times must increase");
  for (std::size_t k = 1; k < trajectory.size(); ++k) {
    const double hk = trajectory[k].t - trajectory[k - 1].t;
    if (std::abs(hk - h) > 1e-9 * h) throw InvalidArgument("trajectory must be uniformly spaced");
  }
  const bool corrected = rule == DissipationQuadrature::CorrectedTrapezoid;
  double d_prev = dissipation_rate<D>(trajectory[0], spec);
  double dd_prev = corrected ? dissipation_rate_derivative<D>(trajectory[0], spec) : 0.0;
  double worst = 0.0;
  for (std::size_t k = 1; k < trajectory.size(); ++k) {
    const double df = free_energy_change<D>(trajectory[k - 1], trajectory[k], spec);
    const double d = dissipation_rate<D>(trajectory[k], spec);
    double integral = 0.5 * h * (d_prev + d);
    if (corrected) {
      const double dd = dissipation_rate_derivative<D>(trajectory[k], spec);
      integral += h * h / 12.0 * (dd_prev - dd);
      dd_prev = dd;
    }
    worst = std::max(worst, std::abs(df + integral));
    d_prev = d;
  }
  return worst;
}

template <int D>
double min_pairwise_distance(const ParticleState<D>& state) {
  double best = std::numeric_limits<double>::infinity();
  const std::size_t n = state.size();
  if constexpr (D == 1) {
    std::vector<double> xs(n);
    for (std::size_t i = 0; i < n; ++i) xs[i] = state.x[i][0];
    std::sort(xs.begin(), xs.end());
    for (std::size_t i = 1; i < n; ++i) best = std::min(best, xs[i] - xs[i - 1]);
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) best = std::min(best, norm(state.x[i] - state.x[j]));
    }
  }
  return best;
}

template <int D>
Vec<D> total_momentum(const ParticleState<D>& state) {
  Vec<D> m = zero_vec<D>();
  for (const auto& vi : state.v) m += vi;
  return m;
}

}  // namespace swarm
