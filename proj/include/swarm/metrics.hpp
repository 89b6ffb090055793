#pragma once

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "swarm/continuum.hpp"
#include "swarm/core.hpp"
#include "swarm/lp.hpp"
#include "swarm/particle.hpp"
#include "swarm/potentials.hpp"

namespace swarm {

/// Weighted point masses. Masses may be signed (moment measures, measure
/// differences); the common case is a probability measure.
template <int D>
struct DiscreteMeasure {
  std::vector<Vec<D>> support;
  std::vector<double> masses;

  std::size_t size() const { return support.size(); }
  double total_mass() const { return std::accumulate(masses.begin(), masses.end(), 0.0); }
};

inline constexpr double kCoincidenceTolerance = 1e-12;

/// Merges support points closer than 1e-12 (summing their masses) and drops
/// zero masses. In 1D the result is sorted.
template <int D>
DiscreteMeasure<D> canonicalize(const DiscreteMeasure<D>& mu) {
  if (mu.support.size() != mu.masses.size()) {
    throw InvalidArgument("measure support and masses differ in length");
  }
  DiscreteMeasure<D> out;
  if constexpr (D == 1) {
    std::vector<std::size_t> order(mu.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return mu.support[a][0] < mu.support[b][0];
    });
    for (std::size_t idx : order) {
      const double x = mu.support[idx][0];
      if (!out.support.empty() && x - out.support.back()[0] <= kCoincidenceTolerance) {
        out.masses.back() += mu.masses[idx];
      } else {
        out.support.push_back({x});
        out.masses.push_back(mu.masses[idx]);
      }
    }
  } else {
    for (std::size_t i = 0; i < mu.size(); ++i) {
      bool merged = false;
      for (std::size_t k = 0; k < out.size(); ++k) {
        if (norm(out.support[k] - mu.support[i]) <= kCoincidenceTolerance) {
          out.masses[k] += mu.masses[i];
          merged = true;
          break;
        }
      }
      if (!merged) {
        out.support.push_back(mu.support[i]);
        out.masses.push_back(mu.masses[i]);
      }
    }
  }
  DiscreteMeasure<D> pruned;
  for (std::size_t k = 0; k < out.size(); ++k) {
    if (out.masses[k] != 0.0) {
      pruned.support.push_back(out.support[k]);
      pruned.masses.push_back(out.masses[k]);
    }
  }
  return pruned;
}

/// mu - nu on the canonicalized union support.
template <int D>
DiscreteMeasure<D> signed_difference(const DiscreteMeasure<D>& mu, const DiscreteMeasure<D>& nu) {
  DiscreteMeasure<D> u;
  u.support = mu.support;
  u.masses = mu.masses;
  u.support.insert(u.support.end(), nu.support.begin(), nu.support.end());
  for (double m : nu.masses) u.masses.push_back(-m);
  return canonicalize(u);
}

inline constexpr std::size_t kPairwiseLpLimit = 2000;

/// sup { int phi d sigma : |phi| <= 1, Lip(phi) <= 1 } over a signed measure,
/// solved as the full pairwise-constraint LP by the dense simplex.
template <int D>
lp::BoundedLipschitzSolution dbl_pairwise_signed(const DiscreteMeasure<D>& sigma) {
  const auto s = canonicalize(sigma);
  if (s.size() > kPairwiseLpLimit) {
    throw InvalidArgument("pairwise d_BL LP is limited to m <= 2000 support points");
  }
  if (s.size() > 200) {
    std::clog << "warning: pairwise d_BL LP with m = " << s.size()
              << " support points; cost grows like m^2 per pivot\n";
  }
  return lp::bounded_lipschitz_pairwise(
      s.size(), [&](std::size_t i, std::size_t j) { return norm(s.support[i] - s.support[j]); },
      s.masses);
}

/// 1D signed-measure bounded-Lipschitz norm via the adjacent-constraint DP.
inline double dbl_signed_1d(const DiscreteMeasure<1>& sigma) {
  const auto s = canonicalize(sigma);
  std::vector<double> z(s.size());
  for (std::size_t k = 0; k < s.size(); ++k) z[k] = s.support[k][0];
  return lp::bounded_lipschitz_1d(z, s.masses);
}

/// Bounded-Lipschitz distance. 1D uses the exact adjacent-constraint DP;
/// d >= 2 uses the pairwise LP (m <= 2000).
template <int D>
double dbl(const DiscreteMeasure<D>& mu, const DiscreteMeasure<D>& nu) {
  const auto sigma = signed_difference(mu, nu);
  if constexpr (D == 1) {
    return dbl_signed_1d(sigma);
  } else {
    return dbl_pairwise_signed<D>(sigma).value;
  }
}

/// Same quantity through the full pairwise LP regardless of dimension.
template <int D>
double dbl_full_lp(const DiscreteMeasure<D>& mu, const DiscreteMeasure<D>& nu) {
  return dbl_pairwise_signed<D>(signed_difference(mu, nu)).value;
}

/// Wasserstein-1 between 1D measures of equal mass: int |F_mu - F_nu| dx.
inline double w1_1d(const DiscreteMeasure<1>& mu, const DiscreteMeasure<1>& nu) {
  if (std::abs(mu.total_mass() - nu.total_mass()) > 1e-12) {
    throw MassMismatch("w1 requires measures of equal total mass");
  }
  const auto s = signed_difference(mu, nu);
  double cdf = 0.0;
  double total = 0.0;
  for (std::size_t k = 0; k + 1 < s.size(); ++k) {
    cdf += s.masses[k];
    total += std::abs(cdf) * (s.support[k + 1][0] - s.support[k][0]);
  }
  return total;
}

template <int D>
DiscreteMeasure<D> empirical_measure(const ParticleState<D>& p) {
  DiscreteMeasure<D> mu;
  mu.support = p.x;
  mu.masses.assign(p.size(), 1.0 / static_cast<double>(p.size()));
  return mu;
}

inline DiscreteMeasure<1> quadrature_measure(const ContinuumState& c) {
  DiscreteMeasure<1> mu;
  mu.support.resize(c.size());
  for (std::size_t k = 0; k < c.size(); ++k) mu.support[k] = {c.nodes[k]};
  mu.masses = c.weights;
  return mu;
}

/// (1/2N) sum_i |u(x_i) - v_i|^2 with u interpolated from the reference.
inline double modulated_kinetic_energy(const ParticleState<1>& particles,
                                       const ContinuumState& reference) {
  detail::check_ordering(reference.nodes, reference.t);
  double s = 0.0;
  for (std::size_t i = 0; i < particles.size(); ++i) {
    const double du = eval_velocity(reference, particles.x[i][0]) - particles.v[i][0];
    s += du * du;
  }
  return s / (2.0 * static_cast<double>(particles.size()));
}

/// (1/2) int rho_f |u_f - u|^2 for the empirical measure: particles sharing a
/// position are pooled into one local mean velocity u_f.
inline double macroscopic_modulated_energy(const ParticleState<1>& particles,
                                           const ContinuumState& reference) {
  const std::size_t n = particles.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return particles.x[a][0] < particles.x[b][0];
  });
  double total = 0.0;
  std::size_t k = 0;
  while (k < n) {
    const double x = particles.x[order[k]][0];
    double vsum = 0.0;
    std::size_t count = 0;
    while (k < n && particles.x[order[k]][0] - x <= kCoincidenceTolerance) {
      vsum += particles.v[order[k]][0];
      ++count;
      ++k;
    }
    const double mass = static_cast<double>(count) / static_cast<double>(n);
    const double du = vsum / static_cast<double>(count) - eval_velocity(reference, x);
    total += 0.5 * mass * du * du;
  }
  return total;
}

namespace detail {

// sum_{a, b, x_a != y_b} (m_a n_b) W(x_a - y_b). Pairs at distance below the
// coincidence tolerance lie on the excluded diagonal.
template <int D>
double excluded_diagonal_energy(std::span<const Vec<D>> xs, std::span<const double> ms,
                                std::span<const Vec<D>> ys, std::span<const double> ns,
                                const PotentialSpec& spec) {
  double total = 0.0;
  for (std::size_t a = 0; a < xs.size(); ++a) {
    double row = 0.0;
    for (std::size_t b = 0; b < ys.size(); ++b) {
      const Vec<D> r = xs[a] - ys[b];
      if (norm(r) <= kCoincidenceTolerance) continue;
      row += (ms[a] * ns[b]) * W<D>(spec, r);
    }
    total += row;
  }
  return total;
}

}  // namespace detail

/// (1/2) int_{x != y} W(x - y) d(rho^N - rho)(x) d(rho^N - rho)(y), with rho
/// represented by the quadrature nodes. Every coincident pair (particle-
/// particle, particle-node, node-node) is on the excluded diagonal, so a
/// configuration compared with itself gives exactly zero.
inline double modulated_potential_energy(const ParticleState<1>& particles,
                                         const ContinuumState& reference,
                                         const PotentialSpec& spec) {
  const std::size_t n = particles.size();
  const std::vector<double> pm(n, 1.0 / static_cast<double>(n));
  const auto nodes = detail::as_points(reference.nodes);
  const double pp = detail::excluded_diagonal_energy<1>(particles.x, pm, particles.x, pm, spec);
  const double pr = detail::excluded_diagonal_energy<1>(particles.x, pm, nodes, reference.weights, spec);
  const double rr = detail::excluded_diagonal_energy<1>(nodes, reference.weights, nodes,
                                                        reference.weights, spec);
  return 0.5 * (pp - 2.0 * pr + rr);
}

struct MomentErrors {
  double dbl_momentum = 0.0;
  double dbl_energy = 0.0;
};

/// Bounded-Lipschitz gaps between (1/N) sum v_i delta_{x_i} and rho u, and
/// between (1/N) sum v_i^2 delta_{x_i} and rho u^2 (1D, so one component each).
inline MomentErrors local_moment_errors(const ParticleState<1>& particles,
                                        const ContinuumState& reference) {
  const std::size_t n = particles.size();
  DiscreteMeasure<1> pm, pe, rm, re;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = particles.v[i][0];
    pm.support.push_back(particles.x[i]);
    pm.masses.push_back(v / static_cast<double>(n));
    pe.support.push_back(particles.x[i]);
    pe.masses.push_back(v * v / static_cast<double>(n));
  }
  for (std::size_t k = 0; k < reference.size(); ++k) {
    const double u = reference.velocities[k];
    rm.support.push_back({reference.nodes[k]});
    rm.masses.push_back(reference.weights[k] * u);
    re.support.push_back({reference.nodes[k]});
    re.masses.push_back(reference.weights[k] * u * u);
  }
  return {dbl<1>(pm, rm), dbl<1>(pe, re)};
}

struct ModulatedEnergyReport {
  double kinetic = 0.0;
  std::optional<double> potential;  // singular interaction only
  double dbl = 0.0;
  double w1 = 0.0;
};

inline ModulatedEnergyReport modulated_energy_report(const ParticleState<1>& particles,
                                                     const ContinuumState& reference,
                                                     const PotentialSpec& spec) {
  ModulatedEnergyReport r;
  r.kinetic = modulated_kinetic_energy(particles, reference);
  if (spec.singular()) r.potential = modulated_potential_energy(particles, reference, spec);
  const auto mu = empirical_measure<1>(particles);
  const auto nu = quadrature_measure(reference);
  r.dbl = dbl<1>(mu, nu);
  r.w1 = w1_1d(mu, nu);
  return r;
}

}  // namespace swarm
