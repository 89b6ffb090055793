#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "swarm/core.hpp"

namespace swarm::lp {

/// Solution of max { sum_i c_i phi_i : |phi_i| <= 1, phi_i - phi_j <= d_ij }.
struct BoundedLipschitzSolution {
  double value = 0.0;
  std::vector<double> phi;      // optimal test function on the support
  double duality_gap = 0.0;     // |c . phi - dual objective|
  double infeasibility = 0.0;   // worst violation of the primal constraints by phi
  std::size_t pivots = 0;
};

/// Exact optimum of the 1D problem with adjacent constraints
/// |phi_{i+1} - phi_i| <= z_{i+1} - z_i on sorted, distinct points z.
///
/// Dynamic programming over i: f_i(phi) is the best partial objective with
/// phi_i = phi. Each f_i is concave piecewise linear on [-1, 1]; the
/// transition is a max-filter of half-width h (insert a flat piece of length
/// 2h at the argmax, trim h from both ends) followed by adding c_i phi.
/// Pieces are kept in a map keyed by slope so the whole pass is O(m log m).
inline double bounded_lipschitz_1d(std::span<const double> z, std::span<const double> c) {
  const std::size_t m = z.size();
  if (m != c.size()) throw InvalidArgument("support and mass arrays differ in length");
  if (m == 0) return 0.0;

  // key + offset = slope; lengths are positive.
  std::map<double, double> pieces;
  double offset = 0.0;
  double left_value = -c[0];
  pieces[c[0]] = 2.0;
  offset = 0.0;

  const auto trim_left = [&](double len) {
    while (len > 0.0 && !pieces.empty()) {
      auto it = std::prev(pieces.end());
      const double slope = it->first + offset;
      const double take = std::min(len, it->second);
      left_value += slope * take;
      len -= take;
      if (take >= it->second) {
        pieces.erase(it);
      } else {
        it->second -= take;
      }
    }
  };
  const auto trim_right = [&](double len) {
    while (len > 0.0 && !pieces.empty()) {
      auto it = pieces.begin();
      const double take = std::min(len, it->second);
      len -= take;
      if (take >= it->second) {
        pieces.erase(it);
      } else {
        it->second -= take;
      }
    }
  };
  const auto maximum = [&]() {
    double best = left_value;
    double acc = left_value;
    for (auto it = pieces.rbegin(); it != pieces.rend(); ++it) {
      const double slope = it->first + offset;
      if (slope <= 0.0) break;
      acc += slope * it->second;
      best = acc;
    }
    return best;
  };

  for (std::size_t i = 1; i < m; ++i) {
    const double h = z[i] - z[i - 1];
    if (!(h > 0.0)) throw InvalidArgument("1D support must be strictly increasing");
    if (h >= 2.0) {
      // The Lipschitz link cannot bind across a gap of 2 or more.
      left_value = maximum();
      pieces.clear();
      offset = 0.0;
      pieces[0.0] = 2.0;
    } else {
      pieces[-offset] += 2.0 * h;
      trim_left(h);
      trim_right(h);
    }
    offset += c[i];
    left_value -= c[i];
  }
  return maximum();
}

/// Dense revised simplex on the dual of the bounded-Lipschitz LP:
///   min sum_{i != j} d_ij f_ij + sum_i (p_i + q_i)
///   s.t. sum_j f_ij - sum_j f_ji + p_i - q_i = c_i,  f, p, q >= 0.
/// This is a min-cost flow with a ground node; the optimal simplex
/// multipliers are the optimal test function phi. The constraint matrix is
/// totally unimodular, so the basis inverse stays integral in floating point.
/// Cost O(m^2) per pivot; meant for modest m.
inline BoundedLipschitzSolution bounded_lipschitz_pairwise(
    std::size_t m, const std::function<double(std::size_t, std::size_t)>& dist,
    std::span<const double> c) {
  if (c.size() != m) throw InvalidArgument("mass array length mismatch");
  BoundedLipschitzSolution sol;
  sol.phi.assign(m, 0.0);
  if (m == 0) return sol;

  std::vector<double> d(m * m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      if (i != j) d[i * m + j] = dist(i, j);
    }
  }

  // Column ids: [0, m) -> p_i (+e_i), [m, 2m) -> q_i (-e_i),
  // 2m + i*m + j -> f_ij (e_i - e_j), i != j.
  const std::size_t flow_base = 2 * m;
  const auto cost = [&](std::size_t col) {
    if (col < flow_base) return 1.0;
    return d[col - flow_base];
  };

  constexpr double kTol = 1e-12;
  std::vector<double> binv(m * m, 0.0);  // row-major
  std::vector<std::size_t> basic(m);
  std::vector<double> xb(m);
  for (std::size_t i = 0; i < m; ++i) {
    if (c[i] >= 0.0) {
      basic[i] = i;
      binv[i * m + i] = 1.0;
      xb[i] = c[i];
    } else {
      basic[i] = m + i;
      binv[i * m + i] = -1.0;
      xb[i] = -c[i];
    }
  }

  std::vector<double> y(m), dir(m);
  std::size_t degenerate_run = 0;
  const std::size_t max_pivots = 50 * (m * m + 10);
  for (;;) {
    // y^T = c_B^T B^{-1}
    std::fill(y.begin(), y.end(), 0.0);
    for (std::size_t r = 0; r < m; ++r) {
      const double cb = cost(basic[r]);
      if (cb == 0.0) continue;
      for (std::size_t j = 0; j < m; ++j) y[j] += cb * binv[r * m + j];
    }

    // Pricing. Dantzig by default, Bland after a run of degenerate pivots.
    const bool bland = degenerate_run > 50;
    std::size_t enter = std::numeric_limits<std::size_t>::max();
    double best = -kTol;
    const auto consider = [&](std::size_t col, double rc) {
      if (rc >= -kTol) return false;
      if (bland) {
        enter = col;
        return true;
      }
      if (rc < best) {
        best = rc;
        enter = col;
      }
      return false;
    };
    bool done = false;
    for (std::size_t i = 0; i < m && !done; ++i) done = consider(i, 1.0 - y[i]);
    for (std::size_t i = 0; i < m && !done; ++i) done = consider(m + i, 1.0 + y[i]);
    for (std::size_t i = 0; i < m && !done; ++i) {
      for (std::size_t j = 0; j < m && !done; ++j) {
        if (i != j) done = consider(flow_base + i * m + j, d[i * m + j] - (y[i] - y[j]));
      }
    }
    if (enter == std::numeric_limits<std::size_t>::max()) break;
    if (++sol.pivots > max_pivots) throw NoConvergence("bounded-Lipschitz simplex did not terminate");

    // dir = B^{-1} a_enter
    if (enter < m) {
      for (std::size_t r = 0; r < m; ++r) dir[r] = binv[r * m + enter];
    } else if (enter < flow_base) {
      const std::size_t i = enter - m;
      for (std::size_t r = 0; r < m; ++r) dir[r] = -binv[r * m + i];
    } else {
      const std::size_t i = (enter - flow_base) / m;
      const std::size_t j = (enter - flow_base) % m;
      for (std::size_t r = 0; r < m; ++r) dir[r] = binv[r * m + i] - binv[r * m + j];
    }

    double theta = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < m; ++r) {
      if (dir[r] > kTol) theta = std::min(theta, xb[r] / dir[r]);
    }
    if (!std::isfinite(theta)) throw NoConvergence("bounded-Lipschitz dual reported unbounded");
    std::size_t leave = m;
    for (std::size_t r = 0; r < m; ++r) {
      if (dir[r] > kTol && xb[r] / dir[r] <= theta + kTol &&
          (leave == m || basic[r] < basic[leave])) {
        leave = r;
      }
    }
    theta = std::max(theta, 0.0);
    degenerate_run = theta <= kTol ? degenerate_run + 1 : 0;

    const double pivot = dir[leave];
    for (std::size_t r = 0; r < m; ++r) {
      if (r == leave) continue;
      xb[r] -= theta * dir[r];
      if (xb[r] < 0.0 && xb[r] > -1e-13) xb[r] = 0.0;
    }
    xb[leave] = theta;
    double* lrow = &binv[leave * m];
    for (std::size_t j = 0; j < m; ++j) lrow[j] /= pivot;
    for (std::size_t r = 0; r < m; ++r) {
      if (r == leave || dir[r] == 0.0) continue;
      double* row = &binv[r * m];
      const double f = dir[r];
      for (std::size_t j = 0; j < m; ++j) row[j] -= f * lrow[j];
    }
    basic[leave] = enter;
  }

  double dual_objective = 0.0;
  for (std::size_t r = 0; r < m; ++r) dual_objective += cost(basic[r]) * xb[r];
  double primal = 0.0;
  double infeas = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    primal += c[i] * y[i];
    infeas = std::max(infeas, std::abs(y[i]) - 1.0);
    for (std::size_t j = 0; j < m; ++j) {
      if (i != j) infeas = std::max(infeas, y[i] - y[j] - d[i * m + j]);
    }
  }
  sol.phi = y;
  sol.value = dual_objective;
  sol.duality_gap = std::abs(primal - dual_objective);
  sol.infeasibility = std::max(infeas, 0.0);
  return sol;
}

}  // namespace swarm::lp
