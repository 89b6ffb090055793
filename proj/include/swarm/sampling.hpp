#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "swarm/continuum.hpp"
#include "swarm/core.hpp"
#include "swarm/particle.hpp"

namespace swarm {

enum class SamplingMode { Quantile, IID };

/// Monokinetic initial data rho0(x) delta_{u0(x)}(v) on [a, b].
struct InitialData {
  DensityFn density;
  double a = 0.0;
  double b = 1.0;
  VelocityFn velocity;
  SamplingMode mode = SamplingMode::Quantile;
  std::uint64_t seed = 0;
  double delta = 0.0;  // amplitude of the alternating velocity perturbation
};

namespace detail {

// 8-point Gauss-Legendre on [-1, 1].
inline constexpr std::array<double, 8> kGLNodes = {
    -0.9602898564975363, -0.7966664774136267, -0.5255324099163290, -0.1834346424956498,
    0.1834346424956498,  0.5255324099163290,  0.7966664774136267,  0.9602898564975363};
inline constexpr std::array<double, 8> kGLWeights = {
    0.1012285362903763, 0.2223810344533745, 0.3137066458778873, 0.3626837833783620,
    0.3626837833783620, 0.3137066458778873, 0.2223810344533745, 0.1012285362903763};

inline double gauss_legendre(const DensityFn& f, double lo, double hi) {
  const double half = 0.5 * (hi - lo);
  const double mid = 0.5 * (hi + lo);
  double s = 0.0;
  for (std::size_t q = 0; q < kGLNodes.size(); ++q) s += kGLWeights[q] * f(mid + half * kGLNodes[q]);
  return half * s;
}

}  // namespace detail

/// Cumulative distribution of rho0, tabulated per cell with composite
/// Gauss-Legendre and refined inside a cell by a single GL panel.
class DensityCdf {
 public:
  static constexpr std::size_t kCells = 4096;

  DensityCdf(DensityFn density, double a, double b) : f_(std::move(density)), a_(a), b_(b) {
    if (!f_) throw InvalidArgument("initial data needs a density");
    if (!(b > a)) throw InvalidArgument("density interval must satisfy a < b");
    h_ = (b - a) / static_cast<double>(kCells);
    table_.resize(kCells + 1, 0.0);
    for (std::size_t c = 0; c < kCells; ++c) {
      const double lo = a_ + static_cast<double>(c) * h_;
      table_[c + 1] = table_[c] + detail::gauss_legendre(f_, lo, lo + h_);
    }
  }

  double total() const { return table_.back(); }

  double operator()(double x) const {
    if (x <= a_) return 0.0;
    if (x >= b_) return table_.back();
    const auto c = std::min(static_cast<std::size_t>((x - a_) / h_), kCells - 1);
    const double lo = a_ + static_cast<double>(c) * h_;
    return table_[c] + detail::gauss_legendre(f_, lo, x);
  }

  /// Bisection for F(x) = q inside the bracketing cell. Runs until the
  /// bracket cannot shrink, which is well below the 1e-12 target.
  double inverse(double q) const {
    if (!(q >= table_.front() && q <= table_.back())) {
      throw QuadratureFailure("quantile " + std::to_string(q) + " is not bracketed by the CDF");
    }
    const auto it = std::lower_bound(table_.begin(), table_.end(), q);
    std::size_t c = static_cast<std::size_t>(it - table_.begin());
    c = c == 0 ? 0 : c - 1;
    double lo = a_ + static_cast<double>(c) * h_;
    double hi = std::min(lo + h_, b_);
    if ((*this)(lo) > q || (*this)(hi) < q) {
      throw QuadratureFailure("CDF bisection failed to bracket quantile " + std::to_string(q));
    }
    for (;;) {
      const double mid = 0.5 * (lo + hi);
      if (mid <= lo || mid >= hi) break;
      if ((*this)(mid) < q) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    return 0.5 * (lo + hi);
  }

 private:
  DensityFn f_;
  double a_;
  double b_;
  double h_;
  std::vector<double> table_;
};

inline void check_normalized(const DensityCdf& cdf) {
  if (!std::isfinite(cdf.total())) throw QuadratureFailure("density quadrature is not finite");
  if (std::abs(cdf.total() - 1.0) > 1e-10) {
    throw InvalidArgument("density integrates to " + std::to_string(cdf.total()) +
                          " on [a, b], expected 1 within 1e-10");
  }
}

/// Positions only: quantile midpoints F^{-1}((i - 1/2) / N), or seeded i.i.d.
/// draws through the inverse CDF.
inline std::vector<double> sample_positions(const InitialData& data, std::size_t n) {
  if (n == 0) throw InvalidArgument("sample size N must be >= 1");
  const DensityCdf cdf(data.density, data.a, data.b);
  check_normalized(cdf);
  std::vector<double> x(n);
  const double total = cdf.total();
  if (data.mode == SamplingMode::Quantile) {
    for (std::size_t i = 0; i < n; ++i) {
      const double q = (static_cast<double>(i) + 0.5) / static_cast<double>(n);
      x[i] = cdf.inverse(std::min(q * total, total));
    }
  } else {
    std::mt19937_64 rng(data.seed);
    for (std::size_t i = 0; i < n; ++i) {
      const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
      x[i] = cdf.inverse(u * total);
    }
  }
  return x;
}

/// xi_i = +1, -1, +1, ... so the perturbation carries no net momentum for even N.
inline double alternating_sign(std::size_t i) { return i % 2 == 0 ? 1.0 : -1.0; }

inline ParticleState<1> sample_particles(const InitialData& data, std::size_t n, double epsilon,
                                         double gamma) {
  if (!(data.delta >= 0.0)) throw InvalidArgument("perturbation amplitude must be >= 0");
  const auto xs = sample_positions(data, n);
  ParticleState<1> p;
  p.gamma = gamma;
  p.epsilon = epsilon;
  p.x.resize(n);
  p.v.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = data.velocity ? data.velocity(xs[i]) : 0.0;
    p.x[i] = {xs[i]};
    p.v[i] = {u + data.delta * alternating_sign(i)};
  }
  p.validate();
  return p;
}

}  // namespace swarm
