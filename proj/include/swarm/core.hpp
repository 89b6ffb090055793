#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>

namespace swarm {

// Small fixed-dimension vector. Dimension is a template parameter everywhere
// below; runtime dispatch over {1, 2, 3} happens only at the CLI boundary.
template <int D>
using Vec = std::array<double, D>;

// Arithmetic is declared on std::array<double, D> directly so the size
// deduces from the argument type.
template <std::size_t D>
inline std::array<double, D> operator+(const std::array<double, D>& a, const std::array<double, D>& b) {
  std::array<double, D> r;
  for (std::size_t k = 0; k < D; ++k) r[k] = a[k] + b[k];
  return r;
}

template <std::size_t D>
inline std::array<double, D> operator-(const std::array<double, D>& a, const std::array<double, D>& b) {
  std::array<double, D> r;
  for (std::size_t k = 0; k < D; ++k) r[k] = a[k] - b[k];
  return r;
}

template <std::size_t D>
inline std::array<double, D> operator-(const std::array<double, D>& a) {
  std::array<double, D> r;
  for (std::size_t k = 0; k < D; ++k) r[k] = -a[k];
  return r;
}

template <std::size_t D>
inline std::array<double, D> operator*(double s, const std::array<double, D>& a) {
  std::array<double, D> r;
  for (std::size_t k = 0; k < D; ++k) r[k] = s * a[k];
  return r;
}

template <std::size_t D>
inline std::array<double, D>& operator+=(std::array<double, D>& a, const std::array<double, D>& b) {
  for (std::size_t k = 0; k < D; ++k) a[k] += b[k];
  return a;
}

template <std::size_t D>
inline std::array<double, D>& operator-=(std::array<double, D>& a, const std::array<double, D>& b) {
  for (std::size_t k = 0; k < D; ++k) a[k] -= b[k];
  return a;
}

template <std::size_t D>
inline double dot(const std::array<double, D>& a, const std::array<double, D>& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < D; ++k) s += a[k] * b[k];
  return s;
}

template <std::size_t D>
inline double norm2(const std::array<double, D>& a) {
  return dot(a, a);
}

template <std::size_t D>
inline double norm(const std::array<double, D>& a) {
  if constexpr (D == 1) {
    return std::abs(a[0]);
  } else {
    return std::sqrt(norm2(a));
  }
}

template <int D>
inline Vec<D> zero_vec() {
  Vec<D> r;
  r.fill(0.0);
  return r;
}

// Error hierarchy. Every failure mode named by an operation contract has its
// own type so callers (and tests) can tell them apart.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Singular kernel evaluated on the diagonal (r = 0). Callers must exclude
/// coincident pairs.
class SingularEvaluation : public Error {
 public:
  using Error::Error;
};

/// Explicit RK4 step requested in the stiff small-inertia regime.
class StiffnessWarning : public Error {
 public:
  using Error::Error;
};

class NonPositiveDensity : public Error {
 public:
  using Error::Error;
};

class NoConvergence : public Error {
 public:
  using Error::Error;
};

/// 1D Lagrangian nodes changed order: the flow left the classical regime.
class CharacteristicCrossing : public Error {
 public:
  explicit CharacteristicCrossing(const std::string& what, double time)
      : Error(what), time_(time) {}
  double time() const { return time_; }

 private:
  double time_;
};

class MassMismatch : public Error {
 public:
  using Error::Error;
};

class NonPositiveValue : public Error {
 public:
  using Error::Error;
};

class QuadratureFailure : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace swarm
