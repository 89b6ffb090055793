#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <variant>

#include "swarm/core.hpp"

namespace swarm {

enum class Confinement { None, Quadratic };

// Interaction families. Each kernel exposes value(r) and grad(r); the
// gradients are written as r * f(|r|^2), which makes grad(-r) == -grad(r)
// hold bit-for-bit.
struct NoInteraction {};

/// W(r) = amplitude * exp(-|r|^2 / (2 width^2)). Positive amplitude repels.
struct GaussianKernel {
  double amplitude = 1.0;
  double width = 1.0;
};

/// Newtonian kernel of the Laplacian in the template dimension:
/// -|x|/2 (d = 1), -log|x| / (2 pi) (d = 2), |x|^(2-d) / (d (d-2) |B_1|) (d >= 3).
struct Coulomb {};

/// |x|^(-exponent) with max(d-2, 0) <= exponent < d.
struct Riesz {
  double exponent = 0.5;
};

/// -log|x|, d = 1 or 2.
struct LogKernel {};

using Interaction = std::variant<NoInteraction, GaussianKernel, Coulomb, Riesz, LogKernel>;

struct NoCommunication {};

/// psi(r) = strength * (1 - |r|^2 / radius^2)^2 inside the ball, 0 outside.
/// C^1 across |r| = radius, peak value `strength` at the origin.
struct CompactBump {
  double radius = 1.0;
  double strength = 1.0;
};

using Communication = std::variant<NoCommunication, CompactBump>;

struct PotentialSpec {
  int dimension = 1;
  Confinement confinement = Confinement::None;
  Interaction interaction = NoInteraction{};
  Communication communication = NoCommunication{};

  /// True for kernels that blow up (or are non-smooth) on the diagonal; pair
  /// sums then exclude i == j.
  bool singular() const {
    return std::holds_alternative<Coulomb>(interaction) ||
           std::holds_alternative<Riesz>(interaction) ||
           std::holds_alternative<LogKernel>(interaction);
  }

  void validate() const {
    if (dimension < 1) throw InvalidArgument("dimension must be positive");
    if (const auto* g = std::get_if<GaussianKernel>(&interaction)) {
      if (!(g->width > 0.0)) throw InvalidArgument("Gaussian kernel width must be positive");
    }
    if (const auto* r = std::get_if<Riesz>(&interaction)) {
      const double lo = std::max(dimension - 2, 0);
      if (!(r->exponent >= lo && r->exponent < dimension)) {
        throw InvalidArgument("Riesz exponent must satisfy max(d-2,0) <= alpha < d");
      }
    }
    if (std::holds_alternative<LogKernel>(interaction) && dimension > 2) {
      throw InvalidArgument("log kernel is defined for d = 1 or 2 only");
    }
    if (std::holds_alternative<Coulomb>(interaction) && dimension > 3) {
      throw InvalidArgument("Coulomb kernel supported for d <= 3");
    }
    if (const auto* b = std::get_if<CompactBump>(&communication)) {
      if (!(b->radius > 0.0)) throw InvalidArgument("bump radius must be positive");
      if (!(b->strength >= 0.0)) throw InvalidArgument("bump strength must be nonnegative");
    }
  }
};

namespace detail {

inline double unit_ball_volume(int d) {
  return std::pow(std::numbers::pi, 0.5 * d) / std::tgamma(0.5 * d + 1.0);
}

[[noreturn]] inline void singular_at_origin(const char* family) {
  throw SingularEvaluation(std::string(family) + " kernel evaluated at r = 0");
}

}  // namespace detail

// ---- kernel evaluators, one overload per family ----

template <int D>
inline Vec<D> kernel_grad(const NoInteraction&, const Vec<D>&) {
  return zero_vec<D>();
}

template <int D>
inline double kernel_value(const NoInteraction&, const Vec<D>&) {
  return 0.0;
}

template <int D>
inline Vec<D> kernel_grad(const GaussianKernel& k, const Vec<D>& r) {
  const double inv_w2 = 1.0 / (k.width * k.width);
  const double s = -k.amplitude * inv_w2 * std::exp(-0.5 * norm2(r) * inv_w2);
  return s * r;
}

template <int D>
inline double kernel_value(const GaussianKernel& k, const Vec<D>& r) {
  return k.amplitude * std::exp(-0.5 * norm2(r) / (k.width * k.width));
}

template <int D>
inline Vec<D> kernel_grad(const Coulomb&, const Vec<D>& r) {
  if constexpr (D == 1) {
    // -sgn(x)/2 with sgn(0) = 0: bounded, so the origin is not an error here.
    const double x = r[0];
    return {x > 0.0 ? -0.5 : (x < 0.0 ? 0.5 : 0.0)};
  } else {
    const double n2 = norm2(r);
    if (n2 == 0.0) detail::singular_at_origin("Coulomb");
    if constexpr (D == 2) {
      return (-1.0 / (2.0 * std::numbers::pi * n2)) * r;
    } else {
      const double c = 1.0 / (D * (D - 2) * detail::unit_ball_volume(D));
      return (-(D - 2) * c * std::pow(n2, -0.5 * D)) * r;
    }
  }
}

template <int D>
inline double kernel_value(const Coulomb&, const Vec<D>& r) {
  if constexpr (D == 1) {
    return -0.5 * std::abs(r[0]);
  } else {
    const double n2 = norm2(r);
    if (n2 == 0.0) detail::singular_at_origin("Coulomb");
    if constexpr (D == 2) {
      return -std::log(n2) / (4.0 * std::numbers::pi);
    } else {
      const double c = 1.0 / (D * (D - 2) * detail::unit_ball_volume(D));
      return c * std::pow(n2, -0.5 * (D - 2));
    }
  }
}

template <int D>
inline Vec<D> kernel_grad(const Riesz& k, const Vec<D>& r) {
  const double n2 = norm2(r);
  if (n2 == 0.0) detail::singular_at_origin("Riesz");
  return (-k.exponent * std::pow(n2, -0.5 * k.exponent - 1.0)) * r;
}

template <int D>
inline double kernel_value(const Riesz& k, const Vec<D>& r) {
  const double n2 = norm2(r);
  if (n2 == 0.0) detail::singular_at_origin("Riesz");
  return std::pow(n2, -0.5 * k.exponent);
}

template <int D>
inline Vec<D> kernel_grad(const LogKernel&, const Vec<D>& r) {
  const double n2 = norm2(r);
  if (n2 == 0.0) detail::singular_at_origin("log");
  return (-1.0 / n2) * r;
}

template <int D>
inline double kernel_value(const LogKernel&, const Vec<D>& r) {
  const double n2 = norm2(r);
  if (n2 == 0.0) detail::singular_at_origin("log");
  return -0.5 * std::log(n2);
}

template <int D>
inline double comm_value(const NoCommunication&, const Vec<D>&) {
  return 0.0;
}

template <int D>
inline Vec<D> comm_grad(const NoCommunication&, const Vec<D>&) {
  return zero_vec<D>();
}

template <int D>
inline double comm_value(const CompactBump& b, const Vec<D>& r) {
  const double q = norm2(r) / (b.radius * b.radius);
  if (q >= 1.0) return 0.0;
  const double s = 1.0 - q;
  return b.strength * s * s;
}

template <int D>
inline Vec<D> comm_grad(const CompactBump& b, const Vec<D>& r) {
  const double inv_r2 = 1.0 / (b.radius * b.radius);
  const double q = norm2(r) * inv_r2;
  if (q >= 1.0) return zero_vec<D>();
  return (-4.0 * b.strength * (1.0 - q) * inv_r2) * r;
}

// ---- spec-level entry points ----

template <int D>
inline Vec<D> grad_V(const PotentialSpec& spec, const Vec<D>& x) {
  return spec.confinement == Confinement::Quadratic ? x : zero_vec<D>();
}

template <int D>
inline double V(const PotentialSpec& spec, const Vec<D>& x) {
  return spec.confinement == Confinement::Quadratic ? 0.5 * norm2(x) : 0.0;
}

template <int D>
inline Vec<D> grad_W(const PotentialSpec& spec, const Vec<D>& r) {
  return std::visit([&](const auto& k) { return kernel_grad<D>(k, r); }, spec.interaction);
}

template <int D>
inline double W(const PotentialSpec& spec, const Vec<D>& r) {
  return std::visit([&](const auto& k) { return kernel_value<D>(k, r); }, spec.interaction);
}

template <int D>
inline double psi(const PotentialSpec& spec, const Vec<D>& r) {
  return std::visit([&](const auto& c) { return comm_value<D>(c, r); }, spec.communication);
}

template <int D>
inline Vec<D> grad_psi(const PotentialSpec& spec, const Vec<D>& r) {
  return std::visit([&](const auto& c) { return comm_grad<D>(c, r); }, spec.communication);
}

/// Upper bound of psi; bounds the per-row alignment mass sum_j w_j psi_kj.
inline double psi_max(const PotentialSpec& spec) {
  if (const auto* b = std::get_if<CompactBump>(&spec.communication)) return b->strength;
  return 0.0;
}

inline bool has_communication(const PotentialSpec& spec) {
  return !std::holds_alternative<NoCommunication>(spec.communication);
}

inline bool has_interaction(const PotentialSpec& spec) {
  return !std::holds_alternative<NoInteraction>(spec.interaction);
}

}  // namespace swarm
