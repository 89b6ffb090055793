#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "swarm/continuum.hpp"
#include "swarm/core.hpp"
#include "swarm/particle.hpp"

namespace swarm::io {

/// 17 significant digits round-trip every double, and the same value always
/// prints the same way.
inline std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

template <int D>
void write_particle_csv_header(std::ostream& os) {
  os << "t,i";
  for (int k = 0; k < D; ++k) os << ",x" << k;
  for (int k = 0; k < D; ++k) os << ",v" << k;
  os << '\n';
}

/// One snapshot: rows t, i, x components, v components.
template <int D>
void write_particle_csv(std::ostream& os, const ParticleState<D>& s) {
  for (std::size_t i = 0; i < s.size(); ++i) {
    os << fmt(s.t) << ',' << i;
    for (int k = 0; k < D; ++k) os << ',' << fmt(s.x[i][k]);
    for (int k = 0; k < D; ++k) os << ',' << fmt(s.v[i][k]);
    os << '\n';
  }
}

inline void write_continuum_csv_header(std::ostream& os) { os << "t,k,node,weight,velocity\n"; }

inline void write_continuum_csv(std::ostream& os, const ContinuumState& s) {
  for (std::size_t k = 0; k < s.size(); ++k) {
    os << fmt(s.t) << ',' << k << ',' << fmt(s.nodes[k]) << ',' << fmt(s.weights[k]) << ','
       << fmt(s.velocities[k]) << '\n';
  }
}

namespace detail {

static_assert(sizeof(double) == 8);

inline void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int k = 0; k < 8; ++k) b[k] = static_cast<unsigned char>(v >> (8 * k));
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) throw InvalidArgument("truncated checkpoint");
  std::uint64_t v = 0;
  for (int k = 0; k < 8; ++k) v |= static_cast<std::uint64_t>(b[k]) << (8 * k);
  return v;
}

inline void put_f64(std::ostream& os, double x) { put_u64(os, std::bit_cast<std::uint64_t>(x)); }
inline double get_f64(std::istream& is) { return std::bit_cast<double>(get_u64(is)); }

}  // namespace detail

// Checkpoint layout, all little-endian:
//   u64 N, u64 d, f64 gamma, f64 epsilon, f64 t,
//   N*d f64 positions, N*d f64 velocities [, N f64 weights (continuum only)].

template <int D>
void write_checkpoint(std::ostream& os, const ParticleState<D>& s) {
  detail::put_u64(os, s.size());
  detail::put_u64(os, D);
  detail::put_f64(os, s.gamma);
  detail::put_f64(os, s.epsilon);
  detail::put_f64(os, s.t);
  for (const auto& x : s.x)
    for (double c : x) detail::put_f64(os, c);
  for (const auto& v : s.v)
    for (double c : v) detail::put_f64(os, c);
}

template <int D>
ParticleState<D> read_checkpoint(std::istream& is) {
  ParticleState<D> s;
  const auto n = detail::get_u64(is);
  const auto d = detail::get_u64(is);
  if (d != static_cast<std::uint64_t>(D)) {
    throw InvalidArgument("checkpoint dimension " + std::to_string(d) + " != " + std::to_string(D));
  }
  s.gamma = detail::get_f64(is);
  s.epsilon = detail::get_f64(is);
  s.t = detail::get_f64(is);
  s.x.resize(n);
  s.v.resize(n);
  for (auto& x : s.x)
    for (double& c : x) c = detail::get_f64(is);
  for (auto& v : s.v)
    for (double& c : v) c = detail::get_f64(is);
  return s;
}

/// Same header as the particle checkpoint (gamma, epsilon passed by the
/// caller), nodes as positions, then velocities, then weights.
inline void write_checkpoint(std::ostream& os, const ContinuumState& s, double gamma,
                             double epsilon) {
  detail::put_u64(os, s.size());
  detail::put_u64(os, 1);
  detail::put_f64(os, gamma);
  detail::put_f64(os, epsilon);
  detail::put_f64(os, s.t);
  for (double x : s.nodes) detail::put_f64(os, x);
  for (double v : s.velocities) detail::put_f64(os, v);
  for (double w : s.weights) detail::put_f64(os, w);
}

struct ContinuumCheckpoint {
  ContinuumState state;
  double gamma = 0.0;
  double epsilon = 1.0;
};

inline ContinuumCheckpoint read_continuum_checkpoint(std::istream& is) {
  ContinuumCheckpoint c;
  const auto m = detail::get_u64(is);
  if (detail::get_u64(is) != 1) throw InvalidArgument("continuum checkpoint must be 1D");
  c.gamma = detail::get_f64(is);
  c.epsilon = detail::get_f64(is);
  c.state.t = detail::get_f64(is);
  c.state.nodes.resize(m);
  c.state.velocities.resize(m);
  c.state.weights.resize(m);
  for (double& x : c.state.nodes) x = detail::get_f64(is);
  for (double& v : c.state.velocities) v = detail::get_f64(is);
  for (double& w : c.state.weights) w = detail::get_f64(is);
  return c;
}

/// Named numeric columns. Reports are keyed by (experiment, t, N, epsilon, M).
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  std::size_t index(const std::string& name) const {
    for (std::size_t k = 0; k < columns.size(); ++k) {
      if (columns[k] == name) return k;
    }
    throw InvalidArgument("unknown column '" + name + "'");
  }

  bool has(const std::string& name) const {
    for (const auto& c : columns) {
      if (c == name) return true;
    }
    return false;
  }

  std::vector<double> column(const std::string& name) const {
    const auto k = index(name);
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(r[k]);
    return out;
  }
};

inline void write_report_csv(std::ostream& os, const std::string& experiment, const Table& table) {
  os << "experiment";
  for (const auto& c : table.columns) os << ',' << c;
  os << '\n';
  for (const auto& r : table.rows) {
    os << experiment;
    for (double x : r) os << ',' << fmt(x);
    os << '\n';
  }
}

/// gnuplot-friendly: commented header, whitespace-separated columns.
inline void write_gnuplot(std::ostream& os, const Table& table) {
  os << '#';
  for (const auto& c : table.columns) os << ' ' << c;
  os << '\n';
  for (const auto& r : table.rows) {
    for (std::size_t k = 0; k < r.size(); ++k) os << (k ? " " : "") << fmt(r[k]);
    os << '\n';
  }
}

}  // namespace swarm::io
