#include "unisoma/physics.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numbers>
#include <random>
#include <stdexcept>

#include "unisoma/tensor.hpp"

namespace unisoma::physics {

namespace {

double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
Vec3 sub(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
Vec3 add(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
Vec3 mul(const Vec3& a, double s) { return {a[0] * s, a[1] * s, a[2] * s}; }
double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

double dot_all(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += dot(a[i], b[i]);
  return s;
}

double inf_norm(const std::vector<Vec3>& g) {
  double m = 0.0;
  for (const auto& v : g) {
    for (double c : v) m = std::max(m, std::abs(c));
  }
  return m;
}

// depth(x_new) − depth(x_old) for one primitive, keeping relative accuracy
// when both points are inside through the same face.
double depth_change(const Vec3& xo, const Vec3& xn, const RigidPrimitive& prim, double d_old,
                    double d_new) {
  if (d_old <= 0.0 || d_new <= 0.0) return d_new - d_old;
  const Vec3 step = sub(xn, xo);
  switch (prim.kind) {
    case PrimitiveKind::half_space:
      return -dot(prim.pose.rotate(prim.normal), step);
    case PrimitiveKind::sphere: {
      const Vec3 ao = sub(xo, prim.pose.translation);
      const Vec3 an = sub(xn, prim.pose.translation);
      const double ro = norm(ao), rn = norm(an);
      if (ro + rn == 0.0) return 0.0;
      return -dot(step, add(an, ao)) / (rn + ro);
    }
    case PrimitiveKind::box: {
      const Vec3 lo = prim.pose.to_local(xo);
      const Vec3 ln = prim.pose.to_local(xn);
      std::size_t fo = 0, fn = 0;
      double bo = prim.half_extents[0] - std::abs(lo[0]);
      double bn = prim.half_extents[0] - std::abs(ln[0]);
      for (std::size_t a = 1; a < 3; ++a) {
        const double co = prim.half_extents[a] - std::abs(lo[a]);
        const double cn = prim.half_extents[a] - std::abs(ln[a]);
        if (co < bo) bo = co, fo = a;
        if (cn < bn) bn = cn, fn = a;
      }
      if (fo != fn || std::signbit(lo[fo]) != std::signbit(ln[fo])) return d_new - d_old;
      const Vec3 lstep = prim.pose.rotate_back(step);
      return lo[fo] < 0.0 ? lstep[fo] : -lstep[fo];
    }
  }
  return d_new - d_old;
}

}  // namespace

void SpringSystem::validate() const {
  if (material.size() != rest_positions.size()) {
    throw ValidationError("spring system: material channel length differs from point count");
  }
  for (std::size_t s = 0; s < springs.size(); ++s) {
    const auto& sp = springs[s];
    if (sp.p >= size() || sp.q >= size() || sp.p == sp.q) {
      throw ValidationError("spring " + std::to_string(s) + " references invalid points");
    }
    if (!(sp.stiffness > 0.0) || !(sp.rest_length > 0.0)) {
      throw ValidationError("spring " + std::to_string(s) + " has non-positive stiffness or length");
    }
  }
}

SpringSystem build_lattice(const LatticeSpec& spec, std::uint64_t seed) {
  if (spec.nx < 2 || spec.ny < 2 || spec.nz < 2) {
    throw ConfigError("lattice dimensions must be at least 2 along every axis");
  }
  if (!(spec.spacing > 0.0) || !(spec.stiffness > 0.0)) {
    throw ConfigError("lattice spacing and stiffness must be positive");
  }
  if (spec.stiffness_jitter < 0.0 || spec.stiffness_jitter >= 1.0) {
    throw ConfigError("lattice stiffness_jitter must lie in [0, 1)");
  }
  SpringSystem sys;
  const auto nx = static_cast<long>(spec.nx), ny = static_cast<long>(spec.ny),
             nz = static_cast<long>(spec.nz);
  auto interior = [&](long i, long j) { return i > 0 && i < nx - 1 && j > 0 && j < ny - 1; };
  std::vector<long> id(spec.nx * spec.ny * spec.nz, -1);
  auto cell = [&](long i, long j, long k) { return (k * ny + j) * nx + i; };
  for (long k = 0; k < nz; ++k) {
    for (long j = 0; j < ny; ++j) {
      for (long i = 0; i < nx; ++i) {
        if (spec.hollow && interior(i, j)) continue;
        id[cell(i, j, k)] = static_cast<long>(sys.rest_positions.size());
        sys.rest_positions.push_back({spec.origin[0] + spec.spacing * static_cast<double>(i),
                                      spec.origin[1] + spec.spacing * static_cast<double>(j),
                                      spec.origin[2] + spec.spacing * static_cast<double>(k)});
      }
    }
  }
  sys.material.assign(sys.rest_positions.size(), spec.stiffness);

  static constexpr std::array<std::array<int, 3>, 13> kOffsets{{{1, 0, 0},
                                                               {0, 1, 0},
                                                               {0, 0, 1},
                                                               {1, 1, 0},
                                                               {1, -1, 0},
                                                               {1, 0, 1},
                                                               {1, 0, -1},
                                                               {0, 1, 1},
                                                               {0, 1, -1},
                                                               {1, 1, 1},
                                                               {1, 1, -1},
                                                               {1, -1, 1},
                                                               {1, -1, -1}}};
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> jitter(-1.0, 1.0);
  for (long k = 0; k < nz; ++k) {
    for (long j = 0; j < ny; ++j) {
      for (long i = 0; i < nx; ++i) {
        const long a = id[cell(i, j, k)];
        if (a < 0) continue;
        for (const auto& off : kOffsets) {
          const long i2 = i + off[0], j2 = j + off[1], k2 = k + off[2];
          if (i2 < 0 || i2 >= nx || j2 < 0 || j2 >= ny || k2 < 0 || k2 >= nz) continue;
          const long b = id[cell(i2, j2, k2)];
          if (b < 0) continue;
          const double len =
              spec.spacing * std::sqrt(static_cast<double>(off[0] * off[0] + off[1] * off[1] +
                                                           off[2] * off[2]));
          const double kappa = spec.stiffness * (1.0 + spec.stiffness_jitter * jitter(rng));
          sys.springs.push_back(
              {static_cast<std::size_t>(a), static_cast<std::size_t>(b), len, kappa});
        }
      }
    }
  }
  return sys;
}

std::size_t append_system(SpringSystem& a, const SpringSystem& b) {
  const std::size_t offset = a.size();
  a.rest_positions.insert(a.rest_positions.end(), b.rest_positions.begin(),
                          b.rest_positions.end());
  a.material.insert(a.material.end(), b.material.begin(), b.material.end());
  for (auto s : b.springs) {
    s.p += offset;
    s.q += offset;
    a.springs.push_back(s);
  }
  return offset;
}

std::size_t count_axis_springs(const SpringSystem& sys, double spacing) {
  return static_cast<std::size_t>(std::count_if(sys.springs.begin(), sys.springs.end(), [&](const Spring& s) {
    return std::abs(s.rest_length - spacing) < 1e-12 * spacing;
  }));
}

std::string to_string(PrimitiveKind kind) {
  switch (kind) {
    case PrimitiveKind::half_space: return "half_space";
    case PrimitiveKind::sphere: return "sphere";
    case PrimitiveKind::box: return "box";
  }
  return "?";
}

PrimitiveKind primitive_kind_from_string(const std::string& s) {
  if (s == "half_space") return PrimitiveKind::half_space;
  if (s == "sphere") return PrimitiveKind::sphere;
  if (s == "box") return PrimitiveKind::box;
  throw ConfigError("unknown rigid primitive kind '" + s + "'");
}

Vec3 RigidPose::rotate(const Vec3& v) const {
  const auto& r = rotation;
  return {r[0] * v[0] + r[1] * v[1] + r[2] * v[2], r[3] * v[0] + r[4] * v[1] + r[5] * v[2],
          r[6] * v[0] + r[7] * v[1] + r[8] * v[2]};
}

Vec3 RigidPose::rotate_back(const Vec3& v) const {
  const auto& r = rotation;
  return {r[0] * v[0] + r[3] * v[1] + r[6] * v[2], r[1] * v[0] + r[4] * v[1] + r[7] * v[2],
          r[2] * v[0] + r[5] * v[1] + r[8] * v[2]};
}

Vec3 RigidPose::apply(const Vec3& local) const { return add(rotate(local), translation); }
Vec3 RigidPose::to_local(const Vec3& world) const { return rotate_back(sub(world, translation)); }

double penetration_depth(const Vec3& x, const RigidPrimitive& prim) {
  const Vec3 l = prim.pose.to_local(x);
  switch (prim.kind) {
    case PrimitiveKind::half_space:
      return std::max(0.0, -dot(prim.normal, l));
    case PrimitiveKind::sphere:
      return std::max(0.0, prim.radius - norm(l));
    case PrimitiveKind::box: {
      double d = prim.half_extents[0] - std::abs(l[0]);
      for (std::size_t a = 1; a < 3; ++a) d = std::min(d, prim.half_extents[a] - std::abs(l[a]));
      return std::max(0.0, d);
    }
  }
  return 0.0;
}

Vec3 depth_gradient(const Vec3& x, const RigidPrimitive& prim) {
  if (penetration_depth(x, prim) <= 0.0) return {0.0, 0.0, 0.0};
  const Vec3 l = prim.pose.to_local(x);
  switch (prim.kind) {
    case PrimitiveKind::half_space:
      return prim.pose.rotate(mul(prim.normal, -1.0));
    case PrimitiveKind::sphere: {
      const double r = norm(l);
      if (r == 0.0) return {0.0, 0.0, 0.0};
      return prim.pose.rotate(mul(l, -1.0 / r));
    }
    case PrimitiveKind::box: {
      std::size_t face = 0;
      double best = prim.half_extents[0] - std::abs(l[0]);
      for (std::size_t a = 1; a < 3; ++a) {
        const double c = prim.half_extents[a] - std::abs(l[a]);
        if (c < best) best = c, face = a;
      }
      Vec3 g{0.0, 0.0, 0.0};
      g[face] = l[face] < 0.0 ? 1.0 : -1.0;
      return prim.pose.rotate(g);
    }
  }
  return {0.0, 0.0, 0.0};
}

std::vector<Vec3> sample_surface(const RigidPrimitive& prim, std::size_t count) {
  std::vector<Vec3> out;
  if (count == 0) return out;
  switch (prim.kind) {
    case PrimitiveKind::sphere: {
      // Fibonacci lattice.
      const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
      for (std::size_t i = 0; i < count; ++i) {
        const double z = 1.0 - 2.0 * (static_cast<double>(i) + 0.5) / static_cast<double>(count);
        const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
        const double phi = golden * static_cast<double>(i);
        out.push_back(prim.pose.apply(
            {prim.radius * r * std::cos(phi), prim.radius * r * std::sin(phi), prim.radius * z}));
      }
      break;
    }
    case PrimitiveKind::half_space: {
      // count×count patch of the boundary plane within [-1, 1]².
      const Vec3 n = prim.normal;
      Vec3 u = std::abs(n[0]) < 0.9 ? Vec3{1.0, 0.0, 0.0} : Vec3{0.0, 1.0, 0.0};
      u = sub(u, mul(n, dot(u, n)));
      u = mul(u, 1.0 / norm(u));
      const Vec3 v{n[1] * u[2] - n[2] * u[1], n[2] * u[0] - n[0] * u[2], n[0] * u[1] - n[1] * u[0]};
      for (std::size_t i = 0; i < count; ++i) {
        for (std::size_t j = 0; j < count; ++j) {
          const double a = -1.0 + 2.0 * (static_cast<double>(i) + 0.5) / static_cast<double>(count);
          const double b = -1.0 + 2.0 * (static_cast<double>(j) + 0.5) / static_cast<double>(count);
          out.push_back(prim.pose.apply(add(mul(u, a), mul(v, b))));
        }
      }
      break;
    }
    case PrimitiveKind::box: {
      // count×count cell centres on each of the six faces.
      for (std::size_t axis = 0; axis < 3; ++axis) {
        for (double side : {-1.0, 1.0}) {
          const std::size_t a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;
          for (std::size_t i = 0; i < count; ++i) {
            for (std::size_t j = 0; j < count; ++j) {
              Vec3 l{};
              l[axis] = side * prim.half_extents[axis];
              l[a1] = prim.half_extents[a1] *
                      (-1.0 + 2.0 * (static_cast<double>(i) + 0.5) / static_cast<double>(count));
              l[a2] = prim.half_extents[a2] *
                      (-1.0 + 2.0 * (static_cast<double>(j) + 0.5) / static_cast<double>(count));
              out.push_back(prim.pose.apply(l));
            }
          }
        }
      }
      break;
    }
  }
  return out;
}

double energy(const SpringSystem& sys, const ContactModel& contact, std::span<const Vec3> x) {
  double e = 0.0;
  for (const auto& s : sys.springs) {
    const double stretch = norm(sub(x[s.p], x[s.q])) - s.rest_length;
    e += 0.5 * s.stiffness * stretch * stretch;
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    const Vec3 d = sub(x[i], sys.rest_positions[i]);
    e += 0.5 * sys.anchor_stiffness * dot(d, d);
    for (const auto& prim : contact.primitives) {
      const double depth = penetration_depth(x[i], prim);
      e += 0.5 * contact.stiffness * depth * depth;
    }
  }
  return e;
}

void energy_gradient(const SpringSystem& sys, const ContactModel& contact,
                     std::span<const Vec3> x, std::vector<Vec3>& grad) {
  grad.assign(x.size(), Vec3{0.0, 0.0, 0.0});
  for (const auto& s : sys.springs) {
    const Vec3 d = sub(x[s.p], x[s.q]);
    const double len = norm(d);
    if (len == 0.0) continue;
    const Vec3 f = mul(d, s.stiffness * (len - s.rest_length) / len);
    for (int c = 0; c < 3; ++c) {
      grad[s.p][c] += f[c];
      grad[s.q][c] -= f[c];
    }
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (int c = 0; c < 3; ++c) {
      grad[i][c] += sys.anchor_stiffness * (x[i][c] - sys.rest_positions[i][c]);
    }
    for (const auto& prim : contact.primitives) {
      const double depth = penetration_depth(x[i], prim);
      if (depth <= 0.0) continue;
      const Vec3 dg = depth_gradient(x[i], prim);
      for (int c = 0; c < 3; ++c) grad[i][c] += contact.stiffness * depth * dg[c];
    }
  }
}

double energy_difference(const SpringSystem& sys, const ContactModel& contact,
                         std::span<const Vec3> x_old, std::span<const Vec3> x_new) {
  double de = 0.0;
  for (const auto& s : sys.springs) {
    const Vec3 dold = sub(x_old[s.p], x_old[s.q]);
    const Vec3 dnew = sub(x_new[s.p], x_new[s.q]);
    const Vec3 step = sub(sub(x_new[s.p], x_old[s.p]), sub(x_new[s.q], x_old[s.q]));
    const double lo = norm(dold), ln = norm(dnew);
    if (lo + ln == 0.0) continue;
    const double dl = dot(step, add(dnew, dold)) / (ln + lo);
    de += 0.5 * s.stiffness * dl * (ln + lo - 2.0 * s.rest_length);
  }
  for (std::size_t i = 0; i < x_old.size(); ++i) {
    const Vec3 step = sub(x_new[i], x_old[i]);
    const Vec3 mid = sub(add(x_new[i], x_old[i]), mul(sys.rest_positions[i], 2.0));
    de += 0.5 * sys.anchor_stiffness * dot(step, mid);
    for (const auto& prim : contact.primitives) {
      const double d_old = penetration_depth(x_old[i], prim);
      const double d_new = penetration_depth(x_new[i], prim);
      if (d_old <= 0.0 && d_new <= 0.0) continue;
      de += 0.5 * contact.stiffness * depth_change(x_old[i], x_new[i], prim, d_old, d_new) *
            (d_new + d_old);
    }
  }
  return de;
}

std::vector<double> point_spring_energy(const SpringSystem& sys, std::span<const Vec3> x) {
  std::vector<double> out(x.size(), 0.0);
  for (const auto& s : sys.springs) {
    const double stretch = norm(sub(x[s.p], x[s.q])) - s.rest_length;
    const double half = 0.25 * s.stiffness * stretch * stretch;
    out[s.p] += half;
    out[s.q] += half;
  }
  return out;
}

SolveReport solve_quasistatic(const SpringSystem& sys, const ContactModel& contact,
                              std::vector<Vec3> start, const SolveOptions& options) {
  if (start.size() != sys.size()) {
    throw DimensionError("solve_quasistatic: " + std::to_string(start.size()) +
                         " start positions for " + std::to_string(sys.size()) + " points");
  }
  for (const auto& p : start) {
    for (double c : p) {
      if (!std::isfinite(c)) throw NumericalError("solve_quasistatic: non-finite start position");
    }
  }
  SolveReport report;
  std::vector<Vec3> x = std::move(start);
  std::vector<Vec3> g, g_new, dir(x.size()), x_new(x.size());
  energy_gradient(sys, contact, x, g);

  struct Pair {
    std::vector<Vec3> s, y;
    double rho;
  };
  std::deque<Pair> memory;
  std::vector<double> alpha_buf;

  int it = 0;
  for (; it < options.max_iterations; ++it) {
    report.residual = inf_norm(g);
    if (report.residual < options.tolerance) {
      report.converged = true;
      break;
    }
    // Two-loop recursion for dir = −H·g.
    std::vector<Vec3> q = g;
    alpha_buf.assign(memory.size(), 0.0);
    for (std::size_t m = memory.size(); m-- > 0;) {
      alpha_buf[m] = memory[m].rho * dot_all(memory[m].s, q);
      for (std::size_t i = 0; i < q.size(); ++i) {
        for (int c = 0; c < 3; ++c) q[i][c] -= alpha_buf[m] * memory[m].y[i][c];
      }
    }
    double h0 = 1.0;
    if (!memory.empty()) {
      const auto& last = memory.back();
      h0 = dot_all(last.s, last.y) / dot_all(last.y, last.y);
    } else {
      h0 = std::min(1.0, 0.01 / report.residual);
    }
    for (auto& v : q) v = mul(v, h0);
    for (std::size_t m = 0; m < memory.size(); ++m) {
      const double beta = memory[m].rho * dot_all(memory[m].y, q);
      for (std::size_t i = 0; i < q.size(); ++i) {
        for (int c = 0; c < 3; ++c) q[i][c] += memory[m].s[i][c] * (alpha_buf[m] - beta);
      }
    }
    for (std::size_t i = 0; i < q.size(); ++i) dir[i] = mul(q[i], -1.0);
    double slope = dot_all(g, dir);
    if (!(slope < 0.0)) {
      memory.clear();
      const double s0 = std::min(1.0, 0.01 / report.residual);
      for (std::size_t i = 0; i < g.size(); ++i) dir[i] = mul(g[i], -s0);
      slope = dot_all(g, dir);
    }

    double step = 1.0;
    double de = 0.0;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      for (std::size_t i = 0; i < x.size(); ++i) x_new[i] = add(x[i], mul(dir[i], step));
      de = energy_difference(sys, contact, x, x_new);
      if (de <= 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      if (memory.empty()) break;  // stagnated even along steepest descent
      memory.clear();
      continue;
    }
    energy_gradient(sys, contact, x_new, g_new);
    Pair pair;
    pair.s.resize(x.size());
    pair.y.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      pair.s[i] = sub(x_new[i], x[i]);
      pair.y[i] = sub(g_new[i], g[i]);
    }
    const double sy = dot_all(pair.s, pair.y);
    if (sy > 1e-14 * std::sqrt(dot_all(pair.s, pair.s) * dot_all(pair.y, pair.y))) {
      pair.rho = 1.0 / sy;
      memory.push_back(std::move(pair));
      if (memory.size() > static_cast<std::size_t>(options.history)) memory.pop_front();
    }
    report.energy_steps.push_back(de);
    x.swap(x_new);
    g.swap(g_new);
  }
  report.residual = inf_norm(g);
  report.converged = report.residual < options.tolerance;
  report.iterations = it;
  report.positions = std::move(x);
  return report;
}

double certify_residual(const SpringSystem& sys, const ContactModel& contact,
                        std::span<const Vec3> x) {
  std::vector<std::vector<std::size_t>> incident(x.size());
  for (std::size_t s = 0; s < sys.springs.size(); ++s) {
    incident[sys.springs[s].p].push_back(s);
    incident[sys.springs[s].q].push_back(s);
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double gx = sys.anchor_stiffness * (x[i][0] - sys.rest_positions[i][0]);
    double gy = sys.anchor_stiffness * (x[i][1] - sys.rest_positions[i][1]);
    double gz = sys.anchor_stiffness * (x[i][2] - sys.rest_positions[i][2]);
    for (std::size_t s : incident[i]) {
      const Spring& sp = sys.springs[s];
      const std::size_t j = sp.p == i ? sp.q : sp.p;
      const double dx = x[i][0] - x[j][0], dy = x[i][1] - x[j][1], dz = x[i][2] - x[j][2];
      const double len = std::hypot(dx, dy, dz);
      if (len == 0.0) continue;
      const double f = sp.stiffness * (1.0 - sp.rest_length / len);
      gx += f * dx;
      gy += f * dy;
      gz += f * dz;
    }
    for (const auto& prim : contact.primitives) {
      // ∇(½k·depth²) in the primitive frame, rotated back to world.
      const Vec3 l = prim.pose.to_local(x[i]);
      Vec3 local_grad{0.0, 0.0, 0.0};
      if (prim.kind == PrimitiveKind::half_space) {
        const double h = prim.normal[0] * l[0] + prim.normal[1] * l[1] + prim.normal[2] * l[2];
        if (h < 0.0) local_grad = mul(prim.normal, contact.stiffness * h);
      } else if (prim.kind == PrimitiveKind::sphere) {
        const double r = std::hypot(l[0], l[1], l[2]);
        if (r < prim.radius && r > 0.0) {
          local_grad = mul(l, -contact.stiffness * (prim.radius - r) / r);
        }
      } else {
        const std::array<double, 3> slack{prim.half_extents[0] - std::abs(l[0]),
                                          prim.half_extents[1] - std::abs(l[1]),
                                          prim.half_extents[2] - std::abs(l[2])};
        const auto face = static_cast<std::size_t>(std::min_element(slack.begin(), slack.end()) -
                                                   slack.begin());
        if (slack[face] > 0.0) {
          local_grad[face] = (l[face] < 0.0 ? 1.0 : -1.0) * contact.stiffness * slack[face];
        }
      }
      const Vec3 w = prim.pose.rotate(local_grad);
      gx += w[0];
      gy += w[1];
      gz += w[2];
    }
    worst = std::max({worst, std::abs(gx), std::abs(gy), std::abs(gz)});
  }
  return worst;
}

}  // namespace unisoma::physics
