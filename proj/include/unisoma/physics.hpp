#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

// Quasi-static mass-spring oracle used to synthesise multi-solid data.
//
// Energy of a configuration x:
//   E(x) = Σ_springs ½κ(|x_p − x_q| − L₀)²
//        + Σ_points  ½k_a |x_i − rest_i|²
//        + Σ_points Σ_primitives ½k_c depth(x_i)²

namespace unisoma::physics {

using Vec3 = std::array<double, 3>;

struct Spring {
  std::size_t p = 0;
  std::size_t q = 0;
  double rest_length = 0.0;
  double stiffness = 0.0;
};

struct SpringSystem {
  std::vector<Vec3> rest_positions;
  std::vector<Spring> springs;
  /// Per-point material multiplier, exported as a property channel.
  std::vector<double> material;
  /// Weak tether of every point to its rest position (elastic foundation).
  double anchor_stiffness = 0.0;

  std::size_t size() const { return rest_positions.size(); }
  void validate() const;
};

struct LatticeSpec {
  std::size_t nx = 2, ny = 2, nz = 2;
  double spacing = 1.0;
  double stiffness = 1.0;
  /// Relative per-spring stiffness noise, drawn from the seed.
  double stiffness_jitter = 0.0;
  /// Drops interior columns (0 < i < nx−1 and 0 < j < ny−1) to form a tube.
  bool hollow = false;
  Vec3 origin{0.0, 0.0, 0.0};
};

/// Grid points with axis springs plus face and body diagonals.
SpringSystem build_lattice(const LatticeSpec& spec, std::uint64_t seed);

/// Appends `b` to `a`; returns the index offset of b's points.
std::size_t append_system(SpringSystem& a, const SpringSystem& b);

std::size_t count_axis_springs(const SpringSystem& sys, double spacing);

enum class PrimitiveKind { half_space, sphere, box };

std::string to_string(PrimitiveKind kind);
PrimitiveKind primitive_kind_from_string(const std::string& s);

/// Rigid transform local → world: x_world = R·x_local + t.
struct RigidPose {
  std::array<double, 9> rotation{1, 0, 0, 0, 1, 0, 0, 0, 1};
  Vec3 translation{0.0, 0.0, 0.0};

  Vec3 apply(const Vec3& local) const;
  Vec3 to_local(const Vec3& world) const;
  Vec3 rotate(const Vec3& v) const;
  Vec3 rotate_back(const Vec3& v) const;
};

/// Solid region in its local frame: half-space {n·x < 0} with outward unit
/// normal n, sphere of `radius` at the origin, or box with `half_extents`.
struct RigidPrimitive {
  PrimitiveKind kind = PrimitiveKind::sphere;
  Vec3 normal{0.0, 0.0, 1.0};
  double radius = 1.0;
  Vec3 half_extents{1.0, 1.0, 1.0};
  RigidPose pose;
};

double penetration_depth(const Vec3& x, const RigidPrimitive& prim);
/// ∇depth at x; zero outside the primitive.
Vec3 depth_gradient(const Vec3& x, const RigidPrimitive& prim);

/// `count` points on the primitive surface, world frame.
std::vector<Vec3> sample_surface(const RigidPrimitive& prim, std::size_t count);

struct ContactModel {
  std::vector<RigidPrimitive> primitives;
  double stiffness = 0.0;
};

double energy(const SpringSystem& sys, const ContactModel& contact, std::span<const Vec3> x);
void energy_gradient(const SpringSystem& sys, const ContactModel& contact,
                     std::span<const Vec3> x, std::vector<Vec3>& grad);

/// E(x_new) − E(x_old) evaluated term by term in factored form, so the
/// result keeps relative accuracy when the two states are close.
double energy_difference(const SpringSystem& sys, const ContactModel& contact,
                         std::span<const Vec3> x_old, std::span<const Vec3> x_new);

/// Per-point spring energy, each spring's energy split evenly between its
/// endpoints.
std::vector<double> point_spring_energy(const SpringSystem& sys, std::span<const Vec3> x);

struct SolveOptions {
  double tolerance = 1e-8;
  int max_iterations = 50000;
  int history = 12;
};

struct SolveReport {
  std::vector<Vec3> positions;
  double residual = 0.0;  // ‖∇E‖∞ at `positions`
  int iterations = 0;
  bool converged = false;
  /// Accepted per-step energy changes (each ≤ 0).
  std::vector<double> energy_steps;
};

/// Minimises E from `start` with limited-memory quasi-Newton directions and a
/// backtracking Armijo line search (steepest descent whenever the
/// quasi-Newton direction is not a descent direction).
SolveReport solve_quasistatic(const SpringSystem& sys, const ContactModel& contact,
                              std::vector<Vec3> start, const SolveOptions& options = {});

/// ‖∇E‖∞ evaluated point by point from incident springs. Written
/// independently of energy_gradient and used to certify stored samples.
double certify_residual(const SpringSystem& sys, const ContactModel& contact,
                        std::span<const Vec3> x);

}  // namespace unisoma::physics
