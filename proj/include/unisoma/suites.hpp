#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "unisoma/model.hpp"

namespace unisoma {

/// Outcome of one named check: the worst observed value against its bound.
struct CheckResult {
  std::string name;
  double value = 0.0;
  double tolerance = 0.0;
  bool pass = false;
  std::string detail;
};

/// A small random scene at the model-input level, with the raw point clouds
/// kept so edges can be rebuilt after relabelling.
struct TinyScene {
  SceneSchema schema;
  ModelConfig config;
  ModelInput input;
  std::vector<Tensor> deformable_points, rigid_points, load_points;
};

/// Two deformables, one rigid, one load and three contact pairs. Point
/// counts are drawn from [min_points, max_points].
TinyScene make_tiny_scene(std::uint64_t seed, std::size_t channels = 8, std::size_t slices = 4,
                          std::size_t min_points = 5, std::size_t max_points = 8);

/// Reverse-mode vs central-difference check of every differentiable op and of
/// the full forward pass on a tiny scene.
std::vector<CheckResult> gradient_suite(std::uint64_t seed, double tol = 1e-4);

/// Worst-case slice decomposition error over `cases` random object pairs.
CheckResult decomposition_check(std::uint64_t seed, std::size_t cases);
/// Worst-case composition error over `cases` random pairs per γ mode.
std::vector<CheckResult> composition_checks(std::uint64_t seed, std::size_t cases);
/// Pass-through, weight normalisation, contact symmetry and singleton
/// allocation on random tiny scenes.
std::vector<CheckResult> structural_checks(std::uint64_t seed, std::size_t cases);
/// Relabels the points of one object per trial and compares predictions.
CheckResult permutation_check(std::uint64_t seed, std::size_t trials);

/// Everything `verify` runs.
std::vector<CheckResult> identity_suite(std::uint64_t seed, std::size_t cases);

}  // namespace unisoma
