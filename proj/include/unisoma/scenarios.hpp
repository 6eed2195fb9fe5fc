#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "unisoma/scene.hpp"
#include "unisoma/scene_io.hpp"

namespace unisoma {

struct NonConvergenceError : NumericalError {
  using NumericalError::NumericalError;
};

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

/// Keys of the scenario config file; every field maps to the JSON key of the
/// same name.
struct ScenarioConfig {
  std::string scenario = "bilateral_press";  // or "cavity_grip"
  std::string task = "longtime";             // or "autoregressive"
  std::size_t steps = 4;
  std::size_t trajectories = 80;
  std::array<double, 3> split{0.8, 0.1, 0.1};
  std::array<std::size_t, 3> lattice{5, 3, 2};
  double spacing = 0.25;
  Interval stiffness_a{8.0, 12.0};  // first deformable
  Interval stiffness_b{1.0, 2.0};   // second deformable (bilateral press only)
  double stiffness_jitter = 0.1;
  double anchor_stiffness = 0.05;
  double contact_ratio = 1000.0;  // k_c relative to the stiffest spring range
  Interval travel{0.05, 0.2};     // press depth or jaw stroke
  double lateral_jitter = 0.05;
  double rigid_size = 0.6;         // sphere radius or jaw half-height
  std::size_t surface_samples = 24;
  double tolerance = 1e-8;
  int max_iterations = 50000;
  int max_attempts = 5;
  LoadMode load_mode = LoadMode::delta;
  std::array<double, 3> offset{0.0, 0.0, 0.0};  // rigid shift of the whole scenario

  void validate() const;
  nlohmann::json to_json() const;
  /// Unknown keys are rejected by name.
  static ScenarioConfig from_json(const nlohmann::json& j);
};

ScenarioConfig default_scenario(const std::string& name);

/// splitmix64-derived child seed.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index, std::uint64_t attempt = 0);

/// Samples of one trajectory. Long-time: a single initial→final sample.
/// Autoregressive: `steps` samples, step t mapping state t to state t+1.
/// Throws NonConvergenceError when the oracle misses its tolerance.
std::vector<SceneSample> generate_trajectory(const ScenarioConfig& config, std::uint64_t seed);

/// Writes the dataset directory and returns its manifest. Trajectories are
/// generated in parallel; a trajectory whose oracle fails is retried with the
/// next derived seed up to max_attempts times.
DatasetManifest generate_dataset(const ScenarioConfig& config, std::uint64_t seed,
                                 const std::filesystem::path& dir);

}  // namespace unisoma
