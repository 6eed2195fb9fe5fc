#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "unisoma/scene.hpp"

namespace unisoma {

inline constexpr int kSceneSchemaVersion = 1;

struct FileMissingError : ParseError {
  using ParseError::ParseError;
};
struct SchemaVersionError : ParseError {
  using ParseError::ParseError;
};

/// A scene is stored as `<stem>.json` (header) next to `<stem>.bin`
/// (little-endian f64 arrays referenced from the header by element offset).
/// `path` may name either file or the bare stem.
void save_scene(const SceneSample& sample, const std::filesystem::path& path);
SceneSample load_scene(const std::filesystem::path& path);

/// Certificate threshold applied to oracle-backed samples at load time.
inline constexpr double kCertificateTolerance = 1e-8;

/// Recomputes ‖∇E‖∞ at the stored targets with the independent checker.
double recertify(const SceneSample& sample);

struct TrajectoryEntry {
  std::string id;
  std::uint64_t seed = 0;
  int attempts = 1;
  std::vector<std::string> files;  // scene stems relative to the dataset root
};

struct DatasetManifest {
  int schema_version = kSceneSchemaVersion;
  std::string scenario;
  std::string task;  // "longtime" or "autoregressive"
  std::uint64_t seed = 0;
  nlohmann::json scenario_config;
  std::vector<TrajectoryEntry> trajectories;
  std::map<std::string, std::vector<std::string>> splits;  // split → trajectory ids
  std::size_t excluded = 0;  // attempts discarded for non-convergence

  const TrajectoryEntry& trajectory(const std::string& id) const;
};

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& dir);
DatasetManifest load_manifest(const std::filesystem::path& dir);

struct Trajectory {
  std::string id;
  std::vector<SceneSample> steps;
};

/// Loads every trajectory of `split`, re-certifying oracle-backed samples.
/// Throws ValidationError naming the first sample whose residual is not below
/// kCertificateTolerance.
std::vector<Trajectory> load_split(const std::filesystem::path& dir,
                                   const DatasetManifest& manifest, const std::string& split);

}  // namespace unisoma
