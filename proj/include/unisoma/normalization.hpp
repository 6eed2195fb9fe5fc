#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "unisoma/scene.hpp"

namespace unisoma {

inline constexpr double kStdFloor = 1e-8;

/// Per-channel affine statistics; std is floored at kStdFloor.
struct ChannelStats {
  std::vector<double> mean;
  std::vector<double> std;

  std::size_t channels() const { return mean.size(); }
  Tensor apply(const Tensor& x) const;   // (x − mean) / std
  Tensor invert(const Tensor& x) const;  // x·std + mean
};

ChannelStats fit_channels(const std::vector<Tensor>& rows);

/// Statistics for every object slot of a scene schema. Stream keys:
///   deformable/<i>  points ⊕ properties
///   rigid/<i>       points ⊕ properties
///   load/<i>        origin ⊕ motion
///   target/<i>      target channels
struct NormStats {
  std::map<std::string, ChannelStats> streams;

  const ChannelStats& at(const std::string& key) const;
  nlohmann::json to_json() const;
  static NormStats from_json(const nlohmann::json& j);
};

/// Fits on the given samples, which should be the training split only.
NormStats fit_stats(std::span<const SceneSample> samples);

/// Normalises points/properties, load features and targets of every object.
SceneSample normalize_scene(const SceneSample& sample, const NormStats& stats);

/// Inverse of the target part of normalize_scene.
std::vector<Tensor> denormalize_predictions(const std::vector<Tensor>& predictions,
                                            const NormStats& stats);

/// Geometry targets re-expressed as displacement from the input points;
/// other channels are left as they are.
SceneSample with_relative_targets(const SceneSample& sample);

/// Inverse of with_relative_targets for model outputs, given the input scene
/// the predictions were made from.
std::vector<Tensor> absolute_predictions(const SceneSample& input,
                                         const std::vector<Tensor>& relative);

}  // namespace unisoma
