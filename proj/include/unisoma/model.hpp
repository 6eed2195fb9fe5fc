#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "unisoma/encoder.hpp"
#include "unisoma/normalization.hpp"
#include "unisoma/processor.hpp"
#include "unisoma/scene.hpp"

namespace unisoma {

/// Object roster and channel layout a parameter set is built for.
struct SceneSchema {
  struct Slot {
    std::string name;
    std::size_t channels = 0;  // raw input channels
  };
  std::vector<Slot> deformables;
  std::vector<Slot> rigids;
  std::vector<Slot> loads;
  std::vector<ContactPair> contact_pairs;
  std::vector<std::string> target_names;

  static SceneSchema of(const SceneSample& sample);
  /// Throws ValidationError naming the first solid, load or pair that does
  /// not line up with `sample`.
  void check(const SceneSample& sample) const;

  nlohmann::json to_json() const;
  static SceneSchema from_json(const nlohmann::json& j);
};

struct ModelConfig {
  std::size_t layers = 2;
  std::size_t channels = 128;
  std::size_t slices = 32;
  std::size_t knn_k = 4;
  std::size_t heads = 1;
  GammaMode gamma_mode = GammaMode::points_over_edges;
  bool allocation_softmax = false;
  /// One encoder per role (deformable, rigid, load) instead of per object.
  bool share_encoders = false;

  std::size_t hidden() const { return 2 * channels; }
  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

struct ObjectInput {
  Tensor features;  // N×C_raw, normalised
  EdgeSet edges;
};

struct ModelInput {
  std::vector<ObjectInput> deformables;
  std::vector<ObjectInput> rigids;
  std::vector<ObjectInput> loads;
  std::vector<ContactPair> contact_pairs;
};

/// Normalised features plus kNN edges built on the physical coordinates
/// (load edges on the emitting points).
ModelInput prepare_input(const SceneSample& physical, const NormStats& stats, std::size_t knn_k);

std::string encoder_key(const SceneSchema& schema, const ModelConfig& config, SolidRole role,
                        std::size_t index, bool is_load = false);

ParamStore init_model(const SceneSchema& schema, const ModelConfig& config, std::uint64_t seed);

LayerParams layer_params(const ParamStore& store, const SceneSchema& schema, std::size_t layer);

struct ForwardTrace {
  std::vector<SliceEmbedding> deformables, rigids, loads;
  std::vector<ProcessorState> states;  // states[0] is the encoder output
};

/// Encode every object, run the processor layers and decode each deformable
/// to N × C_target rows.
std::vector<Tensor> unisoma_forward(const ParamStore& params, const SceneSchema& schema,
                                    const ModelConfig& config, const ModelInput& input,
                                    ForwardTrace* trace = nullptr);

}  // namespace unisoma
