#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "unisoma/physics.hpp"
#include "unisoma/tensor.hpp"

namespace unisoma {

enum class SolidRole { deformable, rigid };
enum class LoadMode { delta, absolute };

std::string to_string(SolidRole role);
std::string to_string(LoadMode mode);
LoadMode load_mode_from_string(const std::string& s);

struct SolidObject {
  std::string name;
  SolidRole role = SolidRole::deformable;
  Tensor points;      // N×3
  Tensor properties;  // N×P, P may be 0
  std::vector<std::string> property_names;

  std::size_t size() const { return points.empty() ? 0 : points.dim(0); }
  std::size_t property_count() const { return property_names.size(); }
};

/// Motion of the points of one rigid solid between two instants.
struct LoadObject {
  std::string name;
  std::size_t source = 0;  // index into SceneSample::rigids
  Tensor origin_points;    // N×3
  Tensor motion;           // N×3: displacement (delta) or next positions (absolute)
  LoadMode mode = LoadMode::delta;

  std::size_t size() const { return origin_points.empty() ? 0 : origin_points.dim(0); }
  Tensor features() const;  // N×6
};

/// Everything needed to re-check that stored targets are an equilibrium of
/// the generating spring system: the positions are the concatenated target
/// geometry of all deformables, in order.
struct OracleRecord {
  physics::SpringSystem system;
  physics::ContactModel contact;
  double residual = 0.0;
  int iterations = 0;
};

/// Contact pairs index the combined object list: deformables first, then
/// rigids.
using ContactPair = std::pair<std::size_t, std::size_t>;

struct SceneSample {
  std::vector<SolidObject> deformables;
  std::vector<SolidObject> rigids;
  std::vector<LoadObject> loads;
  std::vector<ContactPair> contact_pairs;
  std::vector<Tensor> targets;  // per deformable, N×C_target
  std::vector<std::string> target_names;
  std::int64_t step_index = 0;
  std::string sample_id;
  std::uint64_t seed = 0;
  std::optional<OracleRecord> oracle;

  std::size_t object_count() const { return deformables.size() + rigids.size(); }
  const SolidObject& object(std::size_t index) const;

  /// Throws ValidationError naming the first violated invariant.
  void validate() const;
};

/// Directed edges p→q stored as parallel index arrays plus q−p attributes.
struct EdgeSet {
  std::vector<std::size_t> src;
  std::vector<std::size_t> dst;
  Tensor attributes;  // |E|×3

  std::size_t size() const { return src.size(); }
};

/// Each point emits edges to its k nearest other points (Euclidean, ties to
/// the lower index). Requires 1 ≤ k < N.
EdgeSet build_knn_edges(const Tensor& points, std::size_t k);

/// Row e holds points[dst[e]] − points[src[e]].
Tensor edge_attributes(const Tensor& points, std::span<const std::size_t> src,
                       std::span<const std::size_t> dst);

Tensor make_load_features(const Tensor& prev, const Tensor& next, LoadMode mode);

/// Geometry channels of a target tensor are its first three columns.
inline constexpr std::size_t kGeometryChannels = 3;

/// Named column ranges of the target tensors ("geometry" plus one entry per
/// extra scalar channel).
struct Quantity {
  std::string name;
  std::size_t begin = 0;
  std::size_t end = 0;
};
std::vector<Quantity> target_quantities(const std::vector<std::string>& target_names);

}  // namespace unisoma
