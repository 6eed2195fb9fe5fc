#include "unisoma/scene.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace unisoma {

std::string to_string(SolidRole role) {
  return role == SolidRole::deformable ? "deformable" : "rigid";
}

std::string to_string(LoadMode mode) { return mode == LoadMode::delta ? "delta" : "absolute"; }

LoadMode load_mode_from_string(const std::string& s) {
  if (s == "delta") return LoadMode::delta;
  if (s == "absolute") return LoadMode::absolute;
  throw ConfigError("unknown load mode '" + s + "' (expected delta or absolute)");
}

Tensor LoadObject::features() const {
  // `motion` already holds the mode-specific second half.
  std::vector<double> out(size() * 6);
  for (std::size_t i = 0; i < size(); ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      out[i * 6 + c] = origin_points[i * 3 + c];
      out[i * 6 + 3 + c] = motion[i * 3 + c];
    }
  }
  return Tensor({size(), 6}, std::move(out));
}

const SolidObject& SceneSample::object(std::size_t index) const {
  if (index < deformables.size()) return deformables[index];
  if (index < object_count()) return rigids[index - deformables.size()];
  throw ValidationError("object index " + std::to_string(index) + " out of range (" +
                        std::to_string(object_count()) + " objects)");
}

namespace {

void check_matrix(const Tensor& t, std::size_t rows, std::size_t cols, const std::string& what) {
  if (t.rank() != 2 || t.dim(0) != rows || t.dim(1) != cols) {
    throw ValidationError(what + ": expected shape [" + std::to_string(rows) + ", " +
                          std::to_string(cols) + "], got " + shape_str(t.shape()));
  }
  if (!t.all_finite()) throw ValidationError(what + ": non-finite values");
}

void check_solid(const SolidObject& s, SolidRole role, const std::string& where) {
  const std::string what = where + " '" + s.name + "'";
  if (s.name.empty()) throw ValidationError(where + ": empty name");
  if (s.role != role) throw ValidationError(what + ": role is " + to_string(s.role));
  if (s.points.rank() != 2 || s.points.dim(0) == 0) {
    throw ValidationError(what + ": needs at least one point");
  }
  check_matrix(s.points, s.points.dim(0), 3, what + " points");
  if (s.property_count() == 0) {
    if (!s.properties.empty() && s.properties.numel() != 0) {
      throw ValidationError(what + ": properties present without channel names");
    }
  } else {
    check_matrix(s.properties, s.size(), s.property_count(), what + " properties");
  }
}

}  // namespace

void SceneSample::validate() const {
  std::set<std::string> names;
  for (std::size_t i = 0; i < deformables.size(); ++i) {
    check_solid(deformables[i], SolidRole::deformable, "deformable " + std::to_string(i));
    if (!names.insert(deformables[i].name).second) {
      throw ValidationError("duplicate object name '" + deformables[i].name + "'");
    }
  }
  for (std::size_t i = 0; i < rigids.size(); ++i) {
    check_solid(rigids[i], SolidRole::rigid, "rigid " + std::to_string(i));
    if (!names.insert(rigids[i].name).second) {
      throw ValidationError("duplicate object name '" + rigids[i].name + "'");
    }
  }
  for (std::size_t i = 0; i < loads.size(); ++i) {
    const auto& l = loads[i];
    const std::string what = "load " + std::to_string(i) + " '" + l.name + "'";
    if (l.source >= rigids.size()) {
      throw ValidationError(what + ": source rigid " + std::to_string(l.source) + " does not exist");
    }
    const std::size_t n = rigids[l.source].size();
    check_matrix(l.origin_points, n, 3, what + " origin points");
    check_matrix(l.motion, n, 3, what + " motion");
  }
  std::set<ContactPair> seen;
  for (const auto& [a, b] : contact_pairs) {
    const std::string what =
        "contact pair (" + std::to_string(a) + ", " + std::to_string(b) + ")";
    if (a >= object_count() || b >= object_count()) {
      throw ValidationError(what + " references an absent object (" +
                            std::to_string(object_count()) + " objects)");
    }
    if (a == b) throw ValidationError(what + " pairs an object with itself");
    if (!seen.insert({std::min(a, b), std::max(a, b)}).second) {
      throw ValidationError(what + " is listed twice");
    }
  }
  if (targets.size() != deformables.size()) {
    throw ValidationError("expected " + std::to_string(deformables.size()) +
                          " target tensors, got " + std::to_string(targets.size()));
  }
  if (target_names.size() < kGeometryChannels) {
    throw ValidationError("target channels must start with the three geometry channels");
  }
  for (std::size_t i = 0; i < targets.size(); ++i) {
    check_matrix(targets[i], deformables[i].size(), target_names.size(),
                 "target of '" + deformables[i].name + "'");
  }
  if (oracle) {
    std::size_t total = 0;
    for (const auto& d : deformables) total += d.size();
    if (oracle->system.size() != total) {
      throw ValidationError("oracle record has " + std::to_string(oracle->system.size()) +
                            " points but the deformables hold " + std::to_string(total));
    }
    oracle->system.validate();
  }
}

EdgeSet build_knn_edges(const Tensor& points, std::size_t k) {
  if (points.rank() != 2 || points.dim(1) != 3) {
    throw DimensionError("build_knn_edges: points must be N×3, got " + shape_str(points.shape()));
  }
  const std::size_t n = points.dim(0);
  if (k == 0) throw ConfigError("knn_k must be positive");
  if (k >= n) {
    throw ConfigError("knn_k = " + std::to_string(k) + " requires more than " +
                      std::to_string(k) + " points, object has " + std::to_string(n));
  }
  EdgeSet es;
  es.src.resize(n * k);
  es.dst.resize(n * k);
  const double* p = points.ptr();
  const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static) if (n > 256)
  for (std::ptrdiff_t ii = 0; ii < count; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    std::vector<std::pair<double, std::size_t>> cand;
    cand.reserve(n - 1);
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double dx = p[j * 3] - p[i * 3];
      const double dy = p[j * 3 + 1] - p[i * 3 + 1];
      const double dz = p[j * 3 + 2] - p[i * 3 + 2];
      cand.emplace_back(dx * dx + dy * dy + dz * dz, j);
    }
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end());
    for (std::size_t r = 0; r < k; ++r) {
      es.src[i * k + r] = i;
      es.dst[i * k + r] = cand[r].second;
    }
  }
  es.attributes = edge_attributes(points, es.src, es.dst);
  return es;
}

Tensor edge_attributes(const Tensor& points, std::span<const std::size_t> src,
                       std::span<const std::size_t> dst) {
  if (src.size() != dst.size()) throw DimensionError("edge_attributes: src/dst length mismatch");
  if (points.rank() != 2 || points.dim(1) != 3) {
    throw DimensionError("edge_attributes: points must be N×3, got " + shape_str(points.shape()));
  }
  const std::size_t n = points.dim(0);
  std::vector<double> out(src.size() * 3);
  for (std::size_t e = 0; e < src.size(); ++e) {
    if (src[e] >= n || dst[e] >= n) {
      throw DimensionError("edge " + std::to_string(e) + " (" + std::to_string(src[e]) + "→" +
                           std::to_string(dst[e]) + ") out of range for " + std::to_string(n) +
                           " points");
    }
    for (std::size_t c = 0; c < 3; ++c) {
      out[e * 3 + c] = points[dst[e] * 3 + c] - points[src[e] * 3 + c];
    }
  }
  return Tensor({src.size(), 3}, std::move(out));
}

Tensor make_load_features(const Tensor& prev, const Tensor& next, LoadMode mode) {
  if (prev.rank() != 2 || prev.dim(1) != 3 || prev.shape() != next.shape()) {
    throw DimensionError("make_load_features: prev " + shape_str(prev.shape()) + " and next " +
                         shape_str(next.shape()) + " must both be N×3");
  }
  const std::size_t n = prev.dim(0);
  std::vector<double> out(n * 6);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      out[i * 6 + c] = prev[i * 3 + c];
      out[i * 6 + 3 + c] =
          mode == LoadMode::delta ? next[i * 3 + c] - prev[i * 3 + c] : next[i * 3 + c];
    }
  }
  return Tensor({n, 6}, std::move(out));
}

std::vector<Quantity> target_quantities(const std::vector<std::string>& target_names) {
  if (target_names.size() < kGeometryChannels) {
    throw ValidationError("target channels must start with three geometry channels");
  }
  std::vector<Quantity> q{{"geometry", 0, kGeometryChannels}};
  for (std::size_t c = kGeometryChannels; c < target_names.size(); ++c) {
    q.push_back({target_names[c], c, c + 1});
  }
  return q;
}

}  // namespace unisoma
