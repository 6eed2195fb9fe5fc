#include "unisoma/normalization.hpp"

#include <algorithm>
#include <cmath>

namespace unisoma {

namespace {

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  const std::size_t n = a.dim(0), ca = a.dim(1), cb = b.empty() ? 0 : b.dim(1);
  std::vector<double> out(n * (ca + cb));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < ca; ++c) out[i * (ca + cb) + c] = a[i * ca + c];
    for (std::size_t c = 0; c < cb; ++c) out[i * (ca + cb) + ca + c] = b[i * cb + c];
  }
  return Tensor({n, ca + cb}, std::move(out));
}

Tensor take_cols(const Tensor& a, std::size_t begin, std::size_t end) {
  const std::size_t n = a.dim(0), ca = a.dim(1), w = end - begin;
  std::vector<double> out(n * w);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < w; ++c) out[i * w + c] = a[i * ca + begin + c];
  }
  return Tensor({n, w}, std::move(out));
}

Tensor solid_rows(const SolidObject& s) {
  return s.property_count() == 0 ? s.points : concat_cols(s.points, s.properties);
}

void split_solid(SolidObject& s, const Tensor& rows) {
  s.points = take_cols(rows, 0, 3);
  if (s.property_count() > 0) s.properties = take_cols(rows, 3, rows.dim(1));
}

std::string key(const char* stream, std::size_t i) { return std::string(stream) + "/" + std::to_string(i); }

}  // namespace

Tensor ChannelStats::apply(const Tensor& x) const {
  if (x.rank() != 2 || x.dim(1) != channels()) {
    throw DimensionError("normalisation: stats have " + std::to_string(channels()) +
                         " channels, data is " + shape_str(x.shape()));
  }
  std::vector<double> out = x.to_vector();
  const std::size_t c = channels();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (out[i] - mean[i % c]) / std[i % c];
  return Tensor(x.shape(), std::move(out));
}

Tensor ChannelStats::invert(const Tensor& x) const {
  if (x.rank() != 2 || x.dim(1) != channels()) {
    throw DimensionError("denormalisation: stats have " + std::to_string(channels()) +
                         " channels, data is " + shape_str(x.shape()));
  }
  std::vector<double> out = x.to_vector();
  const std::size_t c = channels();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = out[i] * std[i % c] + mean[i % c];
  return Tensor(x.shape(), std::move(out));
}

ChannelStats fit_channels(const std::vector<Tensor>& rows) {
  if (rows.empty()) throw ValidationError("cannot fit statistics on an empty set");
  const std::size_t c = rows.front().dim(1);
  ChannelStats s{std::vector<double>(c, 0.0), std::vector<double>(c, 0.0)};
  std::size_t n = 0;
  for (const auto& t : rows) {
    if (t.dim(1) != c) throw DimensionError("fit_channels: inconsistent channel counts");
    for (std::size_t i = 0; i < t.numel(); ++i) s.mean[i % c] += t[i];
    n += t.dim(0);
  }
  for (auto& m : s.mean) m /= static_cast<double>(n);
  for (const auto& t : rows) {
    for (std::size_t i = 0; i < t.numel(); ++i) {
      const double d = t[i] - s.mean[i % c];
      s.std[i % c] += d * d;
    }
  }
  for (auto& v : s.std) v = std::max(std::sqrt(v / static_cast<double>(n)), kStdFloor);
  return s;
}

const ChannelStats& NormStats::at(const std::string& k) const {
  const auto it = streams.find(k);
  if (it == streams.end()) throw ValidationError("normalisation stats lack stream '" + k + "'");
  return it->second;
}

nlohmann::json NormStats::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, s] : streams) j[k] = {{"mean", s.mean}, {"std", s.std}};
  return j;
}

NormStats NormStats::from_json(const nlohmann::json& j) {
  NormStats out;
  for (const auto& [k, v] : j.items()) {
    out.streams[k] = {v.at("mean").get<std::vector<double>>(), v.at("std").get<std::vector<double>>()};
  }
  return out;
}

NormStats fit_stats(std::span<const SceneSample> samples) {
  if (samples.empty()) throw ValidationError("cannot fit normalisation on zero samples");
  const SceneSample& first = samples.front();
  NormStats stats;
  auto fit = [&](const std::string& k, auto&& rows_of) {
    std::vector<Tensor> rows;
    for (const auto& s : samples) rows.push_back(rows_of(s));
    stats.streams[k] = fit_channels(rows);
  };
  for (std::size_t i = 0; i < first.deformables.size(); ++i) {
    fit(key("deformable", i), [i](const SceneSample& s) { return solid_rows(s.deformables.at(i)); });
    fit(key("target", i), [i](const SceneSample& s) { return s.targets.at(i); });
  }
  for (std::size_t i = 0; i < first.rigids.size(); ++i) {
    fit(key("rigid", i), [i](const SceneSample& s) { return solid_rows(s.rigids.at(i)); });
  }
  for (std::size_t i = 0; i < first.loads.size(); ++i) {
    fit(key("load", i), [i](const SceneSample& s) { return s.loads.at(i).features(); });
  }
  return stats;
}

SceneSample normalize_scene(const SceneSample& sample, const NormStats& stats) {
  SceneSample out = sample;
  for (std::size_t i = 0; i < out.deformables.size(); ++i) {
    split_solid(out.deformables[i], stats.at(key("deformable", i)).apply(solid_rows(sample.deformables[i])));
    out.targets[i] = stats.at(key("target", i)).apply(sample.targets[i]);
  }
  for (std::size_t i = 0; i < out.rigids.size(); ++i) {
    split_solid(out.rigids[i], stats.at(key("rigid", i)).apply(solid_rows(sample.rigids[i])));
  }
  for (std::size_t i = 0; i < out.loads.size(); ++i) {
    const Tensor f = stats.at(key("load", i)).apply(sample.loads[i].features());
    out.loads[i].origin_points = take_cols(f, 0, 3);
    out.loads[i].motion = take_cols(f, 3, 6);
  }
  out.oracle.reset();
  return out;
}

std::vector<Tensor> denormalize_predictions(const std::vector<Tensor>& predictions,
                                            const NormStats& stats) {
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    out.push_back(stats.at(key("target", i)).invert(predictions[i]));
  }
  return out;
}

namespace {

Tensor shift_geometry(const Tensor& target, const Tensor& points, double sign) {
  std::vector<double> out = target.to_vector();
  const std::size_t c = target.dim(1);
  for (std::size_t i = 0; i < target.dim(0); ++i) {
    for (std::size_t d = 0; d < kGeometryChannels; ++d) out[i * c + d] += sign * points[i * 3 + d];
  }
  return Tensor(target.shape(), std::move(out));
}

}  // namespace

SceneSample with_relative_targets(const SceneSample& sample) {
  SceneSample out = sample;
  for (std::size_t i = 0; i < out.targets.size(); ++i) {
    out.targets[i] = shift_geometry(sample.targets[i], sample.deformables[i].points, -1.0);
  }
  out.oracle.reset();
  return out;
}

std::vector<Tensor> absolute_predictions(const SceneSample& input,
                                         const std::vector<Tensor>& relative) {
  if (relative.size() != input.deformables.size()) {
    throw DimensionError("absolute_predictions: " + std::to_string(relative.size()) +
                         " predictions for " + std::to_string(input.deformables.size()) +
                         " deformables");
  }
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < relative.size(); ++i) {
    out.push_back(shift_geometry(relative[i], input.deformables[i].points, 1.0));
  }
  return out;
}

}  // namespace unisoma
