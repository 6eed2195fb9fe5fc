#include "unisoma/scene_io.hpp"

#include <algorithm>

#include "unisoma/binary_io.hpp"

namespace unisoma {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path stem_of(const fs::path& path) {
  fs::path p = path;
  if (p.extension() == ".json" || p.extension() == ".bin") p.replace_extension();
  return p;
}

fs::path with_ext(const fs::path& stem, const char* ext) {
  fs::path p = stem;
  p += ext;
  return p;
}

class BlobWriter {
 public:
  json put(const Tensor& t) {
    const std::size_t rows = t.rank() >= 1 ? t.dim(0) : 0;
    const std::size_t cols = t.rank() >= 2 ? t.dim(1) : (t.rank() == 1 ? 1 : 0);
    json ref{{"offset", count_}, {"rows", rows}, {"cols", cols}};
    if (t.numel() > 0) w_.put_bytes(t.ptr(), t.numel() * sizeof(double));
    count_ += t.numel();
    return ref;
  }
  json put(const std::vector<double>& v) {
    return put(Tensor({v.size(), 1}, v));
  }
  const std::vector<char>& bytes() const { return w_.bytes(); }

 private:
  io::ByteWriter w_;
  std::size_t count_ = 0;
};

class BlobReader {
 public:
  BlobReader(const std::vector<char>& bytes, std::string source) : r_(bytes, std::move(source)) {}

  Tensor get(const json& ref, const char* what) {
    const auto offset = ref.at("offset").get<std::size_t>();
    const auto rows = ref.at("rows").get<std::size_t>();
    const auto cols = ref.at("cols").get<std::size_t>();
    std::vector<double> data(rows * cols);
    r_.seek(offset * sizeof(double));
    if (!data.empty()) r_.get_bytes(data.data(), data.size() * sizeof(double), what);
    return Tensor({rows, cols}, std::move(data));
  }

 private:
  io::ByteReader r_;
};

json solid_header(const SolidObject& s, BlobWriter& blob) {
  json j{{"name", s.name}, {"role", to_string(s.role)}, {"points", blob.put(s.points)},
         {"property_names", s.property_names}};
  j["properties"] = blob.put(s.properties.empty() ? Tensor({s.size(), 0}, {}) : s.properties);
  return j;
}

SolidObject solid_from(const json& j, SolidRole role, BlobReader& blob) {
  SolidObject s;
  s.name = j.at("name").get<std::string>();
  const auto r = j.at("role").get<std::string>();
  if (r != to_string(role)) {
    throw ValidationError("object '" + s.name + "' listed as " + to_string(role) +
                          " but tagged " + r);
  }
  s.role = role;
  s.points = blob.get(j.at("points"), "points");
  s.property_names = j.at("property_names").get<std::vector<std::string>>();
  s.properties = blob.get(j.at("properties"), "properties");
  return s;
}

json vec3(const physics::Vec3& v) { return json::array({v[0], v[1], v[2]}); }
physics::Vec3 vec3_from(const json& j) {
  return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()};
}

json oracle_header(const OracleRecord& o, BlobWriter& blob) {
  std::vector<double> rest, springs;
  for (const auto& p : o.system.rest_positions) rest.insert(rest.end(), p.begin(), p.end());
  for (const auto& s : o.system.springs) {
    springs.insert(springs.end(), {static_cast<double>(s.p), static_cast<double>(s.q),
                                   s.rest_length, s.stiffness});
  }
  json prims = json::array();
  for (const auto& p : o.contact.primitives) {
    prims.push_back({{"kind", physics::to_string(p.kind)},
                     {"normal", vec3(p.normal)},
                     {"radius", p.radius},
                     {"half_extents", vec3(p.half_extents)},
                     {"rotation", p.pose.rotation},
                     {"translation", vec3(p.pose.translation)}});
  }
  const std::size_t n = o.system.size();
  return {{"residual", o.residual},
          {"iterations", o.iterations},
          {"anchor_stiffness", o.system.anchor_stiffness},
          {"contact_stiffness", o.contact.stiffness},
          {"rest_positions", blob.put(Tensor({n, 3}, rest))},
          {"material", blob.put(o.system.material)},
          {"springs", blob.put(Tensor({o.system.springs.size(), 4}, springs))},
          {"primitives", prims}};
}

OracleRecord oracle_from(const json& j, BlobReader& blob) {
  OracleRecord o;
  o.residual = j.at("residual").get<double>();
  o.iterations = j.at("iterations").get<int>();
  o.system.anchor_stiffness = j.at("anchor_stiffness").get<double>();
  o.contact.stiffness = j.at("contact_stiffness").get<double>();
  const Tensor rest = blob.get(j.at("rest_positions"), "oracle rest positions");
  for (std::size_t i = 0; i < rest.dim(0); ++i) {
    o.system.rest_positions.push_back({rest[i * 3], rest[i * 3 + 1], rest[i * 3 + 2]});
  }
  o.system.material = blob.get(j.at("material"), "oracle material").to_vector();
  const Tensor springs = blob.get(j.at("springs"), "oracle springs");
  for (std::size_t s = 0; s < springs.dim(0); ++s) {
    o.system.springs.push_back({static_cast<std::size_t>(springs[s * 4]),
                                static_cast<std::size_t>(springs[s * 4 + 1]),
                                springs[s * 4 + 2], springs[s * 4 + 3]});
  }
  for (const auto& p : j.at("primitives")) {
    physics::RigidPrimitive prim;
    prim.kind = physics::primitive_kind_from_string(p.at("kind").get<std::string>());
    prim.normal = vec3_from(p.at("normal"));
    prim.radius = p.at("radius").get<double>();
    prim.half_extents = vec3_from(p.at("half_extents"));
    prim.pose.rotation = p.at("rotation").get<std::array<double, 9>>();
    prim.pose.translation = vec3_from(p.at("translation"));
    o.contact.primitives.push_back(prim);
  }
  return o;
}

json parse_json_file(const fs::path& path, const char* what) {
  if (!fs::exists(path)) throw FileMissingError(std::string(what) + " not found: " + path.string());
  const auto bytes = io::read_file(path.string());
  try {
    return json::parse(bytes.begin(), bytes.end());
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": malformed JSON at byte offset " + std::to_string(e.byte) +
                     ": " + e.what());
  }
}

}  // namespace

void save_scene(const SceneSample& sample, const fs::path& path) {
  sample.validate();
  const fs::path stem = stem_of(path);
  BlobWriter blob;
  json h;
  h["schema_version"] = kSceneSchemaVersion;
  h["sample_id"] = sample.sample_id;
  h["seed"] = sample.seed;
  h["step_index"] = sample.step_index;
  h["target_names"] = sample.target_names;
  h["blob"] = with_ext(stem, ".bin").filename().string();
  h["deformables"] = json::array();
  for (const auto& d : sample.deformables) h["deformables"].push_back(solid_header(d, blob));
  h["rigids"] = json::array();
  for (const auto& r : sample.rigids) h["rigids"].push_back(solid_header(r, blob));
  h["loads"] = json::array();
  for (const auto& l : sample.loads) {
    h["loads"].push_back({{"name", l.name},
                          {"source", l.source},
                          {"mode", to_string(l.mode)},
                          {"origin_points", blob.put(l.origin_points)},
                          {"motion", blob.put(l.motion)}});
  }
  h["contact_pairs"] = json::array();
  for (const auto& [a, b] : sample.contact_pairs) h["contact_pairs"].push_back({a, b});
  h["targets"] = json::array();
  for (const auto& t : sample.targets) h["targets"].push_back(blob.put(t));
  if (sample.oracle) h["oracle"] = oracle_header(*sample.oracle, blob);
  h["blob_bytes"] = blob.bytes().size();

  io::write_file(with_ext(stem, ".bin").string(), blob.bytes());
  io::write_text(with_ext(stem, ".json").string(), h.dump(1) + "\n");
}

SceneSample load_scene(const fs::path& path) {
  const fs::path stem = stem_of(path);
  const fs::path header_path = with_ext(stem, ".json");
  const json h = parse_json_file(header_path, "scene header");
  SceneSample s;
  try {
    const int version = h.at("schema_version").get<int>();
    if (version != kSceneSchemaVersion) {
      throw SchemaVersionError(header_path.string() + ": schema_version " +
                               std::to_string(version) + ", this build reads " +
                               std::to_string(kSceneSchemaVersion));
    }
    const fs::path blob_path = stem.parent_path() / h.at("blob").get<std::string>();
    if (!fs::exists(blob_path)) {
      throw FileMissingError("scene payload not found: " + blob_path.string());
    }
    const auto bytes = io::read_file(blob_path.string());
    BlobReader blob(bytes, blob_path.string());
    s.sample_id = h.at("sample_id").get<std::string>();
    s.seed = h.at("seed").get<std::uint64_t>();
    s.step_index = h.at("step_index").get<std::int64_t>();
    s.target_names = h.at("target_names").get<std::vector<std::string>>();
    for (const auto& d : h.at("deformables")) {
      s.deformables.push_back(solid_from(d, SolidRole::deformable, blob));
    }
    for (const auto& r : h.at("rigids")) s.rigids.push_back(solid_from(r, SolidRole::rigid, blob));
    for (const auto& l : h.at("loads")) {
      LoadObject load;
      load.name = l.at("name").get<std::string>();
      load.source = l.at("source").get<std::size_t>();
      load.mode = load_mode_from_string(l.at("mode").get<std::string>());
      load.origin_points = blob.get(l.at("origin_points"), "load origin points");
      load.motion = blob.get(l.at("motion"), "load motion");
      s.loads.push_back(std::move(load));
    }
    for (const auto& p : h.at("contact_pairs")) {
      s.contact_pairs.emplace_back(p.at(0).get<std::size_t>(), p.at(1).get<std::size_t>());
    }
    for (const auto& t : h.at("targets")) s.targets.push_back(blob.get(t, "targets"));
    if (h.contains("oracle")) s.oracle = oracle_from(h.at("oracle"), blob);
    if (bytes.size() != h.at("blob_bytes").get<std::size_t>()) {
      throw ParseError(blob_path.string() + ": payload has " + std::to_string(bytes.size()) +
                       " bytes, header declares " +
                       std::to_string(h.at("blob_bytes").get<std::size_t>()));
    }
  } catch (const json::exception& e) {
    throw ParseError(header_path.string() + ": " + e.what());
  }
  try {
    s.validate();
  } catch (const ValidationError& e) {
    throw ValidationError(header_path.string() + ": " + e.what());
  }
  return s;
}

double recertify(const SceneSample& sample) {
  if (!sample.oracle) throw ValidationError("sample '" + sample.sample_id + "' has no oracle record");
  std::vector<physics::Vec3> x;
  for (const auto& t : sample.targets) {
    const std::size_t cols = t.dim(1);
    for (std::size_t i = 0; i < t.dim(0); ++i) {
      x.push_back({t[i * cols], t[i * cols + 1], t[i * cols + 2]});
    }
  }
  return physics::certify_residual(sample.oracle->system, sample.oracle->contact, x);
}

const TrajectoryEntry& DatasetManifest::trajectory(const std::string& id) const {
  for (const auto& t : trajectories) {
    if (t.id == id) return t;
  }
  throw ValidationError("manifest has no trajectory '" + id + "'");
}

void save_manifest(const DatasetManifest& m, const fs::path& dir) {
  json j;
  j["schema_version"] = m.schema_version;
  j["scenario"] = m.scenario;
  j["task"] = m.task;
  j["seed"] = m.seed;
  j["scenario_config"] = m.scenario_config;
  j["excluded_attempts"] = m.excluded;
  j["splits"] = m.splits;
  j["trajectories"] = json::array();
  for (const auto& t : m.trajectories) {
    j["trajectories"].push_back(
        {{"id", t.id}, {"seed", t.seed}, {"attempts", t.attempts}, {"files", t.files}});
  }
  fs::create_directories(dir);
  io::write_text((dir / "manifest.json").string(), j.dump(1) + "\n");
}

DatasetManifest load_manifest(const fs::path& dir) {
  const fs::path path = dir / "manifest.json";
  const json j = parse_json_file(path, "dataset manifest");
  DatasetManifest m;
  try {
    m.schema_version = j.at("schema_version").get<int>();
    if (m.schema_version != kSceneSchemaVersion) {
      throw SchemaVersionError(path.string() + ": schema_version " +
                               std::to_string(m.schema_version) + ", this build reads " +
                               std::to_string(kSceneSchemaVersion));
    }
    m.scenario = j.at("scenario").get<std::string>();
    m.task = j.at("task").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.scenario_config = j.at("scenario_config");
    m.excluded = j.at("excluded_attempts").get<std::size_t>();
    m.splits = j.at("splits").get<std::map<std::string, std::vector<std::string>>>();
    for (const auto& t : j.at("trajectories")) {
      m.trajectories.push_back({t.at("id").get<std::string>(), t.at("seed").get<std::uint64_t>(),
                                t.at("attempts").get<int>(),
                                t.at("files").get<std::vector<std::string>>()});
    }
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  for (const auto& [split, ids] : m.splits) {
    for (const auto& id : ids) {
      try {
        m.trajectory(id);
      } catch (const ValidationError&) {
        throw ValidationError(path.string() + ": split '" + split +
                              "' lists unknown trajectory '" + id + "'");
      }
    }
  }
  return m;
}

std::vector<Trajectory> load_split(const fs::path& dir, const DatasetManifest& manifest,
                                   const std::string& split) {
  const auto it = manifest.splits.find(split);
  if (it == manifest.splits.end()) {
    throw ValidationError("dataset has no split '" + split + "'");
  }
  std::vector<Trajectory> out;
  for (const auto& id : it->second) {
    const auto& entry = manifest.trajectory(id);
    Trajectory traj{id, {}};
    for (const auto& file : entry.files) {
      SceneSample s = load_scene(dir / file);
      if (s.oracle) {
        const double r = recertify(s);
        if (!(r < kCertificateTolerance)) {
          throw ValidationError((dir / file).string() + ": equilibrium certificate failed, ‖∇E‖∞ = " +
                                std::to_string(r));
        }
      }
      traj.steps.push_back(std::move(s));
    }
    out.push_back(std::move(traj));
  }
  return out;
}

}  // namespace unisoma
