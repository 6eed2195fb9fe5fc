#include "unisoma/scenarios.hpp"

#include <cmath>
#include <cstdio>
#include <random>
#include <set>

namespace unisoma {

namespace fs = std::filesystem;
using nlohmann::json;
using physics::Vec3;

void ScenarioConfig::validate() const {
  if (scenario != "bilateral_press" && scenario != "cavity_grip") {
    throw ConfigError("scenario: unknown scenario '" + scenario +
                      "' (expected bilateral_press or cavity_grip)");
  }
  if (task != "longtime" && task != "autoregressive") {
    throw ConfigError("task: expected longtime or autoregressive, got '" + task + "'");
  }
  if (steps == 0) throw ConfigError("steps: must be at least 1");
  if (task == "autoregressive" && steps < 2) {
    throw ConfigError("steps: autoregressive trajectories need at least 2 steps");
  }
  if (trajectories == 0) throw ConfigError("trajectories: must be at least 1");
  double total = 0.0;
  for (double r : split) {
    if (r < 0.0) throw ConfigError("split: ratios must be nonnegative");
    total += r;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("split: ratios must sum to 1");
  for (auto d : lattice) {
    if (d < 2) throw ConfigError("lattice: every dimension must be at least 2");
  }
  if (!(spacing > 0.0)) throw ConfigError("spacing: must be positive");
  for (const auto* iv : {&stiffness_a, &stiffness_b}) {
    if (!(iv->lo > 0.0) || iv->hi < iv->lo) {
      throw ConfigError("stiffness ranges: need 0 < lo <= hi");
    }
  }
  if (stiffness_jitter < 0.0 || stiffness_jitter >= 1.0) {
    throw ConfigError("stiffness_jitter: must lie in [0, 1)");
  }
  if (anchor_stiffness < 0.0) throw ConfigError("anchor_stiffness: must be nonnegative");
  if (!(contact_ratio > 0.0)) throw ConfigError("contact_ratio: must be positive");
  if (travel.lo < 0.0 || travel.hi < travel.lo) throw ConfigError("travel: need 0 <= lo <= hi");
  if (lateral_jitter < 0.0) throw ConfigError("lateral_jitter: must be nonnegative");
  if (!(rigid_size > 0.0)) throw ConfigError("rigid_size: must be positive");
  if (surface_samples < 6) throw ConfigError("surface_samples: need at least 6");
  if (!(tolerance > 0.0)) throw ConfigError("tolerance: must be positive");
  if (max_iterations <= 0) throw ConfigError("max_iterations: must be positive");
  if (max_attempts <= 0) throw ConfigError("max_attempts: must be positive");
}

namespace {

json interval_json(const Interval& iv) { return json::array({iv.lo, iv.hi}); }

Interval interval_from(const json& j, const char* key) {
  if (!j.is_array() || j.size() != 2) {
    throw ConfigError(std::string(key) + ": expected [lo, hi]");
  }
  return {j[0].get<double>(), j[1].get<double>()};
}

}  // namespace

json ScenarioConfig::to_json() const {
  return {{"scenario", scenario},
          {"task", task},
          {"steps", steps},
          {"trajectories", trajectories},
          {"split", split},
          {"lattice", lattice},
          {"spacing", spacing},
          {"stiffness_a", interval_json(stiffness_a)},
          {"stiffness_b", interval_json(stiffness_b)},
          {"stiffness_jitter", stiffness_jitter},
          {"anchor_stiffness", anchor_stiffness},
          {"contact_ratio", contact_ratio},
          {"travel", interval_json(travel)},
          {"lateral_jitter", lateral_jitter},
          {"rigid_size", rigid_size},
          {"surface_samples", surface_samples},
          {"tolerance", tolerance},
          {"max_iterations", max_iterations},
          {"max_attempts", max_attempts},
          {"load_mode", to_string(load_mode)},
          {"offset", offset}};
}

ScenarioConfig ScenarioConfig::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("scenario config must be a JSON object");
  ScenarioConfig c =
      default_scenario(j.contains("scenario") ? j.at("scenario").get<std::string>() : "bilateral_press");
  const json known = c.to_json();
  for (const auto& [k, v] : j.items()) {
    if (!known.contains(k)) throw ConfigError("unknown scenario key '" + k + "'");
    try {
      if (k == "scenario") c.scenario = v.get<std::string>();
      else if (k == "task") c.task = v.get<std::string>();
      else if (k == "steps") c.steps = v.get<std::size_t>();
      else if (k == "trajectories") c.trajectories = v.get<std::size_t>();
      else if (k == "split") c.split = v.get<std::array<double, 3>>();
      else if (k == "lattice") c.lattice = v.get<std::array<std::size_t, 3>>();
      else if (k == "spacing") c.spacing = v.get<double>();
      else if (k == "stiffness_a") c.stiffness_a = interval_from(v, "stiffness_a");
      else if (k == "stiffness_b") c.stiffness_b = interval_from(v, "stiffness_b");
      else if (k == "stiffness_jitter") c.stiffness_jitter = v.get<double>();
      else if (k == "anchor_stiffness") c.anchor_stiffness = v.get<double>();
      else if (k == "contact_ratio") c.contact_ratio = v.get<double>();
      else if (k == "travel") c.travel = interval_from(v, "travel");
      else if (k == "lateral_jitter") c.lateral_jitter = v.get<double>();
      else if (k == "rigid_size") c.rigid_size = v.get<double>();
      else if (k == "surface_samples") c.surface_samples = v.get<std::size_t>();
      else if (k == "tolerance") c.tolerance = v.get<double>();
      else if (k == "max_iterations") c.max_iterations = v.get<int>();
      else if (k == "max_attempts") c.max_attempts = v.get<int>();
      else if (k == "load_mode") c.load_mode = load_mode_from_string(v.get<std::string>());
      else if (k == "offset") c.offset = v.get<std::array<double, 3>>();
    } catch (const json::exception& e) {
      throw ConfigError("scenario key '" + k + "': " + e.what());
    }
  }
  c.validate();
  return c;
}

ScenarioConfig default_scenario(const std::string& name) {
  ScenarioConfig c;
  c.scenario = name;
  if (name == "cavity_grip") {
    c.task = "autoregressive";
    c.steps = 20;
    c.trajectories = 32;
    c.split = {0.75, 0.125, 0.125};
    c.lattice = {4, 4, 3};
    c.stiffness_a = {3.0, 6.0};
    c.stiffness_b = c.stiffness_a;
    c.travel = {0.04, 0.1};
    c.rigid_size = 0.8;
    c.anchor_stiffness = 0.5;
  } else if (name != "bilateral_press") {
    throw ConfigError("scenario: unknown scenario '" + name + "'");
  }
  return c;
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index, std::uint64_t attempt) {
  auto mix = [](std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(master) ^ (index + 1)) ^ (attempt * 0xD1B54A32D192ED03ULL));
}

namespace {

struct RigidTrack {
  std::string name;
  std::string load_name;
  physics::RigidPrimitive shape;  // pose at step 0
  Vec3 travel{0.0, 0.0, 0.0};     // total displacement over the trajectory

  physics::RigidPrimitive at(double fraction) const {
    physics::RigidPrimitive p = shape;
    for (int c = 0; c < 3; ++c) p.pose.translation[c] += fraction * travel[c];
    return p;
  }
};

struct World {
  physics::SpringSystem system;
  std::vector<std::string> names;
  std::vector<std::size_t> begin;  // first point of each deformable
  std::vector<RigidTrack> rigids;
  std::vector<ContactPair> pairs;
  double contact_stiffness = 0.0;
};

double draw(std::mt19937_64& rng, const Interval& iv) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng) * (iv.hi - iv.lo) + iv.lo;
}

double draw_sym(std::mt19937_64& rng, double half) {
  return half * (2.0 * std::uniform_real_distribution<double>(0.0, 1.0)(rng) - 1.0);
}

World bilateral_world(const ScenarioConfig& c, std::mt19937_64& rng) {
  const double s = c.spacing;
  const auto [nx, ny, nz] = c.lattice;
  const double hx = 0.5 * s * static_cast<double>(nx - 1);
  const double hy = 0.5 * s * static_cast<double>(ny - 1);
  const double top = 0.5 * s + s * static_cast<double>(nz - 1);
  const double ka = draw(rng, c.stiffness_a), kb = draw(rng, c.stiffness_b);

  physics::LatticeSpec upper{nx, ny, nz, s, ka, c.stiffness_jitter, false,
                             {c.offset[0] - hx, c.offset[1] - hy, c.offset[2] + 0.5 * s}};
  physics::LatticeSpec lower = upper;
  lower.stiffness = kb;
  lower.origin[2] = c.offset[2] - top;

  World w;
  w.system = physics::build_lattice(upper, rng());
  w.system.anchor_stiffness = c.anchor_stiffness;
  w.begin = {0, physics::append_system(w.system, physics::build_lattice(lower, rng()))};
  w.names = {"metal", "rubber"};
  // Tie the touching layers of the two bodies.
  const double tie = 2.0 * ka * kb / (ka + kb);
  for (std::size_t j = 0; j < ny; ++j) {
    for (std::size_t i = 0; i < nx; ++i) {
      const std::size_t a = j * nx + i;
      const std::size_t b = w.begin[1] + ((nz - 1) * ny + j) * nx + i;
      w.system.springs.push_back({a, b, s, tie});
    }
  }
  const double r = c.rigid_size;
  const double dtop = draw(rng, c.travel), dbot = draw(rng, c.travel);
  physics::RigidPrimitive die;
  die.kind = physics::PrimitiveKind::sphere;
  die.radius = r;
  die.pose.translation = {c.offset[0] + draw_sym(rng, c.lateral_jitter),
                          c.offset[1] + draw_sym(rng, c.lateral_jitter), c.offset[2] + top + r};
  w.rigids.push_back({"die_top", "press_top", die, {0.0, 0.0, -dtop}});
  die.pose.translation = {c.offset[0] + draw_sym(rng, c.lateral_jitter),
                          c.offset[1] + draw_sym(rng, c.lateral_jitter), c.offset[2] - top - r};
  w.rigids.push_back({"die_bottom", "press_bottom", die, {0.0, 0.0, dbot}});
  w.pairs = {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}};
  w.contact_stiffness = c.contact_ratio * c.stiffness_a.hi;
  return w;
}

World cavity_world(const ScenarioConfig& c, std::mt19937_64& rng) {
  const double s = c.spacing;
  const auto [nx, ny, nz] = c.lattice;
  const double hx = 0.5 * s * static_cast<double>(nx - 1);
  const double hy = 0.5 * s * static_cast<double>(ny - 1);
  const double hz = 0.5 * s * static_cast<double>(nz - 1);
  const double k = draw(rng, c.stiffness_a);
  physics::LatticeSpec tube{nx, ny, nz, s, k, c.stiffness_jitter, true,
                            {c.offset[0] - hx, c.offset[1] - hy, c.offset[2]}};
  World w;
  w.system = physics::build_lattice(tube, rng());
  w.system.anchor_stiffness = c.anchor_stiffness;
  w.begin = {0};
  w.names = {"cavity"};
  const double jaw = 0.2, gap = 0.02;
  physics::RigidPrimitive box;
  box.kind = physics::PrimitiveKind::box;
  box.half_extents = {jaw, c.rigid_size, c.rigid_size};
  const double lift = draw_sym(rng, c.lateral_jitter);
  const double slide = draw_sym(rng, c.lateral_jitter);
  const double left = draw(rng, c.travel), right = draw(rng, c.travel);
  box.pose.translation = {c.offset[0] - hx - jaw - gap, c.offset[1] + slide, c.offset[2] + hz + lift};
  w.rigids.push_back({"jaw_left", "grip_left", box, {left, 0.0, 0.0}});
  box.pose.translation[0] = c.offset[0] + hx + jaw + gap;
  w.rigids.push_back({"jaw_right", "grip_right", box, {-right, 0.0, 0.0}});
  w.pairs = {{0, 1}, {0, 2}};
  w.contact_stiffness = c.contact_ratio * c.stiffness_a.hi;
  return w;
}

std::vector<Vec3> surface(const ScenarioConfig& c, const physics::RigidPrimitive& p) {
  if (p.kind == physics::PrimitiveKind::box) {
    const auto res = static_cast<std::size_t>(
        std::max(1.0, std::round(std::sqrt(static_cast<double>(c.surface_samples) / 6.0))));
    return physics::sample_surface(p, res);
  }
  return physics::sample_surface(p, c.surface_samples);
}

Tensor rows_of(const std::vector<Vec3>& pts, std::size_t begin, std::size_t end) {
  std::vector<double> out;
  out.reserve((end - begin) * 3);
  for (std::size_t i = begin; i < end; ++i) out.insert(out.end(), pts[i].begin(), pts[i].end());
  return Tensor({end - begin, 3}, std::move(out));
}

struct Equilibrium {
  std::vector<Vec3> positions;
  OracleRecord record;
};

Equilibrium settle(const World& w, const ScenarioConfig& c, double fraction,
                   std::vector<Vec3> start, std::uint64_t seed, std::size_t step) {
  physics::ContactModel contact;
  contact.stiffness = w.contact_stiffness;
  for (const auto& r : w.rigids) contact.primitives.push_back(r.at(fraction));
  physics::SolveOptions opt;
  opt.tolerance = 0.5 * c.tolerance;
  opt.max_iterations = c.max_iterations;
  auto rep = physics::solve_quasistatic(w.system, contact, std::move(start), opt);
  const double certified = rep.converged ? physics::certify_residual(w.system, contact, rep.positions)
                                         : rep.residual;
  if (!rep.converged || !(certified < c.tolerance)) {
    throw NonConvergenceError("oracle did not converge (seed " + std::to_string(seed) + ", step " +
                              std::to_string(step) + "): residual " + std::to_string(certified) +
                              " after " + std::to_string(rep.iterations) + " iterations");
  }
  Equilibrium eq;
  eq.record = {w.system, contact, certified, rep.iterations};
  eq.positions = std::move(rep.positions);
  return eq;
}

SceneSample make_sample(const World& w, const ScenarioConfig& c, const std::vector<Vec3>& input,
                        double from, double to, const Equilibrium& target, std::uint64_t seed,
                        std::size_t step) {
  SceneSample s;
  s.seed = seed;
  s.step_index = static_cast<std::int64_t>(step);
  s.target_names = {"x", "y", "z", "spring_energy"};
  const auto energy = physics::point_spring_energy(w.system, target.positions);
  for (std::size_t d = 0; d < w.names.size(); ++d) {
    const std::size_t b = w.begin[d];
    const std::size_t e = d + 1 < w.begin.size() ? w.begin[d + 1] : w.system.size();
    SolidObject obj;
    obj.name = w.names[d];
    obj.role = SolidRole::deformable;
    obj.points = rows_of(input, b, e);
    obj.property_names = {"material"};
    obj.properties = Tensor({e - b, 1}, std::vector<double>(w.system.material.begin() + static_cast<std::ptrdiff_t>(b),
                                                             w.system.material.begin() + static_cast<std::ptrdiff_t>(e)));
    s.deformables.push_back(std::move(obj));
    std::vector<double> t;
    for (std::size_t i = b; i < e; ++i) {
      t.insert(t.end(), target.positions[i].begin(), target.positions[i].end());
      t.push_back(energy[i]);
    }
    s.targets.push_back(Tensor({e - b, 4}, std::move(t)));
  }
  for (std::size_t r = 0; r < w.rigids.size(); ++r) {
    const auto now = surface(c, w.rigids[r].at(from));
    const auto next = surface(c, w.rigids[r].at(to));
    SolidObject obj;
    obj.name = w.rigids[r].name;
    obj.role = SolidRole::rigid;
    obj.points = rows_of(now, 0, now.size());
    obj.properties = Tensor({now.size(), 0}, {});
    LoadObject load;
    load.name = w.rigids[r].load_name;
    load.source = r;
    load.mode = c.load_mode;
    load.origin_points = obj.points;
    const Tensor next_pts = rows_of(next, 0, next.size());
    const Tensor feats = make_load_features(obj.points, next_pts, c.load_mode);
    std::vector<double> motion;
    for (std::size_t i = 0; i < now.size(); ++i) {
      for (std::size_t k = 3; k < 6; ++k) motion.push_back(feats[i * 6 + k]);
    }
    load.motion = Tensor({now.size(), 3}, std::move(motion));
    s.rigids.push_back(std::move(obj));
    s.loads.push_back(std::move(load));
  }
  s.contact_pairs = w.pairs;
  s.oracle = target.record;
  return s;
}

}  // namespace

std::vector<SceneSample> generate_trajectory(const ScenarioConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  const World w = config.scenario == "cavity_grip" ? cavity_world(config, rng)
                                                   : bilateral_world(config, rng);
  const double steps = static_cast<double>(config.steps);
  Equilibrium state = settle(w, config, 0.0, w.system.rest_positions, seed, 0);
  std::vector<SceneSample> out;
  if (config.task == "longtime") {
    const std::vector<Vec3> initial = state.positions;
    for (std::size_t t = 1; t <= config.steps; ++t) {
      state = settle(w, config, static_cast<double>(t) / steps, state.positions, seed, t);
    }
    out.push_back(make_sample(w, config, initial, 0.0, 1.0, state, seed, 0));
    return out;
  }
  for (std::size_t t = 0; t < config.steps; ++t) {
    Equilibrium next =
        settle(w, config, static_cast<double>(t + 1) / steps, state.positions, seed, t + 1);
    out.push_back(make_sample(w, config, state.positions, static_cast<double>(t) / steps,
                              static_cast<double>(t + 1) / steps, next, seed, t));
    state = std::move(next);
  }
  return out;
}

DatasetManifest generate_dataset(const ScenarioConfig& config, std::uint64_t seed,
                                 const fs::path& dir) {
  config.validate();
  const std::size_t n = config.trajectories;
  std::vector<std::vector<SceneSample>> results(n);
  std::vector<std::uint64_t> used_seed(n, 0);
  std::vector<int> attempts(n, 0);
  std::vector<std::string> failure(n);
  const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t ii = 0; ii < count; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    for (int a = 0; a < config.max_attempts; ++a) {
      const std::uint64_t s = derive_seed(seed, i, static_cast<std::uint64_t>(a));
      attempts[i] = a + 1;
      try {
        results[i] = generate_trajectory(config, s);
        used_seed[i] = s;
        failure[i].clear();
        break;
      } catch (const NonConvergenceError& e) {
        failure[i] = e.what();
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!failure[i].empty()) {
      throw NonConvergenceError("trajectory " + std::to_string(i) + " failed after " +
                                std::to_string(config.max_attempts) + " attempts: " + failure[i]);
    }
  }

  fs::create_directories(dir);
  DatasetManifest m;
  m.scenario = config.scenario;
  m.task = config.task;
  m.seed = seed;
  m.scenario_config = config.to_json();
  char buf[64];
  for (std::size_t i = 0; i < n; ++i) {
    std::snprintf(buf, sizeof(buf), "traj_%04zu", i);
    TrajectoryEntry entry{buf, used_seed[i], attempts[i], {}};
    m.excluded += static_cast<std::size_t>(attempts[i] - 1);
    for (std::size_t t = 0; t < results[i].size(); ++t) {
      std::snprintf(buf, sizeof(buf), "traj_%04zu_step_%04zu", i, t);
      SceneSample& s = results[i][t];
      s.sample_id = buf;
      save_scene(s, dir / buf);
      entry.files.emplace_back(buf);
    }
    m.trajectories.push_back(std::move(entry));
  }
  const auto n_train = static_cast<std::size_t>(std::llround(static_cast<double>(n) * config.split[0]));
  const auto n_val = std::min(n - std::min(n, n_train),
                              static_cast<std::size_t>(std::llround(static_cast<double>(n) * config.split[1])));
  for (std::size_t i = 0; i < n; ++i) {
    const char* split = i < n_train ? "train" : (i < n_train + n_val ? "val" : "test");
    m.splits[split].push_back(m.trajectories[i].id);
  }
  for (const char* s : {"train", "val", "test"}) m.splits[s];  // present even when empty
  save_manifest(m, dir);
  return m;
}

}  // namespace unisoma
