#include <algorithm>
#include <cmath>
#include <numeric>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "unisoma/normalization.hpp"
#include "unisoma/ops.hpp"
#include "unisoma/scenarios.hpp"
#include "unisoma/scene.hpp"
#include "unisoma/scene_io.hpp"

using namespace unisoma;
using test::check_close;
using test::random_tensor;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("unisoma_test_scene_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// Brute-force neighbour list used as the reference for build_knn_edges.
std::vector<std::vector<std::size_t>> brute_knn(const Tensor& pts, std::size_t k) {
  const std::size_t n = pts.dim(0);
  std::vector<std::vector<std::size_t>> out(n);
  for (std::size_t p = 0; p < n; ++p) {
    std::vector<std::pair<double, std::size_t>> d;
    for (std::size_t q = 0; q < n; ++q) {
      if (q == p) continue;
      double s = 0;
      for (std::size_t c = 0; c < 3; ++c) s += std::pow(pts.at(q, c) - pts.at(p, c), 2);
      d.push_back({s, q});
    }
    std::sort(d.begin(), d.end());
    for (std::size_t i = 0; i < k; ++i) out[p].push_back(d[i].second);
  }
  return out;
}

std::vector<std::vector<std::size_t>> neighbours(const EdgeSet& e, std::size_t n) {
  std::vector<std::vector<std::size_t>> out(n);
  for (std::size_t i = 0; i < e.size(); ++i) out[e.src[i]].push_back(e.dst[i]);
  return out;
}

SceneSample hand_sample(std::mt19937_64& rng) {
  SceneSample s;
  SolidObject a{"plate", SolidRole::deformable, random_tensor({6, 3}, rng), random_tensor({6, 1}, rng), {"E"}};
  SolidObject r{"jaw", SolidRole::rigid, random_tensor({4, 3}, rng), Tensor::zeros({4, 0}), {}};
  const Tensor next = random_tensor({4, 3}, rng);
  LoadObject l{"jaw_motion", 0, r.points, next - r.points, LoadMode::delta};
  s.deformables = {a};
  s.rigids = {r};
  s.loads = {l};
  s.contact_pairs = {{0, 1}};
  s.targets = {random_tensor({6, 4}, rng)};
  s.target_names = {"x", "y", "z", "spring_energy"};
  s.sample_id = "hand/0";
  s.seed = 9;
  return s;
}

}  // namespace

TEST_SUITE("mesh_scene") {

TEST_CASE("knn on collinear points") {
  const Tensor pts = Tensor::matrix({{0, 0, 0}, {1, 0, 0}, {3, 0, 0}});
  const EdgeSet e = build_knn_edges(pts, 1);
  REQUIRE(e.size() == 3);
  CHECK(neighbours(e, 3) == std::vector<std::vector<std::size_t>>{{1}, {0}, {1}});
  check_close(e.attributes, {1, 0, 0, -1, 0, 0, -2, 0, 0}, 0.0);
}

TEST_CASE("knn ties go to the lower index") {
  // Points 0 and 2 are both at distance 1 from point 1.
  const Tensor pts = Tensor::matrix({{-1, 0, 0}, {0, 0, 0}, {1, 0, 0}});
  CHECK(neighbours(build_knn_edges(pts, 1), 3)[1] == std::vector<std::size_t>{0});
}

TEST_CASE("knn rejects k outside [1, N)") {
  const Tensor pts = Tensor::matrix({{0, 0, 0}, {1, 0, 0}, {3, 0, 0}});
  CHECK_THROWS(build_knn_edges(pts, 3));
  CHECK_THROWS(build_knn_edges(pts, 0));
}

TEST_CASE("knn matches brute force and has no self loops") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor pts = random_tensor({20, 3}, rng);
    const EdgeSet e = build_knn_edges(pts, 4);
    CHECK(e.size() == 80);
    for (std::size_t i = 0; i < e.size(); ++i) CHECK(e.src[i] != e.dst[i]);
    auto got = neighbours(e, 20);
    auto want = brute_knn(pts, 4);
    for (std::size_t p = 0; p < 20; ++p) {
      std::sort(got[p].begin(), got[p].end());
      std::sort(want[p].begin(), want[p].end());
      CHECK(got[p] == want[p]);
    }
  }
}

TEST_CASE("knn commutes with point relabelling") {
  std::mt19937_64 rng(4);
  const Tensor pts = random_tensor({12, 3}, rng);
  std::vector<std::size_t> perm(12);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<double> moved(36);
  for (std::size_t i = 0; i < 12; ++i)
    for (std::size_t c = 0; c < 3; ++c) moved[i * 3 + c] = pts.at(perm[i], c);
  const auto a = neighbours(build_knn_edges(pts, 3), 12);
  const auto b = neighbours(build_knn_edges(Tensor({12, 3}, moved), 3), 12);
  for (std::size_t i = 0; i < 12; ++i) {
    std::vector<std::size_t> mapped;
    for (std::size_t q : b[i]) mapped.push_back(perm[q]);
    std::sort(mapped.begin(), mapped.end());
    auto want = a[perm[i]];
    std::sort(want.begin(), want.end());
    CHECK(mapped == want);
  }
}

TEST_CASE("edge attributes are translation invariant and rotate with the cloud") {
  std::mt19937_64 rng(5);
  const Tensor pts = random_tensor({10, 3}, rng);
  const EdgeSet e = build_knn_edges(pts, 3);
  const Tensor shifted = pts + Tensor::matrix({{0.3, -2.0, 5.0}});
  check_close(edge_attributes(shifted, e.src, e.dst), e.attributes, 1e-12);
  // Rotation by 90 degrees about z: (x, y, z) -> (-y, x, z).
  const Tensor rot = Tensor::matrix({{0, 1, 0}, {-1, 0, 0}, {0, 0, 1}});
  const Tensor rotated = edge_attributes(matmul(pts, rot), e.src, e.dst);
  check_close(rotated, matmul(e.attributes, rot), 1e-12);
}

TEST_CASE("load features in both modes") {
  const Tensor prev = Tensor::matrix({{0, 0, 0}, {1, 1, 1}});
  const Tensor next = Tensor::matrix({{0, 0, 1}, {2, 1, 1}});
  check_close(make_load_features(prev, next, LoadMode::delta), {0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 0, 0}, 0.0);
  check_close(make_load_features(prev, next, LoadMode::absolute), {0, 0, 0, 0, 0, 1, 1, 1, 1, 2, 1, 1}, 0.0);
  CHECK_THROWS_AS(make_load_features(prev, Tensor::zeros({3, 3}), LoadMode::delta), DimensionError);
}

TEST_CASE("target quantities split geometry from scalar channels") {
  const auto q = target_quantities({"x", "y", "z", "spring_energy"});
  REQUIRE(q.size() == 2);
  CHECK(q[0].name == "geometry");
  CHECK(q[0].end == 3);
  CHECK(q[1].name == "spring_energy");
  CHECK(q[1].begin == 3);
  CHECK_THROWS_AS(target_quantities({"x", "y"}), ValidationError);
}

TEST_CASE("scene validation names the broken invariant") {
  std::mt19937_64 rng(6);
  SceneSample s = hand_sample(rng);
  CHECK_NOTHROW(s.validate());
  SUBCASE("self pair") {
    s.contact_pairs = {{1, 1}};
    CHECK_THROWS_WITH_AS(s.validate(), doctest::Contains("itself"), ValidationError);
  }
  SUBCASE("absent object") {
    s.contact_pairs = {{0, 5}};
    CHECK_THROWS_WITH_AS(s.validate(), doctest::Contains("absent"), ValidationError);
  }
  SUBCASE("duplicate names") {
    s.rigids[0].name = "plate";
    CHECK_THROWS_WITH_AS(s.validate(), doctest::Contains("duplicate"), ValidationError);
  }
  SUBCASE("non-finite point") {
    std::vector<double> v(s.deformables[0].points.data().begin(), s.deformables[0].points.data().end());
    v[4] = std::nan("");
    s.deformables[0].points = Tensor({6, 3}, v);
    CHECK_THROWS_WITH_AS(s.validate(), doctest::Contains("non-finite"), ValidationError);
  }
}

TEST_CASE("normalisation statistics and round trip") {
  std::mt19937_64 rng(7);
  std::vector<SceneSample> samples;
  for (int i = 0; i < 6; ++i) samples.push_back(hand_sample(rng));
  // Give the channels a scale far from unit.
  for (auto& s : samples) s.targets[0] = add_scalar(scale(s.targets[0], 50.0), 7.0);
  const NormStats stats = fit_stats(samples);
  std::vector<double> col_sum(4, 0.0), col_sq(4, 0.0);
  std::size_t rows = 0;
  for (const auto& s : samples) {
    const SceneSample n = normalize_scene(s, stats);
    for (std::size_t i = 0; i < n.targets[0].dim(0); ++i, ++rows) {
      for (std::size_t c = 0; c < 4; ++c) {
        col_sum[c] += n.targets[0].at(i, c);
        col_sq[c] += n.targets[0].at(i, c) * n.targets[0].at(i, c);
      }
    }
    check_close(denormalize_predictions(n.targets, stats)[0], s.targets[0], 1e-10);
  }
  for (std::size_t c = 0; c < 4; ++c) {
    const double mean = col_sum[c] / rows;
    CHECK(std::abs(mean) < 1e-10);
    CHECK(std::abs(std::sqrt(col_sq[c] / rows - mean * mean) - 1.0) < 1e-6);
  }
}

TEST_CASE("constant channels are not divided by zero") {
  const ChannelStats s = fit_channels({Tensor::matrix({{2, 1}, {2, 3}})});
  CHECK(s.std[0] == doctest::Approx(kStdFloor));
  const Tensor y = s.apply(Tensor::matrix({{2, 2}}));
  CHECK(y.all_finite());
  CHECK(y[0] == 0.0);
}

TEST_CASE("relative targets round trip") {
  std::mt19937_64 rng(8);
  const SceneSample s = hand_sample(rng);
  const SceneSample r = with_relative_targets(s);
  CHECK(r.targets[0].at(2, 1) == doctest::Approx(s.targets[0].at(2, 1) - s.deformables[0].points.at(2, 1)));
  CHECK(r.targets[0].at(2, 3) == s.targets[0].at(2, 3));
  check_close(absolute_predictions(s, r.targets)[0], s.targets[0], 1e-14);
}

TEST_CASE("scene files round trip exactly") {
  std::mt19937_64 rng(9);
  const SceneSample s = hand_sample(rng);
  const fs::path dir = scratch("roundtrip");
  save_scene(s, dir / "scene");
  const SceneSample back = load_scene(dir / "scene");
  CHECK(back.sample_id == s.sample_id);
  CHECK(back.seed == s.seed);
  CHECK(back.contact_pairs == s.contact_pairs);
  CHECK(back.target_names == s.target_names);
  CHECK(back.deformables[0].property_names == s.deformables[0].property_names);
  check_close(back.deformables[0].points, s.deformables[0].points, 0.0);
  check_close(back.deformables[0].properties, s.deformables[0].properties, 0.0);
  check_close(back.loads[0].motion, s.loads[0].motion, 0.0);
  check_close(back.targets[0], s.targets[0], 0.0);
  // Either file name addresses the same scene.
  check_close(load_scene(dir / "scene.json").targets[0], s.targets[0], 0.0);
}

TEST_CASE("scene loading errors") {
  std::mt19937_64 rng(10);
  const fs::path dir = scratch("errors");
  save_scene(hand_sample(rng), dir / "scene");

  SUBCASE("missing file") { CHECK_THROWS_AS(load_scene(dir / "nothing"), FileMissingError); }
  SUBCASE("truncated header reports a byte offset") {
    std::ifstream in(dir / "scene.json");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    std::ofstream(dir / "scene.json") << text.substr(0, text.size() / 2);
    CHECK_THROWS_WITH_AS(load_scene(dir / "scene"), doctest::Contains("byte offset"), ParseError);
  }
  SUBCASE("truncated payload") {
    fs::resize_file(dir / "scene.bin", fs::file_size(dir / "scene.bin") - 8);
    CHECK_THROWS_AS(load_scene(dir / "scene"), ParseError);
  }
  SUBCASE("future schema version") {
    std::ifstream in(dir / "scene.json");
    nlohmann::json j = nlohmann::json::parse(in);
    in.close();
    j["schema_version"] = kSceneSchemaVersion + 1;
    std::ofstream(dir / "scene.json") << j.dump();
    CHECK_THROWS_AS(load_scene(dir / "scene"), SchemaVersionError);
  }
  SUBCASE("invalid contact pair") {
    std::ifstream in(dir / "scene.json");
    nlohmann::json j = nlohmann::json::parse(in);
    in.close();
    j["contact_pairs"] = nlohmann::json::array({nlohmann::json::array({0, 7})});
    std::ofstream(dir / "scene.json") << j.dump();
    CHECK_THROWS_AS(load_scene(dir / "scene"), ValidationError);
  }
}

TEST_CASE("tampered targets fail the certificate on load") {
  ScenarioConfig cfg = default_scenario("bilateral_press");
  cfg.trajectories = 2;
  cfg.split = {0.5, 0.5, 0.0};
  const fs::path dir = scratch("certificate");
  const DatasetManifest m = generate_dataset(cfg, 21, dir);
  const auto train = load_split(dir, m, "train");
  REQUIRE(train.size() == 1);
  CHECK(recertify(train[0].steps[0]) < kCertificateTolerance);

  SceneSample broken = train[0].steps[0];
  std::vector<double> v(broken.targets[0].data().begin(), broken.targets[0].data().end());
  v[0] += 1e-3;
  broken.targets[0] = Tensor(broken.targets[0].shape(), v);
  CHECK(recertify(broken) > kCertificateTolerance);
  save_scene(broken, dir / m.trajectory(train[0].id).files[0]);
  CHECK_THROWS_WITH_AS(load_split(dir, m, "train"), doctest::Contains("certificate"), ValidationError);
}

}  // TEST_SUITE
