#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "helpers.hpp"
#include "unisoma/autograd.hpp"
#include "unisoma/metrics.hpp"
#include "unisoma/ops.hpp"
#include "unisoma/scenarios.hpp"
#include "unisoma/scene_io.hpp"
#include "unisoma/training.hpp"

using namespace unisoma;
using test::check_close;
namespace fs = std::filesystem;

namespace {

struct Splits {
  std::vector<Trajectory> train, val, test;
};

Splits make_splits(const std::string& scenario, std::size_t steps) {
  ScenarioConfig c = default_scenario(scenario);
  c.trajectories = 4;
  c.split = {0.5, 0.25, 0.25};
  if (steps > 0) c.steps = steps;
  const fs::path dir = fs::temp_directory_path() / ("unisoma_test_training_" + scenario);
  fs::remove_all(dir);
  const DatasetManifest m = generate_dataset(c, 17, dir);
  return {load_split(dir, m, "train"), load_split(dir, m, "val"), load_split(dir, m, "test")};
}

const Splits& press() {
  static const Splits s = make_splits("bilateral_press", 0);
  return s;
}

const Splits& grip() {
  static const Splits s = make_splits("cavity_grip", 4);
  return s;
}

TrainConfig tiny(Task task) {
  TrainConfig c;
  c.task = task;
  c.epochs = 3;
  c.learning_rate = 1e-3;
  c.model.channels = 8;
  c.model.slices = 4;
  c.model.layers = 1;
  return c;
}

// Returns the stored ground truth of whichever step it is handed.
Predictor perfect(const Trajectory& truth) {
  return [&truth](const SceneSample& s) { return truth.steps.at(static_cast<std::size_t>(s.step_index)).targets; };
}

}  // namespace

TEST_SUITE("train_bench") {

TEST_CASE("metric examples") {
  const Tensor u = Tensor::matrix({{3, 4}});
  CHECK(relative_l2(u, u) == 0.0);
  CHECK(relative_l2(u, Tensor::zeros({1, 2})) == 1.0);
  CHECK(relative_l2(u, Tensor::matrix({{3, 5}})) == doctest::Approx(0.2));
  CHECK_THROWS_AS(relative_l2(Tensor::zeros({1, 2}), u), ValidationError);
  const Tensor a = Tensor::zeros({2, 3});
  CHECK(rmse(a, Tensor::matrix({{3, 4, 0}, {0, 0, 0}})) == doctest::Approx(std::sqrt(12.5)));
  CHECK(rmse(a, a) == 0.0);
  CHECK(relative_l2(Tensor::matrix({{1, 0}}), Tensor::matrix({{0, 1}})) == doctest::Approx(std::sqrt(2.0)));
  const Tensor base = Tensor::matrix({{0.5, -1.0, 2.0}, {1.5, 0.0, -0.5}});
  // Every point moved by a unit-length vector.
  const Tensor moved = add(base, Tensor::matrix({{1, 0, 0}, {0, 0.6, 0.8}}));
  CHECK(rmse(base, moved) == doctest::Approx(1.0));
  // Two points off by 1 and 3 along x: sqrt((1 + 9) / 2).
  CHECK(rmse(Tensor::zeros({2, 3}), Tensor::matrix({{1, 0, 0}, {3, 0, 0}})) == doctest::Approx(std::sqrt(5.0)));
  const Tensor pert = Tensor::matrix({{3.5, 3.0}});
  CHECK(relative_l2(scale(u, 4.0), scale(pert, 4.0)) == doctest::Approx(relative_l2(u, pert)));
  check_close(columns(Tensor::matrix({{1, 2, 3}, {4, 5, 6}}), 1, 3), {2, 3, 5, 6}, 0.0);
  check_close(stack_rows({Tensor::matrix({{1, 2}}), Tensor::matrix({{3, 4}, {5, 6}})}), {1, 2, 3, 4, 5, 6}, 0.0);
}

TEST_CASE("task loss values") {
  const std::vector<std::string> names{"x", "y", "z", "e"};
  const std::vector<Tensor> target{Tensor::matrix({{3, 4, 0, 2}})};
  const std::vector<Tensor> pred{Tensor::matrix({{3, 4, 1, 4}})};
  // Geometry: ‖(0,0,1)‖/5; energy channel: 2/2.
  CHECK(task_loss(Task::longtime, pred, target, names)[0] == doctest::Approx(0.2 + 1.0));
  // MSE per quantity: 1/3 and 4.
  CHECK(task_loss(Task::autoregressive, pred, target, names)[0] == doctest::Approx(1.0 / 3.0 + 4.0));
}

TEST_CASE("a zero loss weight removes that quantity's gradient") {
  const std::vector<std::string> names{"x", "y", "z", "e"};
  const std::vector<Tensor> target{Tensor::matrix({{3, 4, 0, 2}, {1, 1, 1, 1}})};
  for (Task task : {Task::longtime, Task::autoregressive}) {
    Tape tape;
    const Tensor p = tape.watch(Tensor::matrix({{2, 4, 1, 5}, {0, 1, 3, -1}}));
    const Tensor g = tape.backward(task_loss(task, {p}, target, names, LossWeights{{1.0, 0.0}})).of(p);
    for (std::size_t i = 0; i < 2; ++i) {
      CHECK(g.at(i, 3) == 0.0);
      CHECK(std::abs(g.at(i, 2)) > 0.0);
    }
  }
}

TEST_CASE("train config round trip and unknown keys") {
  TrainConfig c = tiny(Task::autoregressive);
  c.noise_std = 0.01;
  const TrainConfig back = TrainConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
  CHECK_THROWS_WITH_AS(TrainConfig::from_json({{"learning_rat", 0.1}}), doctest::Contains("learning_rat"), ConfigError);
  CHECK_THROWS_AS(TrainConfig::from_json({{"epochs", "many"}}), ConfigError);
  CHECK(tiny(Task::autoregressive).effective_noise() == doctest::Approx(std::sqrt(0.001)));
  CHECK(tiny(Task::longtime).effective_noise() == 0.0);
}

TEST_CASE("zero learning rate keeps the loss constant") {
  for (Task task : {Task::longtime, Task::autoregressive}) {
    const Splits& s = task == Task::longtime ? press() : grip();
    TrainConfig c = tiny(task);
    c.learning_rate = 0.0;
    c.noise_std = 0.0;
    const TrainResult r = train({s.train, s.val}, c);
    REQUIRE(r.history.size() == 3);
    for (const auto& h : r.history) {
      CHECK(h.train_loss == r.history[0].train_loss);
      CHECK(h.val_loss == r.history[0].val_loss);
    }
    ModelBundle untrained = r.best;
    untrained.params = r.initial;
    CHECK(r.history[0].train_loss == doctest::Approx(dataset_loss(untrained, s.train)).epsilon(1e-12));
  }
}

TEST_CASE("training is reproducible from its seed") {
  for (Task task : {Task::longtime, Task::autoregressive}) {
    const Splits& s = task == Task::longtime ? press() : grip();
    TrainConfig c = tiny(task);
    c.seed = 4;
    const TrainResult a = train({s.train, s.val}, c), b = train({s.train, s.val}, c);
    c.seed = 5;
    const TrainResult other = train({s.train, s.val}, c);
    REQUIRE(a.history.size() == b.history.size());
    for (std::size_t e = 0; e < a.history.size(); ++e) {
      CHECK(a.history[e].train_loss == b.history[e].train_loss);
      CHECK(a.history[e].val_loss == b.history[e].val_loss);
    }
    CHECK(a.history.back().train_loss != other.history.back().train_loss);
    for (const auto& [key, v] : a.best.params.entries()) CHECK(max_abs_diff(v, b.best.params.get(key)) == 0.0);
  }
}

TEST_CASE("noise changes the autoregressive trajectory of training") {
  TrainConfig c = tiny(Task::autoregressive);
  c.noise_std = 0.0;
  const TrainResult clean = train({grip().train, grip().val}, c);
  c.noise_std = 0.05;
  const TrainResult noisy = train({grip().train, grip().val}, c);
  CHECK(clean.history[0].train_loss != noisy.history[0].train_loss);
}

TEST_CASE("a bundle survives saving and loading") {
  const TrainResult r = train({press().train, press().val}, tiny(Task::longtime));
  const fs::path path = fs::temp_directory_path() / "unisoma_test_bundle.ckpt";
  save_bundle(r.best, path);
  const ModelBundle back = load_bundle(path);
  CHECK(back.task == Task::longtime);
  CHECK(back.config.to_json() == r.best.config.to_json());
  CHECK(back.schema.to_json() == r.best.schema.to_json());
  CHECK(back.stats.to_json() == r.best.stats.to_json());
  const SceneSample& s = press().test[0].steps[0];
  const auto p1 = make_predictor(r.best)(s), p2 = make_predictor(back)(s);
  for (std::size_t i = 0; i < p1.size(); ++i) CHECK(max_abs_diff(p1[i], p2[i]) == 0.0);
  CHECK_THROWS_AS(load_bundle(path.string() + ".missing"), ParseError);
}

TEST_CASE("rollout with stub predictors") {
  const Trajectory& t = grip().test[0];
  const std::size_t steps = t.steps.size();
  SUBCASE("perfect predictor has zero error") {
    const TrajectoryMetrics m = rollout(perfect(t), t, steps);
    REQUIRE(m.per_step_rmse.size() == steps);
    for (double e : m.per_step_rmse) CHECK(e == 0.0);
    CHECK(m.rmse_all == 0.0);
  }
  SUBCASE("identity predictor error grows with distance from the start") {
    const TrajectoryMetrics m = rollout(freeze_predictor(), t, steps);
    for (std::size_t k = 0; k < steps; ++k) {
      const Tensor truth = columns(t.steps[k].targets[0], 0, 3);
      CHECK(m.per_step_rmse[k] == doctest::Approx(rmse(truth, t.steps[0].deformables[0].points)).epsilon(1e-12));
    }
    double mean = 0;
    for (double e : m.per_step_rmse) mean += e / static_cast<double>(steps);
    CHECK(m.rmse_all == doctest::Approx(mean).epsilon(1e-12));
  }
  SUBCASE("one step equals single-step prediction") {
    const TrajectoryMetrics m = rollout(freeze_predictor(), t, 1);
    REQUIRE(m.per_step_rmse.size() == 1);
    const auto p = freeze_predictor()(t.steps[0]);
    CHECK(m.per_step_rmse[0] == doctest::Approx(rmse(columns(t.steps[0].targets[0], 0, 3), columns(p[0], 0, 3))));
  }
  SUBCASE("non-finite predictions name the step") {
    Predictor bad = [](const SceneSample& s) {
      auto out = freeze_predictor()(s);
      if (s.step_index == 2) out[0] = Tensor(out[0].shape(), std::vector<double>(out[0].numel(), std::nan("")));
      return out;
    };
    CHECK_THROWS_WITH_AS(rollout(bad, t, steps), doctest::Contains("2"), NumericalError);
  }
}

TEST_CASE("evaluation reports") {
  const auto& test = press().test;
  const EvalReport freeze = evaluate(freeze_predictor(), test, Task::longtime);
  const std::size_t quantities = target_quantities(test[0].steps[0].target_names).size();
  CHECK(freeze.rows.size() == test[0].steps[0].deformables.size() * quantities);
  CHECK(freeze.samples == test.size());
  CHECK(freeze.to_csv() == evaluate(freeze_predictor(), test, Task::longtime).to_csv());
  CHECK(freeze.to_csv().rfind("solid,quantity,relative_l2,rmse,count\n", 0) == 0);
  Predictor oracle = [](const SceneSample& s) { return s.targets; };
  for (const auto& row : evaluate(oracle, test, Task::longtime).rows) {
    CHECK(row.relative_l2 == 0.0);
    CHECK(row.rmse == 0.0);
  }
  const EvalReport ar = evaluate(freeze_predictor(), grip().test, Task::autoregressive);
  CHECK(ar.rmse_all > 0.0);
  CHECK(ar.to_json().contains("rmse_all"));
}

TEST_CASE("an untrained model is worse than a trained one on its training data") {
  TrainConfig c = tiny(Task::longtime);
  c.epochs = 30;
  c.learning_rate = 3e-3;
  const TrainResult r = train({press().train, {}}, c);
  CHECK(r.best_epoch >= 1);
  CHECK(r.history.back().train_loss < r.history.front().train_loss);
  ModelBundle start = r.best;
  start.params = r.initial;
  CHECK(dataset_loss(r.best, press().train) < dataset_loss(start, press().train));
}

}  // TEST_SUITE
