#include "unisoma/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>
#include <random>

#include "unisoma/autograd.hpp"
#include "unisoma/metrics.hpp"
#include "unisoma/ops.hpp"
#include "unisoma/optim.hpp"
#include "unisoma/scenarios.hpp"

namespace unisoma {

using nlohmann::json;

std::string to_string(Task task) { return task == Task::longtime ? "longtime" : "autoregressive"; }

Task task_from_string(const std::string& s) {
  if (s == "longtime") return Task::longtime;
  if (s == "autoregressive") return Task::autoregressive;
  throw ConfigError("task: expected longtime or autoregressive, got '" + s + "'");
}

double TrainConfig::effective_noise() const {
  if (noise_std) return *noise_std;
  return task == Task::autoregressive ? std::sqrt(0.001) : 0.0;
}

void TrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("epochs: must be at least 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning_rate: must be a finite nonnegative number");
  }
  if (batch_size == 0) throw ConfigError("batch_size: must be at least 1");
  if (noise_std && (!(*noise_std >= 0.0) || !std::isfinite(*noise_std))) {
    throw ConfigError("noise_std: must be a finite nonnegative number");
  }
  model.validate();
}

json TrainConfig::to_json() const {
  json j = model.to_json();
  j["task"] = to_string(task);
  j["epochs"] = epochs;
  j["learning_rate"] = learning_rate;
  j["batch_size"] = batch_size;
  j["noise_std"] = noise_std ? json(*noise_std) : json(nullptr);
  j["seed"] = seed;
  j["max_train"] = max_train;
  return j;
}

TrainConfig TrainConfig::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("training config must be a JSON object");
  TrainConfig c;
  const json known = c.to_json();
  json model_keys = json::object();
  for (const auto& [k, v] : j.items()) {
    if (!known.contains(k)) throw ConfigError("unknown training key '" + k + "'");
    try {
      if (k == "task") c.task = task_from_string(v.get<std::string>());
      else if (k == "epochs") c.epochs = v.get<std::size_t>();
      else if (k == "learning_rate") c.learning_rate = v.get<double>();
      else if (k == "batch_size") c.batch_size = v.get<std::size_t>();
      else if (k == "noise_std") c.noise_std = v.is_null() ? std::nullopt : std::optional(v.get<double>());
      else if (k == "seed") c.seed = v.get<std::uint64_t>();
      else if (k == "max_train") c.max_train = v.get<std::size_t>();
      else model_keys[k] = v;
    } catch (const json::exception& e) {
      throw ConfigError("training key '" + k + "': " + e.what());
    }
  }
  try {
    c.model = ModelConfig::from_json(model_keys);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model keys: ") + e.what());
  }
  c.validate();
  return c;
}

void save_bundle(const ModelBundle& b, const std::filesystem::path& path, const json& extra) {
  Checkpoint ck;
  ck.header = {{"kind", "unisoma-model"},
               {"task", to_string(b.task)},
               {"schema", b.schema.to_json()},
               {"model", b.config.to_json()},
               {"stats", b.stats.to_json()},
               {"extra", extra}};
  ck.params = b.params;
  save_checkpoint(path, ck);
}

ModelBundle load_bundle(const std::filesystem::path& path) {
  Checkpoint ck = load_checkpoint(path);
  ModelBundle b;
  try {
    if (ck.header.at("kind").get<std::string>() != "unisoma-model") {
      throw ParseError(path.string() + ": checkpoint does not hold a model");
    }
    b.task = task_from_string(ck.header.at("task").get<std::string>());
    b.schema = SceneSchema::from_json(ck.header.at("schema"));
    b.config = ModelConfig::from_json(ck.header.at("model"));
    b.stats = NormStats::from_json(ck.header.at("stats"));
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": bad checkpoint header: " + e.what());
  }
  b.params = std::move(ck.params);
  return b;
}

Predictor make_predictor(const ModelBundle& bundle) {
  return [bundle](const SceneSample& sample) {
    bundle.schema.check(sample);
    const ModelInput in = prepare_input(sample, bundle.stats, bundle.config.knn_k);
    const auto raw = unisoma_forward(bundle.params, bundle.schema, bundle.config, in);
    return absolute_predictions(sample, denormalize_predictions(raw, bundle.stats));
  };
}

Predictor freeze_predictor() {
  return [](const SceneSample& sample) {
    std::vector<Tensor> out;
    const std::size_t c = sample.target_names.size();
    for (const auto& d : sample.deformables) {
      std::vector<double> rows(d.size() * c, 0.0);
      for (std::size_t i = 0; i < d.size(); ++i) {
        for (std::size_t k = 0; k < kGeometryChannels; ++k) rows[i * c + k] = d.points[i * 3 + k];
      }
      out.emplace_back(Shape{d.size(), c}, std::move(rows));
    }
    return out;
  };
}

Tensor task_loss(Task task, const std::vector<Tensor>& pred, const std::vector<Tensor>& target,
                 const std::vector<std::string>& target_names, const LossWeights& weights) {
  if (pred.size() != target.size()) {
    throw DimensionError("task_loss: " + std::to_string(pred.size()) + " predictions for " +
                         std::to_string(target.size()) + " targets");
  }
  const auto quantities = target_quantities(target_names);
  if (!weights.per_quantity.empty() && weights.per_quantity.size() != quantities.size()) {
    throw ConfigError("task_loss: " + std::to_string(weights.per_quantity.size()) +
                      " quantity weights for " + std::to_string(quantities.size()) + " quantities");
  }
  Tensor total = Tensor::scalar(0.0);
  for (std::size_t d = 0; d < pred.size(); ++d) {
    if (pred[d].shape() != target[d].shape()) {
      throw DimensionError("task_loss: prediction " + shape_str(pred[d].shape()) + " vs target " +
                           shape_str(target[d].shape()));
    }
    for (std::size_t q = 0; q < quantities.size(); ++q) {
      const double w = weights.per_quantity.empty() ? 1.0 : weights.per_quantity[q];
      if (w == 0.0) continue;
      const Tensor p = slice(pred[d], 1, quantities[q].begin, quantities[q].end);
      const Tensor t = columns(target[d], quantities[q].begin, quantities[q].end);
      const Tensor diff = p - t;
      Tensor term;
      if (task == Task::longtime) {
        double ref = 0.0;
        for (double v : t.data()) ref += v * v;
        if (ref == 0.0) continue;
        term = scale(sqrt(sum(square(diff))), 1.0 / std::sqrt(ref));
      } else {
        term = mean(square(diff));
      }
      total = total + scale(term, w);
    }
  }
  return total;
}

namespace {

struct Example {
  ModelInput input;
  std::vector<Tensor> target;  // normalised relative targets
};

Example make_example(const SceneSample& physical, const NormStats& stats, std::size_t k) {
  const SceneSample rel = with_relative_targets(physical);
  Example ex;
  ex.input = prepare_input(physical, stats, k);
  for (std::size_t i = 0; i < rel.targets.size(); ++i) {
    ex.target.push_back(stats.at("target/" + std::to_string(i)).apply(rel.targets[i]));
  }
  return ex;
}

std::vector<SceneSample> flatten(const std::vector<Trajectory>& trajs) {
  std::vector<SceneSample> out;
  for (const auto& t : trajs) out.insert(out.end(), t.steps.begin(), t.steps.end());
  return out;
}

/// Loss and per-key gradients for one example.
double accumulate(const ModelBundle& b, const Example& ex, std::map<std::string, std::vector<double>>& grads) {
  Tape tape;
  const ParamStore bound = b.params.bind(tape);
  const auto pred = unisoma_forward(bound, b.schema, b.config, ex.input);
  const Tensor loss = task_loss(b.task, pred, ex.target, b.schema.target_names);
  if (!loss.tracked()) return loss.item();
  const Gradients g = tape.backward(loss);
  for (const auto& [key, t] : bound.entries()) {
    const Tensor gk = g.of(t);
    auto& acc = grads[key];
    if (acc.empty()) acc.assign(gk.numel(), 0.0);
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += gk[i];
  }
  return loss.item();
}

void apply_update(ModelBundle& b, std::map<std::string, std::vector<double>>& grads, std::size_t n,
                  AdamState& state, const AdamConfig& adam) {
  GradMap gm;
  for (const auto& [key, t] : b.params.entries()) {
    auto it = grads.find(key);
    std::vector<double> g = it == grads.end() ? std::vector<double>(t.numel(), 0.0) : it->second;
    for (auto& v : g) v /= static_cast<double>(n);
    gm.emplace(key, Tensor(t.shape(), std::move(g)));
  }
  adam_step(b.params, gm, state, adam);
  grads.clear();
}

Tensor perturb_geometry(const Tensor& points, const ChannelStats& stats, double noise_std,
                        std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> out = points.to_vector();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += noise_std * stats.std[i % 3] * normal(rng);
  return Tensor(points.shape(), std::move(out));
}

struct Setup {
  ModelBundle bundle;
  std::vector<SceneSample> train_samples;
};

Setup setup(const TrainData& data, const TrainConfig& config, Task task) {
  config.validate();
  if (data.train.empty()) throw ValidationError("training split is empty");
  std::vector<Trajectory> train = data.train;
  if (config.max_train > 0 && config.max_train < train.size()) train.resize(config.max_train);
  Setup s;
  s.train_samples = flatten(train);
  if (s.train_samples.empty()) throw ValidationError("training split holds no samples");
  if (task == Task::autoregressive) {
    for (const auto& t : train) {
      if (t.steps.size() < 2) {
        throw ValidationError("autoregressive training needs trajectories with at least 2 steps ('" +
                              t.id + "' has " + std::to_string(t.steps.size()) + ")");
      }
    }
  }
  std::vector<SceneSample> rel;
  for (const auto& smp : s.train_samples) rel.push_back(with_relative_targets(smp));
  s.bundle.task = task;
  s.bundle.schema = SceneSchema::of(s.train_samples.front());
  for (const auto& smp : s.train_samples) s.bundle.schema.check(smp);
  s.bundle.config = config.model;
  s.bundle.stats = fit_stats(rel);
  s.bundle.params = init_model(s.bundle.schema, config.model, derive_seed(config.seed, 1));
  return s;
}

TrainResult run(const TrainData& data, const TrainConfig& config, Task task) {
  Setup s = setup(data, config, task);
  TrainResult result;
  result.initial = s.bundle.params;
  ModelBundle& b = s.bundle;
  const AdamConfig adam{config.learning_rate};
  AdamState state;
  std::mt19937_64 shuffle_rng(derive_seed(config.seed, 2));
  std::mt19937_64 noise_rng(derive_seed(config.seed, 3));
  const double noise = config.effective_noise();
  const ChannelStats& geo0 = b.stats.at("deformable/0");

  std::vector<Example> fixed;
  if (noise == 0.0) {
    for (const auto& smp : s.train_samples) fixed.push_back(make_example(smp, b.stats, b.config.knn_k));
  }
  auto example_at = [&](std::size_t idx) {
    if (noise == 0.0) return fixed[idx];
    SceneSample noisy = s.train_samples[idx];
    for (std::size_t d = 0; d < noisy.deformables.size(); ++d) {
      const ChannelStats& st = d == 0 ? geo0 : b.stats.at("deformable/" + std::to_string(d));
      noisy.deformables[d].points = perturb_geometry(noisy.deformables[d].points, st, noise, noise_rng);
    }
    return make_example(noisy, b.stats, b.config.knn_k);
  };

  // Optimizer-step groups: single samples for long-time, runs of consecutive
  // steps within one trajectory for autoregressive training.
  std::vector<std::vector<std::size_t>> groups;
  {
    std::vector<Trajectory> train = data.train;
    if (config.max_train > 0 && config.max_train < train.size()) train.resize(config.max_train);
    std::size_t offset = 0;
    for (const auto& t : train) {
      if (task == Task::autoregressive) {
        for (std::size_t k = 0; k < t.steps.size(); k += config.batch_size) {
          std::vector<std::size_t> g;
          for (std::size_t j = k; j < std::min(t.steps.size(), k + config.batch_size); ++j) g.push_back(offset + j);
          groups.push_back(std::move(g));
        }
      } else {
        for (std::size_t j = 0; j < t.steps.size(); ++j) groups.push_back({offset + j});
      }
      offset += t.steps.size();
    }
  }

  double best_score = std::numeric_limits<double>::infinity();
  result.best = b;
  std::map<std::string, std::vector<double>> grads;
  std::vector<double> sample_loss(s.train_samples.size(), 0.0);
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    try {
      std::vector<std::size_t> order(groups.size());
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), shuffle_rng);
      if (task == Task::longtime) {
        for (std::size_t k = 0; k < order.size(); k += config.batch_size) {
          const std::size_t end = std::min(order.size(), k + config.batch_size);
          for (std::size_t j = k; j < end; ++j) {
            const std::size_t idx = groups[order[j]].front();
            sample_loss[idx] = accumulate(b, example_at(idx), grads);
          }
          apply_update(b, grads, end - k, state, adam);
        }
      } else {
        for (std::size_t gi : order) {
          for (std::size_t idx : groups[gi]) sample_loss[idx] = accumulate(b, example_at(idx), grads);
          apply_update(b, grads, groups[gi].size(), state, adam);
        }
      }
      EpochRecord rec;
      rec.epoch = epoch;
      rec.train_loss = std::accumulate(sample_loss.begin(), sample_loss.end(), 0.0) /
                       static_cast<double>(sample_loss.size());
      if (!std::isfinite(rec.train_loss)) throw NumericalError("non-finite training loss");
      rec.val_loss = data.val.empty() ? rec.train_loss : dataset_loss(b, data.val);
      if (!std::isfinite(rec.val_loss)) throw NumericalError("non-finite validation loss");
      result.history.push_back(rec);
      if (rec.val_loss < best_score) {
        best_score = rec.val_loss;
        result.best = b;
        result.best_epoch = epoch;
      }
    } catch (const NumericalError& e) {
      result.diverged = true;
      result.message = "diverged in epoch " + std::to_string(epoch) + ": " + e.what();
      break;
    }
  }
  return result;
}

}  // namespace

TrainResult train_longtime(const TrainData& data, const TrainConfig& config) {
  return run(data, config, Task::longtime);
}

TrainResult train_autoregressive(const TrainData& data, const TrainConfig& config) {
  return run(data, config, Task::autoregressive);
}

TrainResult train(const TrainData& data, const TrainConfig& config) {
  return config.task == Task::longtime ? train_longtime(data, config)
                                       : train_autoregressive(data, config);
}

double dataset_loss(const ModelBundle& bundle, const std::vector<Trajectory>& trajectories) {
  const auto samples = flatten(trajectories);
  if (samples.empty()) throw ValidationError("dataset_loss: no samples");
  std::vector<double> losses(samples.size(), 0.0);
  const auto n = static_cast<std::ptrdiff_t>(samples.size());
  std::string failure;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      const Example ex = make_example(samples[static_cast<std::size_t>(i)], bundle.stats, bundle.config.knn_k);
      const auto pred = unisoma_forward(bundle.params, bundle.schema, bundle.config, ex.input);
      losses[static_cast<std::size_t>(i)] =
          task_loss(bundle.task, pred, ex.target, bundle.schema.target_names).item();
    } catch (const std::exception& e) {
#pragma omp critical
      failure = e.what();
    }
  }
  if (!failure.empty()) throw NumericalError("dataset_loss: " + failure);
  return std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(losses.size());
}

namespace {

Tensor geometry_rows(const std::vector<Tensor>& per_solid) {
  std::vector<Tensor> parts;
  for (const auto& t : per_solid) parts.push_back(columns(t, 0, kGeometryChannels));
  return stack_rows(parts);
}

}  // namespace

TrajectoryMetrics rollout(const Predictor& predictor, const Trajectory& truth, std::size_t steps) {
  if (steps == 0 || steps > truth.steps.size()) {
    throw ConfigError("rollout: requested " + std::to_string(steps) + " steps, trajectory '" +
                      truth.id + "' has " + std::to_string(truth.steps.size()));
  }
  TrajectoryMetrics m;
  std::vector<Tensor> geometry;
  for (std::size_t t = 0; t < steps; ++t) {
    SceneSample input = truth.steps[t];
    if (t > 0) {
      for (std::size_t d = 0; d < input.deformables.size(); ++d) input.deformables[d].points = geometry[d];
    }
    input.oracle.reset();
    std::vector<Tensor> pred = predictor(input);
    for (const auto& p : pred) {
      if (!p.all_finite()) {
        throw NumericalError("rollout of '" + truth.id + "': non-finite prediction at step " +
                             std::to_string(t));
      }
    }
    geometry.clear();
    for (const auto& p : pred) geometry.push_back(columns(p, 0, kGeometryChannels));
    m.per_step_rmse.push_back(rmse(geometry_rows(truth.steps[t].targets), geometry_rows(pred)));
    m.predictions.push_back(std::move(pred));
  }
  m.rmse_all = std::accumulate(m.per_step_rmse.begin(), m.per_step_rmse.end(), 0.0) /
               static_cast<double>(m.per_step_rmse.size());
  return m;
}

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string EvalReport::to_csv() const {
  std::string out = "solid,quantity,relative_l2,rmse,count\n";
  for (const auto& r : rows) {
    out += r.solid + "," + r.quantity + "," + fmt(r.relative_l2) + "," + fmt(r.rmse) + "," +
           std::to_string(r.count) + "\n";
  }
  return out;
}

json EvalReport::to_json() const {
  json j;
  j["task"] = to_string(task);
  j["samples"] = samples;
  if (task == Task::autoregressive) j["rmse_all"] = rmse_all;
  j["rows"] = json::array();
  for (const auto& r : rows) {
    j["rows"].push_back({{"solid", r.solid},
                         {"quantity", r.quantity},
                         {"relative_l2", r.relative_l2},
                         {"rmse", r.rmse},
                         {"count", r.count}});
  }
  return j;
}

EvalReport evaluate(const Predictor& predictor, const std::vector<Trajectory>& split, Task task) {
  if (split.empty()) throw ValidationError("evaluate: split is empty");
  const SceneSample& first = split.front().steps.front();
  const auto quantities = target_quantities(first.target_names);
  const std::size_t nd = first.deformables.size();

  // Predictions per (trajectory, step), computed in parallel.
  std::vector<std::vector<std::vector<Tensor>>> preds(split.size());
  std::vector<std::vector<double>> step_rmse(split.size());
  const auto n = static_cast<std::ptrdiff_t>(split.size());
  std::string failure;
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t ii = 0; ii < n; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    try {
      if (task == Task::autoregressive) {
        auto m = rollout(predictor, split[i], split[i].steps.size());
        preds[i] = std::move(m.predictions);
        step_rmse[i] = std::move(m.per_step_rmse);
      } else {
        for (const auto& s : split[i].steps) preds[i].push_back(predictor(s));
      }
    } catch (const std::exception& e) {
#pragma omp critical
      if (failure.empty()) failure = e.what();
    }
  }
  if (!failure.empty()) throw NumericalError("evaluate: " + failure);

  EvalReport rep;
  rep.task = task;
  for (std::size_t d = 0; d < nd; ++d) {
    for (const auto& q : quantities) {
      MetricRow row{first.deformables[d].name, q.name, 0.0, 0.0, 0};
      std::size_t total = 0;
      for (std::size_t i = 0; i < split.size(); ++i) {
        for (std::size_t t = 0; t < preds[i].size(); ++t) {
          const Tensor u = columns(split[i].steps[t].targets[d], q.begin, q.end);
          const Tensor uh = columns(preds[i][t][d], q.begin, q.end);
          row.rmse += rmse(u, uh);
          ++total;
          double ref = 0.0;
          for (double v : u.data()) ref += v * v;
          if (ref > 0.0) {
            row.relative_l2 += relative_l2(u, uh);
            ++row.count;
          }
        }
      }
      row.rmse /= static_cast<double>(total);
      if (row.count > 0) row.relative_l2 /= static_cast<double>(row.count);
      rep.rows.push_back(row);
      rep.samples = total;
    }
  }
  if (task == Task::autoregressive) {
    double acc = 0.0;
    std::size_t count = 0;
    for (const auto& v : step_rmse) {
      for (double r : v) acc += r, ++count;
    }
    rep.rmse_all = acc / static_cast<double>(count);
  }
  return rep;
}

}  // namespace unisoma
