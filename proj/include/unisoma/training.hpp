#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "unisoma/model.hpp"
#include "unisoma/scene_io.hpp"

namespace unisoma {

enum class Task { longtime, autoregressive };
std::string to_string(Task task);
Task task_from_string(const std::string& s);

struct TrainConfig {
  Task task = Task::longtime;
  std::size_t epochs = 200;
  double learning_rate = 3e-4;
  /// Long-time: samples per optimizer step. Autoregressive: consecutive
  /// steps of one trajectory per optimizer step.
  std::size_t batch_size = 1;
  /// Std of the Gaussian noise on deformable input geometry, in units of the
  /// per-channel geometry std. Unset means √0.001 for autoregressive training
  /// and 0 for long-time training.
  std::optional<double> noise_std;
  std::uint64_t seed = 0;
  /// 0 uses every training trajectory; otherwise only the first n.
  std::size_t max_train = 0;
  ModelConfig model;

  double effective_noise() const;
  void validate() const;
  nlohmann::json to_json() const;
  /// Unknown keys are rejected by name. Model keys sit at the top level.
  static TrainConfig from_json(const nlohmann::json& j);
};

/// Everything needed to run a trained model.
struct ModelBundle {
  Task task = Task::longtime;
  SceneSchema schema;
  ModelConfig config;
  NormStats stats;
  ParamStore params;
};

void save_bundle(const ModelBundle& bundle, const std::filesystem::path& path,
                 const nlohmann::json& extra = nlohmann::json::object());
ModelBundle load_bundle(const std::filesystem::path& path);

/// Maps a physical input scene to physical absolute targets per deformable.
using Predictor = std::function<std::vector<Tensor>(const SceneSample&)>;

Predictor make_predictor(const ModelBundle& bundle);
/// Returns the input geometry unchanged (extra channels predicted as 0).
Predictor freeze_predictor();

/// Per-quantity loss weights; equal weights unless overridden.
struct LossWeights {
  std::vector<double> per_quantity;  // aligned with target_quantities()
};

/// Σ_solids Σ_quantities w_q·relative_l2 (long-time) or w_q·MSE
/// (autoregressive), differentiable in `pred`.
Tensor task_loss(Task task, const std::vector<Tensor>& pred, const std::vector<Tensor>& target,
                 const std::vector<std::string>& target_names, const LossWeights& weights = {});

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainResult {
  ModelBundle best;
  ParamStore initial;
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  bool diverged = false;
  std::string message;
};

/// Training pairs for either task, drawn from loaded trajectories.
struct TrainData {
  std::vector<Trajectory> train;
  std::vector<Trajectory> val;
};

TrainResult train_longtime(const TrainData& data, const TrainConfig& config);
TrainResult train_autoregressive(const TrainData& data, const TrainConfig& config);
TrainResult train(const TrainData& data, const TrainConfig& config);

/// Mean task loss over every sample of `trajectories` (no noise).
double dataset_loss(const ModelBundle& bundle, const std::vector<Trajectory>& trajectories);

struct TrajectoryMetrics {
  std::vector<double> per_step_rmse;  // geometry RMSE over all deformable points
  double rmse_all = 0.0;
  std::vector<std::vector<Tensor>> predictions;  // [step][deformable]
};

/// Feeds predictions forward for `steps` steps; rigid and load inputs come
/// from the ground-truth trajectory. Throws NumericalError naming the step
/// when a prediction is not finite.
TrajectoryMetrics rollout(const Predictor& predictor, const Trajectory& truth, std::size_t steps);

struct MetricRow {
  std::string solid;
  std::string quantity;
  double relative_l2 = 0.0;
  double rmse = 0.0;
  std::size_t count = 0;  // samples that entered the relative L2 mean
};

struct EvalReport {
  Task task = Task::longtime;
  std::vector<MetricRow> rows;  // N^d × |quantities|
  double rmse_all = 0.0;        // autoregressive only
  std::size_t samples = 0;

  std::string to_csv() const;
  nlohmann::json to_json() const;
};

/// Long-time: one prediction per sample. Autoregressive: full rollouts, with
/// per-row means over every step of every trajectory.
EvalReport evaluate(const Predictor& predictor, const std::vector<Trajectory>& split, Task task);

}  // namespace unisoma
