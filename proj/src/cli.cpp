#include "unisoma/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "unisoma/kernels.hpp"
#include "unisoma/metrics.hpp"
#include "unisoma/scenarios.hpp"
#include "unisoma/suites.hpp"
#include "unisoma/training.hpp"

namespace unisoma {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct VerificationFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// One `--<key>` option per config key; values are parsed as JSON when they
/// look like JSON and taken as strings otherwise.
class KeyFlags {
 public:
  void attach(CLI::App* app, const json& defaults) {
    for (const auto& [key, value] : defaults.items()) {
      options_[key] = app->add_option("--" + key, values_[key], "config key (default " + value.dump() + ")");
    }
  }

  void apply(json& j) const {
    for (const auto& [key, opt] : options_) {
      if (opt->count() == 0) continue;
      const std::string& raw = values_.at(key);
      json parsed = json::parse(raw, nullptr, false);
      j[key] = parsed.is_discarded() ? json(raw) : parsed;
    }
  }

  bool given(const std::string& key) const { return options_.at(key)->count() > 0; }

 private:
  std::map<std::string, std::string> values_;
  std::map<std::string, CLI::Option*> options_;
};

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot write " + path.string());
  f << text;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

fs::path data_dir_or_env(const std::string& given, const std::string& what) {
  if (!given.empty()) return given;
  if (const char* env = std::getenv("UNISOMA_DATA_DIR"); env && *env) return env;
  throw ConfigError(what + ": not given and UNISOMA_DATA_DIR is unset");
}

std::string history_csv(const TrainResult& r) {
  std::string s = "epoch,train_loss,val_loss\n";
  for (const auto& h : r.history) s += std::to_string(h.epoch) + "," + fmt(h.train_loss) + "," + fmt(h.val_loss) + "\n";
  return s;
}

TrainConfig build_train_config(const std::string& file, const KeyFlags& flags, const DatasetManifest& manifest) {
  json j = file.empty() ? json::object() : read_json_file(file);
  flags.apply(j);
  if (!j.contains("task")) j["task"] = manifest.task;
  return TrainConfig::from_json(j);
}

TrainData load_train_data(const fs::path& dir, const DatasetManifest& manifest) {
  TrainData data;
  data.train = load_split(dir, manifest, "train");
  data.val = load_split(dir, manifest, "val");
  return data;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-solid deformation surrogate: data generation, training and evaluation"};
  app.require_subcommand(1);
  int jobs = 0;
  app.add_option("--jobs", jobs, "worker threads (0 keeps the OpenMP default)")->check(CLI::NonNegativeNumber);

  // generate
  auto* gen = app.add_subcommand("generate", "simulate a synthetic dataset");
  std::string gen_config, gen_out;
  std::uint64_t gen_seed = 0;
  KeyFlags gen_flags;
  gen->add_option("--config", gen_config, "scenario config file (JSON)");
  gen->add_option("--seed", gen_seed, "master seed");
  gen->add_option("--out", gen_out, "dataset directory (default $UNISOMA_DATA_DIR/<scenario>)");
  gen_flags.attach(gen, ScenarioConfig{}.to_json());

  // train
  auto* tr = app.add_subcommand("train", "train a model on a dataset");
  std::string tr_data, tr_config, tr_out;
  KeyFlags tr_flags;
  tr->add_option("--data", tr_data, "dataset directory (default $UNISOMA_DATA_DIR)");
  tr->add_option("--config", tr_config, "training config file (JSON)");
  tr->add_option("--out", tr_out, "checkpoint path (default <data>/model.ckpt)");
  tr_flags.attach(tr, TrainConfig{}.to_json());

  // eval
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a split");
  std::string ev_ckpt, ev_data, ev_split = "test", ev_csv, ev_json, ev_predictor = "model";
  ev->add_option("--checkpoint", ev_ckpt, "model checkpoint");
  ev->add_option("--data", ev_data, "dataset directory (default $UNISOMA_DATA_DIR)");
  ev->add_option("--split", ev_split, "train, val or test");
  ev->add_option("--predictor", ev_predictor, "model or freeze (input geometry carried over)")
      ->check(CLI::IsMember({"model", "freeze"}));
  ev->add_option("--csv", ev_csv, "write the metrics table here");
  ev->add_option("--json", ev_json, "write the metrics summary here");

  // rollout
  auto* ro = app.add_subcommand("rollout", "roll a checkpoint forward along one trajectory");
  std::string ro_ckpt, ro_data, ro_split = "test", ro_traj, ro_out;
  std::size_t ro_steps = 0;
  ro->add_option("--checkpoint", ro_ckpt, "model checkpoint")->required();
  ro->add_option("--data", ro_data, "dataset directory (default $UNISOMA_DATA_DIR)");
  ro->add_option("--split", ro_split, "split holding the trajectory");
  ro->add_option("--trajectory", ro_traj, "trajectory id (default: first of the split)");
  ro->add_option("--steps", ro_steps, "steps to roll out (default: all)");
  ro->add_option("--out", ro_out, "output directory")->required();

  // gradcheck / verify
  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every differentiable op");
  std::uint64_t gc_seed = 0;
  gc->add_option("--seed", gc_seed, "seed for the random probes");
  auto* vf = app.add_subcommand("verify", "slice identities and structural invariants on random params");
  std::uint64_t vf_seed = 0;
  std::size_t vf_cases = 100;
  vf->add_option("--seed", vf_seed, "seed for the random cases");
  vf->add_option("--cases", vf_cases, "random cases per identity")->check(CLI::PositiveNumber);

  // ablate-k
  auto* ab = app.add_subcommand("ablate-k", "train and evaluate once per kNN edge count");
  std::string ab_data, ab_config, ab_out;
  std::vector<std::size_t> ab_ks{3, 4, 5};
  KeyFlags ab_flags;
  ab->add_option("--data", ab_data, "dataset directory (default $UNISOMA_DATA_DIR)");
  ab->add_option("--config", ab_config, "training config file (JSON)");
  ab->add_option("--ks", ab_ks, "edge counts to sweep")->delimiter(',');
  ab->add_option("--out", ab_out, "write the comparison table here");
  json ab_defaults = TrainConfig{}.to_json();
  ab_defaults.erase("knn_k");
  ab_flags.attach(ab, ab_defaults);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  auto log = [&](const std::string& msg) { err << "[unisoma] " << msg << "\n"; };
  auto report = [&](const std::vector<CheckResult>& checks) {
    bool ok = true;
    for (const auto& c : checks) {
      out << (c.pass ? "PASS " : "FAIL ") << c.name << "  value=" << fmt(c.value)
          << "  tol=" << c.tolerance << "  " << c.detail << "\n";
      ok = ok && c.pass;
    }
    if (!ok) throw VerificationFailure("one or more checks failed");
  };

  try {
    if (jobs > 0) kernels::set_threads(jobs);

    if (*gen) {
      // Defaults of the chosen scenario, then the file, then the flags.
      const json file = gen_config.empty() ? json::object() : read_json_file(gen_config);
      json flagged = json::object();
      gen_flags.apply(flagged);
      std::string name = "bilateral_press";
      if (flagged.contains("scenario")) name = flagged["scenario"].get<std::string>();
      else if (file.contains("scenario")) name = file["scenario"].get<std::string>();
      json j = default_scenario(name).to_json();
      j.update(file);
      gen_flags.apply(j);
      const ScenarioConfig cfg = ScenarioConfig::from_json(j);
      const fs::path dir = gen_out.empty() ? data_dir_or_env("", "--out") / cfg.scenario : fs::path(gen_out);
      log("generating " + std::to_string(cfg.trajectories) + " " + cfg.scenario + " trajectories into " + dir.string());
      const DatasetManifest m = generate_dataset(cfg, gen_seed, dir);
      log("done; " + std::to_string(m.excluded) + " non-converged attempts excluded");
      for (const auto& [split, ids] : m.splits) out << split << "," << ids.size() << "\n";
    } else if (*tr) {
      const fs::path dir = data_dir_or_env(tr_data, "--data");
      const DatasetManifest manifest = load_manifest(dir);
      const TrainConfig cfg = build_train_config(tr_config, tr_flags, manifest);
      const TrainData data = load_train_data(dir, manifest);
      log("training " + to_string(cfg.task) + " for " + std::to_string(cfg.epochs) + " epochs");
      const TrainResult r = train(data, cfg);
      const fs::path ckpt = tr_out.empty() ? dir / "model.ckpt" : fs::path(tr_out);
      if (ckpt.has_parent_path()) fs::create_directories(ckpt.parent_path());
      save_bundle(r.best, ckpt, {{"train_config", cfg.to_json()}, {"best_epoch", r.best_epoch}});
      fs::path hist = ckpt;
      hist.replace_extension(".history.csv");
      write_text(hist, history_csv(r));
      fs::path summary = ckpt;
      summary.replace_extension(".summary.json");
      json s = {{"best_epoch", r.best_epoch},
                {"diverged", r.diverged},
                {"message", r.message},
                {"epochs_run", r.history.size()},
                {"config", cfg.to_json()}};
      if (!r.history.empty()) {
        s["final_train_loss"] = r.history.back().train_loss;
        s["final_val_loss"] = r.history.back().val_loss;
      }
      write_text(summary, s.dump(2) + "\n");
      log("checkpoint " + ckpt.string() + " (best epoch " + std::to_string(r.best_epoch) + ")");
      if (r.diverged) throw NumericalError(r.message);
    } else if (*ev) {
      const fs::path dir = data_dir_or_env(ev_data, "--data");
      Predictor predictor;
      Task task;
      if (ev_predictor != "freeze") {
        if (ev_ckpt.empty()) throw ConfigError("--checkpoint: required for the model predictor");
        if (!fs::exists(ev_ckpt)) throw FileMissingError("checkpoint not found: " + ev_ckpt);
      }
      const DatasetManifest manifest = load_manifest(dir);
      if (ev_predictor == "freeze") {
        predictor = freeze_predictor();
        task = task_from_string(manifest.task);
      } else {
        const ModelBundle b = load_bundle(ev_ckpt);
        predictor = make_predictor(b);
        task = b.task;
      }
      const EvalReport rep = evaluate(predictor, load_split(dir, manifest, ev_split), task);
      out << rep.to_csv();
      if (task == Task::autoregressive) out << "rmse_all," << fmt(rep.rmse_all) << "\n";
      if (!ev_csv.empty()) write_text(ev_csv, rep.to_csv());
      if (!ev_json.empty()) write_text(ev_json, rep.to_json().dump(2) + "\n");
    } else if (*ro) {
      const fs::path dir = data_dir_or_env(ro_data, "--data");
      if (!fs::exists(ro_ckpt)) throw FileMissingError("checkpoint not found: " + ro_ckpt);
      const ModelBundle b = load_bundle(ro_ckpt);
      const DatasetManifest manifest = load_manifest(dir);
      const auto split = load_split(dir, manifest, ro_split);
      const Trajectory* traj = nullptr;
      for (const auto& t : split) {
        if (ro_traj.empty() || t.id == ro_traj) {
          traj = &t;
          break;
        }
      }
      if (!traj) throw ValidationError("trajectory '" + ro_traj + "' is not in split " + ro_split);
      const std::size_t steps = ro_steps == 0 ? traj->steps.size() : ro_steps;
      const TrajectoryMetrics m = rollout(make_predictor(b), *traj, steps);
      const fs::path outdir = ro_out;
      fs::create_directories(outdir);
      std::string csv = "step,rmse\n";
      for (std::size_t t = 0; t < steps; ++t) {
        SceneSample s = traj->steps[t];
        if (t > 0) {
          for (std::size_t d = 0; d < s.deformables.size(); ++d) {
            s.deformables[d].points = columns(m.predictions[t - 1][d], 0, kGeometryChannels);
          }
        }
        s.targets = m.predictions[t];
        s.oracle.reset();
        char stem[64];
        std::snprintf(stem, sizeof(stem), "step_%04zu", t);
        save_scene(s, outdir / stem);
        csv += std::to_string(t) + "," + fmt(m.per_step_rmse[t]) + "\n";
      }
      write_text(outdir / "rollout.csv", csv);
      write_text(outdir / "metrics.json",
                 json({{"trajectory", traj->id}, {"steps", steps}, {"rmse_all", m.rmse_all}, {"per_step_rmse", m.per_step_rmse}})
                         .dump(2) + "\n");
      out << csv << "rmse_all," << fmt(m.rmse_all) << "\n";
    } else if (*gc) {
      report(gradient_suite(gc_seed));
    } else if (*vf) {
      report(identity_suite(vf_seed, vf_cases));
    } else if (*ab) {
      const fs::path dir = data_dir_or_env(ab_data, "--data");
      const DatasetManifest manifest = load_manifest(dir);
      const TrainConfig base = build_train_config(ab_config, ab_flags, manifest);
      const TrainData data = load_train_data(dir, manifest);
      const auto test = load_split(dir, manifest, "test");
      std::string csv = "k,solid,quantity,relative_l2,rmse,rmse_all,best_epoch\n";
      for (std::size_t k : ab_ks) {
        TrainConfig cfg = base;
        cfg.model.knn_k = k;
        cfg.validate();
        log("k = " + std::to_string(k));
        const TrainResult r = train(data, cfg);
        if (r.diverged) throw NumericalError("k = " + std::to_string(k) + ": " + r.message);
        const EvalReport rep = evaluate(make_predictor(r.best), test, cfg.task);
        for (const auto& row : rep.rows) {
          csv += std::to_string(k) + "," + row.solid + "," + row.quantity + "," + fmt(row.relative_l2) + "," +
                 fmt(row.rmse) + "," + fmt(rep.rmse_all) + "," + std::to_string(r.best_epoch) + "\n";
        }
      }
      out << csv;
      if (!ab_out.empty()) write_text(ab_out, csv);
    }
  } catch (const VerificationFailure& e) {
    err << "verification failed: " << e.what() << "\n";
    return kExitVerification;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const ConfigError& e) {
    err << "invalid configuration: " << e.what() << "\n";
    return kExitValidation;
  } catch (const DimensionError& e) {
    err << "shape error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const ValidationError& e) {
    err << "validation error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const ParseError& e) {
    err << "cannot read input: " << e.what() << "\n";
    return kExitValidation;
  } catch (const fs::filesystem_error& e) {
    err << "file error: " << e.what() << "\n";
    return kExitValidation;
  }
  return kExitOk;
}

}  // namespace unisoma
