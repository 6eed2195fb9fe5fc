#pragma once

#include <map>
#include <string>
#include <vector>

#include "unisoma/params.hpp"

namespace unisoma {

struct AdamConfig {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::map<std::string, std::vector<double>> first;
  std::map<std::string, std::vector<double>> second;
  long step = 0;
};

using GradMap = std::map<std::string, Tensor>;

/// One bias-corrected Adam update. `grads` must cover exactly the keys of
/// `params`.
void adam_step(ParamStore& params, const GradMap& grads, AdamState& state,
               const AdamConfig& config);

}  // namespace unisoma
