#include "unisoma/optim.hpp"

#include <cmath>

namespace unisoma {

void adam_step(ParamStore& params, const GradMap& grads, AdamState& state,
               const AdamConfig& config) {
  if (grads.size() != params.size()) {
    throw ConfigError("adam_step: " + std::to_string(grads.size()) + " gradients for " +
                      std::to_string(params.size()) + " parameters");
  }
  for (const auto& [key, _] : params.entries()) {
    if (!grads.count(key)) throw ConfigError("adam_step: no gradient for '" + key + "'");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);

  ParamStore updated;
  for (const auto& [key, value] : params.entries()) {
    const Tensor& g = grads.at(key);
    if (g.shape() != value.shape()) {
      throw DimensionError("adam_step: gradient " + shape_str(g.shape()) + " for '" + key +
                           "' of shape " + shape_str(value.shape()));
    }
    auto& m = state.first[key];
    auto& v = state.second[key];
    if (m.empty()) {
      m.assign(value.numel(), 0.0);
      v.assign(value.numel(), 0.0);
    }
    std::vector<double> next = value.to_vector();
    for (std::size_t i = 0; i < next.size(); ++i) {
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      next[i] -= config.learning_rate * mhat / (std::sqrt(vhat) + config.epsilon);
    }
    updated.set(key, Tensor(value.shape(), std::move(next)));
  }
  params = std::move(updated);
}

}  // namespace unisoma
