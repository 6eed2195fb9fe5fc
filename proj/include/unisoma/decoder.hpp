#pragma once

#include <string>

#include "unisoma/nn.hpp"

namespace unisoma {

struct HeadParams {
  NormParams norm;
  FfnParams ffn;
  LinearParams out;  // C → C_target
};

HeadParams head_at(const ParamStore& store, const std::string& prefix);
void init_head(ParamStore& store, const std::string& prefix, std::size_t channels,
               std::size_t hidden, std::size_t targets, Rng& rng);

/// Row i is Σ_j w_ij · tokens_j.
Tensor decode_points(const Tensor& tokens, const Tensor& point_weights);

/// out = Linear(FFN(LN(decoded + deep_features))).
Tensor head_forward(const Tensor& decoded, const Tensor& deep_features, const HeadParams& p);

}  // namespace unisoma
