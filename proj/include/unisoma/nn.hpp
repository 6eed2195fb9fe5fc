#pragma once

#include <random>
#include <string>

#include "unisoma/params.hpp"
#include "unisoma/tensor.hpp"

namespace unisoma {

using Rng = std::mt19937_64;

/// x·W + b with W stored (C_in × C_out).
struct LinearParams {
  Tensor weight;
  Tensor bias;
};

struct NormParams {
  Tensor scale;
  Tensor shift;
};

enum class Activation { gelu };

/// Linear → activation → Linear, C → hidden → C.
struct FfnParams {
  LinearParams fc1;
  LinearParams fc2;
  Activation activation = Activation::gelu;
};

LinearParams linear_at(const ParamStore& store, const std::string& prefix);
NormParams norm_at(const ParamStore& store, const std::string& prefix);
FfnParams ffn_at(const ParamStore& store, const std::string& prefix);

/// Xavier-uniform weight scaled by `gain`, constant bias.
void init_linear(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t out,
                 Rng& rng, double gain = 1.0, double bias = 0.0);
void init_norm(ParamStore& store, const std::string& prefix, std::size_t channels);
void init_ffn(ParamStore& store, const std::string& prefix, std::size_t channels,
              std::size_t hidden, Rng& rng);

Tensor linear(const LinearParams& p, const Tensor& x);
Tensor layer_norm(const NormParams& p, const Tensor& x, double eps = 1e-5);
Tensor ffn(const FfnParams& p, const Tensor& x);

/// Softmax(Q·Kᵀ/√d)·V over M tokens; with `heads` > 1 the channels are split
/// evenly and each head uses d = C/heads.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads = 1);

}  // namespace unisoma
