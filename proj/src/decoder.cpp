#include "unisoma/decoder.hpp"

#include "unisoma/ops.hpp"

namespace unisoma {

HeadParams head_at(const ParamStore& store, const std::string& prefix) {
  return {norm_at(store, prefix + "/norm"), ffn_at(store, prefix + "/ffn"),
          linear_at(store, prefix + "/out")};
}

void init_head(ParamStore& store, const std::string& prefix, std::size_t channels,
               std::size_t hidden, std::size_t targets, Rng& rng) {
  init_norm(store, prefix + "/norm", channels);
  init_ffn(store, prefix + "/ffn", channels, hidden, rng);
  init_linear(store, prefix + "/out", channels, targets, rng);
}

Tensor decode_points(const Tensor& tokens, const Tensor& point_weights) {
  if (tokens.rank() != 2 || point_weights.rank() != 2 || point_weights.dim(1) != tokens.dim(0)) {
    throw DimensionError("decode_points: weights " + shape_str(point_weights.shape()) +
                         " do not match tokens " + shape_str(tokens.shape()));
  }
  return matmul(point_weights, tokens);
}

Tensor head_forward(const Tensor& decoded, const Tensor& deep_features, const HeadParams& p) {
  if (decoded.shape() != deep_features.shape()) {
    throw DimensionError("head_forward: decoded " + shape_str(decoded.shape()) +
                         " vs deep features " + shape_str(deep_features.shape()));
  }
  return linear(p.out, ffn(p.ffn, layer_norm(p.norm, decoded + deep_features)));
}

}  // namespace unisoma
