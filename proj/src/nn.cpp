#include "unisoma/nn.hpp"

#include <cmath>

#include "unisoma/ops.hpp"

namespace unisoma {

LinearParams linear_at(const ParamStore& store, const std::string& prefix) {
  return {store.get(prefix + "/weight"), store.get(prefix + "/bias")};
}

NormParams norm_at(const ParamStore& store, const std::string& prefix) {
  return {store.get(prefix + "/scale"), store.get(prefix + "/shift")};
}

FfnParams ffn_at(const ParamStore& store, const std::string& prefix) {
  return {linear_at(store, prefix + "/fc1"), linear_at(store, prefix + "/fc2"), Activation::gelu};
}

void init_linear(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t out,
                 Rng& rng, double gain, double bias) {
  const double bound = gain * std::sqrt(6.0 / static_cast<double>(in + out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> w(in * out);
  for (auto& v : w) v = dist(rng);
  store.set(prefix + "/weight", Tensor({in, out}, std::move(w)));
  store.set(prefix + "/bias", Tensor::full({out}, bias));
}

void init_norm(ParamStore& store, const std::string& prefix, std::size_t channels) {
  store.set(prefix + "/scale", Tensor::ones({channels}));
  store.set(prefix + "/shift", Tensor::zeros({channels}));
}

void init_ffn(ParamStore& store, const std::string& prefix, std::size_t channels,
              std::size_t hidden, Rng& rng) {
  init_linear(store, prefix + "/fc1", channels, hidden, rng);
  init_linear(store, prefix + "/fc2", hidden, channels, rng);
}

Tensor linear(const LinearParams& p, const Tensor& x) {
  if (p.weight.rank() != 2 || p.bias.rank() != 1 || p.bias.dim(0) != p.weight.cols()) {
    throw DimensionError("linear: inconsistent parameters " + shape_str(p.weight.shape()) + " / " +
                         shape_str(p.bias.shape()));
  }
  if (x.rank() < 1 || x.shape().back() != p.weight.rows()) {
    throw DimensionError("linear: input " + shape_str(x.shape()) + " does not match weight " +
                         shape_str(p.weight.shape()));
  }
  return add(matmul(x, p.weight), p.bias);
}

Tensor layer_norm(const NormParams& p, const Tensor& x, double eps) {
  return layer_norm(x, p.scale, p.shift, eps);
}

Tensor ffn(const FfnParams& p, const Tensor& x) {
  if (p.fc1.weight.cols() != p.fc2.weight.rows()) {
    throw DimensionError("ffn: hidden sizes do not chain: " + shape_str(p.fc1.weight.shape()) +
                         " then " + shape_str(p.fc2.weight.shape()));
  }
  return linear(p.fc2, gelu(linear(p.fc1, x)));
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads) {
  if (q.rank() != 2 || q.shape() != k.shape() || q.shape() != v.shape()) {
    throw DimensionError("attention: q/k/v shapes " + shape_str(q.shape()) + ", " +
                         shape_str(k.shape()) + ", " + shape_str(v.shape()));
  }
  const std::size_t channels = q.cols();
  if (heads == 0 || channels % heads != 0) {
    throw ConfigError("attention: " + std::to_string(channels) + " channels not divisible into " +
                      std::to_string(heads) + " heads");
  }
  const std::size_t width = channels / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(width));
  auto one_head = [&](const Tensor& qh, const Tensor& kh, const Tensor& vh) {
    const Tensor scores = scale(matmul(qh, transpose(kh)), inv_sqrt);
    return matmul(softmax(scores, 1), vh);
  };
  if (heads == 1) return one_head(q, k, v);
  std::vector<Tensor> outs;
  for (std::size_t h = 0; h < heads; ++h) {
    outs.push_back(one_head(slice(q, 1, h * width, (h + 1) * width),
                            slice(k, 1, h * width, (h + 1) * width),
                            slice(v, 1, h * width, (h + 1) * width)));
  }
  return concat(outs, 1);
}

}  // namespace unisoma
