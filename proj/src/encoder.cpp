#include "unisoma/encoder.hpp"

#include "unisoma/ops.hpp"

namespace unisoma {

std::string to_string(GammaMode mode) {
  return mode == GammaMode::points_over_edges ? "points_over_edges" : "k_value";
}

GammaMode gamma_mode_from_string(const std::string& s) {
  if (s == "points_over_edges") return GammaMode::points_over_edges;
  if (s == "k_value") return GammaMode::k_value;
  throw ConfigError("gamma_mode must be points_over_edges or k_value, got '" + s + "'");
}

double gamma_value(GammaMode mode, std::size_t points, std::size_t edges, std::size_t k) {
  if (mode == GammaMode::k_value) return static_cast<double>(k);
  if (edges == 0) return 0.0;
  return static_cast<double>(points) / static_cast<double>(edges);
}

EncoderParams encoder_at(const ParamStore& store, const std::string& prefix) {
  return {linear_at(store, prefix + "/in"), linear_at(store, prefix + "/slice"),
          linear_at(store, prefix + "/edge_slice"), linear_at(store, prefix + "/edge_in")};
}

void init_encoder(ParamStore& store, const std::string& prefix, std::size_t raw_channels,
                  std::size_t channels, std::size_t slices, Rng& rng) {
  init_linear(store, prefix + "/in", raw_channels, channels, rng);
  init_linear(store, prefix + "/slice", channels, slices, rng);
  init_linear(store, prefix + "/edge_slice", slices, slices, rng);
  init_linear(store, prefix + "/edge_in", 3, channels, rng);
}

std::vector<double> SliceEmbedding::mass() const {
  std::vector<double> m(point_mass.numel());
  for (std::size_t j = 0; j < m.size(); ++j) {
    m[j] = point_mass[j] + (edge_mass.empty() ? 0.0 : gamma * edge_mass[j]);
  }
  return m;
}

Tensor project_features(const Tensor& raw, const LinearParams& p) { return linear(p, raw); }

Tensor slice_weights(const Tensor& x, const LinearParams& p) { return softmax(linear(p, x), 1); }

Tensor edge_slice_weights(const Tensor& w, const EdgeSet& edges, const LinearParams& p) {
  if (edges.size() == 0) return Tensor({0, w.dim(1)}, {});
  const Tensor summed = gather_rows(w, edges.src) + gather_rows(w, edges.dst);
  return softmax(linear(p, summed), 1);
}

namespace {

Tensor column(const Tensor& v) { return reshape(v, {v.numel(), 1}); }

}  // namespace

Tensor encode_tokens(const Tensor& x, const Tensor& e, const Tensor& w, const Tensor& we,
                     double gamma, std::vector<std::size_t>* empty) {
  if (x.rank() != 2 || w.rank() != 2 || x.dim(0) != w.dim(0)) {
    throw DimensionError("encode_tokens: features " + shape_str(x.shape()) + " vs weights " +
                         shape_str(w.shape()));
  }
  const std::size_t m = w.dim(1);
  const bool has_edges = we.rank() == 2 && we.dim(0) > 0;
  if (has_edges && (e.rank() != 2 || e.dim(0) != we.dim(0) || e.dim(1) != x.dim(1) ||
                    we.dim(1) != m)) {
    throw DimensionError("encode_tokens: edge features " + shape_str(e.shape()) +
                         " vs edge weights " + shape_str(we.shape()));
  }
  Tensor numerator = matmul(transpose(w), x);
  Tensor mass = sum(w, 0);
  if (has_edges) {
    numerator = numerator + scale(matmul(transpose(we), e), gamma);
    mass = mass + scale(sum(we, 0), gamma);
  }
  std::vector<double> keep(m, 1.0);
  for (std::size_t j = 0; j < m; ++j) {
    if (mass[j] < kSliceMassEps) {
      keep[j] = 0.0;
      if (empty) empty->push_back(j);
    }
  }
  const Tensor z = numerator / column(sign_floor(mass, kSliceMassEps));
  return z * Tensor({m, 1}, std::move(keep));
}

SliceEmbedding encode_object(const Tensor& raw, const EdgeSet& edges, const EncoderParams& p,
                             double gamma) {
  if (raw.rank() != 2 || raw.dim(0) == 0) {
    throw DimensionError("encode_object: object needs at least one point, got " +
                         shape_str(raw.shape()));
  }
  SliceEmbedding emb;
  emb.gamma = gamma;
  emb.deep_features = project_features(raw, p.in);
  emb.point_weights = slice_weights(emb.deep_features, p.slice);
  emb.edge_weights = edge_slice_weights(emb.point_weights, edges, p.edge_slice);
  emb.point_mass = sum(emb.point_weights, 0);
  if (edges.size() > 0) {
    emb.edge_features = linear(p.edge_in, edges.attributes);
    emb.edge_mass = sum(emb.edge_weights, 0);
  }
  emb.tokens = encode_tokens(emb.deep_features, emb.edge_features, emb.point_weights,
                             emb.edge_weights, gamma, &emb.empty_slices);
  return emb;
}

SliceEmbedding joint_encode(const Tensor& raw_a, const EdgeSet& edges_a, const Tensor& raw_b,
                            const EdgeSet& edges_b, const EncoderParams& p, double gamma,
                            bool mask_b) {
  const std::size_t na = raw_a.dim(0), nb = raw_b.dim(0);
  EdgeSet joint;
  joint.src = edges_a.src;
  joint.dst = edges_a.dst;
  for (std::size_t e = 0; e < edges_b.size(); ++e) {
    joint.src.push_back(edges_b.src[e] + na);
    joint.dst.push_back(edges_b.dst[e] + na);
  }
  std::vector<Tensor> attrs;
  if (edges_a.size() > 0) attrs.push_back(edges_a.attributes);
  if (edges_b.size() > 0) attrs.push_back(edges_b.attributes);
  if (!attrs.empty()) joint.attributes = concat(attrs, 0);

  SliceEmbedding emb;
  emb.gamma = gamma;
  emb.deep_features = project_features(concat({raw_a, raw_b}, 0), p.in);
  Tensor w = slice_weights(emb.deep_features, p.slice);
  Tensor we = edge_slice_weights(w, joint, p.edge_slice);
  if (mask_b) {
    std::vector<double> pm(na + nb, 1.0);
    std::fill(pm.begin() + static_cast<std::ptrdiff_t>(na), pm.end(), 0.0);
    w = w * Tensor({na + nb, 1}, std::move(pm));
    if (joint.size() > 0) {
      std::vector<double> em(joint.size(), 1.0);
      std::fill(em.begin() + static_cast<std::ptrdiff_t>(edges_a.size()), em.end(), 0.0);
      we = we * Tensor({joint.size(), 1}, std::move(em));
    }
  }
  emb.point_weights = w;
  emb.edge_weights = we;
  emb.point_mass = sum(w, 0);
  if (joint.size() > 0) {
    emb.edge_features = linear(p.edge_in, joint.attributes);
    emb.edge_mass = sum(we, 0);
  }
  emb.tokens = encode_tokens(emb.deep_features, emb.edge_features, w, we, gamma,
                             &emb.empty_slices);
  return emb;
}

ComposeResult compose_slices(const SliceEmbedding& a, const SliceEmbedding& b) {
  if (a.tokens.shape() != b.tokens.shape()) {
    throw DimensionError("compose_slices: token shapes " + shape_str(a.tokens.shape()) + " and " +
                         shape_str(b.tokens.shape()));
  }
  if (a.gamma != b.gamma) {
    throw ConfigError("compose_slices: embeddings use different gamma values");
  }
  const std::size_t m = a.tokens.dim(0), c = a.tokens.dim(1);
  const auto ma = a.mass(), mb = b.mass();
  ComposeResult out;
  std::vector<double> z(m * c, 0.0);
  for (std::size_t j = 0; j < m; ++j) {
    const double total = ma[j] + mb[j];
    if (total < kSliceMassEps) {
      out.empty_slices.push_back(j);
      continue;
    }
    for (std::size_t ch = 0; ch < c; ++ch) {
      z[j * c + ch] =
          (ma[j] * a.tokens[j * c + ch] + mb[j] * b.tokens[j * c + ch]) / total;
    }
  }
  out.tokens = Tensor({m, c}, std::move(z));
  return out;
}

}  // namespace unisoma
