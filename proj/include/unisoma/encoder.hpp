#pragma once

#include <string>
#include <vector>

#include "unisoma/nn.hpp"
#include "unisoma/scene.hpp"

namespace unisoma {

/// How the edge term of a slice is weighted against the point term.
enum class GammaMode {
  points_over_edges,  // γ = N / |E|  (1/k for directed kNN)
  k_value,            // γ = k
};

std::string to_string(GammaMode mode);
GammaMode gamma_mode_from_string(const std::string& s);

double gamma_value(GammaMode mode, std::size_t points, std::size_t edges, std::size_t k);

/// Slice masses below this are treated as empty.
inline constexpr double kSliceMassEps = 1e-10;

struct EncoderParams {
  LinearParams in;          // C_raw → C
  LinearParams slice;       // C → M
  LinearParams edge_slice;  // M → M
  LinearParams edge_in;     // 3 → C
};

EncoderParams encoder_at(const ParamStore& store, const std::string& prefix);
void init_encoder(ParamStore& store, const std::string& prefix, std::size_t raw_channels,
                  std::size_t channels, std::size_t slices, Rng& rng);

struct SliceEmbedding {
  Tensor tokens;          // M×C
  Tensor point_weights;   // N×M
  Tensor edge_weights;    // |E|×M
  Tensor deep_features;   // N×C
  Tensor edge_features;   // |E|×C
  Tensor point_mass;      // M, Σ_i w_ij
  Tensor edge_mass;       // M, Σ_e w^e_ej
  double gamma = 0.0;
  std::vector<std::size_t> empty_slices;

  /// Σ w + γ Σ w^e per slice.
  std::vector<double> mass() const;
};

Tensor project_features(const Tensor& raw, const LinearParams& p);
Tensor slice_weights(const Tensor& x, const LinearParams& p);
Tensor edge_slice_weights(const Tensor& w, const EdgeSet& edges, const LinearParams& p);

/// z_j = (Σ_i w_ij x_i + γ Σ_e w^e_ej e_e) / (Σ_i w_ij + γ Σ_e w^e_ej).
/// Slices whose mass is below kSliceMassEps yield a zero token and are
/// listed in `empty` when it is non-null.
Tensor encode_tokens(const Tensor& x, const Tensor& e, const Tensor& w, const Tensor& we,
                     double gamma, std::vector<std::size_t>* empty = nullptr);

/// Full per-object pipeline from raw features (N×C_raw) and kNN edges.
SliceEmbedding encode_object(const Tensor& raw, const EdgeSet& edges, const EncoderParams& p,
                             double gamma);

/// Encodes the concatenation of two objects with shared parameters. With
/// `mask_b` set, object B's point and edge weights are zeroed before
/// aggregation.
SliceEmbedding joint_encode(const Tensor& raw_a, const EdgeSet& edges_a, const Tensor& raw_b,
                            const EdgeSet& edges_b, const EncoderParams& p, double gamma,
                            bool mask_b = false);

struct ComposeResult {
  Tensor tokens;
  std::vector<std::size_t> empty_slices;
};

/// Mass-weighted merge of two embeddings' tokens, slice by slice.
ComposeResult compose_slices(const SliceEmbedding& a, const SliceEmbedding& b);

}  // namespace unisoma
