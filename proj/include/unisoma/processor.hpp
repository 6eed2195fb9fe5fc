#pragma once

#include <string>
#include <vector>

#include "unisoma/nn.hpp"
#include "unisoma/scene.hpp"

namespace unisoma {

struct ContactParams {
  NormParams norm;
  LinearParams q, k, v;
};

struct ResidualFfnParams {
  NormParams norm;
  FfnParams ffn;
};

struct DeformParams {
  NormParams norm;
  LinearParams q, k, v;
  ResidualFfnParams post;
};

ContactParams contact_at(const ParamStore& store, const std::string& prefix);
ResidualFfnParams residual_ffn_at(const ParamStore& store, const std::string& prefix);
DeformParams deform_at(const ParamStore& store, const std::string& prefix);

void init_contact(ParamStore& store, const std::string& prefix, std::size_t channels, Rng& rng);
void init_residual_ffn(ParamStore& store, const std::string& prefix, std::size_t channels,
                       std::size_t hidden, Rng& rng);
void init_deform(ParamStore& store, const std::string& prefix, std::size_t channels,
                 std::size_t hidden, Rng& rng);
/// Small weights and unit bias keep the allocation denominator away from 0.
void init_allocation(ParamStore& store, const std::string& prefix, std::size_t channels, Rng& rng);

enum class AllocationMode { ratio, softmax };
inline constexpr double kAllocationEps = 1e-8;

/// c = Attn(LN(g_i + g_j)) with Q, K, V linear projections.
Tensor contact_forward(const Tensor& gi, const Tensor& gj, const ContactParams& p,
                       std::size_t heads = 1);

/// Elementwise adaptive mix of n same-shaped items. `weights` holds either a
/// single linear shared by all items or one per item. In ratio mode the
/// weight of item i is x′_i / Σ x′ with |Σ x′| floored at `eps`; in softmax
/// mode it is a softmax of x′ over the items. A single item is returned as is.
Tensor allocate(const std::vector<Tensor>& items, const std::vector<LinearParams>& weights,
                AllocationMode mode = AllocationMode::ratio, double eps = kAllocationEps);

/// ĉ = allocate(contacts), c̄ = ĉ + FFN(LN(ĉ)).
Tensor contact_equivalent(const std::vector<Tensor>& contacts,
                          const std::vector<LinearParams>& weights, const ResidualFfnParams& post,
                          AllocationMode mode = AllocationMode::ratio);

Tensor load_equivalent(const std::vector<Tensor>& loads, const std::vector<LinearParams>& weights,
                       AllocationMode mode = AllocationMode::ratio);

/// d′ = Attn(LN(d + f̄ + c̄)), d̂ = d′ + FFN(LN(d′)).
Tensor deform_forward(const Tensor& d, const Tensor& fbar, const Tensor& cbar,
                      const DeformParams& p, std::size_t heads = 1);

struct ProcessorState {
  std::vector<Tensor> deformable_tokens;
  std::vector<Tensor> rigid_tokens;
  std::vector<Tensor> load_tokens;
  std::vector<Tensor> contact_tokens;
};

struct LayerParams {
  std::vector<ContactParams> contacts;                 // per contact pair
  std::vector<std::vector<LinearParams>> alloc_contact;  // per deformable
  std::vector<std::vector<LinearParams>> alloc_load;     // per deformable
  ResidualFfnParams contact_post;                       // shared by all deformables
  std::vector<DeformParams> deform;                     // per deformable
};

struct ProcessorOptions {
  std::size_t heads = 1;
  AllocationMode allocation = AllocationMode::ratio;
};

/// One layer: contact modules, then allocation, then deformation modules.
/// Rigid and load tokens are carried over untouched.
ProcessorState processor_forward(const ProcessorState& state, const LayerParams& params,
                                 const std::vector<ContactPair>& pairs,
                                 const ProcessorOptions& options = {});

}  // namespace unisoma
