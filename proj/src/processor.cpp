#include "unisoma/processor.hpp"

#include "unisoma/ops.hpp"

namespace unisoma {

ContactParams contact_at(const ParamStore& store, const std::string& prefix) {
  return {norm_at(store, prefix + "/norm"), linear_at(store, prefix + "/q"),
          linear_at(store, prefix + "/k"), linear_at(store, prefix + "/v")};
}

ResidualFfnParams residual_ffn_at(const ParamStore& store, const std::string& prefix) {
  return {norm_at(store, prefix + "/norm"), ffn_at(store, prefix + "/ffn")};
}

DeformParams deform_at(const ParamStore& store, const std::string& prefix) {
  return {norm_at(store, prefix + "/norm"), linear_at(store, prefix + "/q"),
          linear_at(store, prefix + "/k"), linear_at(store, prefix + "/v"),
          residual_ffn_at(store, prefix + "/post")};
}

void init_contact(ParamStore& store, const std::string& prefix, std::size_t channels, Rng& rng) {
  init_norm(store, prefix + "/norm", channels);
  for (const char* n : {"/q", "/k", "/v"}) init_linear(store, prefix + n, channels, channels, rng);
}

void init_residual_ffn(ParamStore& store, const std::string& prefix, std::size_t channels,
                       std::size_t hidden, Rng& rng) {
  init_norm(store, prefix + "/norm", channels);
  init_ffn(store, prefix + "/ffn", channels, hidden, rng);
}

void init_deform(ParamStore& store, const std::string& prefix, std::size_t channels,
                 std::size_t hidden, Rng& rng) {
  init_contact(store, prefix, channels, rng);
  init_residual_ffn(store, prefix + "/post", channels, hidden, rng);
}

void init_allocation(ParamStore& store, const std::string& prefix, std::size_t channels,
                     Rng& rng) {
  init_linear(store, prefix, channels, channels, rng, 0.1, 1.0);
}

Tensor contact_forward(const Tensor& gi, const Tensor& gj, const ContactParams& p,
                       std::size_t heads) {
  if (gi.shape() != gj.shape()) {
    throw DimensionError("contact_forward: token shapes " + shape_str(gi.shape()) + " and " +
                         shape_str(gj.shape()));
  }
  const Tensor h = layer_norm(p.norm, gi + gj);
  return attention(linear(p.q, h), linear(p.k, h), linear(p.v, h), heads);
}

Tensor allocate(const std::vector<Tensor>& items, const std::vector<LinearParams>& weights,
                AllocationMode mode, double eps) {
  if (items.empty()) throw ConfigError("allocate: needs at least one item");
  if (weights.size() != 1 && weights.size() != items.size()) {
    throw ConfigError("allocate: " + std::to_string(weights.size()) + " weight linears for " +
                      std::to_string(items.size()) + " items");
  }
  for (const auto& t : items) {
    if (t.shape() != items.front().shape()) {
      throw DimensionError("allocate: item shapes " + shape_str(items.front().shape()) + " and " +
                           shape_str(t.shape()));
    }
  }
  if (items.size() == 1) return items.front();

  std::vector<Tensor> logits;
  for (std::size_t i = 0; i < items.size(); ++i) {
    logits.push_back(linear(weights.size() == 1 ? weights[0] : weights[i], items[i]));
  }
  Tensor out;
  if (mode == AllocationMode::ratio) {
    Tensor total = logits[0];
    for (std::size_t i = 1; i < logits.size(); ++i) total = total + logits[i];
    const Tensor denom = sign_floor(total, eps);
    for (std::size_t i = 0; i < items.size(); ++i) {
      const Tensor term = (logits[i] / denom) * items[i];
      out = i == 0 ? term : out + term;
    }
    return out;
  }
  const Shape& s = items.front().shape();
  Shape stacked_row{1};
  stacked_row.insert(stacked_row.end(), s.begin(), s.end());
  std::vector<Tensor> rows;
  for (const auto& l : logits) rows.push_back(reshape(l, stacked_row));
  const Tensor mix = softmax(concat(rows, 0), 0);
  for (std::size_t i = 0; i < items.size(); ++i) {
    const Tensor term = reshape(slice(mix, 0, i, i + 1), s) * items[i];
    out = i == 0 ? term : out + term;
  }
  return out;
}

Tensor contact_equivalent(const std::vector<Tensor>& contacts,
                          const std::vector<LinearParams>& weights, const ResidualFfnParams& post,
                          AllocationMode mode) {
  const Tensor chat = allocate(contacts, weights, mode);
  return chat + ffn(post.ffn, layer_norm(post.norm, chat));
}

Tensor load_equivalent(const std::vector<Tensor>& loads, const std::vector<LinearParams>& weights,
                       AllocationMode mode) {
  return allocate(loads, weights, mode);
}

Tensor deform_forward(const Tensor& d, const Tensor& fbar, const Tensor& cbar,
                      const DeformParams& p, std::size_t heads) {
  if (d.shape() != fbar.shape() || d.shape() != cbar.shape()) {
    throw DimensionError("deform_forward: triplet shapes " + shape_str(d.shape()) + ", " +
                         shape_str(fbar.shape()) + ", " + shape_str(cbar.shape()));
  }
  const Tensor h = layer_norm(p.norm, d + fbar + cbar);
  const Tensor dprime = attention(linear(p.q, h), linear(p.k, h), linear(p.v, h), heads);
  return dprime + ffn(p.post.ffn, layer_norm(p.post.norm, dprime));
}

ProcessorState processor_forward(const ProcessorState& state, const LayerParams& params,
                                 const std::vector<ContactPair>& pairs,
                                 const ProcessorOptions& options) {
  const std::size_t nd = state.deformable_tokens.size();
  const std::size_t nobj = nd + state.rigid_tokens.size();
  if (params.contacts.size() != pairs.size()) {
    throw ConfigError("processor: " + std::to_string(params.contacts.size()) +
                      " contact modules for " + std::to_string(pairs.size()) + " contact pairs");
  }
  if (params.deform.size() != nd || params.alloc_contact.size() != nd ||
      params.alloc_load.size() != nd) {
    throw ConfigError("processor: parameters cover " + std::to_string(params.deform.size()) +
                      " deformable solids, state has " + std::to_string(nd));
  }
  auto token = [&](std::size_t i) -> const Tensor& {
    return i < nd ? state.deformable_tokens[i] : state.rigid_tokens[i - nd];
  };

  ProcessorState next;
  next.rigid_tokens = state.rigid_tokens;
  next.load_tokens = state.load_tokens;
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const auto [a, b] = pairs[k];
    if (a >= nobj || b >= nobj) {
      throw ValidationError("processor: contact pair " + std::to_string(k) + " (" +
                            std::to_string(a) + ", " + std::to_string(b) +
                            ") references a missing object");
    }
    next.contact_tokens.push_back(contact_forward(token(a), token(b), params.contacts[k],
                                                  options.heads));
  }
  for (std::size_t i = 0; i < nd; ++i) {
    const Tensor& d = state.deformable_tokens[i];
    const Tensor none = Tensor::zeros(d.shape());
    const Tensor cbar = next.contact_tokens.empty()
                            ? none
                            : contact_equivalent(next.contact_tokens, params.alloc_contact[i],
                                                 params.contact_post, options.allocation);
    const Tensor fbar = state.load_tokens.empty()
                            ? none
                            : load_equivalent(state.load_tokens, params.alloc_load[i],
                                              options.allocation);
    next.deformable_tokens.push_back(deform_forward(d, fbar, cbar, params.deform[i], options.heads));
  }
  return next;
}

}  // namespace unisoma
