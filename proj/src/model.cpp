#include "unisoma/model.hpp"

#include <set>

#include "unisoma/decoder.hpp"
#include "unisoma/ops.hpp"

namespace unisoma {

using nlohmann::json;

namespace {

std::size_t raw_channels(const SolidObject& s) { return 3 + s.property_count(); }

json slots_json(const std::vector<SceneSchema::Slot>& slots) {
  json j = json::array();
  for (const auto& s : slots) j.push_back({{"name", s.name}, {"channels", s.channels}});
  return j;
}

std::vector<SceneSchema::Slot> slots_from(const json& j) {
  std::vector<SceneSchema::Slot> out;
  for (const auto& s : j) out.push_back({s.at("name").get<std::string>(), s.at("channels").get<std::size_t>()});
  return out;
}

void check_slots(const std::vector<SceneSchema::Slot>& expected,
                 const std::vector<std::pair<std::string, std::size_t>>& actual, const char* what) {
  if (expected.size() != actual.size()) {
    throw ValidationError(std::string("scene has ") + std::to_string(actual.size()) + " " + what +
                          " objects, model expects " + std::to_string(expected.size()));
  }
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (expected[i].name != actual[i].first) {
      throw ValidationError(std::string(what) + " " + std::to_string(i) + " is '" +
                            actual[i].first + "', model expects '" + expected[i].name + "'");
    }
    if (expected[i].channels != actual[i].second) {
      throw ValidationError(std::string(what) + " '" + expected[i].name + "' has " +
                            std::to_string(actual[i].second) + " input channels, model expects " +
                            std::to_string(expected[i].channels));
    }
  }
}

std::string layer_prefix(std::size_t layer) { return "processor/" + std::to_string(layer); }

}  // namespace

SceneSchema SceneSchema::of(const SceneSample& sample) {
  SceneSchema s;
  for (const auto& d : sample.deformables) s.deformables.push_back({d.name, raw_channels(d)});
  for (const auto& r : sample.rigids) s.rigids.push_back({r.name, raw_channels(r)});
  for (const auto& l : sample.loads) s.loads.push_back({l.name, 6});
  s.contact_pairs = sample.contact_pairs;
  s.target_names = sample.target_names;
  return s;
}

void SceneSchema::check(const SceneSample& sample) const {
  std::vector<std::pair<std::string, std::size_t>> d, r, l;
  for (const auto& o : sample.deformables) d.emplace_back(o.name, raw_channels(o));
  for (const auto& o : sample.rigids) r.emplace_back(o.name, raw_channels(o));
  for (const auto& o : sample.loads) l.emplace_back(o.name, 6);
  check_slots(deformables, d, "deformable");
  check_slots(rigids, r, "rigid");
  check_slots(loads, l, "load");
  for (std::size_t k = 0; k < contact_pairs.size(); ++k) {
    if (k >= sample.contact_pairs.size() || sample.contact_pairs[k] != contact_pairs[k]) {
      throw ValidationError("scene lacks contact pair " + std::to_string(k) + " (" +
                            std::to_string(contact_pairs[k].first) + ", " +
                            std::to_string(contact_pairs[k].second) + ") expected by the model");
    }
  }
  if (sample.contact_pairs.size() != contact_pairs.size()) {
    throw ValidationError("scene lists " + std::to_string(sample.contact_pairs.size()) +
                          " contact pairs, model expects " + std::to_string(contact_pairs.size()));
  }
  if (sample.target_names != target_names) {
    throw ValidationError("scene target channels differ from the model's");
  }
}

json SceneSchema::to_json() const {
  json pairs = json::array();
  for (const auto& [a, b] : contact_pairs) pairs.push_back({a, b});
  return {{"deformables", slots_json(deformables)},
          {"rigids", slots_json(rigids)},
          {"loads", slots_json(loads)},
          {"contact_pairs", pairs},
          {"target_names", target_names}};
}

SceneSchema SceneSchema::from_json(const json& j) {
  SceneSchema s;
  s.deformables = slots_from(j.at("deformables"));
  s.rigids = slots_from(j.at("rigids"));
  s.loads = slots_from(j.at("loads"));
  for (const auto& p : j.at("contact_pairs")) {
    s.contact_pairs.emplace_back(p.at(0).get<std::size_t>(), p.at(1).get<std::size_t>());
  }
  s.target_names = j.at("target_names").get<std::vector<std::string>>();
  return s;
}

void ModelConfig::validate() const {
  if (layers == 0) throw ConfigError("layers must be at least 1");
  if (channels == 0) throw ConfigError("channels must be positive");
  if (slices == 0) throw ConfigError("slices must be positive");
  if (knn_k == 0) throw ConfigError("knn_k must be positive");
  if (heads == 0 || channels % heads != 0) {
    throw ConfigError("heads must divide channels (" + std::to_string(channels) + " channels, " +
                      std::to_string(heads) + " heads)");
  }
}

json ModelConfig::to_json() const {
  return {{"layers", layers},
          {"channels", channels},
          {"slices", slices},
          {"knn_k", knn_k},
          {"heads", heads},
          {"gamma_mode", to_string(gamma_mode)},
          {"allocation_softmax", allocation_softmax},
          {"share_encoders", share_encoders}};
}

ModelConfig ModelConfig::from_json(const json& j) {
  ModelConfig c;
  c.layers = j.value("layers", c.layers);
  c.channels = j.value("channels", c.channels);
  c.slices = j.value("slices", c.slices);
  c.knn_k = j.value("knn_k", c.knn_k);
  c.heads = j.value("heads", c.heads);
  c.gamma_mode = gamma_mode_from_string(j.value("gamma_mode", to_string(c.gamma_mode)));
  c.allocation_softmax = j.value("allocation_softmax", c.allocation_softmax);
  c.share_encoders = j.value("share_encoders", c.share_encoders);
  c.validate();
  return c;
}

ModelInput prepare_input(const SceneSample& physical, const NormStats& stats, std::size_t knn_k) {
  const SceneSample norm = normalize_scene(physical, stats);
  auto features = [](const SolidObject& s) {
    return s.property_count() == 0 ? s.points : concat({s.points, s.properties}, 1);
  };
  ModelInput in;
  for (std::size_t i = 0; i < physical.deformables.size(); ++i) {
    in.deformables.push_back({features(norm.deformables[i]),
                              build_knn_edges(physical.deformables[i].points, knn_k)});
  }
  for (std::size_t i = 0; i < physical.rigids.size(); ++i) {
    in.rigids.push_back({features(norm.rigids[i]), build_knn_edges(physical.rigids[i].points, knn_k)});
  }
  for (std::size_t i = 0; i < physical.loads.size(); ++i) {
    in.loads.push_back({concat({norm.loads[i].origin_points, norm.loads[i].motion}, 1),
                        build_knn_edges(physical.loads[i].origin_points, knn_k)});
  }
  in.contact_pairs = physical.contact_pairs;
  return in;
}

std::string encoder_key(const SceneSchema& schema, const ModelConfig& config, SolidRole role,
                        std::size_t index, bool is_load) {
  if (config.share_encoders) {
    return is_load ? "encoder/load" : "encoder/" + to_string(role);
  }
  if (is_load) return "encoder/" + schema.loads.at(index).name;
  return "encoder/" + (role == SolidRole::deformable ? schema.deformables.at(index).name
                                                     : schema.rigids.at(index).name);
}

ParamStore init_model(const SceneSchema& schema, const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  if (schema.deformables.empty()) throw ConfigError("model needs at least one deformable solid");
  std::set<std::string> names;
  auto note_name = [&](const std::string& n) {
    if (n.empty() || n.find('/') != std::string::npos) {
      throw ConfigError("object name '" + n + "' cannot be used in a parameter path");
    }
    if (!names.insert(n).second) throw ConfigError("duplicate object name '" + n + "'");
  };
  for (const auto& s : schema.deformables) note_name(s.name);
  for (const auto& s : schema.rigids) note_name(s.name);
  for (const auto& s : schema.loads) note_name(s.name);

  Rng rng(seed);
  ParamStore store;
  const std::size_t c = config.channels, m = config.slices, h = config.hidden();
  auto encoder = [&](const std::string& key, std::size_t raw) {
    if (store.contains(key + "/in/weight")) {
      if (store.get(key + "/in/weight").rows() != raw) {
        throw ConfigError("shared encoder '" + key + "' sees objects with different channel counts");
      }
      return;
    }
    init_encoder(store, key, raw, c, m, rng);
  };
  for (std::size_t i = 0; i < schema.deformables.size(); ++i) {
    encoder(encoder_key(schema, config, SolidRole::deformable, i), schema.deformables[i].channels);
  }
  for (std::size_t i = 0; i < schema.rigids.size(); ++i) {
    encoder(encoder_key(schema, config, SolidRole::rigid, i), schema.rigids[i].channels);
  }
  for (std::size_t i = 0; i < schema.loads.size(); ++i) {
    encoder(encoder_key(schema, config, SolidRole::rigid, i, true), schema.loads[i].channels);
  }
  for (std::size_t l = 0; l < config.layers; ++l) {
    const std::string lp = layer_prefix(l);
    for (std::size_t k = 0; k < schema.contact_pairs.size(); ++k) {
      init_contact(store, lp + "/contact/" + std::to_string(k), c, rng);
    }
    if (!schema.contact_pairs.empty()) init_residual_ffn(store, lp + "/contact_post", c, h, rng);
    for (const auto& d : schema.deformables) {
      if (!schema.contact_pairs.empty()) init_allocation(store, lp + "/alloc/" + d.name + "/contact", c, rng);
      if (!schema.loads.empty()) init_allocation(store, lp + "/alloc/" + d.name + "/load", c, rng);
      init_deform(store, lp + "/deform/" + d.name, c, h, rng);
    }
  }
  for (const auto& d : schema.deformables) {
    init_head(store, "decoder/" + d.name, c, h, schema.target_names.size(), rng);
  }
  return store;
}

LayerParams layer_params(const ParamStore& store, const SceneSchema& schema, std::size_t layer) {
  const std::string lp = layer_prefix(layer);
  LayerParams p;
  for (std::size_t k = 0; k < schema.contact_pairs.size(); ++k) {
    p.contacts.push_back(contact_at(store, lp + "/contact/" + std::to_string(k)));
  }
  if (!schema.contact_pairs.empty()) p.contact_post = residual_ffn_at(store, lp + "/contact_post");
  for (const auto& d : schema.deformables) {
    p.alloc_contact.emplace_back();
    p.alloc_load.emplace_back();
    if (!schema.contact_pairs.empty()) {
      p.alloc_contact.back().push_back(linear_at(store, lp + "/alloc/" + d.name + "/contact"));
    }
    if (!schema.loads.empty()) {
      p.alloc_load.back().push_back(linear_at(store, lp + "/alloc/" + d.name + "/load"));
    }
    p.deform.push_back(deform_at(store, lp + "/deform/" + d.name));
  }
  return p;
}

std::vector<Tensor> unisoma_forward(const ParamStore& params, const SceneSchema& schema,
                                    const ModelConfig& config, const ModelInput& input,
                                    ForwardTrace* trace) {
  if (input.deformables.size() != schema.deformables.size() ||
      input.rigids.size() != schema.rigids.size() || input.loads.size() != schema.loads.size()) {
    throw ValidationError("model input does not match the scene schema object counts");
  }
  if (input.contact_pairs != schema.contact_pairs) {
    throw ValidationError("model input contact pairs differ from the scene schema");
  }
  auto encode = [&](const ObjectInput& obj, const std::string& key) {
    const double gamma = gamma_value(config.gamma_mode, obj.features.dim(0), obj.edges.size(),
                                     config.knn_k);
    return encode_object(obj.features, obj.edges, encoder_at(params, key), gamma);
  };
  std::vector<SliceEmbedding> demb, remb, lemb;
  ProcessorState state;
  for (std::size_t i = 0; i < input.deformables.size(); ++i) {
    demb.push_back(encode(input.deformables[i],
                          encoder_key(schema, config, SolidRole::deformable, i)));
    state.deformable_tokens.push_back(demb.back().tokens);
  }
  for (std::size_t i = 0; i < input.rigids.size(); ++i) {
    remb.push_back(encode(input.rigids[i], encoder_key(schema, config, SolidRole::rigid, i)));
    state.rigid_tokens.push_back(remb.back().tokens);
  }
  for (std::size_t i = 0; i < input.loads.size(); ++i) {
    lemb.push_back(encode(input.loads[i], encoder_key(schema, config, SolidRole::rigid, i, true)));
    state.load_tokens.push_back(lemb.back().tokens);
  }
  if (trace) trace->states.push_back(state);

  const ProcessorOptions options{config.heads, config.allocation_softmax ? AllocationMode::softmax
                                                                          : AllocationMode::ratio};
  for (std::size_t l = 0; l < config.layers; ++l) {
    state = processor_forward(state, layer_params(params, schema, l), schema.contact_pairs, options);
    if (trace) trace->states.push_back(state);
  }

  std::vector<Tensor> out;
  for (std::size_t i = 0; i < demb.size(); ++i) {
    const Tensor decoded = decode_points(state.deformable_tokens[i], demb[i].point_weights);
    out.push_back(head_forward(decoded, demb[i].deep_features,
                               head_at(params, "decoder/" + schema.deformables[i].name)));
  }
  if (trace) {
    trace->deformables = std::move(demb);
    trace->rigids = std::move(remb);
    trace->loads = std::move(lemb);
  }
  return out;
}

}  // namespace unisoma
