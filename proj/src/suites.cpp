#include "unisoma/suites.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "unisoma/autograd.hpp"
#include "unisoma/decoder.hpp"
#include "unisoma/gradcheck.hpp"
#include "unisoma/ops.hpp"

namespace unisoma {

namespace {

Tensor uniform(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = u(rng);
  return Tensor(std::move(shape), std::move(v));
}

double max_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return std::numeric_limits<double>::infinity();
  return max_abs_diff(a, b);
}

CheckResult finish(std::string name, double value, double tol, std::string detail = {}) {
  return {std::move(name), value, tol, value <= tol, std::move(detail)};
}

// Random object for the encoder identities: raw features plus kNN edges.
struct RawObject {
  Tensor raw;
  EdgeSet edges;
};

RawObject random_object(Rng& rng, std::size_t raw_channels, std::size_t k) {
  std::uniform_int_distribution<std::size_t> count(k + 1, k + 5);
  const std::size_t n = count(rng);
  const Tensor pts = uniform({n, 3}, rng);
  const Tensor extra = uniform({n, raw_channels - 3}, rng);
  return {concat({pts, extra}, 1), build_knn_edges(pts, k)};
}

EncoderParams random_encoder(Rng& rng, std::size_t raw_channels, std::size_t channels,
                             std::size_t slices) {
  ParamStore store;
  init_encoder(store, "enc", raw_channels, channels, slices, rng);
  // Non-zero biases so the identities are not helped by symmetric defaults.
  ParamStore perturbed;
  for (const auto& [key, t] : store.entries()) {
    perturbed.set(key, key.ends_with("bias") ? uniform(t.shape(), rng, -0.5, 0.5) : t);
  }
  return encoder_at(perturbed, "enc");
}

Tensor permute_rows(const Tensor& t, const std::vector<std::size_t>& perm) {
  return gather_rows(t, perm);
}

}  // namespace

TinyScene make_tiny_scene(std::uint64_t seed, std::size_t channels, std::size_t slices,
                          std::size_t min_points, std::size_t max_points) {
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> count(min_points, max_points);
  TinyScene s;
  s.config.layers = 2;
  s.config.channels = channels;
  s.config.slices = slices;
  s.config.knn_k = 3;
  s.config.heads = 1;
  const std::size_t k = s.config.knn_k;

  auto object = [&](std::size_t extra_channels) {
    const std::size_t n = count(rng);
    Tensor pts = uniform({n, 3}, rng);
    Tensor feats = extra_channels == 0 ? pts : concat({pts, uniform({n, extra_channels}, rng, -0.2, 0.2)}, 1);
    return std::pair{pts, ObjectInput{feats, build_knn_edges(pts, std::min(k, n - 1))}};
  };
  for (const char* name : {"a", "b"}) {
    auto [pts, in] = object(1);
    s.schema.deformables.push_back({name, 4});
    s.deformable_points.push_back(pts);
    s.input.deformables.push_back(std::move(in));
  }
  {
    auto [pts, in] = object(0);
    s.schema.rigids.push_back({"r", 3});
    s.rigid_points.push_back(pts);
    s.input.rigids.push_back(std::move(in));
  }
  {
    auto [pts, in] = object(3);
    s.schema.loads.push_back({"f", 6});
    s.load_points.push_back(pts);
    s.input.loads.push_back(std::move(in));
  }
  s.schema.contact_pairs = {{0, 1}, {0, 2}, {1, 2}};
  s.schema.target_names = {"x", "y", "z", "spring_energy"};
  s.input.contact_pairs = s.schema.contact_pairs;
  return s;
}

std::vector<CheckResult> gradient_suite(std::uint64_t seed, double tol) {
  Rng rng(seed);
  std::vector<CheckResult> out;
  // Each function is reduced to a scalar through a fixed random projection.
  auto check = [&](const std::string& name, const Tensor& x, const std::function<Tensor(const Tensor&)>& f) {
    const Tensor probe = uniform(f(x).shape(), rng);
    const ScalarFn loss = [&](const Tensor& v) { return sum(mul(f(v), probe)); };
    const GradCheckReport r = grad_check(loss, x, 1e-5, tol);
    out.push_back({name, r.max_rel_err, tol, r.pass, r.message});
  };

  const Tensor a = uniform({3, 4}, rng);
  const Tensor b = uniform({4, 2}, rng);
  const Tensor c = uniform({3, 4}, rng);
  const Tensor pos = uniform({3, 4}, rng, 0.5, 2.0);
  check("matmul/lhs", a, [&](const Tensor& x) { return matmul(x, b); });
  check("matmul/rhs", b, [&](const Tensor& x) { return matmul(a, x); });
  check("transpose", a, [](const Tensor& x) { return transpose(x); });
  check("reshape", a, [](const Tensor& x) { return reshape(x, {2, 6}); });
  check("add", a, [&](const Tensor& x) { return x + c; });
  check("sub", a, [&](const Tensor& x) { return c - x; });
  check("mul", a, [&](const Tensor& x) { return x * c; });
  check("div/numerator", a, [&](const Tensor& x) { return x / pos; });
  check("div/denominator", pos, [&](const Tensor& x) { return a / x; });
  check("scale", a, [](const Tensor& x) { return scale(x, -1.7); });
  check("add_scalar", a, [](const Tensor& x) { return add_scalar(x, 0.3); });
  check("square", a, [](const Tensor& x) { return square(x); });
  check("sqrt", pos, [](const Tensor& x) { return sqrt(x); });
  check("gelu", a, [](const Tensor& x) { return gelu(x); });
  check("sign_floor", pos, [](const Tensor& x) { return sign_floor(scale(x, -1.0), 1e-3); });
  check("sum", a, [](const Tensor& x) { return sum(x); });
  check("sum/axis0", a, [](const Tensor& x) { return sum(x, 0); });
  check("sum/axis1", a, [](const Tensor& x) { return sum(x, 1); });
  check("mean", a, [](const Tensor& x) { return mean(x); });
  check("softmax/axis0", a, [](const Tensor& x) { return softmax(x, 0); });
  check("softmax/axis1", a, [](const Tensor& x) { return softmax(x, 1); });
  {
    const Tensor sc = uniform({4}, rng, 0.5, 1.5);
    const Tensor sh = uniform({4}, rng);
    check("layer_norm/input", a, [&](const Tensor& x) { return layer_norm(x, sc, sh); });
    check("layer_norm/scale", sc, [&](const Tensor& x) { return layer_norm(a, x, sh); });
    check("layer_norm/shift", sh, [&](const Tensor& x) { return layer_norm(a, sc, x); });
  }
  {
    const std::vector<std::size_t> idx{2, 0, 2, 1};
    check("gather_rows", a, [&](const Tensor& x) { return gather_rows(x, idx); });
  }
  check("concat", a, [&](const Tensor& x) { return concat({c, x, c}, 0); });
  check("slice", a, [](const Tensor& x) { return slice(x, 1, 1, 3); });

  ParamStore store;
  init_linear(store, "lin", 4, 3, rng, 1.0, 0.1);
  init_ffn(store, "ffn", 4, 8, rng);
  const LinearParams lin = linear_at(store, "lin");
  const FfnParams ff = ffn_at(store, "ffn");
  check("linear/input", a, [&](const Tensor& x) { return linear(lin, x); });
  check("linear/weight", lin.weight, [&](const Tensor& w) { return linear({w, lin.bias}, a); });
  check("ffn/input", a, [&](const Tensor& x) { return ffn(ff, x); });
  check("ffn/fc1_weight", ff.fc1.weight, [&](const Tensor& w) {
    FfnParams p = ff;
    p.fc1.weight = w;
    return ffn(p, a);
  });
  {
    const Tensor k = uniform({3, 4}, rng);
    const Tensor v = uniform({3, 4}, rng);
    check("attention/q", a, [&](const Tensor& x) { return attention(x, k, v); });
    check("attention/k", k, [&](const Tensor& x) { return attention(a, x, v); });
    check("attention/v", v, [&](const Tensor& x) { return attention(a, k, x); });
    check("attention/two_heads", a, [&](const Tensor& x) { return attention(x, k, v, 2); });
  }

  // Model blocks on a tiny scene.
  const TinyScene scene = make_tiny_scene(seed ^ 0x5bd1e995ULL);
  const ParamStore params = init_model(scene.schema, scene.config, seed + 17);
  const EncoderParams enc = encoder_at(params, encoder_key(scene.schema, scene.config, SolidRole::deformable, 0));
  const ObjectInput& obj = scene.input.deformables[0];
  const double gamma = gamma_value(scene.config.gamma_mode, obj.features.dim(0), obj.edges.size(), scene.config.knn_k);
  check("encode_object", obj.features,
        [&](const Tensor& x) { return encode_object(x, obj.edges, enc, gamma).tokens; });
  const std::size_t m = scene.config.slices, ch = scene.config.channels;
  const LayerParams lp = layer_params(params, scene.schema, 0);
  const Tensor t1 = uniform({m, ch}, rng), t2 = uniform({m, ch}, rng), t3 = uniform({m, ch}, rng);
  check("contact_forward", t1, [&](const Tensor& x) { return contact_forward(x, t2, lp.contacts[0]); });
  check("allocate/ratio", t1, [&](const Tensor& x) {
    return allocate({x, t2, t3}, lp.alloc_contact[0], AllocationMode::ratio);
  });
  check("allocate/softmax", t1, [&](const Tensor& x) {
    return allocate({x, t2, t3}, lp.alloc_contact[0], AllocationMode::softmax);
  });
  check("contact_equivalent", t1,
        [&](const Tensor& x) { return contact_equivalent({x, t2}, lp.alloc_contact[0], lp.contact_post); });
  check("deform_forward", t1, [&](const Tensor& x) { return deform_forward(x, t2, t3, lp.deform[0]); });
  {
    const Tensor w = softmax(uniform({5, m}, rng), 1);
    const Tensor deep = uniform({5, ch}, rng);
    const HeadParams head = head_at(params, "decoder/a");
    check("decode_points", t1, [&](const Tensor& x) { return decode_points(x, w); });
    check("head_forward", deep, [&](const Tensor& x) { return head_forward(decode_points(t1, w), x, head); });
  }

  // Full forward with respect to every parameter at once. The objective is a
  // mean over prediction entries and the step is 1e-4: at 1e-5 the central
  // difference of this deeper graph is dominated by rounding.
  {
    constexpr double kModelStep = 1e-4;
    std::vector<double> flat;
    for (const auto& [key, t] : params.entries()) {
      const auto v = t.to_vector();
      flat.insert(flat.end(), v.begin(), v.end());
    }
    const std::size_t count = flat.size();
    const Tensor theta({count}, std::move(flat));
    auto unflatten = [&](const Tensor& x) {
      ParamStore p;
      std::size_t off = 0;
      for (const auto& [key, t] : params.entries()) {
        p.set(key, reshape(slice(x, 0, off, off + t.numel()), t.shape()));
        off += t.numel();
      }
      return p;
    };
    const auto pred0 = unisoma_forward(params, scene.schema, scene.config, scene.input);
    std::vector<Tensor> probes;
    std::size_t entries = 0;
    for (const auto& t : pred0) {
      probes.push_back(uniform(t.shape(), rng));
      entries += t.numel();
    }
    auto objective = [&](const std::vector<Tensor>& pred) {
      Tensor total = Tensor::scalar(0.0);
      for (std::size_t i = 0; i < pred.size(); ++i) total = total + sum(mul(pred[i], probes[i]));
      return scale(total, 1.0 / static_cast<double>(entries));
    };
    const ScalarFn loss = [&](const Tensor& x) {
      return objective(unisoma_forward(unflatten(x), scene.schema, scene.config, scene.input));
    };
    const GradCheckReport r = grad_check(loss, theta, kModelStep, tol);
    out.push_back({"unisoma_forward/params", r.max_rel_err, tol, r.pass,
                   r.message + " over " + std::to_string(count) + " parameters"});
    const ScalarFn loss_in = [&](const Tensor& x) {
      ModelInput in = scene.input;
      in.deformables[1].features = x;
      return objective(unisoma_forward(params, scene.schema, scene.config, in));
    };
    const GradCheckReport ri = grad_check(loss_in, scene.input.deformables[1].features, kModelStep, tol);
    out.push_back({"unisoma_forward/input", ri.max_rel_err, tol, ri.pass, ri.message});
  }
  return out;
}

CheckResult decomposition_check(std::uint64_t seed, std::size_t cases) {
  Rng rng(seed);
  double worst = 0.0;
  for (std::size_t i = 0; i < cases; ++i) {
    const std::size_t slices = 1 + i % 4;
    const EncoderParams p = random_encoder(rng, 5, 6, slices);
    const RawObject a = random_object(rng, 5, 2);
    const RawObject b = random_object(rng, 5, 2);
    const GammaMode mode = i % 2 == 0 ? GammaMode::points_over_edges : GammaMode::k_value;
    const double g = gamma_value(mode, a.raw.dim(0), a.edges.size(), 2);
    const SliceEmbedding joint = joint_encode(a.raw, a.edges, b.raw, b.edges, p, g, true);
    const SliceEmbedding alone = encode_object(a.raw, a.edges, p, g);
    worst = std::max(worst, max_diff(joint.tokens, alone.tokens));
  }
  return finish("slice decomposition", worst, 1e-10, std::to_string(cases) + " cases");
}

std::vector<CheckResult> composition_checks(std::uint64_t seed, std::size_t cases) {
  std::vector<CheckResult> out;
  Rng rng(seed);
  for (GammaMode mode : {GammaMode::points_over_edges, GammaMode::k_value}) {
    double worst = 0.0;
    for (std::size_t i = 0; i < cases; ++i) {
      const EncoderParams p = random_encoder(rng, 5, 6, 1 + i % 4);
      const RawObject a = random_object(rng, 5, 2);
      const RawObject b = random_object(rng, 5, 2);
      const double g = gamma_value(mode, a.raw.dim(0), a.edges.size(), 2);
      const ComposeResult composed =
          compose_slices(encode_object(a.raw, a.edges, p, g), encode_object(b.raw, b.edges, p, g));
      const SliceEmbedding joint = joint_encode(a.raw, a.edges, b.raw, b.edges, p, g);
      worst = std::max(worst, max_diff(composed.tokens, joint.tokens));
    }
    out.push_back(finish("slice composition (" + to_string(mode) + ")", worst, 1e-9,
                         std::to_string(cases) + " cases"));
  }
  return out;
}

std::vector<CheckResult> structural_checks(std::uint64_t seed, std::size_t cases) {
  double passthrough_mismatch = 0.0, row_err = 0.0, symmetry_mismatch = 0.0, singleton_mismatch = 0.0;
  Rng rng(seed);
  for (std::size_t i = 0; i < cases; ++i) {
    const TinyScene s = make_tiny_scene(seed + 1000 * (i + 1));
    const ParamStore params = init_model(s.schema, s.config, seed + i);
    ForwardTrace trace;
    unisoma_forward(params, s.schema, s.config, s.input, &trace);
    const ProcessorState& first = trace.states.front();
    for (const auto& st : trace.states) {
      for (std::size_t r = 0; r < st.rigid_tokens.size(); ++r) {
        if (!bitwise_equal(st.rigid_tokens[r], first.rigid_tokens[r])) passthrough_mismatch += 1;
      }
      for (std::size_t f = 0; f < st.load_tokens.size(); ++f) {
        if (!bitwise_equal(st.load_tokens[f], first.load_tokens[f])) passthrough_mismatch += 1;
      }
    }
    auto rows = [&](const Tensor& w) {
      if (w.empty()) return;
      const Tensor sums = sum(w, 1);
      for (double v : sums.data()) row_err = std::max(row_err, std::abs(v - 1.0));
    };
    for (const auto* group : {&trace.deformables, &trace.rigids, &trace.loads}) {
      for (const auto& e : *group) {
        rows(e.point_weights);
        rows(e.edge_weights);
      }
    }
    const LayerParams lp = layer_params(params, s.schema, i % s.config.layers);
    const Tensor g1 = uniform({s.config.slices, s.config.channels}, rng);
    const Tensor g2 = uniform({s.config.slices, s.config.channels}, rng);
    if (!bitwise_equal(contact_forward(g1, g2, lp.contacts[i % lp.contacts.size()]),
                       contact_forward(g2, g1, lp.contacts[i % lp.contacts.size()]))) {
      symmetry_mismatch += 1;
    }
    for (AllocationMode mode : {AllocationMode::ratio, AllocationMode::softmax}) {
      if (!bitwise_equal(allocate({g1}, lp.alloc_load[0], mode), g1)) singleton_mismatch += 1;
    }
  }
  const std::string n = std::to_string(cases) + " scenes";
  return {finish("rigid/load token pass-through (mismatches)", passthrough_mismatch, 0.0, n),
          finish("weight rows sum to 1", row_err, 1e-6, n),
          finish("contact symmetry (mismatches)", symmetry_mismatch, 0.0, n),
          finish("singleton allocation identity (mismatches)", singleton_mismatch, 0.0, n)};
}

CheckResult permutation_check(std::uint64_t seed, std::size_t trials) {
  double worst = 0.0;
  Rng rng(seed);
  for (std::size_t t = 0; t < trials; ++t) {
    const TinyScene s = make_tiny_scene(seed + 7919 * (t + 1));
    const ParamStore params = init_model(s.schema, s.config, seed + t);
    const auto base = unisoma_forward(params, s.schema, s.config, s.input);

    ModelInput in = s.input;
    const std::size_t which = t % 4;  // a, b, rigid, load
    ObjectInput* obj = nullptr;
    const Tensor* pts = nullptr;
    if (which < 2) {
      obj = &in.deformables[which];
      pts = &s.deformable_points[which];
    } else if (which == 2) {
      obj = &in.rigids[0];
      pts = &s.rigid_points[0];
    } else {
      obj = &in.loads[0];
      pts = &s.load_points[0];
    }
    const std::size_t n = pts->dim(0);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    const Tensor moved = permute_rows(*pts, perm);
    obj->features = permute_rows(obj->features, perm);
    obj->edges = build_knn_edges(moved, obj->edges.size() / n);
    const auto out = unisoma_forward(params, s.schema, s.config, in);
    for (std::size_t d = 0; d < out.size(); ++d) {
      const Tensor expect = which == d ? permute_rows(base[d], perm) : base[d];
      worst = std::max(worst, max_diff(out[d], expect));
    }
  }
  return finish("permutation equivariance", worst, 1e-9, std::to_string(trials) + " permutations");
}

std::vector<CheckResult> identity_suite(std::uint64_t seed, std::size_t cases) {
  std::vector<CheckResult> out{decomposition_check(seed, cases)};
  for (auto& r : composition_checks(seed + 1, cases)) out.push_back(std::move(r));
  for (auto& r : structural_checks(seed + 2, std::max<std::size_t>(1, cases / 10))) out.push_back(std::move(r));
  out.push_back(permutation_check(seed + 3, 20));
  return out;
}

}  // namespace unisoma
