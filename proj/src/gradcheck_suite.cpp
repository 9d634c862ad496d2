#include "srvp/gradcheck_suite.hpp"

#include <algorithm>
#include <random>

#include "srvp/reinforce.hpp"
#include "srvp/training.hpp"

namespace srvp {

bool GradcheckReport::passed() const {
  return std::all_of(entries.begin(), entries.end(), [](const auto& e) { return e.passed; });
}

double GradcheckReport::worst() const {
  double w = 0.0;
  for (const auto& e : entries) w = std::max(w, e.max_rel_error);
  return w;
}

namespace {

struct Case {
  ScalarFn fn;
  std::vector<Tensor> inputs;
};

class Sampler {
 public:
  explicit Sampler(std::uint64_t seed) : rng_(seed) {}

  Tensor uniform(Shape shape, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> d(lo, hi);
    Tensor t(std::move(shape));
    for (auto& v : t.storage()) v = d(rng_);
    return t;
  }

  /// Values with |v| in [0.2, 1], away from the ReLU kink.
  Tensor away_from_zero(Shape shape) {
    Tensor t = uniform(std::move(shape), 0.2, 1.0);
    std::bernoulli_distribution sign(0.5);
    for (auto& v : t.storage())
      if (sign(rng_)) v = -v;
    return t;
  }

 private:
  std::mt19937_64 rng_;
};

/// Random linear functional of y, so that no output direction is blind.
Var project(const Var& y, const Tensor& w) { return sum(hadamard(y, constant(w))); }

Case op_case(OpKind kind, Sampler& s) {
  switch (kind) {
    case OpKind::Matmul: {
      Tensor w = s.uniform({3, 2});
      return {[w](const auto& v) { return project(matmul(v[0], v[1]), w); },
              {s.uniform({3, 4}), s.uniform({4, 2})}};
    }
    case OpKind::Transpose: {
      Tensor w = s.uniform({4, 3});
      return {[w](const auto& v) { return project(transpose(v[0]), w); }, {s.uniform({3, 4})}};
    }
    case OpKind::Softmax: {
      Tensor w = s.uniform({3, 4});
      return {[w](const auto& v) {
                return project(softmax(v[0], 0), w) + project(softmax(v[0], 1), w);
              },
              {s.uniform({3, 4}, -2.0, 2.0)}};
    }
    case OpKind::L2Normalize: {
      Tensor w = s.uniform({3, 4});
      return {[w](const auto& v) {
                return project(l2_normalize(v[0], 0), w) + project(l2_normalize(v[0], 1), w);
              },
              {s.uniform({3, 4})}};
    }
    case OpKind::Sigmoid: {
      Tensor w = s.uniform({3, 4});
      return {[w](const auto& v) { return project(sigmoid(v[0]), w); },
              {s.uniform({3, 4}, -3.0, 3.0)}};
    }
    case OpKind::Tanh: {
      Tensor w = s.uniform({3, 4});
      return {[w](const auto& v) { return project(tanh(v[0]), w); },
              {s.uniform({3, 4}, -2.0, 2.0)}};
    }
    case OpKind::Relu: {
      Tensor w = s.uniform({3, 4});
      return {[w](const auto& v) { return project(relu(v[0]), w); },
              {s.away_from_zero({3, 4})}};
    }
    case OpKind::Hadamard: {
      Tensor w = s.uniform({3, 4});
      return {[w](const auto& v) { return project(hadamard(v[0], v[1]), w); },
              {s.uniform({3, 4}), s.uniform({3, 4})}};
    }
    case OpKind::Add: {
      Tensor w = s.uniform({3, 4});
      return {[w](const auto& v) { return project(add(v[0], v[1]), w); },
              {s.uniform({3, 4}), s.uniform({3, 4})}};
    }
    case OpKind::Sub: {
      Tensor w = s.uniform({3, 4});
      return {[w](const auto& v) { return project(sub(v[0], v[1]), w); },
              {s.uniform({3, 4}), s.uniform({3, 4})}};
    }
    case OpKind::Scale: {
      Tensor w = s.uniform({3, 4});
      return {[w](const auto& v) { return project(scale(v[0], -1.7), w); }, {s.uniform({3, 4})}};
    }
    case OpKind::Concat: {
      Tensor w = s.uniform({3, 7});
      return {[w](const auto& v) { return project(concat({v[0], v[1]}, 1), w); },
              {s.uniform({3, 4}), s.uniform({3, 3})}};
    }
    case OpKind::Slice: {
      Tensor w = s.uniform({4, 3});
      return {[w](const auto& v) { return project(slice(v[0], 1, 1, 4), w); },
              {s.uniform({4, 5})}};
    }
    case OpKind::Reshape: {
      Tensor w = s.uniform({2, 6});
      return {[w](const auto& v) { return project(reshape(v[0], {2, 6}), w); },
              {s.uniform({3, 4})}};
    }
    case OpKind::MeanAxis: {
      Tensor w0 = s.uniform({4}), w1 = s.uniform({3});
      return {[w0, w1](const auto& v) {
                return project(mean_axis(v[0], 0), w0) + project(mean_axis(v[0], 1), w1);
              },
              {s.uniform({3, 4})}};
    }
    case OpKind::Sum:
      return {[](const auto& v) { return sum(v[0]); }, {s.uniform({3, 4})}};
    case OpKind::Mean:
      return {[](const auto& v) { return mean(v[0]); }, {s.uniform({3, 4})}};
    case OpKind::Conv2d: {
      Tensor w = s.uniform({2, 3, 5, 4});
      return {[w](const auto& v) { return project(conv2d(v[0], v[1], v[2]), w); },
              {s.uniform({2, 2, 5, 4}), s.uniform({3, 2, 3, 3}), s.uniform({3})}};
    }
    case OpKind::BatchNorm: {
      Tensor w = s.uniform({3, 2, 3, 3});
      return {[w](const auto& v) {
                const Tensor rm({2}, 0.0), rv({2}, 1.0);
                return project(batchnorm2d(v[0], v[1], v[2], true, rm, rv, 1e-5), w);
              },
              {s.uniform({3, 2, 3, 3}), s.uniform({2}, 0.5, 1.5), s.uniform({2})}};
    }
    case OpKind::LayerNorm: {
      Tensor w = s.uniform({3, 8});
      return {[w](const auto& v) { return project(layernorm(v[0], v[1], v[2], 1e-5), w); },
              {s.uniform({3, 8}), s.uniform({8}, 0.5, 1.5), s.uniform({8})}};
    }
    case OpKind::ChannelLinear: {
      Tensor w = s.uniform({2, 5});
      return {[w](const auto& v) { return project(channel_linear(v[0], v[1], v[2]), w); },
              {s.uniform({3, 5}), s.uniform({2, 3}), s.uniform({2})}};
    }
    case OpKind::BceLoss:
      return {[](const auto& v) { return bce_loss(v[0], v[1]); },
              {s.uniform({3, 4}, 0.05, 0.95), s.uniform({3, 4}, 0.0, 1.0)}};
    case OpKind::Leaf:
      break;
  }
  throw std::logic_error("gradcheck: no case for op " + std::string(op_name(kind)));
}

/// Gradcheck over every trainable entry of `store` plus `extra` inputs. `body`
/// receives a binding over the perturbed parameters and the extra inputs.
using ModuleBody = std::function<Var(Binding&, const std::vector<Var>&)>;

Case module_case(const ParamStore& store, std::vector<Tensor> extra, bool training,
                 ModuleBody body) {
  const auto trainable = store.trainable_indices();
  Case c;
  for (auto idx : trainable) c.inputs.push_back(store[idx].value);
  const std::size_t n_params = c.inputs.size();
  for (auto& t : extra) c.inputs.push_back(std::move(t));
  c.fn = [&store, n_params, training, body](const std::vector<Var>& v) {
    std::vector<Var> params(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(n_params));
    std::vector<Var> rest(v.begin() + static_cast<std::ptrdiff_t>(n_params), v.end());
    Binding b(store, params, training);
    return body(b, rest);
  };
  return c;
}

GradcheckEntry check(const std::string& name, const Case& c, double tol, double h = 1e-5,
                     FdStencil stencil = FdStencil::ThreePoint) {
  const auto r = gradcheck(c.fn, c.inputs, h, stencil);
  return {name, r.max_rel_error, r.max_rel_error < tol, r.narrowed};
}

}  // namespace

GradcheckReport run_gradcheck_suite(const ModelConfig& config, std::uint64_t seed,
                                    double tolerance) {
  config.validate();
  GradcheckReport report;
  report.tolerance = tolerance;
  Sampler s(seed);

  for (int k = static_cast<int>(OpKind::Matmul); k <= static_cast<int>(OpKind::BceLoss); ++k) {
    const auto kind = static_cast<OpKind>(k);
    report.entries.push_back(check(std::string(op_name(kind)), op_case(kind, s), tolerance));
  }

  const std::size_t M = config.hidden, L = config.layers, H = config.height, W = config.width;
  const std::size_t HW = H * W, C = config.channels, N = config.input_len;

  {
    ParamStore store;
    const auto cell = make_convgru_cell(store, "cell", C, M, config.kernel);
    param_init(store, seed);
    Tensor w = s.uniform({M, H, W});
    report.entries.push_back(check(
        "convgru_step",
        module_case(store, {s.uniform({C, H, W}), s.uniform({M, H, W}, -0.5, 0.5)}, false,
                    [&cell, w](Binding& b, const std::vector<Var>& v) {
                      return project(convgru_step(v[0], v[1], cell, b), w);
                    }),
        tolerance));
  }
  {
    Tensor w = s.uniform({M, HW});
    const auto order = config.temporal_logit_order;
    report.entries.push_back(check("temporal_attention",
                                   {[w, M, order](const auto& v) {
                                      return project(
                                          temporal_attention(v[0], v[1], M, order).output, w);
                                    },
                                    {s.uniform({L, M * HW}), s.uniform({N, M * HW})}},
                                   tolerance));
  }
  {
    ParamStore store;
    const auto block = make_attention_block(store, "att", M, true);
    param_init(store, seed + 1);
    Tensor w = s.uniform({2 * M, HW});
    report.entries.push_back(check(
        "spatial_cross_attention",
        module_case(store, {s.uniform({L, M, HW}), s.uniform({M, HW})}, false,
                    [&block, w](Binding& b, const std::vector<Var>& v) {
                      const Var a_s = spatial_self_attention(v[0], block.spatial, b).output;
                      return project(fuse_contexts(v[1], a_s, block, b), w);
                    }),
        tolerance));
  }
  {
    Tensor w = s.uniform({N, M * HW});
    report.entries.push_back(
        check("self_correlation_map",
              {[w](const auto& v) { return project(self_correlation_map(v[0]), w); },
               {s.uniform({N, M * HW})}},
              tolerance));
  }
  {
    ParamStore store;
    const auto extractor = make_frame_extractor(store, "ext", C, M, config.extractor_kernel);
    const auto norm = make_layernorm(store, "tn", {M * HW});
    param_init(store, seed + 2);
    Tensor w = s.uniform({N, M * HW});
    report.entries.push_back(check(
        "temporal_reinforcement",
        module_case(store, {s.uniform({N, C, H, W}, 0.0, 1.0), s.uniform({N, M * HW})}, true,
                    [&extractor, &norm, w, N, M, HW](Binding& b, const std::vector<Var>& v) {
                      const Var x = reshape(frame_features(v[0], extractor, b), {N, M * HW});
                      return project(temporal_self_correlation(x, v[1], norm, b), w);
                    }),
        tolerance));
  }
  {
    ParamStore store;
    const auto head = make_spatial_head(store, "sh", L * M, HW, config.reinforced);
    const auto block = make_attention_block(store, "rfa", config.reinforced,
                                            config.use_cross_attention);
    param_init(store, seed + 3);
    Tensor w = s.uniform({2 * config.reinforced, HW});
    const auto order = config.temporal_logit_order;
    const std::size_t Mp = config.reinforced;
    report.entries.push_back(check(
        "spatial_reinforcement",
        module_case(store, {s.uniform({L * M, HW}), s.uniform({N, Mp * HW})}, false,
                    [&head, &block, w, H, W, order](Binding& b, const std::vector<Var>& v) {
                      const Var target = spatial_self_correlation(v[0], head, H, W, b);
                      return project(rfa_fuse(target, v[1], block, b, order).fused, w);
                    }),
        tolerance));
  }
  {
    const SrvpModel model(config, seed);
    Sampler frames(seed + 4);
    const Tensor inputs = frames.uniform({N, C, H, W}, 0.0, 1.0);
    const Tensor targets = frames.uniform({config.pred_len, C, H, W}, 0.0, 1.0);
    const std::size_t P = config.pred_len;
    report.entries.push_back(check(
        "srvp_loss",
        module_case(model.params(), {}, true,
                    [&model, &inputs, &targets, P](Binding& b, const std::vector<Var>&) {
                      return bce_loss(rollout(model, b, inputs, P), constant(targets));
                    }),
        // Some loss gradients are ~1e-9, below what a 1e-5 step resolves on a
        // loss of ~0.7; the extrapolated estimate starts from a wider step.
        tolerance, 1e-3, FdStencil::Ridders));
  }
  return report;
}

}  // namespace srvp
