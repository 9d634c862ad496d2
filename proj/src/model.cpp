#include "srvp/model.hpp"

#include <algorithm>

#include <stdexcept>

namespace srvp {

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("model config: " + msg); };
  if (layers < 1) fail("L must be >= 1");
  if (hidden < 1) fail("M must be >= 1");
  if (reinforced != hidden) fail("M' must equal M");
  if (channels < 1 || height < 1 || width < 1) fail("frame dims must be positive");
  if (input_len < 1) fail("input horizon N must be >= 1");
  if (pred_len < 1) fail("prediction horizon P must be >= 1");
  if (kernel % 2 == 0 || extractor_kernel % 2 == 0) fail("kernel sizes must be odd");
  if (baseline && (use_sa || use_rfa)) fail("baseline model cannot enable SA or RFA");
}

std::size_t ModelConfig::head_width() const {
  if (baseline) return hidden;
  std::size_t w = layers * hidden;
  if (use_sa) w += 2 * hidden;
  if (use_rfa) w += 2 * reinforced;
  return w;
}

std::optional<Ablation> ablation_from_name(const std::string& name) {
  if (name == "full") return Ablation::Full;
  if (name == "without-sa") return Ablation::WithoutSa;
  if (name == "without-rfa") return Ablation::WithoutRfa;
  if (name == "without-crossatt") return Ablation::WithoutCrossAtt;
  if (name == "baseline") return Ablation::Baseline;
  return std::nullopt;
}

std::string ablation_name(Ablation a) {
  switch (a) {
    case Ablation::Full: return "full";
    case Ablation::WithoutSa: return "without-sa";
    case Ablation::WithoutRfa: return "without-rfa";
    case Ablation::WithoutCrossAtt: return "without-crossatt";
    case Ablation::Baseline: return "baseline";
  }
  return "full";
}

ModelConfig apply_ablation(ModelConfig config, Ablation a) {
  config.use_sa = true;
  config.use_rfa = true;
  config.use_cross_attention = true;
  config.baseline = false;
  switch (a) {
    case Ablation::Full: break;
    case Ablation::WithoutSa: config.use_sa = false; break;
    case Ablation::WithoutRfa: config.use_rfa = false; break;
    case Ablation::WithoutCrossAtt: config.use_cross_attention = false; break;
    case Ablation::Baseline:
      config.use_sa = false;
      config.use_rfa = false;
      config.baseline = true;
      break;
  }
  return config;
}

std::size_t expected_param_count(const ModelConfig& c) {
  const std::size_t M = c.hidden, k2 = c.kernel * c.kernel;
  auto cell = [&](std::size_t in) { return 3 * M * in * k2 + 3 * M * M * k2 + 3 * M; };
  const std::size_t stack = cell(c.channels) + (c.layers - 1) * cell(M);
  auto block = [&](std::size_t m) {
    const std::size_t qkv = 3 * (m * m + m);
    return c.use_cross_attention ? 3 * qkv : qkv;
  };
  std::size_t total = 2 * stack;
  if (c.use_sa) total += block(M);
  if (c.use_rfa) {
    const std::size_t ke2 = c.extractor_kernel * c.extractor_kernel;
    const std::size_t Mp = c.reinforced, LM = c.layers * M;
    total += M * c.channels * ke2 + 2 * M + M * M * ke2 + 2 * M;
    total += 2 * M * c.hw();
    total += 2 * LM * c.hw() + (Mp * LM + Mp);
    total += block(Mp);
  }
  total += c.channels * c.head_width() + c.channels;
  return total;
}

SrvpModel::SrvpModel(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  const auto& c = config_;
  encoder_ = make_gru_stack(store_, "encoder", c.layers, c.channels, c.hidden, c.kernel);
  forecaster_ = make_gru_stack(store_, "forecaster", c.layers, c.channels, c.hidden, c.kernel);
  if (c.use_sa) sa_ = make_attention_block(store_, "sa", c.hidden, c.use_cross_attention);
  if (c.use_rfa) {
    extractor_ = make_frame_extractor(store_, "rfa.extractor", c.channels, c.hidden,
                                      c.extractor_kernel);
    temporal_norm_ = make_layernorm(store_, "rfa.temporal_norm", {c.hidden * c.hw()});
    spatial_head_ =
        make_spatial_head(store_, "rfa.spatial", c.layers * c.hidden, c.hw(), c.reinforced);
    rfa_ = make_attention_block(store_, "rfa", c.reinforced, c.use_cross_attention);
  }
  head_ = make_conv2d(store_, "head", c.head_width(), c.channels, 1);
  param_init(store_, seed);
}

RolloutContext::RolloutContext(const SrvpModel& model, Binding& params)
    : model_(model), params_(params) {}

void RolloutContext::observe(const Var& frames) {
  const auto& c = model_.config();
  const Shape expected{c.input_len, c.channels, c.height, c.width};
  if (frames.shape() != expected) {
    throw DimensionError("rollout: frames " + shape_str(frames.shape()) + ", expected " +
                         shape_str(expected));
  }
  EncoderOutput enc = encode(frames, model_.encoder(), params_);
  encoder_states_ = reshape(enc.states, {c.input_len, c.hidden * c.hw()});
  carry_ = std::move(enc.carry);
  if (c.use_rfa) {
    Var features = frame_features(frames, *model_.extractor(), params_);
    reinforced_reference_ =
        temporal_self_correlation(reshape(features, {c.input_len, c.hidden * c.hw()}),
                                  encoder_states_, *model_.temporal_norm(), params_);
  }
}

Var RolloutContext::predict_step(const Var& frame) {
  if (!ready()) throw std::logic_error("predict_step: rollout context not initialized");
  const auto& c = model_.config();
  carry_ = forecaster_step(frame, carry_, model_.forecaster(), params_);
  if (c.baseline) {
    head_input_ = carry_.back();
  } else {
    const std::size_t LM = c.layers * c.hidden;
    Var stacked = stack_states(carry_);
    std::vector<Var> parts{reshape(stacked, {LM, c.height, c.width})};
    if (c.use_sa) {
      Var layer_states = reshape(stacked, {c.layers, c.hidden, c.hw()});
      AttentionFeatures f1 = standard_attention(layer_states, encoder_states_, *model_.sa(),
                                                params_, c.temporal_logit_order);
      parts.push_back(reshape(f1.fused, {2 * c.hidden, c.height, c.width}));
    }
    if (c.use_rfa) {
      Var target = spatial_self_correlation(reshape(stacked, {LM, c.hw()}),
                                            *model_.spatial_head(), c.height, c.width, params_);
      AttentionFeatures f2 = rfa_fuse(target, reinforced_reference_, *model_.rfa(), params_,
                                      c.temporal_logit_order);
      parts.push_back(reshape(f2.fused, {2 * c.reinforced, c.height, c.width}));
    }
    head_input_ = parts.size() == 1 ? parts.front() : concat(parts, 0);
  }
  return sigmoid(conv2d(head_input_, model_.head(), params_));
}

Var rollout(const SrvpModel& model, Binding& params, const Tensor& frames, std::size_t horizon,
            const Tensor* teacher) {
  if (horizon < 1) throw std::invalid_argument("rollout: prediction horizon must be >= 1");
  const auto& c = model.config();
  if (teacher && teacher->shape() != Shape{horizon, c.channels, c.height, c.width}) {
    throw DimensionError("rollout: teacher frames " + shape_str(teacher->shape()));
  }
  RolloutContext ctx(model, params);
  Var observed = constant(frames);
  ctx.observe(observed);
  const std::size_t n = c.input_len;
  Var x = reshape(slice(observed, 0, n - 1, n), {c.channels, c.height, c.width});
  std::vector<Var> outputs;
  outputs.reserve(horizon);
  for (std::size_t p = 0; p < horizon; ++p) {
    Var y = ctx.predict_step(x);
    outputs.push_back(y);
    if (p + 1 == horizon) break;
    if (teacher) {
      const std::size_t fsize = c.channels * c.hw();
      Tensor next({c.channels, c.height, c.width});
      std::copy_n(teacher->data().begin() + p * fsize, fsize, next.data().begin());
      x = constant(std::move(next));
    } else {
      x = y;
    }
  }
  return stack_states(outputs);
}

Tensor predict(const SrvpModel& model, const Tensor& frames, std::size_t horizon) {
  Binding params(model.params(), false, false);
  return rollout(model, params, frames, horizon).value();
}

}  // namespace srvp
