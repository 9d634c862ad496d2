#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "srvp/attention.hpp"
#include "srvp/recurrent.hpp"
#include "srvp/reinforce.hpp"

namespace srvp {

struct ModelConfig {
  std::size_t layers = 2;       // L
  std::size_t hidden = 16;      // M
  std::size_t reinforced = 16;  // M'
  std::size_t channels = 1;     // C
  std::size_t height = 32;      // H
  std::size_t width = 32;       // W
  std::size_t input_len = 10;   // N
  std::size_t pred_len = 10;    // P
  std::size_t kernel = 3;       // ConvGRU kernel
  std::size_t extractor_kernel = 3;
  bool use_sa = true;
  bool use_rfa = true;
  bool use_cross_attention = true;
  /// Plain encoder-forecaster: the head reads only the top forecaster layer.
  bool baseline = false;
  TemporalLogitOrder temporal_logit_order = TemporalLogitOrder::NormThenScale;

  /// Throws std::invalid_argument on inconsistent settings.
  void validate() const;
  std::size_t hw() const { return height * width; }
  /// Channels entering the output layer.
  std::size_t head_width() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

enum class Ablation { Full, WithoutSa, WithoutRfa, WithoutCrossAtt, Baseline };

std::optional<Ablation> ablation_from_name(const std::string& name);
std::string ablation_name(Ablation a);
ModelConfig apply_ablation(ModelConfig config, Ablation a);

/// Closed-form trainable parameter count for a configuration.
std::size_t expected_param_count(const ModelConfig& config);

class SrvpModel {
 public:
  SrvpModel(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }

  const GruStack& encoder() const { return encoder_; }
  const GruStack& forecaster() const { return forecaster_; }
  const std::optional<AttentionBlock>& sa() const { return sa_; }
  const std::optional<AttentionBlock>& rfa() const { return rfa_; }
  const std::optional<FrameExtractor>& extractor() const { return extractor_; }
  const std::optional<NormLayer>& temporal_norm() const { return temporal_norm_; }
  const std::optional<SpatialHead>& spatial_head() const { return spatial_head_; }
  const Conv2dLayer& head() const { return head_; }

 private:
  ModelConfig config_;
  ParamStore store_;
  GruStack encoder_;
  GruStack forecaster_;
  std::optional<AttentionBlock> sa_;
  std::optional<AttentionBlock> rfa_;
  std::optional<FrameExtractor> extractor_;
  std::optional<NormLayer> temporal_norm_;
  std::optional<SpatialHead> spatial_head_;
  Conv2dLayer head_;
};

/// Autoregressive state for one sequence: encoder outputs, the cached
/// reinforced reference h'^E and the forecaster carry.
class RolloutContext {
 public:
  RolloutContext(const SrvpModel& model, Binding& params);

  /// Encodes the observed frames [N,C,H,W] and, with RFA enabled, computes h'^E once.
  void observe(const Var& frames);
  bool ready() const { return !carry_.empty(); }

  /// Advances the forecaster with x_t [C,H,W] and returns x̂_{t+1} [C,H,W].
  Var predict_step(const Var& frame);

  /// Head input at the last step, [head_width, H, W].
  const Var& last_head_input() const { return head_input_; }

 private:
  const SrvpModel& model_;
  Binding& params_;
  Var encoder_states_;       // [N, M·HW]
  Var reinforced_reference_; // [N, M·HW]
  std::vector<Var> carry_;
  Var head_input_;
};

/// Closed-loop prediction of P frames from frames [N,C,H,W]. The first step
/// consumes the last observed frame, later steps the previous prediction, or
/// the matching entry of `teacher` [P,C,H,W] when given. Returns [P,C,H,W].
Var rollout(const SrvpModel& model, Binding& params, const Tensor& frames, std::size_t horizon,
            const Tensor* teacher = nullptr);

/// Eval-mode rollout without gradient tracking.
Tensor predict(const SrvpModel& model, const Tensor& frames, std::size_t horizon);

}  // namespace srvp
