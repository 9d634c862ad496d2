#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "srvp/autodiff.hpp"

namespace srvp {

enum class InitKind { XavierUniform, Zeros, Ones };

struct Param {
  std::string name;
  Tensor value;
  /// Running statistics are stored alongside parameters but never trained.
  bool trainable = true;
  InitKind init = InitKind::Zeros;
  std::size_t fan_in = 0;
  std::size_t fan_out = 0;
};

/// Owns every named tensor of a model in registration order.
class ParamStore {
 public:
  std::size_t add(std::string name, Shape shape, InitKind init, std::size_t fan_in = 0,
                  std::size_t fan_out = 0);
  std::size_t add_buffer(std::string name, Shape shape, double fill);

  std::size_t size() const { return params_.size(); }
  Param& operator[](std::size_t i) { return params_[i]; }
  const Param& operator[](std::size_t i) const { return params_[i]; }
  const std::vector<Param>& all() const { return params_; }
  std::optional<std::size_t> find(const std::string& name) const;

  /// Total scalar count of trainable parameters.
  std::size_t trainable_count() const;
  std::vector<std::size_t> trainable_indices() const;

 private:
  std::vector<Param> params_;
};

/// Xavier-uniform weights with a = sqrt(6 / (fan_in + fan_out)), zero biases,
/// unit norm scales. Entry i draws from a generator seeded by (seed, i).
void param_init(ParamStore& store, std::uint64_t seed);

/// Batch statistics observed by a training-mode batchnorm, applied to the
/// running buffers after the step.
struct BatchStats {
  std::size_t running_mean;
  std::size_t running_var;
  Tensor mean;
  Tensor var;
  std::size_t count;
};

/// Per-graph view of a ParamStore: one leaf Var per entry.
class Binding {
 public:
  Binding(const ParamStore& store, bool with_grad, bool training);
  /// Trainable entries are taken from `trainable` in store order.
  Binding(const ParamStore& store, const std::vector<Var>& trainable, bool training);

  const Var& operator()(std::size_t idx) const { return vars_[idx]; }
  bool training() const { return training_; }

  /// Gradient per store entry; zeros where none arrived.
  std::vector<Tensor> gradients() const;

  void record(BatchStats stats) { stats_.push_back(std::move(stats)); }
  const std::vector<BatchStats>& batch_stats() const { return stats_; }

 private:
  std::vector<Var> vars_;
  bool training_;
  std::vector<BatchStats> stats_;
};

/// Folds observed batch statistics into the running buffers (momentum update,
/// unbiased variance).
void apply_batch_stats(ParamStore& store, const std::vector<BatchStats>& stats,
                       double momentum);

// ---- differentiable kernels ----

/// Zero-padded, stride-1 cross-correlation. `x` is [C,H,W] or [N,C,H,W];
/// `weight` is [out, in, k, k] with odd k; `bias` may be empty.
Var conv2d(const Var& x, const Var& weight, const Var& bias);

/// Batch normalization over (batch, spatial) per channel of [N,C,H,W] input.
/// Training mode uses batch statistics and returns them via `mean_out`/`var_out`
/// (biased variance); eval mode uses the given running statistics.
Var batchnorm2d(const Var& x, const Var& gamma, const Var& beta, bool training,
                const Tensor& running_mean, const Tensor& running_var, double eps,
                Tensor* mean_out = nullptr, Tensor* var_out = nullptr);

/// Normalizes each trailing block of gamma.size() entries to zero mean and
/// unit variance, then applies the elementwise affine.
Var layernorm(const Var& x, const Var& gamma, const Var& beta, double eps);

/// [out, in] weight applied at every column of x [in, cols]; bias may be empty.
Var channel_linear(const Var& x, const Var& weight, const Var& bias);

// ---- layers ----

struct Conv2dLayer {
  std::size_t weight = 0;
  std::optional<std::size_t> bias;
  std::size_t in_ch = 0;
  std::size_t out_ch = 0;
  std::size_t kernel = 1;
};

Conv2dLayer make_conv2d(ParamStore& store, const std::string& name, std::size_t in_ch,
                        std::size_t out_ch, std::size_t kernel, bool with_bias = true);
Var conv2d(const Var& x, const Conv2dLayer& layer, const Binding& params);

enum class NormKind { BatchNorm2d, LayerNorm };

struct NormLayer {
  NormKind kind = NormKind::LayerNorm;
  std::size_t scale = 0;
  std::size_t shift = 0;
  std::optional<std::size_t> running_mean;
  std::optional<std::size_t> running_var;
  double momentum = 0.1;
  double eps = 1e-5;
};

NormLayer make_batchnorm2d(ParamStore& store, const std::string& name, std::size_t channels);
NormLayer make_layernorm(ParamStore& store, const std::string& name, Shape feature_shape);
/// Batchnorm in training mode records its batch statistics into `params`.
Var normalize(const Var& x, const NormLayer& layer, Binding& params);

struct ChannelLinear {
  std::size_t weight = 0;
  std::optional<std::size_t> bias;
  std::size_t in_ch = 0;
  std::size_t out_ch = 0;
};

ChannelLinear make_channel_linear(ParamStore& store, const std::string& name, std::size_t in_ch,
                                  std::size_t out_ch, bool with_bias = true);
Var channel_linear(const Var& x, const ChannelLinear& layer, const Binding& params);

}  // namespace srvp
