#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "srvp/config.hpp"
#include "srvp/data.hpp"
#include "srvp/model.hpp"

namespace srvp {

/// Mean binary cross-entropy; predictions are clamped to [1e-7, 1−1e-7]
/// before the logarithms (zero gradient where clamped).
Var bce_loss(const Var& pred, const Var& target);

struct OptimizerState {
  double alpha = 0.99;
  double eps = 1e-8;
  /// Squared-gradient running average per store entry (empty for buffers).
  std::vector<Tensor> sq_avg;
};

OptimizerState make_optimizer_state(const ParamStore& store);

/// v ← α·v + (1−α)·g²;  θ ← θ − lr·g/(√v + ε), elementwise.
void rmsprop_update(Tensor& param, const Tensor& grad, Tensor& sq_avg, double lr, double alpha,
                    double eps);
/// Applies rmsprop_update to every trainable entry. `grads` is indexed like the store.
void rmsprop_step(ParamStore& store, const std::vector<Tensor>& grads, OptimizerState& state,
                  double lr);

/// lr_min + ½(lr_max − lr_min)(1 + cos(π·epoch/total)).
double cosine_lr(std::size_t epoch, std::size_t total_epochs, double lr_max, double lr_min = 1e-6);

/// Scales all gradients so their joint L2 norm is at most max_norm. Returns
/// the norm before clipping.
double clip_global_norm(std::vector<Tensor>& grads, double max_norm);

struct NamedTensor {
  std::string name;
  Tensor value;
  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

/// On-disk layout ("SRVPCK1\n" magic, little-endian):
///   u32 len + config text, u32 epoch, u32 len + RNG state, f64 best val MSE,
///   u32 count + tensors, u32 count + optimizer tensors,
/// where each tensor is u32 len + name, u32 rank, u32 dims…, f64 values.
struct Checkpoint {
  std::string config_text;
  std::uint32_t epoch = 0;
  std::string rng_state;
  double best_val_mse = 0.0;
  std::vector<NamedTensor> params;
  std::vector<NamedTensor> optimizer;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Copies tensors into a store by name; throws DimensionError on missing
/// names or shape mismatches.
void restore_params(ParamStore& store, const std::vector<NamedTensor>& tensors);

struct EpochLog {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_mse = 0.0;
  friend bool operator==(const EpochLog&, const EpochLog&) = default;
};

/// CSV header `epoch,lr,train_loss,val_mse`.
std::string training_log_csv(const std::vector<EpochLog>& log);

struct StepResult {
  double loss = 0.0;
  std::vector<Tensor> grads;
  std::vector<BatchStats> stats;
};

/// Forward and backward of one sequence in training mode.
StepResult sequence_step(const SrvpModel& model, const Tensor& inputs, const Tensor& targets,
                         bool teacher_forcing);

/// Mean test MSE (0–255 scale) of eval-mode rollouts over every sequence.
double evaluate_mse(const SrvpModel& model, const Dataset& ds);

/// Owns the optimization state of one model and runs epochs of the
/// cosine-annealed RMSProp schedule.
class Trainer {
 public:
  Trainer(SrvpModel& model, RunConfig config);

  /// One epoch of shuffled mini-batches followed by validation.
  EpochLog run_epoch(const Dataset& train, const Dataset& val);
  bool finished() const { return epoch_ >= config_.train.epochs; }
  std::size_t epoch() const { return epoch_; }
  const std::vector<EpochLog>& log() const { return log_; }
  double best_val_mse() const { return best_val_; }
  /// Snapshot taken after the best validation epoch so far, if any in this session.
  const std::optional<Checkpoint>& best() const { return best_; }

  Checkpoint checkpoint() const;
  /// Resumes from a checkpoint of the same configuration.
  void restore(const Checkpoint& ckpt);

 private:
  SrvpModel& model_;
  RunConfig config_;
  OptimizerState optimizer_;
  std::mt19937_64 rng_;
  std::size_t epoch_ = 0;
  double best_val_;
  std::optional<Checkpoint> best_;
  std::vector<EpochLog> log_;
};

struct FitResult {
  std::vector<EpochLog> log;
  Checkpoint best;
  Checkpoint last;
};

/// Trains for config.train.epochs epochs.
FitResult fit(SrvpModel& model, const Dataset& train, const Dataset& val, const RunConfig& config);

}  // namespace srvp
