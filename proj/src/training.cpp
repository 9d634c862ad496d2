#include "srvp/training.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>
#include <thread>

#include "srvp/metrics.hpp"

namespace srvp {

// ---- loss ----

namespace {
constexpr double kBceLo = 1e-7, kBceHi = 1.0 - 1e-7;
}  // namespace

Var bce_loss(const Var& pred, const Var& target) {
  const Tensor& P = pred.value();
  const Tensor& T = target.value();
  if (P.shape() != T.shape()) {
    throw DimensionError("bce_loss: shape mismatch " + shape_str(P.shape()) + " vs " +
                         shape_str(T.shape()));
  }
  double total = 0.0;
  for (std::size_t i = 0; i < P.size(); ++i) {
    kinks::record(P[i] >= kBceLo && P[i] <= kBceHi);
    const double p = std::clamp(P[i], kBceLo, kBceHi);
    total -= T[i] * std::log(p) + (1.0 - T[i]) * std::log(1.0 - p);
  }
  const double inv = 1.0 / static_cast<double>(P.size());
  return make_node(OpKind::BceLoss, Tensor::scalar(total * inv), {pred, target},
                   [inv](Node& n) {
                     Node& np = n.inputs[0].node();
                     Node& nt = n.inputs[1].node();
                     const double g = n.grad[0] * inv;
                     if (np.requires_grad) {
                       Tensor gp(np.value.shape());
                       for (std::size_t i = 0; i < gp.size(); ++i) {
                         const double p = np.value[i];
                         if (p < kBceLo || p > kBceHi) continue;
                         const double t = nt.value[i];
                         gp[i] = g * (-t / p + (1.0 - t) / (1.0 - p));
                       }
                       accumulate_grad(np, std::move(gp));
                     }
                     if (nt.requires_grad) {
                       Tensor gt(nt.value.shape());
                       for (std::size_t i = 0; i < gt.size(); ++i) {
                         const double p = std::clamp(np.value[i], kBceLo, kBceHi);
                         gt[i] = g * (std::log(1.0 - p) - std::log(p));
                       }
                       accumulate_grad(nt, std::move(gt));
                     }
                   });
}

// ---- optimizer ----

OptimizerState make_optimizer_state(const ParamStore& store) {
  OptimizerState s;
  for (const auto& p : store.all()) {
    s.sq_avg.push_back(p.trainable ? Tensor(p.value.shape()) : Tensor());
  }
  return s;
}

void rmsprop_update(Tensor& param, const Tensor& grad, Tensor& sq_avg, double lr, double alpha,
                    double eps) {
  if (param.shape() != grad.shape() || param.shape() != sq_avg.shape()) {
    throw DimensionError("rmsprop: shape mismatch param " + shape_str(param.shape()) +
                         " grad " + shape_str(grad.shape()) + " state " +
                         shape_str(sq_avg.shape()));
  }
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    sq_avg[i] = alpha * sq_avg[i] + (1.0 - alpha) * g * g;
    param[i] -= lr * g / (std::sqrt(sq_avg[i]) + eps);
  }
}

void rmsprop_step(ParamStore& store, const std::vector<Tensor>& grads, OptimizerState& state,
                  double lr) {
  if (grads.size() != store.size() || state.sq_avg.size() != store.size()) {
    throw DimensionError("rmsprop_step: gradient/state count does not match parameters");
  }
  for (std::size_t i = 0; i < store.size(); ++i) {
    if (!store[i].trainable) continue;
    rmsprop_update(store[i].value, grads[i], state.sq_avg[i], lr, state.alpha, state.eps);
  }
}

double cosine_lr(std::size_t epoch, std::size_t total_epochs, double lr_max, double lr_min) {
  if (total_epochs == 0 || epoch > total_epochs) {
    throw std::out_of_range("cosine_lr: epoch " + std::to_string(epoch) + " outside [0, " +
                            std::to_string(total_epochs) + "]");
  }
  const double frac = static_cast<double>(epoch) / static_cast<double>(total_epochs);
  return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(std::numbers::pi * frac));
}

double clip_global_norm(std::vector<Tensor>& grads, double max_norm) {
  double ss = 0.0;
  for (const auto& g : grads)
    for (double v : g.data()) ss += v * v;
  const double norm = std::sqrt(ss);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (auto& g : grads)
      for (auto& v : g.storage()) v *= s;
  }
  return norm;
}

// ---- checkpoint ----

namespace {

constexpr std::string_view kCkptMagic = "SRVPCK1\n";

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
  }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out.insert(out.end(), s.begin(), s.end());
  }
  void tensors(const std::vector<NamedTensor>& ts) {
    u32(static_cast<std::uint32_t>(ts.size()));
    for (const auto& t : ts) {
      str(t.name);
      u32(static_cast<std::uint32_t>(t.value.rank()));
      for (auto d : t.value.shape()) u32(static_cast<std::uint32_t>(d));
      for (double v : t.value.data()) f64(v);
    }
  }
  std::vector<std::uint8_t> out;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : bytes(b) {}
  void need(std::size_t n) const {
    if (pos + n > bytes.size()) throw FormatError("checkpoint: truncated");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[pos + i]) << (8 * i);
    pos += 8;
    return std::bit_cast<double>(bits);
  }
  std::string str() {
    const auto n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes.data() + pos), n);
    pos += n;
    return s;
  }
  std::vector<NamedTensor> tensors() {
    const auto count = u32();
    std::vector<NamedTensor> ts;
    for (std::uint32_t k = 0; k < count; ++k) {
      NamedTensor t;
      t.name = str();
      const auto rank = u32();
      Shape shape;
      for (std::uint32_t d = 0; d < rank; ++d) shape.push_back(u32());
      const std::size_t n = shape_size(shape);
      need(8 * n);
      std::vector<double> values(n);
      for (auto& v : values) v = f64();
      try {
        t.value = Tensor(std::move(shape), std::move(values));
      } catch (const DimensionError& e) {
        throw FormatError(std::string("checkpoint: bad tensor '") + t.name + "': " + e.what());
      }
      ts.push_back(std::move(t));
    }
    return ts;
  }
  std::span<const std::uint8_t> bytes;
  std::size_t pos = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.out.assign(kCkptMagic.begin(), kCkptMagic.end());
  w.str(ckpt.config_text);
  w.u32(ckpt.epoch);
  w.str(ckpt.rng_state);
  w.f64(ckpt.best_val_mse);
  w.tensors(ckpt.params);
  w.tensors(ckpt.optimizer);
  return std::move(w.out);
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kCkptMagic.size() ||
      std::memcmp(bytes.data(), kCkptMagic.data(), kCkptMagic.size()) != 0) {
    throw FormatError("checkpoint: bad magic");
  }
  Reader r(bytes);
  r.pos = kCkptMagic.size();
  Checkpoint c;
  c.config_text = r.str();
  c.epoch = r.u32();
  c.rng_state = r.str();
  c.best_val_mse = r.f64();
  c.params = r.tensors();
  c.optimizer = r.tensors();
  if (r.pos != bytes.size()) throw FormatError("checkpoint: trailing bytes");
  return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(ckpt);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open for writing: " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

void restore_params(ParamStore& store, const std::vector<NamedTensor>& tensors) {
  if (tensors.size() != store.size()) {
    throw DimensionError("checkpoint holds " + std::to_string(tensors.size()) +
                         " tensors, model expects " + std::to_string(store.size()));
  }
  for (const auto& t : tensors) {
    const auto idx = store.find(t.name);
    if (!idx) throw DimensionError("checkpoint tensor '" + t.name + "' not in model");
    if (store[*idx].value.shape() != t.value.shape()) {
      throw DimensionError("checkpoint tensor '" + t.name + "' has shape " +
                           shape_str(t.value.shape()) + ", model expects " +
                           shape_str(store[*idx].value.shape()));
    }
  }
  for (const auto& t : tensors) store[*store.find(t.name)].value = t.value;
}

std::string training_log_csv(const std::vector<EpochLog>& log) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "epoch,lr,train_loss,val_mse\n";
  for (const auto& e : log) {
    os << e.epoch << ',' << e.lr << ',' << e.train_loss << ',' << e.val_mse << '\n';
  }
  return os.str();
}

// ---- training ----

StepResult sequence_step(const SrvpModel& model, const Tensor& inputs, const Tensor& targets,
                         bool teacher_forcing) {
  Binding params(model.params(), true, true);
  Var pred = rollout(model, params, inputs, model.config().pred_len,
                     teacher_forcing ? &targets : nullptr);
  Var loss = bce_loss(pred, constant(targets));
  backward(loss);
  return {loss.value().item(), params.gradients(), params.batch_stats()};
}

double evaluate_mse(const SrvpModel& model, const Dataset& ds) {
  if (ds.num_sequences == 0) throw std::invalid_argument("evaluate_mse: empty dataset");
  const auto& c = model.config();
  double total = 0.0;
  for (std::size_t i = 0; i < ds.num_sequences; ++i) {
    Tensor pred = predict(model, ds.frames_tensor(i, 0, c.input_len), c.pred_len);
    total += mse(pred, ds.frames_tensor(i, c.input_len, c.pred_len));
  }
  return total / static_cast<double>(ds.num_sequences);
}

Trainer::Trainer(SrvpModel& model, RunConfig config)
    : model_(model),
      config_(std::move(config)),
      optimizer_(make_optimizer_state(model.params())),
      rng_(config_.train.seed),
      best_val_(std::numeric_limits<double>::infinity()) {
  if (!(config_.model == model.config())) {
    throw std::invalid_argument("trainer: run config does not match the model");
  }
  if (config_.train.epochs == 0) throw std::invalid_argument("trainer: epochs must be >= 1");
}

EpochLog Trainer::run_epoch(const Dataset& train, const Dataset& val) {
  if (finished()) throw std::logic_error("trainer: all epochs already completed");
  const auto& tc = config_.train;
  const auto& mc = config_.model;
  const double lr = cosine_lr(epoch_, tc.epochs, tc.lr_max, tc.lr_min);
  BatchIterator batches(train, mc.input_len, mc.pred_len, tc.batch, rng_());

  double loss_sum = 0.0;
  std::size_t seen = 0;
  std::size_t batch_index = 0;
  Batch batch;
  while (batches.next(batch)) {
    const std::size_t B = batch.indices.size();
    std::vector<StepResult> results(B);
    std::vector<std::exception_ptr> errors(B);
    auto work = [&](std::size_t first, std::size_t stride) {
      for (std::size_t i = first; i < B; i += stride) {
        try {
          results[i] = sequence_step(model_, batch.inputs[i], batch.targets[i], tc.teacher_forcing);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    };
    const std::size_t workers = std::clamp<std::size_t>(tc.threads, 1, B);
    if (workers == 1) {
      work(0, 1);
    } else {
      std::vector<std::jthread> pool;
      for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w, workers);
    }
    for (std::size_t i = 0; i < B; ++i) {
      if (errors[i]) {
        try {
          std::rethrow_exception(errors[i]);
        } catch (const NumericalError& e) {
          throw NumericalError("batch " + std::to_string(batch_index) + ": " + e.what());
        }
      }
      if (!std::isfinite(results[i].loss)) {
        throw NumericalError("non-finite loss in batch " + std::to_string(batch_index));
      }
    }

    // Fixed-order reduction keeps the update independent of the thread count.
    std::vector<Tensor> grads = std::move(results[0].grads);
    double batch_loss = results[0].loss;
    for (std::size_t i = 1; i < B; ++i) {
      batch_loss += results[i].loss;
      for (std::size_t j = 0; j < grads.size(); ++j) {
        auto dst = grads[j].data();
        auto src = results[i].grads[j].data();
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
      }
    }
    const double inv_b = 1.0 / static_cast<double>(B);
    for (auto& g : grads)
      for (auto& v : g.storage()) v *= inv_b;
    if (tc.clip > 0.0) clip_global_norm(grads, tc.clip);
    rmsprop_step(model_.params(), grads, optimizer_, lr);
    for (std::size_t i = 0; i < B; ++i) {
      apply_batch_stats(model_.params(), results[i].stats, 0.1);
    }
    loss_sum += batch_loss;
    seen += B;
    ++batch_index;
  }

  EpochLog entry{epoch_ + 1, lr, loss_sum / static_cast<double>(seen), evaluate_mse(model_, val)};
  ++epoch_;
  log_.push_back(entry);
  if (entry.val_mse < best_val_) {
    best_val_ = entry.val_mse;
    best_ = checkpoint();
  }
  return entry;
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint c;
  c.config_text = to_config_text(config_);
  c.epoch = static_cast<std::uint32_t>(epoch_);
  std::ostringstream rng;
  rng << rng_;
  c.rng_state = rng.str();
  c.best_val_mse = best_val_;
  const ParamStore& store = model_.params();
  for (std::size_t i = 0; i < store.size(); ++i) {
    c.params.push_back({store[i].name, store[i].value});
    if (store[i].trainable) c.optimizer.push_back({store[i].name, optimizer_.sq_avg[i]});
  }
  return c;
}

void Trainer::restore(const Checkpoint& ckpt) {
  ParamStore& store = model_.params();
  restore_params(store, ckpt.params);
  const RunConfig saved = parse_config(ckpt.config_text);
  if (!(saved.model == config_.model)) {
    throw DimensionError("checkpoint model configuration differs from the current model");
  }
  OptimizerState opt = make_optimizer_state(store);
  for (const auto& t : ckpt.optimizer) {
    const auto idx = store.find(t.name);
    if (!idx || opt.sq_avg[*idx].shape() != t.value.shape()) {
      throw DimensionError("checkpoint optimizer state '" + t.name + "' does not match model");
    }
    opt.sq_avg[*idx] = t.value;
  }
  optimizer_ = std::move(opt);
  std::istringstream rng(ckpt.rng_state);
  rng >> rng_;
  if (!rng) throw FormatError("checkpoint: unreadable RNG state");
  epoch_ = ckpt.epoch;
  best_val_ = ckpt.best_val_mse;
  best_.reset();
}

FitResult fit(SrvpModel& model, const Dataset& train, const Dataset& val, const RunConfig& config) {
  Trainer trainer(model, config);
  while (!trainer.finished()) trainer.run_epoch(train, val);
  Checkpoint last = trainer.checkpoint();
  return {trainer.log(), trainer.best() ? *trainer.best() : last, std::move(last)};
}

}  // namespace srvp
