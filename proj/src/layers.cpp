#include "srvp/layers.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "gemm.hpp"

namespace srvp {

// ---- ParamStore ----

std::size_t ParamStore::add(std::string name, Shape shape, InitKind init, std::size_t fan_in,
                            std::size_t fan_out) {
  if (find(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  Param p{std::move(name), Tensor(std::move(shape)), true, init, fan_in, fan_out};
  if (init == InitKind::Ones) std::fill(p.value.storage().begin(), p.value.storage().end(), 1.0);
  params_.push_back(std::move(p));
  return params_.size() - 1;
}

std::size_t ParamStore::add_buffer(std::string name, Shape shape, double fill) {
  if (find(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  params_.push_back(Param{std::move(name), Tensor(std::move(shape), fill), false,
                          fill == 1.0 ? InitKind::Ones : InitKind::Zeros, 0, 0});
  return params_.size() - 1;
}

std::optional<std::size_t> ParamStore::find(const std::string& name) const {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name == name) return i;
  }
  return std::nullopt;
}

std::size_t ParamStore::trainable_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) {
    if (p.trainable) n += p.value.size();
  }
  return n;
}

std::vector<std::size_t> ParamStore::trainable_indices() const {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].trainable) idx.push_back(i);
  }
  return idx;
}

void param_init(ParamStore& store, std::uint64_t seed) {
  for (std::size_t i = 0; i < store.size(); ++i) {
    Param& p = store[i];
    auto& v = p.value.storage();
    switch (p.init) {
      case InitKind::Zeros:
        std::fill(v.begin(), v.end(), 0.0);
        break;
      case InitKind::Ones:
        std::fill(v.begin(), v.end(), 1.0);
        break;
      case InitKind::XavierUniform: {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(i)};
        std::mt19937_64 rng(seq);
        const double a = std::sqrt(6.0 / static_cast<double>(p.fan_in + p.fan_out));
        std::uniform_real_distribution<double> dist(-a, a);
        for (auto& x : v) x = dist(rng);
        break;
      }
    }
  }
}

// ---- Binding ----

Binding::Binding(const ParamStore& store, bool with_grad, bool training) : training_(training) {
  vars_.reserve(store.size());
  for (const auto& p : store.all()) vars_.push_back(leaf(p.value, with_grad && p.trainable));
}

Binding::Binding(const ParamStore& store, const std::vector<Var>& trainable, bool training)
    : training_(training) {
  std::size_t next = 0;
  vars_.reserve(store.size());
  for (const auto& p : store.all()) {
    if (!p.trainable) {
      vars_.push_back(constant(p.value));
      continue;
    }
    if (next >= trainable.size() || trainable[next].shape() != p.value.shape()) {
      throw DimensionError("binding: trainable tensor list does not match store at " + p.name);
    }
    vars_.push_back(trainable[next++]);
  }
  if (next != trainable.size()) throw DimensionError("binding: too many trainable tensors");
}

std::vector<Tensor> Binding::gradients() const {
  std::vector<Tensor> out;
  out.reserve(vars_.size());
  for (const auto& v : vars_) {
    out.push_back(v.grad().empty() ? Tensor(v.shape()) : v.grad());
  }
  return out;
}

void apply_batch_stats(ParamStore& store, const std::vector<BatchStats>& stats,
                       double momentum) {
  for (const auto& s : stats) {
    Tensor& rm = store[s.running_mean].value;
    Tensor& rv = store[s.running_var].value;
    const double unbias =
        s.count > 1 ? static_cast<double>(s.count) / static_cast<double>(s.count - 1) : 1.0;
    for (std::size_t c = 0; c < rm.size(); ++c) {
      rm[c] = (1.0 - momentum) * rm[c] + momentum * s.mean[c];
      rv[c] = (1.0 - momentum) * rv[c] + momentum * s.var[c] * unbias;
    }
  }
}

// ---- conv2d ----

namespace {

struct ConvGeom {
  std::size_t batch, cin, cout, h, w, k, pad;
  std::size_t hw() const { return h * w; }
  std::size_t patch() const { return cin * k * k; }
};

/// Per-thread scratch reused across calls so large patch buffers are not
/// reallocated (and zeroed) on every convolution.
double* scratch(std::size_t slot, std::size_t n) {
  thread_local std::vector<double> bufs[2];
  if (bufs[slot].size() < n) bufs[slot].resize(n);
  return bufs[slot].data();
}

void im2col(const double* x, const ConvGeom& g, double* cols) {
  const long H = static_cast<long>(g.h), W = static_cast<long>(g.w);
  const long pad = static_cast<long>(g.pad);
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.cin; ++c) {
    const double* xc = x + c * g.hw();
    for (std::size_t ki = 0; ki < g.k; ++ki) {
      for (std::size_t kj = 0; kj < g.k; ++kj, ++row) {
        double* dst = cols + row * g.hw();
        const long dy = static_cast<long>(ki) - pad;
        const long dx = static_cast<long>(kj) - pad;
        const long x0 = std::max(0L, -dx);
        const long x1 = std::min(W, W - dx);
        for (long y = 0; y < H; ++y) {
          double* drow = dst + y * W;
          const long sy = y + dy;
          if (sy < 0 || sy >= H) {
            std::fill(drow, drow + W, 0.0);
            continue;
          }
          std::fill(drow, drow + x0, 0.0);
          std::copy(xc + sy * W + x0 + dx, xc + sy * W + x1 + dx, drow + x0);
          std::fill(drow + x1, drow + W, 0.0);
        }
      }
    }
  }
}

void col2im(const double* cols, const ConvGeom& g, double* x) {
  const long H = static_cast<long>(g.h), W = static_cast<long>(g.w);
  const long pad = static_cast<long>(g.pad);
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.cin; ++c) {
    double* xc = x + c * g.hw();
    for (std::size_t ki = 0; ki < g.k; ++ki) {
      for (std::size_t kj = 0; kj < g.k; ++kj, ++row) {
        const double* src = cols + row * g.hw();
        const long dy = static_cast<long>(ki) - pad;
        const long dx = static_cast<long>(kj) - pad;
        const long x0 = std::max(0L, -dx);
        const long x1 = std::min(W, W - dx);
        for (long y = 0; y < H; ++y) {
          const long sy = y + dy;
          if (sy < 0 || sy >= H) continue;
          for (long xx = x0; xx < x1; ++xx) xc[sy * W + xx + dx] += src[y * W + xx];
        }
      }
    }
  }
}

}  // namespace

Var conv2d(const Var& x, const Var& weight, const Var& bias) {
  const Tensor& X = x.value();
  const Tensor& Wt = weight.value();
  if (Wt.rank() != 4 || Wt.dim(2) != Wt.dim(3) || Wt.dim(2) % 2 == 0) {
    throw DimensionError("conv2d: weight must be [out,in,k,k] with odd k, got " +
                         shape_str(Wt.shape()));
  }
  const bool batched = X.rank() == 4;
  if (X.rank() != 3 && !batched) {
    throw DimensionError("conv2d: input must be [C,H,W] or [N,C,H,W], got " +
                         shape_str(X.shape()));
  }
  const std::size_t off = batched ? 1 : 0;
  ConvGeom g{batched ? X.dim(0) : 1, X.dim(off), Wt.dim(0), X.dim(off + 1), X.dim(off + 2),
             Wt.dim(2), (Wt.dim(2) - 1) / 2};
  if (Wt.dim(1) != g.cin) {
    throw DimensionError("conv2d: channel mismatch, input " + shape_str(X.shape()) +
                         " weight " + shape_str(Wt.shape()));
  }
  if (bias && (bias.value().rank() != 1 || bias.value().dim(0) != g.cout)) {
    throw DimensionError("conv2d: bias shape " + shape_str(bias.shape()) + " for " +
                         std::to_string(g.cout) + " output channels");
  }

  Shape out_shape = batched ? Shape{g.batch, g.cout, g.h, g.w} : Shape{g.cout, g.h, g.w};
  Tensor out(out_shape);
  const bool pointwise = g.k == 1;
  double* cols = pointwise ? nullptr : scratch(0, g.patch() * g.hw());
  for (std::size_t n = 0; n < g.batch; ++n) {
    const double* xn = X.data().data() + n * g.cin * g.hw();
    double* on = out.data().data() + n * g.cout * g.hw();
    if (!pointwise) im2col(xn, g, cols);
    detail::gemm(false, false, g.cout, g.hw(), g.patch(), Wt.data().data(),
                 pointwise ? xn : cols, on, false);
    if (bias) {
      for (std::size_t c = 0; c < g.cout; ++c) {
        const double b = bias.value()[c];
        for (std::size_t p = 0; p < g.hw(); ++p) on[c * g.hw() + p] += b;
      }
    }
  }

  std::vector<Var> inputs{x, weight};
  if (bias) inputs.push_back(bias);
  return make_node(OpKind::Conv2d, std::move(out), std::move(inputs), [g](Node& node) {
    Node& nx = node.inputs[0].node();
    Node& nw = node.inputs[1].node();
    const Tensor& G = node.grad;
    const bool pointwise = g.k == 1;
    Tensor gw;
    if (nw.requires_grad) gw = Tensor(nw.value.shape());
    Tensor gx;
    if (nx.requires_grad) gx = Tensor(nx.value.shape());
    double* cols = pointwise ? nullptr : scratch(0, g.patch() * g.hw());
    double* dcols = pointwise || !nx.requires_grad ? nullptr : scratch(1, g.patch() * g.hw());
    for (std::size_t n = 0; n < g.batch; ++n) {
      const double* xn = nx.value.data().data() + n * g.cin * g.hw();
      const double* gn = G.data().data() + n * g.cout * g.hw();
      if (nw.requires_grad) {
        if (!pointwise) im2col(xn, g, cols);
        detail::gemm(false, true, g.cout, g.patch(), g.hw(), gn, pointwise ? xn : cols,
                     gw.data().data(), true);
      }
      if (nx.requires_grad) {
        double* gxn = gx.data().data() + n * g.cin * g.hw();
        if (pointwise) {
          detail::gemm(true, false, g.cin, g.hw(), g.cout, nw.value.data().data(), gn, gxn, true);
        } else {
          detail::gemm(true, false, g.patch(), g.hw(), g.cout, nw.value.data().data(), gn,
                       dcols, false);
          col2im(dcols, g, gxn);
        }
      }
    }
    if (nx.requires_grad) accumulate_grad(nx, std::move(gx));
    if (nw.requires_grad) accumulate_grad(nw, std::move(gw));
    if (node.inputs.size() > 2 && node.inputs[2].requires_grad()) {
      Tensor gb({g.cout});
      for (std::size_t n = 0; n < g.batch; ++n)
        for (std::size_t c = 0; c < g.cout; ++c)
          for (std::size_t p = 0; p < g.hw(); ++p) gb[c] += G[(n * g.cout + c) * g.hw() + p];
      accumulate_grad(node.inputs[2].node(), std::move(gb));
    }
  });
}

// ---- normalization ----

namespace {

/// Shared backward for normalize-then-affine over groups. Each group holds the
/// indices normalized together; `gamma_index(i)` maps an element to its scale.
template <typename GroupFn, typename GammaFn>
void norm_backward(Node& node, const Tensor& xhat, const std::vector<double>& inv_std,
                   std::size_t groups, std::size_t group_len, GroupFn element, GammaFn gamma_at,
                   bool through_stats) {
  Node& nx = node.inputs[0].node();
  Node& ng = node.inputs[1].node();
  Node& nb = node.inputs[2].node();
  const Tensor& G = node.grad;
  Tensor gx, gg, gb;
  if (nx.requires_grad) gx = Tensor(nx.value.shape());
  if (ng.requires_grad) gg = Tensor(ng.value.shape());
  if (nb.requires_grad) gb = Tensor(nb.value.shape());
  const double inv_len = 1.0 / static_cast<double>(group_len);
  for (std::size_t grp = 0; grp < groups; ++grp) {
    double mean_d = 0.0, mean_dx = 0.0;
    for (std::size_t j = 0; j < group_len; ++j) {
      const std::size_t i = element(grp, j);
      const std::size_t gi = gamma_at(i);
      if (ng.requires_grad) gg[gi] += G[i] * xhat[i];
      if (nb.requires_grad) gb[gi] += G[i];
      const double d = G[i] * ng.value[gi];
      mean_d += d;
      mean_dx += d * xhat[i];
    }
    if (!nx.requires_grad) continue;
    mean_d *= inv_len;
    mean_dx *= inv_len;
    for (std::size_t j = 0; j < group_len; ++j) {
      const std::size_t i = element(grp, j);
      const double d = G[i] * ng.value[gamma_at(i)];
      gx[i] = through_stats ? inv_std[grp] * (d - mean_d - xhat[i] * mean_dx) : inv_std[grp] * d;
    }
  }
  if (nx.requires_grad) accumulate_grad(nx, std::move(gx));
  if (ng.requires_grad) accumulate_grad(ng, std::move(gg));
  if (nb.requires_grad) accumulate_grad(nb, std::move(gb));
}

}  // namespace

Var batchnorm2d(const Var& x, const Var& gamma, const Var& beta, bool training,
                const Tensor& running_mean, const Tensor& running_var, double eps,
                Tensor* mean_out, Tensor* var_out) {
  const Tensor& X = x.value();
  if (X.rank() != 4) {
    throw DimensionError("batchnorm2d: expected [N,C,H,W], got " + shape_str(X.shape()));
  }
  const std::size_t N = X.dim(0), C = X.dim(1), HW = X.dim(2) * X.dim(3);
  if (gamma.value().size() != C || beta.value().size() != C) {
    throw DimensionError("batchnorm2d: affine size does not match " + std::to_string(C) +
                         " channels");
  }
  const std::size_t count = N * HW;
  std::vector<double> mu(C), var(C), inv_std(C);
  for (std::size_t c = 0; c < C; ++c) {
    if (training) {
      double s = 0.0;
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t p = 0; p < HW; ++p) s += X[(n * C + c) * HW + p];
      mu[c] = s / static_cast<double>(count);
      double v = 0.0;
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t p = 0; p < HW; ++p) {
          const double d = X[(n * C + c) * HW + p] - mu[c];
          v += d * d;
        }
      var[c] = v / static_cast<double>(count);
    } else {
      mu[c] = running_mean[c];
      var[c] = running_var[c];
    }
    inv_std[c] = 1.0 / std::sqrt(var[c] + eps);
  }
  if (training && mean_out) *mean_out = Tensor({C}, mu);
  if (training && var_out) *var_out = Tensor({C}, var);

  Tensor xhat(X.shape());
  Tensor y(X.shape());
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t p = 0; p < HW; ++p) {
        const std::size_t i = (n * C + c) * HW + p;
        xhat[i] = (X[i] - mu[c]) * inv_std[c];
        y[i] = gamma.value()[c] * xhat[i] + beta.value()[c];
      }
  return make_node(OpKind::BatchNorm, std::move(y), {x, gamma, beta},
                   [xhat = std::move(xhat), inv_std, N, C, HW, training](Node& node) {
                     norm_backward(
                         node, xhat, inv_std, C, N * HW,
                         [=](std::size_t c, std::size_t j) {
                           return ((j / HW) * C + c) * HW + j % HW;
                         },
                         [=](std::size_t i) { return (i / HW) % C; }, training);
                   });
}

Var layernorm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  const Tensor& X = x.value();
  const std::size_t F = gamma.value().size();
  if (beta.value().size() != F || F == 0 || X.size() % F != 0) {
    throw DimensionError("layernorm: feature size " + std::to_string(F) +
                         " does not divide input " + shape_str(X.shape()));
  }
  const std::size_t groups = X.size() / F;
  std::vector<double> inv_std(groups);
  Tensor xhat(X.shape());
  Tensor y(X.shape());
  for (std::size_t grp = 0; grp < groups; ++grp) {
    double s = 0.0;
    for (std::size_t j = 0; j < F; ++j) s += X[grp * F + j];
    const double mu = s / static_cast<double>(F);
    double v = 0.0;
    for (std::size_t j = 0; j < F; ++j) {
      const double d = X[grp * F + j] - mu;
      v += d * d;
    }
    inv_std[grp] = 1.0 / std::sqrt(v / static_cast<double>(F) + eps);
    for (std::size_t j = 0; j < F; ++j) {
      const std::size_t i = grp * F + j;
      xhat[i] = (X[i] - mu) * inv_std[grp];
      y[i] = gamma.value()[j] * xhat[i] + beta.value()[j];
    }
  }
  return make_node(OpKind::LayerNorm, std::move(y), {x, gamma, beta},
                   [xhat = std::move(xhat), inv_std, groups, F](Node& node) {
                     norm_backward(
                         node, xhat, inv_std, groups, F,
                         [=](std::size_t grp, std::size_t j) { return grp * F + j; },
                         [=](std::size_t i) { return i % F; }, true);
                   });
}

// ---- channel_linear ----

Var channel_linear(const Var& x, const Var& weight, const Var& bias) {
  const Tensor& X = x.value();
  const Tensor& Wt = weight.value();
  if (X.rank() != 2 || Wt.rank() != 2 || Wt.dim(1) != X.dim(0)) {
    throw DimensionError("channel_linear: channel mismatch, input " + shape_str(X.shape()) +
                         " weight " + shape_str(Wt.shape()));
  }
  const std::size_t out_ch = Wt.dim(0), in_ch = Wt.dim(1), cols = X.dim(1);
  if (bias && bias.value().size() != out_ch) {
    throw DimensionError("channel_linear: bias size mismatch");
  }
  Tensor y({out_ch, cols});
  detail::gemm(false, false, out_ch, cols, in_ch, Wt.data().data(), X.data().data(),
               y.data().data(), false);
  if (bias) {
    for (std::size_t o = 0; o < out_ch; ++o)
      for (std::size_t c = 0; c < cols; ++c) y[o * cols + c] += bias.value()[o];
  }
  std::vector<Var> inputs{x, weight};
  if (bias) inputs.push_back(bias);
  return make_node(OpKind::ChannelLinear, std::move(y), std::move(inputs),
                   [out_ch, in_ch, cols](Node& node) {
                     const Tensor& G = node.grad;
                     Node& nx = node.inputs[0].node();
                     Node& nw = node.inputs[1].node();
                     if (nx.requires_grad) {
                       Tensor gx({in_ch, cols});
                       detail::gemm(true, false, in_ch, cols, out_ch, nw.value.data().data(),
                                    G.data().data(), gx.data().data(), false);
                       accumulate_grad(nx, std::move(gx));
                     }
                     if (nw.requires_grad) {
                       Tensor gw({out_ch, in_ch});
                       detail::gemm(false, true, out_ch, in_ch, cols, G.data().data(),
                                    nx.value.data().data(), gw.data().data(), false);
                       accumulate_grad(nw, std::move(gw));
                     }
                     if (node.inputs.size() > 2 && node.inputs[2].requires_grad()) {
                       Tensor gb({out_ch});
                       for (std::size_t o = 0; o < out_ch; ++o)
                         for (std::size_t c = 0; c < cols; ++c) gb[o] += G[o * cols + c];
                       accumulate_grad(node.inputs[2].node(), std::move(gb));
                     }
                   });
}

// ---- layer wrappers ----

Conv2dLayer make_conv2d(ParamStore& store, const std::string& name, std::size_t in_ch,
                        std::size_t out_ch, std::size_t kernel, bool with_bias) {
  if (kernel % 2 == 0) throw DimensionError("conv2d kernel must be odd: " + name);
  Conv2dLayer layer;
  layer.in_ch = in_ch;
  layer.out_ch = out_ch;
  layer.kernel = kernel;
  layer.weight = store.add(name + ".weight", {out_ch, in_ch, kernel, kernel},
                           InitKind::XavierUniform, in_ch * kernel * kernel,
                           out_ch * kernel * kernel);
  if (with_bias) layer.bias = store.add(name + ".bias", {out_ch}, InitKind::Zeros);
  return layer;
}

Var conv2d(const Var& x, const Conv2dLayer& layer, const Binding& params) {
  return conv2d(x, params(layer.weight), layer.bias ? params(*layer.bias) : Var());
}

NormLayer make_batchnorm2d(ParamStore& store, const std::string& name, std::size_t channels) {
  NormLayer layer;
  layer.kind = NormKind::BatchNorm2d;
  layer.scale = store.add(name + ".scale", {channels}, InitKind::Ones);
  layer.shift = store.add(name + ".shift", {channels}, InitKind::Zeros);
  layer.running_mean = store.add_buffer(name + ".running_mean", {channels}, 0.0);
  layer.running_var = store.add_buffer(name + ".running_var", {channels}, 1.0);
  return layer;
}

NormLayer make_layernorm(ParamStore& store, const std::string& name, Shape feature_shape) {
  NormLayer layer;
  layer.kind = NormKind::LayerNorm;
  layer.scale = store.add(name + ".scale", feature_shape, InitKind::Ones);
  layer.shift = store.add(name + ".shift", feature_shape, InitKind::Zeros);
  return layer;
}

Var normalize(const Var& x, const NormLayer& layer, Binding& params) {
  if (layer.kind == NormKind::LayerNorm) {
    return layernorm(x, params(layer.scale), params(layer.shift), layer.eps);
  }
  const Tensor& rm = params(*layer.running_mean).value();
  const Tensor& rv = params(*layer.running_var).value();
  Tensor mean, var;
  Var y = batchnorm2d(x, params(layer.scale), params(layer.shift), params.training(), rm, rv,
                      layer.eps, &mean, &var);
  if (params.training()) {
    const std::size_t count = x.value().size() / x.value().dim(1);
    params.record({*layer.running_mean, *layer.running_var, std::move(mean), std::move(var),
                   count});
  }
  return y;
}

ChannelLinear make_channel_linear(ParamStore& store, const std::string& name, std::size_t in_ch,
                                  std::size_t out_ch, bool with_bias) {
  ChannelLinear layer;
  layer.in_ch = in_ch;
  layer.out_ch = out_ch;
  layer.weight = store.add(name + ".weight", {out_ch, in_ch}, InitKind::XavierUniform, in_ch,
                           out_ch);
  if (with_bias) layer.bias = store.add(name + ".bias", {out_ch}, InitKind::Zeros);
  return layer;
}

Var channel_linear(const Var& x, const ChannelLinear& layer, const Binding& params) {
  return channel_linear(x, params(layer.weight), layer.bias ? params(*layer.bias) : Var());
}

}  // namespace srvp
