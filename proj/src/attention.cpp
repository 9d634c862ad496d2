#include "srvp/attention.hpp"

#include <cmath>

namespace srvp {

QkvProjections make_qkv(ParamStore& store, const std::string& name, std::size_t channels) {
  return {make_channel_linear(store, name + ".W_q", channels, channels),
          make_channel_linear(store, name + ".W_k", channels, channels),
          make_channel_linear(store, name + ".W_v", channels, channels)};
}

AttentionBlock make_attention_block(ParamStore& store, const std::string& name,
                                    std::size_t channels, bool with_cross) {
  AttentionBlock block;
  block.channels = channels;
  block.spatial = make_qkv(store, name + ".spatial", channels);
  if (with_cross) {
    block.cross = CrossProjections{make_qkv(store, name + ".cross_temporal", channels),
                                   make_qkv(store, name + ".cross_spatial", channels)};
  }
  return block;
}

AttentionOutput scaled_dot_attention(const Var& q, const Var& k, const Var& v) {
  if (q.value().rank() != 2 || q.shape() != k.shape() || q.shape() != v.shape()) {
    throw DimensionError("scaled_dot_attention: q/k/v shapes " + shape_str(q.shape()) + ", " +
                         shape_str(k.shape()) + ", " + shape_str(v.shape()));
  }
  const double d_k = std::sqrt(static_cast<double>(q.value().dim(1)));
  Var weights = softmax(scale(matmul(q, transpose(k)), 1.0 / d_k), 1);
  return {matmul(weights, v), weights};
}

AttentionOutput temporal_attention(const Var& target, const Var& reference, std::size_t channels,
                                   TemporalLogitOrder order) {
  const Tensor& T = target.value();
  const Tensor& R = reference.value();
  if (T.rank() != 2 || R.rank() != 2 || T.dim(1) != R.dim(1)) {
    throw DimensionError("temporal_attention: feature dims differ, target " +
                         shape_str(T.shape()) + " reference " + shape_str(R.shape()));
  }
  const std::size_t F = T.dim(1);
  if (channels == 0 || F % channels != 0) {
    throw DimensionError("temporal_attention: " + std::to_string(F) +
                         " features not divisible into " + std::to_string(channels) +
                         " channels");
  }
  const double inv_d = 1.0 / std::sqrt(static_cast<double>(F));
  Var omega = matmul(target, transpose(reference));  // [L, N]
  Var logits = order == TemporalLogitOrder::NormThenScale
                   ? scale(l2_normalize(omega, 1), inv_d)
                   : l2_normalize(scale(omega, inv_d), 1);
  Var weights = softmax(logits, 1);
  Var context = mean_axis(matmul(weights, reference), 0);  // [F]
  return {reshape(context, {channels, F / channels}), weights};
}

Var reduce_layers(const Var& layer_states) {
  if (layer_states.value().rank() != 3) {
    throw DimensionError("reduce_layers: expected [L,M,HW], got " +
                         shape_str(layer_states.shape()));
  }
  return mean_axis(l2_normalize(layer_states, 0), 0);
}

AttentionOutput project_and_attend(const Var& features, const QkvProjections& proj,
                                   const Binding& params) {
  if (features.value().rank() != 2 || features.value().dim(0) != proj.q.in_ch) {
    throw DimensionError("spatial attention: features " + shape_str(features.shape()) +
                         " for projections over " + std::to_string(proj.q.in_ch) +
                         " channels");
  }
  return scaled_dot_attention(channel_linear(features, proj.q, params),
                              channel_linear(features, proj.k, params),
                              channel_linear(features, proj.v, params));
}

AttentionOutput spatial_self_attention(const Var& layer_states, const QkvProjections& proj,
                                       const Binding& params) {
  return project_and_attend(reduce_layers(layer_states), proj, params);
}

Var cross_attention_fuse(const Var& temporal, const Var& spatial, const CrossProjections& proj,
                         const Binding& params) {
  if (temporal.shape() != spatial.shape()) {
    throw DimensionError("cross_attention_fuse: A^T " + shape_str(temporal.shape()) +
                         " vs A^S " + shape_str(spatial.shape()));
  }
  const auto& pt = proj.temporal;
  const auto& ps = proj.spatial;
  Var q_t = channel_linear(temporal, pt.q, params);
  Var k_t = channel_linear(temporal, pt.k, params);
  Var v_t = channel_linear(temporal, pt.v, params);
  Var q_s = channel_linear(spatial, ps.q, params);
  Var k_s = channel_linear(spatial, ps.k, params);
  Var v_s = channel_linear(spatial, ps.v, params);
  Var temporal_from_spatial = scaled_dot_attention(q_t, k_s, v_s).output;
  Var spatial_from_temporal = scaled_dot_attention(q_s, k_t, v_t).output;
  return concat({temporal_from_spatial, spatial_from_temporal}, 0);
}

Var fuse_contexts(const Var& temporal, const Var& spatial, const AttentionBlock& block,
                  const Binding& params) {
  if (block.cross) return cross_attention_fuse(temporal, spatial, *block.cross, params);
  return concat({temporal, spatial}, 0);
}

AttentionFeatures standard_attention(const Var& layer_states, const Var& reference,
                                     const AttentionBlock& block, const Binding& params,
                                     TemporalLogitOrder order) {
  const Shape& s = layer_states.shape();
  if (s.size() != 3 || s[1] != block.channels) {
    throw DimensionError("standard_attention: layer states " + shape_str(s) + " for " +
                         std::to_string(block.channels) + " channels");
  }
  Var target = reshape(layer_states, {s[0], s[1] * s[2]});
  Var a_t = temporal_attention(target, reference, block.channels, order).output;
  Var a_s = spatial_self_attention(layer_states, block.spatial, params).output;
  return {a_t, a_s, fuse_contexts(a_t, a_s, block, params)};
}

}  // namespace srvp
