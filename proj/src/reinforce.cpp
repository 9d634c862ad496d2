#include "srvp/reinforce.hpp"

#include <atomic>

namespace srvp {

namespace {
std::atomic<std::size_t> g_temporal_calls{0};
std::atomic<std::size_t> g_module_calls{0};

void count_module_call() { g_module_calls.fetch_add(1, std::memory_order_relaxed); }
}  // namespace

FrameExtractor make_frame_extractor(ParamStore& store, const std::string& name,
                                    std::size_t in_ch, std::size_t out_ch, std::size_t kernel) {
  FrameExtractor e;
  e.conv1 = make_conv2d(store, name + ".conv1", in_ch, out_ch, kernel, false);
  e.norm1 = make_batchnorm2d(store, name + ".bn1", out_ch);
  e.conv2 = make_conv2d(store, name + ".conv2", out_ch, out_ch, kernel, false);
  e.norm2 = make_batchnorm2d(store, name + ".bn2", out_ch);
  return e;
}

Var frame_features(const Var& frames, const FrameExtractor& extractor, Binding& params) {
  count_module_call();
  if (frames.value().rank() != 4 || frames.value().dim(1) != extractor.conv1.in_ch) {
    throw DimensionError("frame_features: frames " + shape_str(frames.shape()) +
                         " for an extractor over " + std::to_string(extractor.conv1.in_ch) +
                         " channels");
  }
  Var x = relu(normalize(conv2d(frames, extractor.conv1, params), extractor.norm1, params));
  return relu(normalize(conv2d(x, extractor.conv2, params), extractor.norm2, params));
}

Var self_correlation_map(const Var& x) {
  count_module_call();
  if (x.value().rank() != 2) {
    throw DimensionError("self_correlation_map: expected rank 2, got " + shape_str(x.shape()));
  }
  Var weights = softmax(x, 0);
  Var corr = matmul(x, transpose(weights));  // [R, R]
  return matmul(transpose(l2_normalize(corr, 0)), l2_normalize(x, 0));
}

Var temporal_self_correlation(const Var& features, const Var& encoder_states,
                              const NormLayer& norm, Binding& params) {
  count_module_call();
  if (features.shape() != encoder_states.shape() || features.value().rank() != 2) {
    throw DimensionError("temporal_self_correlation: X' " + shape_str(features.shape()) +
                         " vs h^E " + shape_str(encoder_states.shape()));
  }
  g_temporal_calls.fetch_add(1, std::memory_order_relaxed);
  return normalize(encoder_states + self_correlation_map(features), norm, params);
}

std::size_t temporal_self_correlation_calls() { return g_temporal_calls.load(); }
void reset_temporal_self_correlation_calls() { g_temporal_calls.store(0); }

std::size_t reinforce_module_calls() { return g_module_calls.load(); }
void reset_reinforce_module_calls() { g_module_calls.store(0); }

SpatialHead make_spatial_head(ParamStore& store, const std::string& name,
                              std::size_t stacked_ch, std::size_t hw, std::size_t out_ch) {
  return {make_layernorm(store, name + ".norm", {stacked_ch, hw}),
          make_conv2d(store, name + ".conv", stacked_ch, out_ch, 1)};
}

Var spatial_self_correlation(const Var& stacked_states, const SpatialHead& head,
                             std::size_t height, std::size_t width, Binding& params) {
  count_module_call();
  const Shape& s = stacked_states.shape();
  if (s.size() != 2 || s[0] != head.conv.in_ch || s[1] != height * width) {
    throw DimensionError("spatial_self_correlation: h^D " + shape_str(s) + " for a head over " +
                         std::to_string(head.conv.in_ch) + " channels");
  }
  Var reinforced = normalize(stacked_states + self_correlation_map(stacked_states), head.norm,
                             params);
  Var out = tanh(conv2d(reshape(reinforced, {s[0], height, width}), head.conv, params));
  return reshape(out, {head.conv.out_ch, s[1]});
}

AttentionFeatures rfa_fuse(const Var& reinforced_target, const Var& reinforced_reference,
                           const AttentionBlock& block, const Binding& params,
                           TemporalLogitOrder order) {
  count_module_call();
  const Shape& t = reinforced_target.shape();
  const Shape& r = reinforced_reference.shape();
  if (t.size() != 2 || t[0] != block.channels) {
    throw DimensionError("rfa_fuse: target " + shape_str(t) + " for " +
                         std::to_string(block.channels) + " channels");
  }
  if (r.size() != 2 || r[1] != t[0] * t[1]) {
    throw DimensionError("rfa_fuse: reference " + shape_str(r) + " does not match target " +
                         shape_str(t) + " (M' must equal M)");
  }
  Var a_t = temporal_attention(reshape(reinforced_target, {1, t[0] * t[1]}), reinforced_reference,
                               block.channels, order)
                .output;
  Var a_s = project_and_attend(reinforced_target, block.spatial, params).output;
  return {a_t, a_s, fuse_contexts(a_t, a_s, block, params)};
}

}  // namespace srvp
