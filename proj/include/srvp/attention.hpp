#pragma once

#include <optional>
#include <string>

#include "srvp/layers.hpp"

namespace srvp {

/// Where the 1/sqrt(MHW) temperature is applied relative to the row-wise L2
/// normalization of the temporal similarity scores.
enum class TemporalLogitOrder { NormThenScale, ScaleThenNorm };

struct QkvProjections {
  ChannelLinear q, k, v;
};

/// Projections of the cross-attention fusion: one Q/K/V triple for the
/// temporal context and one for the spatial context.
struct CrossProjections {
  QkvProjections temporal;
  QkvProjections spatial;
};

/// Parameters of one attention pipeline (temporal attention, spatial
/// self-attention, optional cross-attention fusion) over `channels` channels.
struct AttentionBlock {
  std::size_t channels = 0;
  QkvProjections spatial;
  std::optional<CrossProjections> cross;
};

QkvProjections make_qkv(ParamStore& store, const std::string& name, std::size_t channels);
AttentionBlock make_attention_block(ParamStore& store, const std::string& name,
                                    std::size_t channels, bool with_cross);

struct AttentionOutput {
  Var output;
  /// Row-stochastic attention weights.
  Var weights;
};

/// softmax(q kᵀ / sqrt(cols)) v with the softmax over the key axis.
/// q, k, v: [M, cols].
AttentionOutput scaled_dot_attention(const Var& q, const Var& k, const Var& v);

/// target [L, F], reference [N, F] with F = channels·HW. Similarity
/// ω = target ⊗ referenceᵀ is L2-normalized per row and divided by sqrt(F)
/// (order per `order`), softmaxed over N, applied to the reference, then
/// averaged over L and reshaped to [channels, HW].
AttentionOutput temporal_attention(const Var& target, const Var& reference, std::size_t channels,
                                   TemporalLogitOrder order = TemporalLogitOrder::NormThenScale);

/// Reduces layer states [L, M, HW] to [M, HW] by L2-normalizing across L at
/// each coordinate and averaging over L.
Var reduce_layers(const Var& layer_states);

/// Q/K/V projections of `features` [M, HW] followed by scaled dot attention.
AttentionOutput project_and_attend(const Var& features, const QkvProjections& proj,
                                   const Binding& params);

/// reduce_layers followed by project_and_attend.
AttentionOutput spatial_self_attention(const Var& layer_states, const QkvProjections& proj,
                                       const Binding& params);

/// [softmax(Q_T K_Sᵀ/d_k) V_S ; softmax(Q_S K_Tᵀ/d_k) V_T] along channels.
Var cross_attention_fuse(const Var& temporal, const Var& spatial, const CrossProjections& proj,
                         const Binding& params);

struct AttentionFeatures {
  Var temporal;  // A^T [M, HW]
  Var spatial;   // A^S [M, HW]
  Var fused;     // [2M, HW]
};

/// Combines temporal and spatial contexts: cross-attention when the block has
/// cross projections, plain channel concatenation otherwise.
Var fuse_contexts(const Var& temporal, const Var& spatial, const AttentionBlock& block,
                  const Binding& params);

/// Standard attention: target layer states [L, M, HW] against encoder states
/// [N, M·HW].
AttentionFeatures standard_attention(const Var& layer_states, const Var& reference,
                                     const AttentionBlock& block, const Binding& params,
                                     TemporalLogitOrder order);

}  // namespace srvp
