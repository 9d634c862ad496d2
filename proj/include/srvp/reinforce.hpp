#pragma once

#include <cstddef>
#include <string>

#include "srvp/attention.hpp"

namespace srvp {

/// Per-frame spatial feature extractor: two [conv → batchnorm → ReLU] blocks.
/// The convs carry no bias; batchnorm would cancel it.
struct FrameExtractor {
  Conv2dLayer conv1;
  NormLayer norm1;
  Conv2dLayer conv2;
  NormLayer norm2;
};

FrameExtractor make_frame_extractor(ParamStore& store, const std::string& name,
                                    std::size_t in_ch, std::size_t out_ch, std::size_t kernel);

/// frames [N,C,H,W] -> X' [N,M,H,W]. Batchnorm statistics in training mode
/// are taken over the N frames.
Var frame_features(const Var& frames, const FrameExtractor& extractor, Binding& params);

/// Self-correlation map of x [R, F] along its first axis:
///   S = softmax_R(x), G = x ⊗ Sᵀ (R×R), ψ = Norm_R(G)ᵀ ⊗ Norm_R(x)
/// where Norm_R is L2 normalization along the first axis.
Var self_correlation_map(const Var& x);

/// h'^E = LayerNorm(h^E + ψ^T(X')) with X', h^E both [N, MHW]. Each call
/// increments temporal_self_correlation_calls().
Var temporal_self_correlation(const Var& features, const Var& encoder_states,
                              const NormLayer& norm, Binding& params);

std::size_t temporal_self_correlation_calls();
void reset_temporal_self_correlation_calls();

/// Number of entries into any function of this module that computes on data
/// (extractor, both self-correlation maps, fusion).
std::size_t reinforce_module_calls();
void reset_reinforce_module_calls();

/// LayerNorm over all LM·HW entries, 1×1 convolution LM -> M', tanh.
struct SpatialHead {
  NormLayer norm;
  Conv2dLayer conv;
};

SpatialHead make_spatial_head(ParamStore& store, const std::string& name,
                              std::size_t stacked_ch, std::size_t hw, std::size_t out_ch);

/// h_t^D [LM, HW] -> h'^D [M', HW] via ψ^S and the spatial head.
/// `height` and `width` give the spatial layout of the HW axis.
Var spatial_self_correlation(const Var& stacked_states, const SpatialHead& head,
                             std::size_t height, std::size_t width, Binding& params);

/// Runs the attention pipeline on reinforced features: h'^D [M', HW] is the
/// single-row target, h'^E [N, M'·HW] the reference. Returns F2 [2M', HW].
AttentionFeatures rfa_fuse(const Var& reinforced_target, const Var& reinforced_reference,
                           const AttentionBlock& block, const Binding& params,
                           TemporalLogitOrder order);

}  // namespace srvp
