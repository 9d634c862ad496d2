#pragma once

#include <string>
#include <vector>

#include "srvp/layers.hpp"

namespace srvp {

/// Convolutional GRU cell:
///   r = σ(W_xr∗x + W_hr∗h + b_r)
///   g = tanh(W_xg∗x + W_hg∗(r∘h) + b_g)
///   z = σ(W_xz∗x + W_hz∗h + b_z)
///   h' = (1−z)∘g + z∘h
struct ConvGruCell {
  std::size_t in_ch = 0;
  std::size_t hidden = 0;
  Conv2dLayer x_reset, h_reset, x_cand, h_cand, x_update, h_update;
  std::size_t bias_reset = 0, bias_cand = 0, bias_update = 0;
};

ConvGruCell make_convgru_cell(ParamStore& store, const std::string& name, std::size_t in_ch,
                              std::size_t hidden, std::size_t kernel);

/// x: [C,H,W], h_prev: [M,H,W] -> [M,H,W].
Var convgru_step(const Var& x, const Var& h_prev, const ConvGruCell& cell,
                 const Binding& params);

/// L vertically stacked cells; layer 0 consumes frames, layer l consumes layer l−1.
struct GruStack {
  std::vector<ConvGruCell> cells;
  std::size_t depth() const { return cells.size(); }
  std::size_t hidden() const { return cells.front().hidden; }
};

GruStack make_gru_stack(ParamStore& store, const std::string& name, std::size_t layers,
                        std::size_t in_ch, std::size_t hidden, std::size_t kernel);

struct EncoderOutput {
  /// Top-layer state per input frame, [N,M,H,W].
  Var states;
  /// Final state of every layer, each [M,H,W].
  std::vector<Var> carry;
};

/// Runs the stack over frames [N,C,H,W] from zero initial states.
EncoderOutput encode(const Var& frames, const GruStack& stack, const Binding& params);

/// One vertical pass through the stack. Returns the new state of every layer,
/// which is both h^D for this step and the carry for the next.
std::vector<Var> forecaster_step(const Var& x, const std::vector<Var>& carry,
                                 const GruStack& stack, const Binding& params);

/// Stacks equally shaped [M,H,W] states into [L,M,H,W].
Var stack_states(const std::vector<Var>& states);

}  // namespace srvp
