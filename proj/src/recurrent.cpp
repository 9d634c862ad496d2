#include "srvp/recurrent.hpp"

namespace srvp {

ConvGruCell make_convgru_cell(ParamStore& store, const std::string& name, std::size_t in_ch,
                              std::size_t hidden, std::size_t kernel) {
  ConvGruCell cell;
  cell.in_ch = in_ch;
  cell.hidden = hidden;
  cell.x_reset = make_conv2d(store, name + ".W_xr", in_ch, hidden, kernel, false);
  cell.h_reset = make_conv2d(store, name + ".W_hr", hidden, hidden, kernel, false);
  cell.x_cand = make_conv2d(store, name + ".W_xg", in_ch, hidden, kernel, false);
  cell.h_cand = make_conv2d(store, name + ".W_hg", hidden, hidden, kernel, false);
  cell.x_update = make_conv2d(store, name + ".W_xz", in_ch, hidden, kernel, false);
  cell.h_update = make_conv2d(store, name + ".W_hz", hidden, hidden, kernel, false);
  cell.bias_reset = store.add(name + ".b_r", {hidden}, InitKind::Zeros);
  cell.bias_cand = store.add(name + ".b_g", {hidden}, InitKind::Zeros);
  cell.bias_update = store.add(name + ".b_z", {hidden}, InitKind::Zeros);
  return cell;
}

Var convgru_step(const Var& x, const Var& h_prev, const ConvGruCell& cell,
                 const Binding& params) {
  const std::size_t M = cell.hidden;
  if (x.value().rank() != 3 || x.value().dim(0) != cell.in_ch) {
    throw DimensionError("convgru_step: input " + shape_str(x.shape()) + " for a cell with " +
                         std::to_string(cell.in_ch) + " input channels");
  }
  const Shape state_shape{M, x.value().dim(1), x.value().dim(2)};
  if (h_prev.shape() != state_shape) {
    throw DimensionError("convgru_step: hidden state " + shape_str(h_prev.shape()) +
                         ", expected " + shape_str(state_shape));
  }

  // The three input-side convolutions share one im2col pass, as do the two
  // state-side convolutions that see h_prev directly.
  Var wx = concat({params(cell.x_reset.weight), params(cell.x_cand.weight),
                   params(cell.x_update.weight)},
                  0);
  Var bx = concat({params(cell.bias_reset), params(cell.bias_cand), params(cell.bias_update)}, 0);
  Var xs = conv2d(x, wx, bx);
  Var wh = concat({params(cell.h_reset.weight), params(cell.h_update.weight)}, 0);
  Var hs = conv2d(h_prev, wh, Var());

  Var r = sigmoid(slice(xs, 0, 0, M) + slice(hs, 0, 0, M));
  Var z = sigmoid(slice(xs, 0, 2 * M, 3 * M) + slice(hs, 0, M, 2 * M));
  Var g = tanh(slice(xs, 0, M, 2 * M) + conv2d(r * h_prev, params(cell.h_cand.weight), Var()));
  Var one_minus_z = constant(Tensor(state_shape, 1.0)) - z;
  return one_minus_z * g + z * h_prev;
}

GruStack make_gru_stack(ParamStore& store, const std::string& name, std::size_t layers,
                        std::size_t in_ch, std::size_t hidden, std::size_t kernel) {
  GruStack stack;
  for (std::size_t l = 0; l < layers; ++l) {
    stack.cells.push_back(make_convgru_cell(store, name + ".layer" + std::to_string(l),
                                            l == 0 ? in_ch : hidden, hidden, kernel));
  }
  return stack;
}

namespace {
Var frame_at(const Var& frames, std::size_t t) {
  const Shape& s = frames.shape();
  return reshape(slice(frames, 0, t, t + 1), {s[1], s[2], s[3]});
}
}  // namespace

Var stack_states(const std::vector<Var>& states) {
  std::vector<Var> rows;
  rows.reserve(states.size());
  for (const auto& s : states) {
    Shape sh = s.shape();
    sh.insert(sh.begin(), 1);
    rows.push_back(reshape(s, sh));
  }
  return concat(rows, 0);
}

EncoderOutput encode(const Var& frames, const GruStack& stack, const Binding& params) {
  if (frames.value().rank() != 4) {
    throw DimensionError("encode: frames must be [N,C,H,W], got " + shape_str(frames.shape()));
  }
  const std::size_t N = frames.value().dim(0);
  if (N == 0) throw DimensionError("encode: empty sequence");
  const Shape state_shape{stack.hidden(), frames.value().dim(2), frames.value().dim(3)};
  std::vector<Var> carry(stack.depth(), constant(Tensor(state_shape)));
  std::vector<Var> top;
  top.reserve(N);
  for (std::size_t t = 0; t < N; ++t) {
    carry = forecaster_step(frame_at(frames, t), carry, stack, params);
    top.push_back(carry.back());
  }
  return {stack_states(top), std::move(carry)};
}

std::vector<Var> forecaster_step(const Var& x, const std::vector<Var>& carry,
                                 const GruStack& stack, const Binding& params) {
  if (carry.size() != stack.depth()) {
    throw DimensionError("forecaster_step: carry has " + std::to_string(carry.size()) +
                         " layers, stack has " + std::to_string(stack.depth()));
  }
  std::vector<Var> next;
  next.reserve(carry.size());
  Var input = x;
  for (std::size_t l = 0; l < stack.depth(); ++l) {
    input = convgru_step(input, carry[l], stack.cells[l], params);
    next.push_back(input);
  }
  return next;
}

}  // namespace srvp
