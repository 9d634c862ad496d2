#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string_view>
#include <vector>

#include "srvp/tensor.hpp"

namespace srvp {

enum class OpKind {
  Leaf,
  Matmul,
  Transpose,
  Softmax,
  L2Normalize,
  Sigmoid,
  Tanh,
  Relu,
  Hadamard,
  Add,
  Sub,
  Scale,
  Concat,
  Slice,
  Reshape,
  MeanAxis,
  Sum,
  Mean,
  Conv2d,
  BatchNorm,
  LayerNorm,
  ChannelLinear,
  BceLoss,
};

std::string_view op_name(OpKind kind);
std::optional<OpKind> op_from_name(std::string_view name);

struct Node;

/// Handle to a node of the recorded computation. Cheap to copy.
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  const Tensor& value() const;
  /// Accumulated gradient; empty tensor if none reached this node.
  const Tensor& grad() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
  OpKind kind() const;
  explicit operator bool() const { return static_cast<bool>(node_); }

  Node& node() const { return *node_; }

 private:
  std::shared_ptr<Node> node_;
};

struct Node {
  OpKind kind = OpKind::Leaf;
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<Var> inputs;
  /// Reads `grad` and accumulates into inputs. Unset for leaves.
  std::function<void(Node&)> backward;
};

/// Adds `g` into `node.grad` if the node participates in differentiation.
void accumulate_grad(Node& node, Tensor g);

/// Records an op result. Inputs and the backward rule are retained only when
/// some input requires a gradient; the value is checked for NaN/Inf.
Var make_node(OpKind kind, Tensor value, std::vector<Var> inputs,
              std::function<void(Node&)> backward);

Var leaf(Tensor value, bool requires_grad = true);
inline Var constant(Tensor value) { return leaf(std::move(value), false); }

Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var softmax(const Var& x, std::size_t axis);
/// Unit Euclidean norm along `axis`; all-zero slices stay zero.
Var l2_normalize(const Var& x, std::size_t axis);
Var sigmoid(const Var& x);
Var tanh(const Var& x);
Var relu(const Var& x);
Var hadamard(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var scale(const Var& x, double s);
Var concat(const std::vector<Var>& xs, std::size_t axis);
Var slice(const Var& x, std::size_t axis, std::size_t begin, std::size_t end);
Var reshape(const Var& x, Shape shape);
/// Arithmetic mean over `axis`; the axis is removed (rank-1 inputs give shape {1}).
Var mean_axis(const Var& x, std::size_t axis);
Var sum(const Var& x);
Var mean(const Var& x);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return hadamard(a, b); }
inline Var operator*(double s, const Var& x) { return scale(x, s); }

/// Reverse sweep from a scalar root. Gradients accumulate additively across
/// fan-out; leaves keep their gradients in `grad()`.
void backward(const Var& root);

namespace testing {
/// Negative-control hook: multiplies the upstream gradient of every node of
/// `kind` by 1.5 during backward. Pass std::nullopt to restore.
void corrupt_backward(std::optional<OpKind> kind);
std::optional<OpKind> corrupted_op();
}  // namespace testing

/// Non-smooth points (ReLU at 0, all-zero normalization slices, loss clamps)
/// report which side the forward pass took. While a trace is open on the
/// current thread the choices are folded into a digest, so a finite-difference
/// stencil that straddles a kink can be recognized.
namespace kinks {
void record(bool side);
class Trace {
 public:
  Trace();
  ~Trace();
  Trace(const Trace&) = delete;
  Trace& operator=(const Trace&) = delete;
  std::uint64_t digest() const { return digest_; }

 private:
  friend void record(bool side);
  std::uint64_t digest_;
  Trace* outer_;
};
}  // namespace kinks

struct GradcheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  /// Coordinates whose step had to be reduced to keep the stencil on one
  /// side of every kink.
  std::size_t narrowed = 0;
};

using ScalarFn = std::function<Var(const std::vector<Var>&)>;

/// Numerical derivative estimators. ThreePoint is (f(x+h) − f(x−h))/2h.
/// Ridders starts from central differences at step h, shrinks the step by 1.4
/// up to ten times, Richardson-extrapolates the tableau and keeps the entry
/// with the smallest internal error estimate; it copes with both rounding
/// noise on tiny derivatives and strong curvature.
enum class FdStencil { ThreePoint, Ridders };

/// Central finite differences against reverse-mode gradients. Relative error
/// per coordinate is |ad - fd| / max(1e-8, |ad| + |fd|). When an evaluation
/// inside the stencil takes a different side of some kink than the base point,
/// the step for that coordinate is quartered (up to six times).
GradcheckResult gradcheck(const ScalarFn& fn, const std::vector<Tensor>& inputs,
                          double h = 1e-5, FdStencil stencil = FdStencil::ThreePoint);

/// Splits `shape` around `axis` into (outer, axis length, inner) extents.
struct AxisSplit {
  std::size_t outer;
  std::size_t len;
  std::size_t inner;
};
AxisSplit split_axis(const Shape& shape, std::size_t axis);

}  // namespace srvp
