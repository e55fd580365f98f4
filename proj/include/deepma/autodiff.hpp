#pragma once

#include <complex>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "deepma/tensor.hpp"

namespace deepma {

enum class OpKind {
  input,
  parameter,
  conv2d,
  transposed_conv2d,
  gdn,
  igdn,
  dense,
  relu,
  prelu,
  sigmoid,
  soft_clip,
  channel_mean,
  mse,
  add,
  scale,
  sum,
  reshape,
  concat,
  channel_scale,
  square_plus,
  power_normalize,
  complex_scale,
};

const char* op_name(OpKind kind);

// Learnable tensor with its accumulated gradient.
template <typename Scalar>
struct Parameter {
  std::string name;
  Tensor<Scalar> value;
  Tensor<Scalar> grad;

  Parameter() = default;
  Parameter(std::string n, Tensor<Scalar> v)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

  void zero_grad() { grad.data().setZero(); }
};

template <typename Scalar>
class Graph;

// Handle to a node of a graph. Cheap to copy; valid while the graph lives.
template <typename Scalar>
struct Var {
  Graph<Scalar>* graph = nullptr;
  int id = -1;

  const Tensor<Scalar>& value() const { return graph->value(id); }
  const Shape& shape() const { return graph->value(id).shape(); }
  Index dim(int axis) const { return shape().at(static_cast<std::size_t>(axis)); }
};

// Tape of operations recorded in execution order (which is a topological order).
template <typename Scalar>
class Graph {
 public:
  using TensorT = Tensor<Scalar>;
  using BackwardFn = std::function<void(Graph&, int)>;

  struct Node {
    OpKind kind = OpKind::input;
    std::vector<int> inputs;
    TensorT value;
    TensorT grad;
    BackwardFn backward;
    Parameter<Scalar>* param = nullptr;
    bool needs_grad = false;
  };

  explicit Graph(std::uint64_t seed = 0) : seed_(seed) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Constant leaf; receives no gradient.
  Var<Scalar> input(TensorT value);
  // Leaf bound to a parameter; backward() accumulates into param.grad.
  Var<Scalar> parameter(Parameter<Scalar>& param);

  Var<Scalar> record(OpKind kind, std::vector<int> inputs, TensorT value, BackwardFn backward);

  const Node& node(int id) const { return nodes_.at(static_cast<std::size_t>(id)); }
  const TensorT& value(int id) const { return node(id).value; }
  bool needs_grad(int id) const { return node(id).needs_grad; }
  // Gradient buffer of a node, zero-initialized on first access.
  TensorT& grad(int id);

  // Reverse-mode sweep from a scalar loss. Parameter gradients are added to
  // Parameter::grad, so callers zero them between steps.
  void backward(Var<Scalar> loss);

  std::size_t size() const { return nodes_.size(); }
  std::uint64_t seed() const { return seed_; }

 private:
  std::vector<Node> nodes_;
  std::uint64_t seed_;
};

template <typename Scalar>
void backward(Var<Scalar> loss) {
  loss.graph->backward(loss);
}

// Convolution with kernel [Cout, Cin, kh, kw]; cross-correlation semantics.
template <typename Scalar>
Var<Scalar> conv2d(Var<Scalar> input, Var<Scalar> kernel, Var<Scalar> bias, int stride,
                   int padding);

// Transposed convolution with kernel [Cin, Cout, kh, kw]. Output extent is
// (H-1)*stride - 2*padding + kh + (stride-1), so a 3x3 kernel with padding 1
// maps H to H*stride.
template <typename Scalar>
Var<Scalar> transposed_conv2d(Var<Scalar> input, Var<Scalar> kernel, Var<Scalar> bias,
                              int stride, int padding);

// out_i = in_i / sqrt(beta_i + sum_j gamma_ij in_j^2) across channels.
template <typename Scalar>
Var<Scalar> gdn(Var<Scalar> input, Var<Scalar> beta, Var<Scalar> gamma);
// out_i = in_i * sqrt(beta_i + sum_j gamma_ij in_j^2)
template <typename Scalar>
Var<Scalar> igdn(Var<Scalar> input, Var<Scalar> beta, Var<Scalar> gamma);

// [B,F] x [F,G] + [G]
template <typename Scalar>
Var<Scalar> dense(Var<Scalar> input, Var<Scalar> weight, Var<Scalar> bias);

template <typename Scalar>
Var<Scalar> relu(Var<Scalar> input);
template <typename Scalar>
Var<Scalar> sigmoid(Var<Scalar> input);
// limit * tanh(input / limit): identity near zero, bounded by +-limit.
template <typename Scalar>
Var<Scalar> soft_clip(Var<Scalar> input, Scalar limit);
// Per-channel slope alpha[C] for negative inputs; channel axis is 1.
template <typename Scalar>
Var<Scalar> prelu(Var<Scalar> input, Var<Scalar> alpha);

// [B,C,H,W] -> [B,C], mean over the spatial extent.
template <typename Scalar>
Var<Scalar> channel_mean(Var<Scalar> input);

template <typename Scalar>
Var<Scalar> mse(Var<Scalar> a, Var<Scalar> b);

template <typename Scalar>
Var<Scalar> add(Var<Scalar> a, Var<Scalar> b);
template <typename Scalar>
Var<Scalar> scale(Var<Scalar> a, Scalar factor);
template <typename Scalar>
Var<Scalar> sum(Var<Scalar> a);
template <typename Scalar>
Var<Scalar> reshape(Var<Scalar> a, Shape shape);
// [B,F1] ++ [B,F2] -> [B,F1+F2]
template <typename Scalar>
Var<Scalar> concat_columns(Var<Scalar> a, Var<Scalar> b);
// x[B,C,...] * s[B,C] broadcast over the trailing axes.
template <typename Scalar>
Var<Scalar> channel_scale(Var<Scalar> x, Var<Scalar> s);
// x^2 + floor, elementwise. Used to keep reparameterized quantities positive.
template <typename Scalar>
Var<Scalar> square_plus(Var<Scalar> x, Scalar floor);

// Rows of y[B,2K] hold K interleaved complex symbols. Each row is scaled to
// sqrt(K*power) * y / ||y||, giving average symbol power `power`.
template <typename Scalar>
Var<Scalar> power_normalize(Var<Scalar> y, double power);

// Multiplies the complex symbols of row b of z[B,2K] by the constant coeffs[b].
template <typename Scalar>
Var<Scalar> complex_scale(Var<Scalar> z, const std::vector<std::complex<double>>& coeffs);

template <typename Scalar>
Var<Scalar> operator+(Var<Scalar> a, Var<Scalar> b) {
  return add(a, b);
}

template <typename Scalar>
Var<Scalar> operator*(Scalar factor, Var<Scalar> a) {
  return scale(a, factor);
}

}  // namespace deepma
