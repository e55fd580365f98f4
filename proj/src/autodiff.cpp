#include "deepma/autodiff.hpp"

#include <cmath>
#include <memory>
#include <sstream>

namespace deepma {

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::input: return "input";
    case OpKind::parameter: return "parameter";
    case OpKind::conv2d: return "conv2d";
    case OpKind::transposed_conv2d: return "transposed_conv2d";
    case OpKind::gdn: return "gdn";
    case OpKind::igdn: return "igdn";
    case OpKind::dense: return "dense";
    case OpKind::relu: return "relu";
    case OpKind::prelu: return "prelu";
    case OpKind::sigmoid: return "sigmoid";
    case OpKind::soft_clip: return "soft_clip";
    case OpKind::channel_mean: return "channel_mean";
    case OpKind::mse: return "mse";
    case OpKind::add: return "add";
    case OpKind::scale: return "scale";
    case OpKind::sum: return "sum";
    case OpKind::reshape: return "reshape";
    case OpKind::concat: return "concat";
    case OpKind::channel_scale: return "channel_scale";
    case OpKind::square_plus: return "square_plus";
    case OpKind::power_normalize: return "power_normalize";
    case OpKind::complex_scale: return "complex_scale";
  }
  return "unknown";
}

template <typename Scalar>
Var<Scalar> Graph<Scalar>::input(TensorT value) {
  Node n;
  n.kind = OpKind::input;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

template <typename Scalar>
Var<Scalar> Graph<Scalar>::parameter(Parameter<Scalar>& param) {
  Node n;
  n.kind = OpKind::parameter;
  n.value = param.value;
  n.param = &param;
  n.needs_grad = true;
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

template <typename Scalar>
Var<Scalar> Graph<Scalar>::record(OpKind kind, std::vector<int> inputs, TensorT value,
                                  BackwardFn backward) {
  Node n;
  n.kind = kind;
  n.value = std::move(value);
  for (int in : inputs) n.needs_grad = n.needs_grad || needs_grad(in);
  n.inputs = std::move(inputs);
  if (n.needs_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

template <typename Scalar>
Tensor<Scalar>& Graph<Scalar>::grad(int id) {
  Node& n = nodes_.at(static_cast<std::size_t>(id));
  if (n.grad.empty()) n.grad = TensorT(n.value.shape());
  return n.grad;
}

template <typename Scalar>
void Graph<Scalar>::backward(Var<Scalar> loss) {
  if (loss.graph != this) throw ContractViolation("backward: loss belongs to another graph");
  if (value(loss.id).size() != 1) {
    throw ContractViolation("backward: loss must be scalar, got shape " +
                            shape_string(value(loss.id).shape()));
  }
  for (Node& n : nodes_) n.grad = TensorT();
  grad(loss.id).data().setOnes();
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.needs_grad || n.grad.empty()) continue;
    if (n.backward) n.backward(*this, id);
    if (n.param) n.param->grad.data() += n.grad.data();
  }
}

template class Graph<float>;
template class Graph<double>;

namespace {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

template <typename S>
Graph<S>& same_graph(std::initializer_list<Var<S>> vars) {
  Graph<S>* g = vars.begin()->graph;
  for (const auto& v : vars) {
    if (v.graph != g || g == nullptr) throw ContractViolation("operands belong to different graphs");
  }
  return *g;
}

void require_rank(const char* op, const char* what, const Shape& s, int rank) {
  if (static_cast<int>(s.size()) != rank) {
    throw InvalidShape(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) +
                       ", got " + shape_string(s));
  }
}

void require_same(const char* op, const Shape& a, const Shape& b) {
  if (a != b) {
    throw InvalidShape(std::string(op) + ": shape mismatch " + shape_string(a) + " vs " +
                       shape_string(b));
  }
}

Index trailing_size(const Shape& s, std::size_t from) {
  Index n = 1;
  for (std::size_t i = from; i < s.size(); ++i) n *= s[i];
  return n;
}

// [B,C,P] row-major  <->  (B*P x C) column-major, row index b*P + p.
template <typename S>
Mat<S> gather_rows(const S* data, Index batch, Index channels, Index pixels) {
  Mat<S> m(batch * pixels, channels);
  for (Index b = 0; b < batch; ++b) {
    for (Index c = 0; c < channels; ++c) {
      const S* src = data + (b * channels + c) * pixels;
      S* dst = m.data() + c * batch * pixels + b * pixels;
      std::copy(src, src + pixels, dst);
    }
  }
  return m;
}

template <typename S>
void scatter_rows(const Mat<S>& m, Index batch, Index channels, Index pixels, S* data,
                  bool accumulate) {
  for (Index b = 0; b < batch; ++b) {
    for (Index c = 0; c < channels; ++c) {
      const S* src = m.data() + c * batch * pixels + b * pixels;
      S* dst = data + (b * channels + c) * pixels;
      if (accumulate) {
        for (Index p = 0; p < pixels; ++p) dst[p] += src[p];
      } else {
        std::copy(src, src + pixels, dst);
      }
    }
  }
}

struct ConvGeometry {
  Index batch, channels, in_h, in_w, out_h, out_w, kh, kw, stride, pad;
  Index out_pixels() const { return out_h * out_w; }
  Index patch() const { return channels * kh * kw; }
};

// col is (batch*out_pixels x channels*kh*kw); column ci*kh*kw + ki*kw + kj.
template <typename S>
void im2col(const S* image, const ConvGeometry& g, Mat<S>& col) {
  const Index rows = g.batch * g.out_pixels();
  col.resize(rows, g.patch());
  for (Index ci = 0; ci < g.channels; ++ci) {
    for (Index ki = 0; ki < g.kh; ++ki) {
      for (Index kj = 0; kj < g.kw; ++kj) {
        S* dst = col.data() + ((ci * g.kh + ki) * g.kw + kj) * rows;
        for (Index b = 0; b < g.batch; ++b) {
          const S* plane = image + (b * g.channels + ci) * g.in_h * g.in_w;
          for (Index oh = 0; oh < g.out_h; ++oh) {
            const Index ih = oh * g.stride - g.pad + ki;
            for (Index ow = 0; ow < g.out_w; ++ow) {
              const Index iw = ow * g.stride - g.pad + kj;
              *dst++ = (ih >= 0 && ih < g.in_h && iw >= 0 && iw < g.in_w) ? plane[ih * g.in_w + iw]
                                                                         : S(0);
            }
          }
        }
      }
    }
  }
}

// Adjoint of im2col; accumulates into image.
template <typename S>
void col2im(const Mat<S>& col, const ConvGeometry& g, S* image) {
  const Index rows = g.batch * g.out_pixels();
  for (Index ci = 0; ci < g.channels; ++ci) {
    for (Index ki = 0; ki < g.kh; ++ki) {
      for (Index kj = 0; kj < g.kw; ++kj) {
        const S* src = col.data() + ((ci * g.kh + ki) * g.kw + kj) * rows;
        for (Index b = 0; b < g.batch; ++b) {
          S* plane = image + (b * g.channels + ci) * g.in_h * g.in_w;
          for (Index oh = 0; oh < g.out_h; ++oh) {
            const Index ih = oh * g.stride - g.pad + ki;
            for (Index ow = 0; ow < g.out_w; ++ow, ++src) {
              const Index iw = ow * g.stride - g.pad + kj;
              if (ih >= 0 && ih < g.in_h && iw >= 0 && iw < g.in_w) plane[ih * g.in_w + iw] += *src;
            }
          }
        }
      }
    }
  }
}

void check_stride(const char* op, int stride, int padding) {
  if (stride != 1 && stride != 2) {
    throw ContractViolation(std::string(op) + ": stride must be 1 or 2, got " +
                            std::to_string(stride));
  }
  if (padding < 0) throw ContractViolation(std::string(op) + ": negative padding");
}

}  // namespace

template <typename S>
Var<S> conv2d(Var<S> x, Var<S> k, Var<S> b, int stride, int padding) {
  Graph<S>& graph = same_graph({x, k, b});
  check_stride("conv2d", stride, padding);
  require_rank("conv2d", "input", x.shape(), 4);
  require_rank("conv2d", "kernel", k.shape(), 4);
  require_rank("conv2d", "bias", b.shape(), 1);
  const Index batch = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
  const Index cout = k.dim(0), kh = k.dim(2), kw = k.dim(3);
  if (k.dim(1) != cin) {
    throw InvalidShape("conv2d: input has " + std::to_string(cin) + " channels, kernel " +
                       shape_string(k.shape()) + " expects " + std::to_string(k.dim(1)));
  }
  if (b.dim(0) != cout) {
    throw InvalidShape("conv2d: bias length " + std::to_string(b.dim(0)) + " != Cout " +
                       std::to_string(cout));
  }
  if (kh > h + 2 * padding || kw > w + 2 * padding) {
    throw InvalidShape("conv2d: kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                       " exceeds padded input " + std::to_string(h + 2 * padding) + "x" +
                       std::to_string(w + 2 * padding));
  }
  ConvGeometry g{batch, cin, h, w, (h + 2 * padding - kh) / stride + 1,
                 (w + 2 * padding - kw) / stride + 1, kh, kw, stride, padding};
  auto col = std::make_shared<Mat<S>>();
  im2col(x.value().ptr(), g, *col);
  Eigen::Map<const Mat<S>> kmat(k.value().ptr(), g.patch(), cout);
  Mat<S> out = (*col) * kmat;
  out.rowwise() += b.value().data().matrix().transpose();
  Tensor<S> y({batch, cout, g.out_h, g.out_w});
  scatter_rows(out, batch, cout, g.out_pixels(), y.ptr(), false);

  const int xi = x.id, ki = k.id, bi = b.id;
  return graph.record(OpKind::conv2d, {xi, ki, bi}, std::move(y), [=](Graph<S>& gr, int self) {
    const Mat<S> gmat = gather_rows(gr.grad(self).ptr(), batch, cout, g.out_pixels());
    if (gr.needs_grad(ki)) {
      Eigen::Map<Mat<S>>(gr.grad(ki).ptr(), g.patch(), cout).noalias() += col->transpose() * gmat;
    }
    if (gr.needs_grad(bi)) gr.grad(bi).data() += gmat.colwise().sum().transpose().array();
    if (gr.needs_grad(xi)) {
      Eigen::Map<const Mat<S>> kv(gr.value(ki).ptr(), g.patch(), cout);
      const Mat<S> dcol = gmat * kv.transpose();
      col2im(dcol, g, gr.grad(xi).ptr());
    }
  });
}

template <typename S>
Var<S> transposed_conv2d(Var<S> x, Var<S> k, Var<S> b, int stride, int padding) {
  Graph<S>& graph = same_graph({x, k, b});
  check_stride("transposed_conv2d", stride, padding);
  require_rank("transposed_conv2d", "input", x.shape(), 4);
  require_rank("transposed_conv2d", "kernel", k.shape(), 4);
  require_rank("transposed_conv2d", "bias", b.shape(), 1);
  const Index batch = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
  const Index cout = k.dim(1), kh = k.dim(2), kw = k.dim(3);
  if (k.dim(0) != cin) {
    throw InvalidShape("transposed_conv2d: input has " + std::to_string(cin) +
                       " channels, kernel " + shape_string(k.shape()) + " expects " +
                       std::to_string(k.dim(0)));
  }
  if (b.dim(0) != cout) {
    throw InvalidShape("transposed_conv2d: bias length " + std::to_string(b.dim(0)) +
                       " != Cout " + std::to_string(cout));
  }
  const Index out_h = (h - 1) * stride - 2 * padding + kh + (stride - 1);
  const Index out_w = (w - 1) * stride - 2 * padding + kw + (stride - 1);
  if (out_h <= 0 || out_w <= 0) {
    throw InvalidShape("transposed_conv2d: padding " + std::to_string(padding) +
                       " too large for kernel " + shape_string(k.shape()));
  }
  // Geometry of the forward convolution whose adjoint this is.
  ConvGeometry g{batch, cout, out_h, out_w, h, w, kh, kw, stride, padding};
  const Index in_pixels = h * w;
  auto xrows = std::make_shared<Mat<S>>(gather_rows(x.value().ptr(), batch, cin, in_pixels));
  Eigen::Map<const Mat<S>> wmat(k.value().ptr(), g.patch(), cin);
  const Mat<S> col = (*xrows) * wmat.transpose();
  Tensor<S> y({batch, cout, out_h, out_w});
  col2im(col, g, y.ptr());
  const Index out_pixels = out_h * out_w;
  for (Index bb = 0; bb < batch; ++bb) {
    for (Index c = 0; c < cout; ++c) {
      y.data().segment((bb * cout + c) * out_pixels, out_pixels) += b.value()[c];
    }
  }

  const int xi = x.id, ki = k.id, bi = b.id;
  return graph.record(OpKind::transposed_conv2d, {xi, ki, bi}, std::move(y),
                      [=](Graph<S>& gr, int self) {
                        const Tensor<S>& gy = gr.grad(self);
                        Mat<S> gcol;
                        im2col(gy.ptr(), g, gcol);
                        if (gr.needs_grad(ki)) {
                          Eigen::Map<Mat<S>>(gr.grad(ki).ptr(), g.patch(), cin).noalias() +=
                              gcol.transpose() * (*xrows);
                        }
                        if (gr.needs_grad(bi)) {
                          auto& gb = gr.grad(bi).data();
                          for (Index bb = 0; bb < batch; ++bb) {
                            for (Index c = 0; c < cout; ++c) {
                              gb[c] += gy.data().segment((bb * cout + c) * out_pixels, out_pixels).sum();
                            }
                          }
                        }
                        if (gr.needs_grad(xi)) {
                          Eigen::Map<const Mat<S>> wv(gr.value(ki).ptr(), g.patch(), cin);
                          const Mat<S> dx = gcol * wv;
                          scatter_rows(dx, batch, cin, in_pixels, gr.grad(xi).ptr(), true);
                        }
                      });
}

namespace {

template <typename S>
Var<S> divisive_norm(Var<S> x, Var<S> beta, Var<S> gamma, bool inverse) {
  const char* op = inverse ? "igdn" : "gdn";
  Graph<S>& graph = same_graph({x, beta, gamma});
  if (x.shape().size() < 2) {
    throw InvalidShape(std::string(op) + ": input must have rank >= 2, got " +
                       shape_string(x.shape()));
  }
  const Index batch = x.dim(0), channels = x.dim(1), pixels = trailing_size(x.shape(), 2);
  require_same(op, beta.shape(), Shape{channels});
  require_same(op, gamma.shape(), Shape{channels, channels});

  auto xr = std::make_shared<Mat<S>>(gather_rows(x.value().ptr(), batch, channels, pixels));
  // Column-major view of row-major gamma is gamma^T.
  Eigen::Map<const Mat<S>> gamma_t(gamma.value().ptr(), channels, channels);
  auto denom = std::make_shared<Mat<S>>(xr->array().square().matrix() * gamma_t);
  denom->rowwise() += beta.value().data().matrix().transpose();
  Mat<S> out = inverse ? Mat<S>(xr->array() * denom->array().sqrt())
                       : Mat<S>(xr->array() / denom->array().sqrt());
  Tensor<S> y(x.shape());
  scatter_rows(out, batch, channels, pixels, y.ptr(), false);

  const int xi = x.id, bi = beta.id, gi = gamma.id;
  return graph.record(inverse ? OpKind::igdn : OpKind::gdn, {xi, bi, gi}, std::move(y),
                      [=](Graph<S>& gr, int self) {
                        const Mat<S> gmat = gather_rows(gr.grad(self).ptr(), batch, channels, pixels);
                        const auto root = denom->array().sqrt();
                        // a = g * x * N^{-3/2} (forward) or g * x * N^{-1/2} (inverse).
                        const Mat<S> a = inverse
                                             ? Mat<S>(gmat.array() * xr->array() / root)
                                             : Mat<S>(gmat.array() * xr->array() / (root * denom->array()));
                        const S sign = inverse ? S(1) : S(-1);
                        if (gr.needs_grad(xi)) {
                          Eigen::Map<const Mat<S>> gt(gr.value(gi).ptr(), channels, channels);
                          const Mat<S> cross = a * gt.transpose();
                          const Mat<S> dx = inverse
                                                ? Mat<S>(gmat.array() * root + xr->array() * cross.array())
                                                : Mat<S>(gmat.array() / root - xr->array() * cross.array());
                          scatter_rows(dx, batch, channels, pixels, gr.grad(xi).ptr(), true);
                        }
                        if (gr.needs_grad(bi)) {
                          gr.grad(bi).data() += (sign * S(0.5)) * a.colwise().sum().transpose().array();
                        }
                        if (gr.needs_grad(gi)) {
                          Eigen::Map<Mat<S>>(gr.grad(gi).ptr(), channels, channels).noalias() +=
                              (sign * S(0.5)) * (xr->array().square().matrix().transpose() * a);
                        }
                      });
}

}  // namespace

template <typename S>
Var<S> gdn(Var<S> x, Var<S> beta, Var<S> gamma) {
  return divisive_norm(x, beta, gamma, false);
}

template <typename S>
Var<S> igdn(Var<S> x, Var<S> beta, Var<S> gamma) {
  return divisive_norm(x, beta, gamma, true);
}

template <typename S>
Var<S> dense(Var<S> x, Var<S> w, Var<S> b) {
  Graph<S>& graph = same_graph({x, w, b});
  require_rank("dense", "input", x.shape(), 2);
  require_rank("dense", "weight", w.shape(), 2);
  require_rank("dense", "bias", b.shape(), 1);
  const Index batch = x.dim(0), in = x.dim(1), out = w.dim(1);
  if (w.dim(0) != in) {
    throw InvalidShape("dense: input features " + std::to_string(in) + " vs weight " +
                       shape_string(w.shape()));
  }
  if (b.dim(0) != out) {
    throw InvalidShape("dense: bias " + shape_string(b.shape()) + " vs weight " +
                       shape_string(w.shape()));
  }
  Eigen::Map<const Mat<S>> xm(x.value().ptr(), in, batch);
  Eigen::Map<const Mat<S>> wm(w.value().ptr(), out, in);
  Tensor<S> y({batch, out});
  Eigen::Map<Mat<S>> ym(y.ptr(), out, batch);
  ym.noalias() = wm * xm;
  ym.colwise() += b.value().data().matrix();

  const int xi = x.id, wi = w.id, bi = b.id;
  return graph.record(OpKind::dense, {xi, wi, bi}, std::move(y), [=](Graph<S>& gr, int self) {
    Eigen::Map<const Mat<S>> gm(gr.grad(self).ptr(), out, batch);
    if (gr.needs_grad(xi)) {
      Eigen::Map<const Mat<S>> wv(gr.value(wi).ptr(), out, in);
      Eigen::Map<Mat<S>>(gr.grad(xi).ptr(), in, batch).noalias() += wv.transpose() * gm;
    }
    if (gr.needs_grad(wi)) {
      Eigen::Map<const Mat<S>> xv(gr.value(xi).ptr(), in, batch);
      Eigen::Map<Mat<S>>(gr.grad(wi).ptr(), out, in).noalias() += gm * xv.transpose();
    }
    if (gr.needs_grad(bi)) gr.grad(bi).data() += gm.rowwise().sum().array();
  });
}

template <typename S>
Var<S> relu(Var<S> x) {
  Graph<S>& graph = *x.graph;
  Tensor<S> y(x.shape(), x.value().data().max(S(0)));
  const int xi = x.id;
  return graph.record(OpKind::relu, {xi}, std::move(y), [=](Graph<S>& gr, int self) {
    if (!gr.needs_grad(xi)) return;
    gr.grad(xi).data() += (gr.value(xi).data() > S(0)).select(gr.grad(self).data(), S(0));
  });
}

template <typename S>
Var<S> sigmoid(Var<S> x) {
  Graph<S>& graph = *x.graph;
  Tensor<S> y(x.shape(), S(1) / (S(1) + (-x.value().data()).exp()));
  const int xi = x.id;
  return graph.record(OpKind::sigmoid, {xi}, std::move(y), [=](Graph<S>& gr, int self) {
    if (!gr.needs_grad(xi)) return;
    const auto& s = gr.value(self).data();
    gr.grad(xi).data() += gr.grad(self).data() * s * (S(1) - s);
  });
}

template <typename S>
Var<S> soft_clip(Var<S> x, S limit) {
  if (!(limit > S(0))) throw ContractViolation("soft_clip: limit must be positive");
  Graph<S>& graph = *x.graph;
  Tensor<S> y(x.shape(), limit * (x.value().data() / limit).tanh());
  const int xi = x.id;
  return graph.record(OpKind::soft_clip, {xi}, std::move(y), [=](Graph<S>& gr, int self) {
    if (!gr.needs_grad(xi)) return;
    const auto t = gr.value(self).data() / limit;
    gr.grad(xi).data() += gr.grad(self).data() * (S(1) - t * t);
  });
}

template <typename S>
Var<S> prelu(Var<S> x, Var<S> alpha) {
  Graph<S>& graph = same_graph({x, alpha});
  if (x.shape().size() < 2) {
    throw InvalidShape("prelu: input must have rank >= 2, got " + shape_string(x.shape()));
  }
  const Index batch = x.dim(0), channels = x.dim(1), inner = trailing_size(x.shape(), 2);
  require_same("prelu", alpha.shape(), Shape{channels});
  Tensor<S> y(x.shape());
  const auto& xv = x.value().data();
  const auto& av = alpha.value().data();
  for (Index b = 0; b < batch; ++b) {
    for (Index c = 0; c < channels; ++c) {
      const Index off = (b * channels + c) * inner;
      auto seg = xv.segment(off, inner);
      y.data().segment(off, inner) = (seg > S(0)).select(seg, av[c] * seg);
    }
  }
  const int xi = x.id, ai = alpha.id;
  return graph.record(OpKind::prelu, {xi, ai}, std::move(y), [=](Graph<S>& gr, int self) {
    const auto& g = gr.grad(self).data();
    const auto& xs = gr.value(xi).data();
    const auto& as = gr.value(ai).data();
    for (Index b = 0; b < batch; ++b) {
      for (Index c = 0; c < channels; ++c) {
        const Index off = (b * channels + c) * inner;
        auto xseg = xs.segment(off, inner);
        auto gseg = g.segment(off, inner);
        if (gr.needs_grad(xi)) {
          gr.grad(xi).data().segment(off, inner) += (xseg > S(0)).select(gseg, as[c] * gseg);
        }
        if (gr.needs_grad(ai)) {
          gr.grad(ai)[c] += (xseg > S(0)).select(S(0), gseg * xseg).sum();
        }
      }
    }
  });
}

template <typename S>
Var<S> channel_mean(Var<S> x) {
  Graph<S>& graph = *x.graph;
  if (x.shape().size() < 3) {
    throw InvalidShape("channel_mean: input must have rank >= 3, got " + shape_string(x.shape()));
  }
  const Index batch = x.dim(0), channels = x.dim(1), pixels = trailing_size(x.shape(), 2);
  Tensor<S> y({batch, channels});
  for (Index r = 0; r < batch * channels; ++r) {
    y[r] = x.value().data().segment(r * pixels, pixels).mean();
  }
  const int xi = x.id;
  return graph.record(OpKind::channel_mean, {xi}, std::move(y), [=](Graph<S>& gr, int self) {
    if (!gr.needs_grad(xi)) return;
    const auto& g = gr.grad(self).data();
    auto& gx = gr.grad(xi).data();
    for (Index r = 0; r < batch * channels; ++r) {
      gx.segment(r * pixels, pixels) += g[r] / S(pixels);
    }
  });
}

template <typename S>
Var<S> mse(Var<S> a, Var<S> b) {
  Graph<S>& graph = same_graph({a, b});
  require_same("mse", a.shape(), b.shape());
  const Index n = a.value().size();
  Tensor<S> y(Shape{});
  y[0] = (a.value().data() - b.value().data()).square().sum() / S(n);
  const int ai = a.id, bi = b.id;
  return graph.record(OpKind::mse, {ai, bi}, std::move(y), [=](Graph<S>& gr, int self) {
    const S g = gr.grad(self)[0];
    const auto diff = gr.value(ai).data() - gr.value(bi).data();
    if (gr.needs_grad(ai)) gr.grad(ai).data() += (S(2) * g / S(n)) * diff;
    if (gr.needs_grad(bi)) gr.grad(bi).data() -= (S(2) * g / S(n)) * diff;
  });
}

template <typename S>
Var<S> add(Var<S> a, Var<S> b) {
  Graph<S>& graph = same_graph({a, b});
  require_same("add", a.shape(), b.shape());
  Tensor<S> y(a.shape(), a.value().data() + b.value().data());
  const int ai = a.id, bi = b.id;
  return graph.record(OpKind::add, {ai, bi}, std::move(y), [=](Graph<S>& gr, int self) {
    if (gr.needs_grad(ai)) gr.grad(ai).data() += gr.grad(self).data();
    if (gr.needs_grad(bi)) gr.grad(bi).data() += gr.grad(self).data();
  });
}

template <typename S>
Var<S> scale(Var<S> a, S factor) {
  Tensor<S> y(a.shape(), factor * a.value().data());
  const int ai = a.id;
  return a.graph->record(OpKind::scale, {ai}, std::move(y), [=](Graph<S>& gr, int self) {
    if (gr.needs_grad(ai)) gr.grad(ai).data() += factor * gr.grad(self).data();
  });
}

template <typename S>
Var<S> sum(Var<S> a) {
  Tensor<S> y(Shape{});
  y[0] = a.value().data().sum();
  const int ai = a.id;
  return a.graph->record(OpKind::sum, {ai}, std::move(y), [=](Graph<S>& gr, int self) {
    if (gr.needs_grad(ai)) gr.grad(ai).data() += gr.grad(self)[0];
  });
}

template <typename S>
Var<S> reshape(Var<S> a, Shape shape) {
  Tensor<S> y = a.value().reshaped(std::move(shape));
  const int ai = a.id;
  return a.graph->record(OpKind::reshape, {ai}, std::move(y), [=](Graph<S>& gr, int self) {
    if (gr.needs_grad(ai)) gr.grad(ai).data() += gr.grad(self).data();
  });
}

template <typename S>
Var<S> concat_columns(Var<S> a, Var<S> b) {
  Graph<S>& graph = same_graph({a, b});
  require_rank("concat_columns", "lhs", a.shape(), 2);
  require_rank("concat_columns", "rhs", b.shape(), 2);
  const Index batch = a.dim(0), fa = a.dim(1), fb = b.dim(1);
  if (b.dim(0) != batch) {
    throw InvalidShape("concat_columns: batch mismatch " + shape_string(a.shape()) + " vs " +
                       shape_string(b.shape()));
  }
  Tensor<S> y({batch, fa + fb});
  for (Index r = 0; r < batch; ++r) {
    y.data().segment(r * (fa + fb), fa) = a.value().data().segment(r * fa, fa);
    y.data().segment(r * (fa + fb) + fa, fb) = b.value().data().segment(r * fb, fb);
  }
  const int ai = a.id, bi = b.id;
  return graph.record(OpKind::concat, {ai, bi}, std::move(y), [=](Graph<S>& gr, int self) {
    const auto& g = gr.grad(self).data();
    for (Index r = 0; r < batch; ++r) {
      if (gr.needs_grad(ai)) gr.grad(ai).data().segment(r * fa, fa) += g.segment(r * (fa + fb), fa);
      if (gr.needs_grad(bi)) {
        gr.grad(bi).data().segment(r * fb, fb) += g.segment(r * (fa + fb) + fa, fb);
      }
    }
  });
}

template <typename S>
Var<S> channel_scale(Var<S> x, Var<S> s) {
  Graph<S>& graph = same_graph({x, s});
  if (x.shape().size() < 2) {
    throw InvalidShape("channel_scale: input must have rank >= 2, got " + shape_string(x.shape()));
  }
  const Index batch = x.dim(0), channels = x.dim(1), inner = trailing_size(x.shape(), 2);
  require_same("channel_scale", s.shape(), Shape{batch, channels});
  Tensor<S> y(x.shape());
  for (Index r = 0; r < batch * channels; ++r) {
    y.data().segment(r * inner, inner) = s.value()[r] * x.value().data().segment(r * inner, inner);
  }
  const int xi = x.id, si = s.id;
  return graph.record(OpKind::channel_scale, {xi, si}, std::move(y), [=](Graph<S>& gr, int self) {
    const auto& g = gr.grad(self).data();
    for (Index r = 0; r < batch * channels; ++r) {
      if (gr.needs_grad(xi)) {
        gr.grad(xi).data().segment(r * inner, inner) += gr.value(si)[r] * g.segment(r * inner, inner);
      }
      if (gr.needs_grad(si)) {
        gr.grad(si)[r] +=
            (g.segment(r * inner, inner) * gr.value(xi).data().segment(r * inner, inner)).sum();
      }
    }
  });
}

template <typename S>
Var<S> square_plus(Var<S> x, S floor) {
  Tensor<S> y(x.shape(), x.value().data().square() + floor);
  const int xi = x.id;
  return x.graph->record(OpKind::square_plus, {xi}, std::move(y), [=](Graph<S>& gr, int self) {
    if (gr.needs_grad(xi)) {
      gr.grad(xi).data() += S(2) * gr.value(xi).data() * gr.grad(self).data();
    }
  });
}

template <typename S>
Var<S> power_normalize(Var<S> y, double power) {
  require_rank("power_normalize", "input", y.shape(), 2);
  const Index batch = y.dim(0), width = y.dim(1);
  if (width % 2 != 0) {
    throw InvalidShape("power_normalize: row length " + std::to_string(width) +
                       " is not an even number of reals");
  }
  if (!(power > 0.0)) throw ContractViolation("power_normalize: power budget must be positive");
  const S target = static_cast<S>(std::sqrt(static_cast<double>(width / 2) * power));
  auto norms = std::make_shared<Eigen::Array<S, Eigen::Dynamic, 1>>(batch);
  Tensor<S> z(y.shape());
  for (Index r = 0; r < batch; ++r) {
    auto row = y.value().data().segment(r * width, width);
    const S norm = row.matrix().norm();
    if (!std::isfinite(norm)) {
      throw NumericalError("power_normalize: row " + std::to_string(r) + " has non-finite entries");
    }
    if (!(norm > S(0))) {
      throw DegenerateInput("power_normalize: row " + std::to_string(r) +
                            " is all-zero and cannot be normalized");
    }
    (*norms)[r] = norm;
    z.data().segment(r * width, width) = (target / norm) * row;
  }
  const int yi = y.id;
  return y.graph->record(OpKind::power_normalize, {yi}, std::move(z), [=](Graph<S>& gr, int self) {
    if (!gr.needs_grad(yi)) return;
    const auto& g = gr.grad(self).data();
    const auto& yv = gr.value(yi).data();
    for (Index r = 0; r < batch; ++r) {
      const S norm = (*norms)[r];
      auto yr = yv.segment(r * width, width);
      auto gseg = g.segment(r * width, width);
      const S proj = (yr * gseg).sum() / (norm * norm);
      gr.grad(yi).data().segment(r * width, width) += (target / norm) * (gseg - proj * yr);
    }
  });
}

template <typename S>
Var<S> complex_scale(Var<S> z, const std::vector<std::complex<double>>& coeffs) {
  require_rank("complex_scale", "input", z.shape(), 2);
  const Index batch = z.dim(0), width = z.dim(1);
  if (width % 2 != 0) {
    throw InvalidShape("complex_scale: row length " + std::to_string(width) + " is odd");
  }
  if (static_cast<Index>(coeffs.size()) != batch) {
    throw InvalidShape("complex_scale: " + std::to_string(coeffs.size()) +
                       " coefficients for batch " + std::to_string(batch));
  }
  Tensor<S> y(z.shape());
  const auto& zv = z.value().data();
  for (Index r = 0; r < batch; ++r) {
    const S a = static_cast<S>(coeffs[static_cast<std::size_t>(r)].real());
    const S b = static_cast<S>(coeffs[static_cast<std::size_t>(r)].imag());
    for (Index k = r * width; k < (r + 1) * width; k += 2) {
      y[k] = a * zv[k] - b * zv[k + 1];
      y[k + 1] = a * zv[k + 1] + b * zv[k];
    }
  }
  const int zi = z.id;
  return z.graph->record(OpKind::complex_scale, {zi}, std::move(y), [=](Graph<S>& gr, int self) {
    if (!gr.needs_grad(zi)) return;
    const auto& g = gr.grad(self).data();
    auto& gz = gr.grad(zi).data();
    for (Index r = 0; r < batch; ++r) {
      const S a = static_cast<S>(coeffs[static_cast<std::size_t>(r)].real());
      const S b = static_cast<S>(coeffs[static_cast<std::size_t>(r)].imag());
      for (Index k = r * width; k < (r + 1) * width; k += 2) {
        gz[k] += a * g[k] + b * g[k + 1];
        gz[k + 1] += a * g[k + 1] - b * g[k];
      }
    }
  });
}

#define DEEPMA_INSTANTIATE(S)                                                          \
  template Var<S> conv2d(Var<S>, Var<S>, Var<S>, int, int);                            \
  template Var<S> transposed_conv2d(Var<S>, Var<S>, Var<S>, int, int);                 \
  template Var<S> gdn(Var<S>, Var<S>, Var<S>);                                         \
  template Var<S> igdn(Var<S>, Var<S>, Var<S>);                                        \
  template Var<S> dense(Var<S>, Var<S>, Var<S>);                                       \
  template Var<S> relu(Var<S>);                                                        \
  template Var<S> sigmoid(Var<S>);                                                     \
  template Var<S> soft_clip(Var<S>, S);                                                \
  template Var<S> prelu(Var<S>, Var<S>);                                               \
  template Var<S> channel_mean(Var<S>);                                                \
  template Var<S> mse(Var<S>, Var<S>);                                                 \
  template Var<S> add(Var<S>, Var<S>);                                                 \
  template Var<S> scale(Var<S>, S);                                                    \
  template Var<S> sum(Var<S>);                                                         \
  template Var<S> reshape(Var<S>, Shape);                                              \
  template Var<S> concat_columns(Var<S>, Var<S>);                                      \
  template Var<S> channel_scale(Var<S>, Var<S>);                                       \
  template Var<S> square_plus(Var<S>, S);                                              \
  template Var<S> power_normalize(Var<S>, double);                                     \
  template Var<S> complex_scale(Var<S>, const std::vector<std::complex<double>>&);

DEEPMA_INSTANTIATE(float)
DEEPMA_INSTANTIATE(double)

#undef DEEPMA_INSTANTIATE

}  // namespace deepma
