#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "pagan/errors.hpp"
#include "pagan/rng.hpp"

// Reverse-mode autodiff over NCHW tensors: just the op set the generators
// and the PatchGAN discriminator need, nothing framework-shaped. Eigen
// supplies the GEMM inside conv/transpose-conv; everything else is explicit
// loops with a fixed summation order so runs are bit-reproducible.

namespace pagan::nn {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
class Tensor {
 public:
  struct Node {
    std::vector<int> shape;
    std::vector<T> val;
    std::vector<T> grad;  // sized lazily, zero-filled
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backprop;  // pulls node.grad into parents

    int64_t numel() const {
      int64_t n = 1;
      for (int d : shape) n *= d;
      return n;
    }
    bool is_leaf() const { return !backprop; }
    std::vector<T>& ensure_grad() {
      if (grad.empty()) grad.assign(val.size(), T(0));
      return grad;
    }
  };
  using NodePtr = std::shared_ptr<Node>;

  Tensor() = default;
  explicit Tensor(NodePtr n) : node_(std::move(n)) {}

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false) {
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->val.assign(static_cast<size_t>(n->numel()), T(0));
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  static Tensor from_data(std::vector<int> shape, std::vector<T> data,
                          bool requires_grad = false) {
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    if (static_cast<int64_t>(data.size()) != n->numel())
      throw ShapeError("Tensor: data length does not match shape");
    n->val = std::move(data);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  bool defined() const { return static_cast<bool>(node_); }
  const std::vector<int>& shape() const { return node_->shape; }
  int64_t numel() const { return node_->numel(); }
  std::vector<T>& values() { return node_->val; }
  const std::vector<T>& values() const { return node_->val; }
  std::vector<T>& grad() { return node_->ensure_grad(); }
  bool requires_grad() const { return node_->requires_grad; }
  NodePtr node() const { return node_; }

  void zero_grad() { node_->grad.assign(node_->val.size(), T(0)); }

  T item() const {
    if (node_->numel() != 1) throw ShapeError("Tensor::item: not a scalar");
    return node_->val[0];
  }

  int dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }

 private:
  NodePtr node_;
};

namespace detail {

inline std::string shape_str(const std::vector<int>& s) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ")";
  return os.str();
}

template <typename T>
void require_4d(const Tensor<T>& t, const char* op) {
  if (t.shape().size() != 4)
    throw ShapeError(std::string(op) + ": expected NCHW tensor, got " + shape_str(t.shape()));
}

template <typename T>
typename Tensor<T>::NodePtr make_node(std::vector<int> shape,
                                      std::vector<typename Tensor<T>::NodePtr> parents) {
  auto n = std::make_shared<typename Tensor<T>::Node>();
  n->shape = std::move(shape);
  n->val.assign(static_cast<size_t>(n->numel()), T(0));
  bool rg = false;
  for (const auto& p : parents) rg = rg || p->requires_grad || !p->is_leaf();
  n->requires_grad = rg;
  n->parents = std::move(parents);
  return n;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// backward: reverse-mode sweep from a scalar loss. Non-leaf grads are reset
// each call; leaf (parameter/input) grads accumulate across calls.

template <typename T>
void backward(const Tensor<T>& loss) {
  if (loss.numel() != 1) throw InvalidArgument("backward: loss must be scalar");
  using Node = typename Tensor<T>::Node;

  std::vector<Node*> topo;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.push_back({loss.node().get(), 0});
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (!seen.count(p)) {
        seen.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      topo.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* n : topo)
    if (!n->is_leaf()) n->grad.assign(n->val.size(), T(0));
  loss.node()->ensure_grad();
  loss.node()->grad[0] = T(1);

  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    Node* n = *it;
    if (n->backprop && !n->grad.empty()) n->backprop(*n);
  }
}

// ---------------------------------------------------------------------------
// Elementwise ops

template <typename T, typename FwdFn, typename BwdFn>
Tensor<T> unary_op(const Tensor<T>& x, const char* /*name*/, FwdFn fwd, BwdFn dydx_from_xy) {
  auto n = detail::make_node<T>(x.shape(), {x.node()});
  const auto& xv = x.values();
  for (size_t i = 0; i < xv.size(); ++i) n->val[i] = fwd(xv[i]);
  auto xp = x.node();
  auto out = n.get();
  n->backprop = [xp, dydx_from_xy](typename Tensor<T>::Node& self) {
    auto& xg = xp->ensure_grad();
    for (size_t i = 0; i < xg.size(); ++i)
      xg[i] += self.grad[i] * dydx_from_xy(xp->val[i], self.val[i]);
  };
  (void)out;
  return Tensor<T>(std::move(n));
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  return unary_op(
      x, "relu", [](T v) { return v > T(0) ? v : T(0); },
      [](T xv, T) { return xv > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope = T(0.2)) {
  return unary_op(
      x, "leaky_relu", [slope](T v) { return v > T(0) ? v : slope * v; },
      [slope](T xv, T) { return xv > T(0) ? T(1) : slope; });
}

template <typename T>
Tensor<T> tanh_act(const Tensor<T>& x) {
  return unary_op(
      x, "tanh", [](T v) { return std::tanh(v); }, [](T, T yv) { return T(1) - yv * yv; });
}

template <typename T>
Tensor<T> sigmoid_act(const Tensor<T>& x) {
  return unary_op(
      x, "sigmoid", [](T v) { return T(1) / (T(1) + std::exp(-v)); },
      [](T, T yv) { return yv * (T(1) - yv); });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    throw ShapeError("add: shape mismatch " + detail::shape_str(a.shape()) + " vs " +
                     detail::shape_str(b.shape()));
  auto n = detail::make_node<T>(a.shape(), {a.node(), b.node()});
  const auto& av = a.values();
  const auto& bv = b.values();
  for (size_t i = 0; i < av.size(); ++i) n->val[i] = av[i] + bv[i];
  auto ap = a.node(), bp = b.node();
  n->backprop = [ap, bp](typename Tensor<T>::Node& self) {
    auto& ag = ap->ensure_grad();
    auto& bg = bp->ensure_grad();
    for (size_t i = 0; i < ag.size(); ++i) {
      ag[i] += self.grad[i];
      bg[i] += self.grad[i];
    }
  };
  return Tensor<T>(std::move(n));
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    throw ShapeError("mul: shape mismatch " + detail::shape_str(a.shape()) + " vs " +
                     detail::shape_str(b.shape()));
  auto n = detail::make_node<T>(a.shape(), {a.node(), b.node()});
  const auto& av = a.values();
  const auto& bv = b.values();
  for (size_t i = 0; i < av.size(); ++i) n->val[i] = av[i] * bv[i];
  auto ap = a.node(), bp = b.node();
  n->backprop = [ap, bp](typename Tensor<T>::Node& self) {
    auto& ag = ap->ensure_grad();
    auto& bg = bp->ensure_grad();
    for (size_t i = 0; i < ag.size(); ++i) {
      ag[i] += self.grad[i] * bp->val[i];
      bg[i] += self.grad[i] * ap->val[i];
    }
  };
  return Tensor<T>(std::move(n));
}

template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& x, T k) {
  return unary_op(
      x, "mul_scalar", [k](T v) { return k * v; }, [k](T, T) { return k; });
}

// Cuts the graph: result is a leaf sharing no history with x.
template <typename T>
Tensor<T> detach(const Tensor<T>& x) {
  return Tensor<T>::from_data(x.shape(), x.values(), false);
}

// ---------------------------------------------------------------------------
// Convolution (im2col + GEMM)

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, int stride,
                 int padding) {
  detail::require_4d(x, "conv2d");
  if (w.shape().size() != 4) throw ShapeError("conv2d: weight must be (F,C,k,k)");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int F = w.dim(0), WC = w.dim(1), KH = w.dim(2), KW = w.dim(3);
  if (WC != C)
    throw ShapeError("conv2d: input has " + std::to_string(C) + " channels, weight expects " +
                     std::to_string(WC));
  if (b.numel() != F) throw ShapeError("conv2d: bias size mismatch");
  const int OH = (H + 2 * padding - KH) / stride + 1;
  const int OW = (W + 2 * padding - KW) / stride + 1;
  if (OH <= 0 || OW <= 0)
    throw ShapeError("conv2d: empty output for input " + detail::shape_str(x.shape()));

  const int64_t rows = static_cast<int64_t>(N) * OH * OW;
  const int64_t K = static_cast<int64_t>(C) * KH * KW;
  auto cols = std::make_shared<std::vector<T>>(static_cast<size_t>(rows * K), T(0));

  const auto& xv = x.values();
  {
    T* crow = cols->data();
    for (int n = 0; n < N; ++n) {
      const T* xn = xv.data() + static_cast<size_t>(n) * C * H * W;
      for (int oh = 0; oh < OH; ++oh) {
        for (int ow = 0; ow < OW; ++ow, crow += K) {
          T* dst = crow;
          for (int c = 0; c < C; ++c) {
            const T* xc = xn + static_cast<size_t>(c) * H * W;
            for (int ki = 0; ki < KH; ++ki) {
              const int h = oh * stride - padding + ki;
              if (h < 0 || h >= H) {
                dst += KW;
                continue;
              }
              const T* xr = xc + static_cast<size_t>(h) * W;
              for (int kj = 0; kj < KW; ++kj) {
                const int ww = ow * stride - padding + kj;
                *dst++ = (ww >= 0 && ww < W) ? xr[ww] : T(0);
              }
            }
          }
        }
      }
    }
  }

  auto out = detail::make_node<T>({N, F, OH, OW}, {x.node(), w.node(), b.node()});
  {
    Eigen::Map<const RowMat<T>> A(cols->data(), rows, K);
    Eigen::Map<const RowMat<T>> Wm(w.values().data(), F, K);
    RowMat<T> Y = A * Wm.transpose();  // (rows, F)
    const auto& bv = b.values();
    T* yv = out->val.data();
    for (int n = 0; n < N; ++n)
      for (int f = 0; f < F; ++f) {
        const T bias = bv[f];
        const int64_t base = (static_cast<int64_t>(n) * OH * OW);
        T* dst = yv + (static_cast<int64_t>(n) * F + f) * OH * OW;
        for (int64_t i = 0; i < static_cast<int64_t>(OH) * OW; ++i)
          dst[i] = Y(base + i, f) + bias;
      }
  }

  auto xp = x.node();
  auto wp = w.node();
  auto bp = b.node();
  out->backprop = [=](typename Tensor<T>::Node& self) {
    // Gather dY into (rows, F)
    RowMat<T> dY(rows, F);
    const T* gv = self.grad.data();
    for (int n = 0; n < N; ++n)
      for (int f = 0; f < F; ++f) {
        const T* src = gv + (static_cast<int64_t>(n) * F + f) * OH * OW;
        const int64_t base = static_cast<int64_t>(n) * OH * OW;
        for (int64_t i = 0; i < static_cast<int64_t>(OH) * OW; ++i) dY(base + i, f) = src[i];
      }
    Eigen::Map<const RowMat<T>> A(cols->data(), rows, K);
    Eigen::Map<const RowMat<T>> Wm(wp->val.data(), F, K);

    {
      auto& wg = wp->ensure_grad();
      Eigen::Map<RowMat<T>> dW(wg.data(), F, K);
      dW.noalias() += dY.transpose() * A;
    }
    {
      auto& bg = bp->ensure_grad();
      for (int f = 0; f < F; ++f) bg[f] += dY.col(f).sum();
    }
    {
      RowMat<T> dCols = dY * Wm;  // (rows, K)
      auto& xg = xp->ensure_grad();
      const T* crow = dCols.data();
      for (int n = 0; n < N; ++n) {
        T* xn = xg.data() + static_cast<size_t>(n) * C * H * W;
        for (int oh = 0; oh < OH; ++oh)
          for (int ow = 0; ow < OW; ++ow, crow += K) {
            const T* src = crow;
            for (int c = 0; c < C; ++c) {
              T* xc = xn + static_cast<size_t>(c) * H * W;
              for (int ki = 0; ki < KH; ++ki) {
                const int h = oh * stride - padding + ki;
                if (h < 0 || h >= H) {
                  src += KW;
                  continue;
                }
                T* xr = xc + static_cast<size_t>(h) * W;
                for (int kj = 0; kj < KW; ++kj) {
                  const int ww = ow * stride - padding + kj;
                  if (ww >= 0 && ww < W) xr[ww] += src[kj];
                }
                src += KW;
              }
            }
          }
      }
    }
  };
  return Tensor<T>(std::move(out));
}

// Fractionally-strided convolution; weight layout (C, F, k, k) with C the
// input channel count. Output side: (H-1)*stride - 2*padding + k.
template <typename T>
Tensor<T> conv2d_transpose(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                           int stride, int padding) {
  detail::require_4d(x, "conv2d_transpose");
  if (w.shape().size() != 4) throw ShapeError("conv2d_transpose: weight must be (C,F,k,k)");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int WC = w.dim(0), F = w.dim(1), KH = w.dim(2), KW = w.dim(3);
  if (WC != C)
    throw ShapeError("conv2d_transpose: input has " + std::to_string(C) +
                     " channels, weight expects " + std::to_string(WC));
  if (b.numel() != F) throw ShapeError("conv2d_transpose: bias size mismatch");
  const int OH = (H - 1) * stride - 2 * padding + KH;
  const int OW = (W - 1) * stride - 2 * padding + KW;
  if (OH <= 0 || OW <= 0) throw ShapeError("conv2d_transpose: empty output");

  const int64_t rows = static_cast<int64_t>(N) * H * W;
  const int64_t K = static_cast<int64_t>(F) * KH * KW;

  auto out = detail::make_node<T>({N, F, OH, OW}, {x.node(), w.node(), b.node()});
  // X as (rows, C): gather from NCHW.
  auto xmat = std::make_shared<std::vector<T>>(static_cast<size_t>(rows * C));
  {
    const auto& xv = x.values();
    T* dst = xmat->data();
    for (int n = 0; n < N; ++n) {
      const T* xn = xv.data() + static_cast<size_t>(n) * C * H * W;
      for (int i = 0; i < H * W; ++i)
        for (int c = 0; c < C; ++c) *dst++ = xn[static_cast<size_t>(c) * H * W + i];
    }
  }

  {
    Eigen::Map<const RowMat<T>> X(xmat->data(), rows, C);
    Eigen::Map<const RowMat<T>> Wm(w.values().data(), C, K);
    RowMat<T> Cols = X * Wm;  // (rows, F*KH*KW)

    const auto& bv = b.values();
    T* yv = out->val.data();
    for (int n = 0; n < N; ++n)
      for (int f = 0; f < F; ++f) {
        T* dst = yv + (static_cast<int64_t>(n) * F + f) * OH * OW;
        for (int64_t i = 0; i < static_cast<int64_t>(OH) * OW; ++i) dst[i] = bv[f];
      }
    const T* crow = Cols.data();
    for (int n = 0; n < N; ++n) {
      T* yn = yv + static_cast<size_t>(n) * F * OH * OW;
      for (int h = 0; h < H; ++h)
        for (int ww = 0; ww < W; ++ww, crow += K) {
          const T* src = crow;
          for (int f = 0; f < F; ++f) {
            T* yc = yn + static_cast<size_t>(f) * OH * OW;
            for (int ki = 0; ki < KH; ++ki) {
              const int oh = h * stride - padding + ki;
              if (oh < 0 || oh >= OH) {
                src += KW;
                continue;
              }
              T* yr = yc + static_cast<size_t>(oh) * OW;
              for (int kj = 0; kj < KW; ++kj) {
                const int ow = ww * stride - padding + kj;
                if (ow >= 0 && ow < OW) yr[ow] += src[kj];
              }
              src += KW;
            }
          }
        }
    }
  }

  auto xp = x.node();
  auto wp = w.node();
  auto bp = b.node();
  out->backprop = [=](typename Tensor<T>::Node& self) {
    // dCols[(n,h,w), (f,ki,kj)] = dy[n, f, h*s-p+ki, w*s-p+kj]
    RowMat<T> dCols = RowMat<T>::Zero(rows, K);
    const T* gv = self.grad.data();
    {
      T* crow = dCols.data();
      for (int n = 0; n < N; ++n) {
        const T* yn = gv + static_cast<size_t>(n) * F * OH * OW;
        for (int h = 0; h < H; ++h)
          for (int ww = 0; ww < W; ++ww, crow += K) {
            T* dst = crow;
            for (int f = 0; f < F; ++f) {
              const T* yc = yn + static_cast<size_t>(f) * OH * OW;
              for (int ki = 0; ki < KH; ++ki) {
                const int oh = h * stride - padding + ki;
                if (oh < 0 || oh >= OH) {
                  dst += KW;
                  continue;
                }
                const T* yr = yc + static_cast<size_t>(oh) * OW;
                for (int kj = 0; kj < KW; ++kj) {
                  const int ow = ww * stride - padding + kj;
                  if (ow >= 0 && ow < OW) dst[kj] = yr[ow];
                }
                dst += KW;
              }
            }
          }
      }
    }
    Eigen::Map<const RowMat<T>> X(xmat->data(), rows, C);
    Eigen::Map<const RowMat<T>> Wm(wp->val.data(), C, K);
    {
      auto& wg = wp->ensure_grad();
      Eigen::Map<RowMat<T>> dW(wg.data(), C, K);
      dW.noalias() += X.transpose() * dCols;
    }
    {
      auto& bg = bp->ensure_grad();
      for (int n = 0; n < N; ++n)
        for (int f = 0; f < F; ++f) {
          const T* src = gv + (static_cast<int64_t>(n) * F + f) * OH * OW;
          T s = T(0);
          for (int64_t i = 0; i < static_cast<int64_t>(OH) * OW; ++i) s += src[i];
          bg[f] += s;
        }
    }
    {
      RowMat<T> dX = dCols * Wm.transpose();  // (rows, C)
      auto& xg = xp->ensure_grad();
      const T* src = dX.data();
      for (int n = 0; n < N; ++n) {
        T* xn = xg.data() + static_cast<size_t>(n) * C * H * W;
        for (int i = 0; i < H * W; ++i)
          for (int c = 0; c < C; ++c) xn[static_cast<size_t>(c) * H * W + i] += *src++;
      }
    }
  };
  return Tensor<T>(std::move(out));
}

// ---------------------------------------------------------------------------
// Pooling / resampling / concat

template <typename T>
Tensor<T> max_pool2d(const Tensor<T>& x, int kernel, int stride) {
  detail::require_4d(x, "max_pool2d");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int OH = (H - kernel) / stride + 1;
  const int OW = (W - kernel) / stride + 1;
  if (OH <= 0 || OW <= 0) throw ShapeError("max_pool2d: empty output");

  auto out = detail::make_node<T>({N, C, OH, OW}, {x.node()});
  auto argmax = std::make_shared<std::vector<int64_t>>(out->val.size());
  const auto& xv = x.values();
  size_t o = 0;
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const T* xc = xv.data() + (static_cast<size_t>(n) * C + c) * H * W;
      const int64_t cbase = (static_cast<int64_t>(n) * C + c) * H * W;
      for (int oh = 0; oh < OH; ++oh)
        for (int ow = 0; ow < OW; ++ow, ++o) {
          T best{};
          int64_t bi = -1;
          for (int ki = 0; ki < kernel; ++ki)
            for (int kj = 0; kj < kernel; ++kj) {
              const int h = oh * stride + ki, w2 = ow * stride + kj;
              const T v = xc[static_cast<size_t>(h) * W + w2];
              if (bi < 0 || v > best) {
                best = v;
                bi = cbase + static_cast<int64_t>(h) * W + w2;
              }
            }
          out->val[o] = best;
          (*argmax)[o] = bi;
        }
    }
  auto xp = x.node();
  out->backprop = [xp, argmax](typename Tensor<T>::Node& self) {
    auto& xg = xp->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) xg[(*argmax)[i]] += self.grad[i];
  };
  return Tensor<T>(std::move(out));
}

template <typename T>
Tensor<T> upsample_nearest(const Tensor<T>& x, int factor) {
  detail::require_4d(x, "upsample_nearest");
  if (factor < 1) throw InvalidArgument("upsample_nearest: factor must be >= 1");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int OH = H * factor, OW = W * factor;
  auto out = detail::make_node<T>({N, C, OH, OW}, {x.node()});
  const auto& xv = x.values();
  for (int nc = 0; nc < N * C; ++nc) {
    const T* src = xv.data() + static_cast<size_t>(nc) * H * W;
    T* dst = out->val.data() + static_cast<size_t>(nc) * OH * OW;
    for (int oh = 0; oh < OH; ++oh)
      for (int ow = 0; ow < OW; ++ow)
        dst[static_cast<size_t>(oh) * OW + ow] =
            src[static_cast<size_t>(oh / factor) * W + ow / factor];
  }
  auto xp = x.node();
  out->backprop = [xp, N, C, H, W, factor, OH, OW](typename Tensor<T>::Node& self) {
    auto& xg = xp->ensure_grad();
    for (int nc = 0; nc < N * C; ++nc) {
      T* dst = xg.data() + static_cast<size_t>(nc) * H * W;
      const T* src = self.grad.data() + static_cast<size_t>(nc) * OH * OW;
      for (int oh = 0; oh < OH; ++oh)
        for (int ow = 0; ow < OW; ++ow)
          dst[static_cast<size_t>(oh / factor) * W + ow / factor] +=
              src[static_cast<size_t>(oh) * OW + ow];
    }
  };
  return Tensor<T>(std::move(out));
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_4d(a, "concat_channels");
  detail::require_4d(b, "concat_channels");
  const int N = a.dim(0), Ca = a.dim(1), H = a.dim(2), W = a.dim(3);
  const int Cb = b.dim(1);
  if (b.dim(0) != N || b.dim(2) != H || b.dim(3) != W)
    throw ShapeError("concat_channels: spatial/batch mismatch " + detail::shape_str(a.shape()) +
                     " vs " + detail::shape_str(b.shape()));
  auto out = detail::make_node<T>({N, Ca + Cb, H, W}, {a.node(), b.node()});
  const size_t plane = static_cast<size_t>(H) * W;
  for (int n = 0; n < N; ++n) {
    std::copy_n(a.values().data() + static_cast<size_t>(n) * Ca * plane, Ca * plane,
                out->val.data() + static_cast<size_t>(n) * (Ca + Cb) * plane);
    std::copy_n(b.values().data() + static_cast<size_t>(n) * Cb * plane, Cb * plane,
                out->val.data() + static_cast<size_t>(n) * (Ca + Cb) * plane + Ca * plane);
  }
  auto ap = a.node(), bp = b.node();
  out->backprop = [ap, bp, N, Ca, Cb, plane](typename Tensor<T>::Node& self) {
    auto& ag = ap->ensure_grad();
    auto& bg = bp->ensure_grad();
    for (int n = 0; n < N; ++n) {
      const T* src = self.grad.data() + static_cast<size_t>(n) * (Ca + Cb) * plane;
      T* da = ag.data() + static_cast<size_t>(n) * Ca * plane;
      T* db = bg.data() + static_cast<size_t>(n) * Cb * plane;
      for (size_t i = 0; i < Ca * plane; ++i) da[i] += src[i];
      for (size_t i = 0; i < Cb * plane; ++i) db[i] += src[Ca * plane + i];
    }
  };
  return Tensor<T>(std::move(out));
}

// ---------------------------------------------------------------------------
// Batch norm and dropout

// Per-channel batch normalization over (N, H, W). In training mode the batch
// statistics normalize and the running buffers are updated in place; in
// inference mode the running buffers normalize and are treated as constants.
template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     std::vector<T>* running_mean, std::vector<T>* running_var, bool training,
                     T momentum = T(0.1), T eps = T(1e-5)) {
  detail::require_4d(x, "batch_norm");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (gamma.numel() != C || beta.numel() != C)
    throw ShapeError("batch_norm: affine parameter size mismatch");
  const int64_t M = static_cast<int64_t>(N) * H * W;
  const size_t plane = static_cast<size_t>(H) * W;

  auto out = detail::make_node<T>(x.shape(), {x.node(), gamma.node(), beta.node()});
  auto xhat = std::make_shared<std::vector<T>>(x.values().size());
  auto inv_std = std::make_shared<std::vector<T>>(C);

  const auto& xv = x.values();
  std::vector<T> mean(C, T(0)), var(C, T(0));
  if (training) {
    for (int c = 0; c < C; ++c) {
      double m = 0;
      for (int n = 0; n < N; ++n) {
        const T* src = xv.data() + (static_cast<size_t>(n) * C + c) * plane;
        for (size_t i = 0; i < plane; ++i) m += src[i];
      }
      m /= static_cast<double>(M);
      double v = 0;
      for (int n = 0; n < N; ++n) {
        const T* src = xv.data() + (static_cast<size_t>(n) * C + c) * plane;
        for (size_t i = 0; i < plane; ++i) {
          const double d = src[i] - m;
          v += d * d;
        }
      }
      v /= static_cast<double>(M);  // biased, used for normalization
      mean[c] = static_cast<T>(m);
      var[c] = static_cast<T>(v);
      if (running_mean && running_var) {
        const double unbiased = (M > 1) ? v * static_cast<double>(M) / (M - 1) : v;
        (*running_mean)[c] += momentum * (static_cast<T>(m) - (*running_mean)[c]);
        (*running_var)[c] += momentum * (static_cast<T>(unbiased) - (*running_var)[c]);
      }
    }
  } else {
    if (!running_mean || !running_var)
      throw InvalidArgument("batch_norm: inference mode requires running statistics");
    for (int c = 0; c < C; ++c) {
      mean[c] = (*running_mean)[c];
      var[c] = (*running_var)[c];
    }
  }

  const auto& gv = gamma.values();
  const auto& bv = beta.values();
  for (int c = 0; c < C; ++c) {
    const T is = T(1) / std::sqrt(var[c] + eps);
    (*inv_std)[c] = is;
    for (int n = 0; n < N; ++n) {
      const T* src = xv.data() + (static_cast<size_t>(n) * C + c) * plane;
      T* xh = xhat->data() + (static_cast<size_t>(n) * C + c) * plane;
      T* dst = out->val.data() + (static_cast<size_t>(n) * C + c) * plane;
      for (size_t i = 0; i < plane; ++i) {
        xh[i] = (src[i] - mean[c]) * is;
        dst[i] = gv[c] * xh[i] + bv[c];
      }
    }
  }

  auto xp = x.node();
  auto gp = gamma.node();
  auto bp = beta.node();
  out->backprop = [=](typename Tensor<T>::Node& self) {
    auto& xg = xp->ensure_grad();
    auto& gg = gp->ensure_grad();
    auto& bg = bp->ensure_grad();
    for (int c = 0; c < C; ++c) {
      double sum_dy = 0, sum_dy_xhat = 0;
      for (int n = 0; n < N; ++n) {
        const T* dy = self.grad.data() + (static_cast<size_t>(n) * C + c) * plane;
        const T* xh = xhat->data() + (static_cast<size_t>(n) * C + c) * plane;
        for (size_t i = 0; i < plane; ++i) {
          sum_dy += dy[i];
          sum_dy_xhat += dy[i] * xh[i];
        }
      }
      gg[c] += static_cast<T>(sum_dy_xhat);
      bg[c] += static_cast<T>(sum_dy);
      const T g_is = gp->val[c] * (*inv_std)[c];
      if (training) {
        const T mdy = static_cast<T>(sum_dy / static_cast<double>(M));
        const T mdyx = static_cast<T>(sum_dy_xhat / static_cast<double>(M));
        for (int n = 0; n < N; ++n) {
          const T* dy = self.grad.data() + (static_cast<size_t>(n) * C + c) * plane;
          const T* xh = xhat->data() + (static_cast<size_t>(n) * C + c) * plane;
          T* dx = xg.data() + (static_cast<size_t>(n) * C + c) * plane;
          for (size_t i = 0; i < plane; ++i) dx[i] += g_is * (dy[i] - mdy - xh[i] * mdyx);
        }
      } else {
        for (int n = 0; n < N; ++n) {
          const T* dy = self.grad.data() + (static_cast<size_t>(n) * C + c) * plane;
          T* dx = xg.data() + (static_cast<size_t>(n) * C + c) * plane;
          for (size_t i = 0; i < plane; ++i) dx[i] += g_is * dy[i];
        }
      }
    }
  };
  return Tensor<T>(std::move(out));
}

// Inverted dropout; identity when not training or rate == 0.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, T rate, bool training, Rng& rng) {
  if (rate < T(0) || rate >= T(1)) throw InvalidArgument("dropout: rate must be in [0, 1)");
  if (!training || rate == T(0)) {
    // Pass-through node keeps graph connectivity without touching values.
    auto n = detail::make_node<T>(x.shape(), {x.node()});
    n->val = x.values();
    auto xp = x.node();
    n->backprop = [xp](typename Tensor<T>::Node& self) {
      auto& xg = xp->ensure_grad();
      for (size_t i = 0; i < xg.size(); ++i) xg[i] += self.grad[i];
    };
    return Tensor<T>(std::move(n));
  }
  auto mask = std::make_shared<std::vector<T>>(x.values().size());
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const T keep_scale = T(1) / (T(1) - rate);
  for (auto& m : *mask) m = (unit(rng) < static_cast<double>(rate)) ? T(0) : keep_scale;

  auto n = detail::make_node<T>(x.shape(), {x.node()});
  const auto& xv = x.values();
  for (size_t i = 0; i < xv.size(); ++i) n->val[i] = xv[i] * (*mask)[i];
  auto xp = x.node();
  n->backprop = [xp, mask](typename Tensor<T>::Node& self) {
    auto& xg = xp->ensure_grad();
    for (size_t i = 0; i < xg.size(); ++i) xg[i] += self.grad[i] * (*mask)[i];
  };
  return Tensor<T>(std::move(n));
}

// ---------------------------------------------------------------------------
// Reductions / losses

template <typename T>
Tensor<T> mean_all(const Tensor<T>& x) {
  auto n = detail::make_node<T>({1}, {x.node()});
  double s = 0;
  for (T v : x.values()) s += v;
  const int64_t count = x.numel();
  n->val[0] = static_cast<T>(s / static_cast<double>(count));
  auto xp = x.node();
  n->backprop = [xp, count](typename Tensor<T>::Node& self) {
    auto& xg = xp->ensure_grad();
    const T g = self.grad[0] / static_cast<T>(count);
    for (auto& v : xg) v += g;
  };
  return Tensor<T>(std::move(n));
}

// mean |a - b| over all elements.
template <typename T>
Tensor<T> l1_mean(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) throw ShapeError("l1_mean: shape mismatch");
  auto n = detail::make_node<T>({1}, {a.node(), b.node()});
  const auto& av = a.values();
  const auto& bv = b.values();
  double s = 0;
  for (size_t i = 0; i < av.size(); ++i) s += std::abs(static_cast<double>(av[i]) - bv[i]);
  const int64_t count = a.numel();
  n->val[0] = static_cast<T>(s / static_cast<double>(count));
  auto ap = a.node(), bp = b.node();
  n->backprop = [ap, bp, count](typename Tensor<T>::Node& self) {
    auto& ag = ap->ensure_grad();
    auto& bg = bp->ensure_grad();
    const T g = self.grad[0] / static_cast<T>(count);
    for (size_t i = 0; i < ag.size(); ++i) {
      const T d = ap->val[i] - bp->val[i];
      const T sg = d > T(0) ? g : (d < T(0) ? -g : T(0));
      ag[i] += sg;
      bg[i] -= sg;
    }
  };
  return Tensor<T>(std::move(n));
}

// Numerically stable binary cross-entropy on logits against a constant
// target, averaged over all elements.
template <typename T>
Tensor<T> bce_with_logits_mean(const Tensor<T>& logits, T target) {
  auto n = detail::make_node<T>({1}, {logits.node()});
  const auto& xv = logits.values();
  double s = 0;
  for (T x : xv) {
    const double xd = x;
    s += std::max(xd, 0.0) - xd * target + std::log1p(std::exp(-std::abs(xd)));
  }
  const int64_t count = logits.numel();
  n->val[0] = static_cast<T>(s / static_cast<double>(count));
  auto xp = logits.node();
  n->backprop = [xp, target, count](typename Tensor<T>::Node& self) {
    auto& xg = xp->ensure_grad();
    const T g = self.grad[0] / static_cast<T>(count);
    for (size_t i = 0; i < xg.size(); ++i) {
      const T sig = T(1) / (T(1) + std::exp(-xp->val[i]));
      xg[i] += g * (sig - target);
    }
  };
  return Tensor<T>(std::move(n));
}

}  // namespace pagan::nn
