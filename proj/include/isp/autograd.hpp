#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

#include "isp/nn_ops.hpp"
#include "isp/tensor.hpp"

namespace isp {

// Small dynamic tape. Nodes hold their forward value and accumulate
// gradients during the reverse sweep; ids give a valid topological order
// because every op's inputs are created before its output.

template <typename T>
struct NodeT {
  TensorT<T> value;
  TensorT<T> grad;
  std::int64_t id = 0;
  std::vector<std::shared_ptr<NodeT>> parents;
  std::function<void(NodeT&)> backward;

  void ensure_grad() {
    if (grad.shape() != value.shape()) grad = TensorT<T>(value.shape());
  }
};

template <typename T>
class VarT {
 public:
  VarT() = default;
  explicit VarT(std::shared_ptr<NodeT<T>> n) : n_(std::move(n)) {}

  static VarT leaf(TensorT<T> t) {
    auto n = std::make_shared<NodeT<T>>();
    n->value = std::move(t);
    n->id = next_id();
    return VarT(std::move(n));
  }

  const TensorT<T>& value() const { return n_->value; }
  const TensorT<T>& grad() const { return n_->grad; }
  const Shape& shape() const { return n_->value.shape(); }
  std::shared_ptr<NodeT<T>> node() const { return n_; }
  bool valid() const { return n_ != nullptr; }

  static std::int64_t next_id() {
    static std::int64_t counter = 0;
    return ++counter;
  }

  template <typename... Parents>
  static VarT make(TensorT<T> value, std::function<void(NodeT<T>&)> bwd, Parents... parents) {
    auto n = std::make_shared<NodeT<T>>();
    n->value = std::move(value);
    n->id = next_id();
    n->backward = std::move(bwd);
    (n->parents.push_back(parents.node()), ...);
    return VarT(std::move(n));
  }

  // Reverse sweep seeded with all-ones at this node (a 1-element tensor for
  // scalar losses).
  void backward() const {
    n_->grad = TensorT<T>::ones(n_->value.shape());
    std::vector<NodeT<T>*> order;
    std::unordered_set<NodeT<T>*> seen;
    std::vector<NodeT<T>*> stack{n_.get()};
    while (!stack.empty()) {
      NodeT<T>* cur = stack.back();
      stack.pop_back();
      if (!seen.insert(cur).second) continue;
      order.push_back(cur);
      for (auto& p : cur->parents) stack.push_back(p.get());
    }
    std::sort(order.begin(), order.end(),
              [](NodeT<T>* a, NodeT<T>* b) { return a->id > b->id; });
    for (NodeT<T>* node : order)
      if (node->backward) node->backward(*node);
  }

 private:
  std::shared_ptr<NodeT<T>> n_;
};

namespace ag {

template <typename T>
void accumulate(std::shared_ptr<NodeT<T>>& p, const TensorT<T>& g) {
  p->ensure_grad();
  T* dst = p->grad.data();
  const T* src = g.data();
  for (std::int64_t i = 0; i < g.numel(); ++i) dst[i] += src[i];
}

// Reduces g over broadcast dimensions down to shape s.
template <typename T>
TensorT<T> reduce_to(const TensorT<T>& g, const Shape& s) {
  if (g.shape() == s) return g;
  TensorT<T> out(s);
  const Shape& gs = g.shape();
  const std::int64_t plane = static_cast<std::int64_t>(gs.h) * gs.w;
  for (int bi = 0; bi < gs.b; ++bi)
    for (int c = 0; c < gs.c; ++c) {
      const T* src = g.data() + g.index(bi, c, 0, 0);
      T acc = T(0);
      for (std::int64_t i = 0; i < plane; ++i) acc += src[i];
      out.at(s.b == 1 ? 0 : bi, c, 0, 0) += acc;
    }
  return out;
}

template <typename T>
VarT<T> add(VarT<T> a, VarT<T> b) {
  TensorT<T> v = elementwise(EwOp::kAdd, a.value(), b.value());
  Shape sb = b.shape();
  return VarT<T>::make(
      std::move(v),
      [sb](NodeT<T>& n) {
        accumulate(n.parents[0], n.grad);
        accumulate(n.parents[1], reduce_to(n.grad, sb));
      },
      a, b);
}

template <typename T>
VarT<T> sub(VarT<T> a, VarT<T> b) {
  TensorT<T> v = elementwise(EwOp::kSub, a.value(), b.value());
  Shape sb = b.shape();
  return VarT<T>::make(
      std::move(v),
      [sb](NodeT<T>& n) {
        accumulate(n.parents[0], n.grad);
        TensorT<T> gb = reduce_to(n.grad, sb);
        for (auto& x : gb.vec()) x = -x;
        accumulate(n.parents[1], gb);
      },
      a, b);
}

template <typename T>
VarT<T> mul(VarT<T> a, VarT<T> b) {
  TensorT<T> v = elementwise(EwOp::kMul, a.value(), b.value());
  Shape sb = b.shape();
  return VarT<T>::make(
      std::move(v),
      [sb](NodeT<T>& n) {
        accumulate(n.parents[0], elementwise(EwOp::kMul, n.grad, n.parents[1]->value));
        if (sb == n.parents[0]->value.shape()) {
          accumulate(n.parents[1], elementwise(EwOp::kMul, n.grad, n.parents[0]->value));
        } else {
          accumulate(n.parents[1],
                     reduce_to(elementwise(EwOp::kMul, n.grad, n.parents[0]->value), sb));
        }
      },
      a, b);
}

// Elementwise division, same-shape operands only.
template <typename T>
VarT<T> div(VarT<T> a, VarT<T> b) {
  if (a.shape() != b.shape())
    throw TensorError("div shape mismatch: " + a.shape().str() + " vs " + b.shape().str());
  TensorT<T> v(a.shape());
  for (std::int64_t i = 0; i < v.numel(); ++i)
    v.data()[i] = a.value().data()[i] / b.value().data()[i];
  v.check_finite("div");
  return VarT<T>::make(
      std::move(v),
      [](NodeT<T>& n) {
        const TensorT<T>& av = n.parents[0]->value;
        const TensorT<T>& bv = n.parents[1]->value;
        TensorT<T> ga(av.shape()), gb(bv.shape());
        for (std::int64_t i = 0; i < av.numel(); ++i) {
          const T inv = T(1) / bv.data()[i];
          ga.data()[i] = n.grad.data()[i] * inv;
          gb.data()[i] = -n.grad.data()[i] * av.data()[i] * inv * inv;
        }
        accumulate(n.parents[0], ga);
        accumulate(n.parents[1], gb);
      },
      a, b);
}

template <typename T>
VarT<T> add_scalar(VarT<T> a, T s) {
  TensorT<T> v(a.shape());
  for (std::int64_t i = 0; i < v.numel(); ++i) v.data()[i] = a.value().data()[i] + s;
  return VarT<T>::make(
      std::move(v), [](NodeT<T>& n) { accumulate(n.parents[0], n.grad); }, a);
}

template <typename T>
VarT<T> mul_scalar(VarT<T> a, T s) {
  TensorT<T> v(a.shape());
  for (std::int64_t i = 0; i < v.numel(); ++i) v.data()[i] = a.value().data()[i] * s;
  return VarT<T>::make(
      std::move(v),
      [s](NodeT<T>& n) {
        TensorT<T> g(n.grad.shape());
        for (std::int64_t i = 0; i < g.numel(); ++i) g.data()[i] = n.grad.data()[i] * s;
        accumulate(n.parents[0], g);
      },
      a);
}

template <typename T>
VarT<T> sqrt_v(VarT<T> a) {
  TensorT<T> v(a.shape());
  for (std::int64_t i = 0; i < v.numel(); ++i)
    v.data()[i] = std::sqrt(a.value().data()[i]);
  v.check_finite("sqrt");
  TensorT<T> saved = v;
  return VarT<T>::make(
      std::move(v),
      [saved](NodeT<T>& n) {
        TensorT<T> g(n.grad.shape());
        for (std::int64_t i = 0; i < g.numel(); ++i)
          g.data()[i] = n.grad.data()[i] / (T(2) * saved.data()[i]);
        accumulate(n.parents[0], g);
      },
      a);
}

// |x| with subgradient 0 at the origin.
template <typename T>
VarT<T> abs_v(VarT<T> a) {
  TensorT<T> v(a.shape());
  for (std::int64_t i = 0; i < v.numel(); ++i) v.data()[i] = std::abs(a.value().data()[i]);
  return VarT<T>::make(
      std::move(v),
      [](NodeT<T>& n) {
        const TensorT<T>& av = n.parents[0]->value;
        TensorT<T> g(av.shape());
        for (std::int64_t i = 0; i < g.numel(); ++i) {
          const T x = av.data()[i];
          g.data()[i] = x > T(0) ? n.grad.data()[i] : (x < T(0) ? -n.grad.data()[i] : T(0));
        }
        accumulate(n.parents[0], g);
      },
      a);
}

// x^p on a 1-element tensor with the base floored at `floor` (MS-SSIM uses
// fractional exponents; negative contrast terms are clamped away).
template <typename T>
VarT<T> pow_scalar(VarT<T> a, double p, double floor = 1e-6) {
  if (a.value().numel() != 1) throw TensorError("pow_scalar: expects a scalar tensor");
  const double base = std::max(static_cast<double>(a.value().data()[0]), floor);
  const bool clamped = static_cast<double>(a.value().data()[0]) < floor;
  TensorT<T> v({1, 1, 1, 1});
  v.data()[0] = static_cast<T>(p == 1.0 ? base : std::pow(base, p));
  return VarT<T>::make(
      std::move(v),
      [p, base, clamped](NodeT<T>& n) {
        TensorT<T> g({1, 1, 1, 1});
        g.data()[0] =
            clamped ? T(0) : n.grad.data()[0] * static_cast<T>(p * std::pow(base, p - 1.0));
        accumulate(n.parents[0], g);
      },
      a);
}

template <typename T>
VarT<T> mean_all(VarT<T> a) {
  TensorT<T> v({1, 1, 1, 1});
  T acc = T(0);
  for (std::int64_t i = 0; i < a.value().numel(); ++i) acc += a.value().data()[i];
  const std::int64_t count = a.value().numel();
  v.data()[0] = acc / static_cast<T>(count);
  return VarT<T>::make(
      std::move(v),
      [count](NodeT<T>& n) {
        const T g = n.grad.data()[0] / static_cast<T>(count);
        TensorT<T> ga(n.parents[0]->value.shape());
        for (auto& x : ga.vec()) x = g;
        accumulate(n.parents[0], ga);
      },
      a);
}

template <typename T>
VarT<T> concat(const std::vector<VarT<T>>& parts) {
  std::vector<const TensorT<T>*> ptrs;
  ptrs.reserve(parts.size());
  for (const auto& p : parts) ptrs.push_back(&p.value());
  TensorT<T> v = concat_channels(ptrs);
  std::vector<int> widths;
  for (const auto& p : parts) widths.push_back(p.shape().c);
  auto n = std::make_shared<NodeT<T>>();
  n->value = std::move(v);
  n->id = VarT<T>::next_id();
  for (const auto& p : parts) n->parents.push_back(p.node());
  n->backward = [widths](NodeT<T>& nd) {
    int c0 = 0;
    for (std::size_t i = 0; i < widths.size(); ++i) {
      accumulate(nd.parents[i], slice_channels(nd.grad, c0, widths[i]));
      c0 += widths[i];
    }
  };
  return VarT<T>(std::move(n));
}

template <typename T>
VarT<T> activation(VarT<T> a, Act kind) {
  if (kind == Act::kNone) return a;
  TensorT<T> v = act_forward(kind, a.value());
  TensorT<T> saved = v;
  return VarT<T>::make(
      std::move(v),
      [kind, saved](NodeT<T>& n) {
        accumulate(n.parents[0], act_backward(kind, n.parents[0]->value, saved, n.grad));
      },
      a);
}

// Convolution with an optionally fused post-activation. `weight`/`bias`
// may be parameter leaves or constants (e.g. the fixed SSIM window).
template <typename T>
VarT<T> conv2d(VarT<T> x, VarT<T> weight, VarT<T> bias, const Conv2dParams& p, Act act) {
  TensorT<T> pre = conv2d_forward(x.value(), weight.value(),
                                  bias.valid() ? &bias.value() : nullptr, p);
  TensorT<T> v = act == Act::kNone ? pre : act_forward(act, pre);
  const bool has_bias = bias.valid();
  TensorT<T> pre_saved = act == Act::kNone ? TensorT<T>() : pre;
  TensorT<T> post_saved = act == Act::kNone ? TensorT<T>() : v;
  auto bwd = [p, act, has_bias, pre_saved, post_saved](NodeT<T>& n) {
    TensorT<T> gy = act == Act::kNone
                        ? n.grad
                        : act_backward(act, pre_saved, post_saved, n.grad);
    accumulate(n.parents[0],
               conv2d_backward_input(gy, n.parents[1]->value, p, n.parents[0]->value.shape()));
    accumulate(n.parents[1], conv2d_backward_weight(n.parents[0]->value, gy, p));
    if (has_bias) accumulate(n.parents[2], conv2d_backward_bias(gy));
  };
  if (has_bias) return VarT<T>::make(std::move(v), std::move(bwd), x, weight, bias);
  return VarT<T>::make(std::move(v), std::move(bwd), x, weight);
}

template <typename T>
VarT<T> conv_transposed(VarT<T> x, VarT<T> weight, VarT<T> bias,
                        const ConvTranspose2dParams& p, Act act) {
  TensorT<T> pre = conv_transposed_forward(x.value(), weight.value(),
                                           bias.valid() ? &bias.value() : nullptr, p);
  TensorT<T> v = act == Act::kNone ? pre : act_forward(act, pre);
  const bool has_bias = bias.valid();
  TensorT<T> pre_saved = act == Act::kNone ? TensorT<T>() : pre;
  TensorT<T> post_saved = act == Act::kNone ? TensorT<T>() : v;
  auto bwd = [p, act, has_bias, pre_saved, post_saved](NodeT<T>& n) {
    TensorT<T> gy = act == Act::kNone
                        ? n.grad
                        : act_backward(act, pre_saved, post_saved, n.grad);
    TensorT<T> gx, gw, gb;
    conv_transposed_backward(n.parents[0]->value, n.parents[1]->value, p, gy, &gx, &gw,
                             has_bias ? &gb : nullptr);
    accumulate(n.parents[0], gx);
    accumulate(n.parents[1], gw);
    if (has_bias) accumulate(n.parents[2], gb);
  };
  if (has_bias) return VarT<T>::make(std::move(v), std::move(bwd), x, weight, bias);
  return VarT<T>::make(std::move(v), std::move(bwd), x, weight);
}

template <typename T>
VarT<T> pixel_shuffle_v(VarT<T> x, int r) {
  return VarT<T>::make(
      pixel_shuffle(x.value(), r),
      [r](NodeT<T>& n) { accumulate(n.parents[0], space_to_depth(n.grad, r)); }, x);
}

template <typename T>
VarT<T> space_to_depth_v(VarT<T> x, int r) {
  return VarT<T>::make(
      space_to_depth(x.value(), r),
      [r](NodeT<T>& n) { accumulate(n.parents[0], pixel_shuffle(n.grad, r)); }, x);
}

template <typename T>
VarT<T> global_avg_pool_v(VarT<T> x) {
  return VarT<T>::make(
      global_avg_pool(x.value()),
      [](NodeT<T>& n) {
        accumulate(n.parents[0],
                   global_avg_pool_backward(n.parents[0]->value.shape(), n.grad));
      },
      x);
}

template <typename T>
VarT<T> max_pool2_v(VarT<T> x) {
  auto argmax = std::make_shared<std::vector<std::int64_t>>();
  TensorT<T> v = max_pool2(x.value(), argmax.get());
  return VarT<T>::make(
      std::move(v),
      [argmax](NodeT<T>& n) {
        accumulate(n.parents[0],
                   max_pool2_backward(n.parents[0]->value.shape(), *argmax, n.grad));
      },
      x);
}

template <typename T>
VarT<T> mean_pool2_v(VarT<T> x) {
  return VarT<T>::make(
      mean_pool2(x.value()),
      [](NodeT<T>& n) {
        accumulate(n.parents[0], mean_pool2_backward(n.parents[0]->value.shape(), n.grad));
      },
      x);
}

template <typename T>
VarT<T> bilinear_up2_v(VarT<T> x) {
  return VarT<T>::make(
      bilinear_up2(x.value()),
      [](NodeT<T>& n) {
        accumulate(n.parents[0], bilinear_up2_backward(n.parents[0]->value.shape(), n.grad));
      },
      x);
}

}  // namespace ag

using Var = VarT<float>;

}  // namespace isp
