#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "isp/gemm.hpp"
#include "isp/tensor.hpp"

namespace isp {

enum class Padding { kSame, kValid };
enum class Act { kNone, kRelu, kTanh, kSigmoid };

inline const char* act_name(Act a) {
  switch (a) {
    case Act::kNone: return "none";
    case Act::kRelu: return "relu";
    case Act::kTanh: return "tanh";
    case Act::kSigmoid: return "sigmoid";
  }
  return "?";
}

struct Conv2dParams {
  int in_channels = 0;
  int out_channels = 0;
  int kh = 3, kw = 3;
  int sh = 1, sw = 1;
  int dh = 1, dw = 1;
  int groups = 1;
  Padding padding = Padding::kSame;

  void validate() const {
    if (in_channels <= 0 || out_channels <= 0) throw TensorError("conv: non-positive channel count");
    if (groups <= 0 || in_channels % groups || out_channels % groups)
      throw TensorError("conv: channels not divisible by groups");
    if (kh <= 0 || kw <= 0 || sh <= 0 || sw <= 0 || dh <= 0 || dw <= 0)
      throw TensorError("conv: non-positive kernel/stride/dilation");
  }

  Shape weight_shape() const { return {out_channels, in_channels / groups, kh, kw}; }
  Shape bias_shape() const { return {1, out_channels, 1, 1}; }
};

struct ConvGeometry {
  int ho, wo;
  int pad_top, pad_left;
};

inline ConvGeometry conv_geometry(const Shape& in, const Conv2dParams& p) {
  const int ekh = (p.kh - 1) * p.dh + 1;
  const int ekw = (p.kw - 1) * p.dw + 1;
  ConvGeometry g{};
  if (p.padding == Padding::kSame) {
    g.ho = (in.h + p.sh - 1) / p.sh;
    g.wo = (in.w + p.sw - 1) / p.sw;
    g.pad_top = std::max((g.ho - 1) * p.sh + ekh - in.h, 0) / 2;
    g.pad_left = std::max((g.wo - 1) * p.sw + ekw - in.w, 0) / 2;
  } else {
    if (in.h < ekh || in.w < ekw)
      throw TensorError("conv: kernel larger than input under valid padding");
    g.ho = (in.h - ekh) / p.sh + 1;
    g.wo = (in.w - ekw) / p.sw + 1;
    g.pad_top = 0;
    g.pad_left = 0;
  }
  return g;
}

inline Shape conv_out_shape(const Shape& in, const Conv2dParams& p) {
  ConvGeometry g = conv_geometry(in, p);
  return {in.b, p.out_channels, g.ho, g.wo};
}

namespace detail {

// col: (cg*kh*kw, ho*wo) for one (batch, group) slice of x.
template <typename T>
void im2col(const TensorT<T>& x, int bi, int c0, int cg, const Conv2dParams& p,
            const ConvGeometry& g, T* col) {
  const Shape& s = x.shape();
  const std::int64_t n = static_cast<std::int64_t>(g.ho) * g.wo;
  for (int c = 0; c < cg; ++c) {
    const T* xc = x.data() + x.index(bi, c0 + c, 0, 0);
    for (int ki = 0; ki < p.kh; ++ki) {
      for (int kj = 0; kj < p.kw; ++kj) {
        T* row = col + ((static_cast<std::int64_t>(c) * p.kh + ki) * p.kw + kj) * n;
        for (int oh = 0; oh < g.ho; ++oh) {
          const int ih = oh * p.sh - g.pad_top + ki * p.dh;
          T* dst = row + static_cast<std::int64_t>(oh) * g.wo;
          if (ih < 0 || ih >= s.h) {
            std::fill(dst, dst + g.wo, T(0));
            continue;
          }
          const T* src = xc + static_cast<std::int64_t>(ih) * s.w;
          for (int ow = 0; ow < g.wo; ++ow) {
            const int iw = ow * p.sw - g.pad_left + kj * p.dw;
            dst[ow] = (iw < 0 || iw >= s.w) ? T(0) : src[iw];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_accumulate(const T* col, int bi, int c0, int cg, const Conv2dParams& p,
                       const ConvGeometry& g, TensorT<T>& gx) {
  const Shape& s = gx.shape();
  const std::int64_t n = static_cast<std::int64_t>(g.ho) * g.wo;
  for (int c = 0; c < cg; ++c) {
    T* xc = gx.data() + gx.index(bi, c0 + c, 0, 0);
    for (int ki = 0; ki < p.kh; ++ki) {
      for (int kj = 0; kj < p.kw; ++kj) {
        const T* row = col + ((static_cast<std::int64_t>(c) * p.kh + ki) * p.kw + kj) * n;
        for (int oh = 0; oh < g.ho; ++oh) {
          const int ih = oh * p.sh - g.pad_top + ki * p.dh;
          if (ih < 0 || ih >= s.h) continue;
          const T* src = row + static_cast<std::int64_t>(oh) * g.wo;
          T* dst = xc + static_cast<std::int64_t>(ih) * s.w;
          for (int ow = 0; ow < g.wo; ++ow) {
            const int iw = ow * p.sw - g.pad_left + kj * p.dw;
            if (iw >= 0 && iw < s.w) dst[iw] += src[ow];
          }
        }
      }
    }
  }
}

}  // namespace detail

template <typename T>
TensorT<T> conv2d_forward(const TensorT<T>& x, const TensorT<T>& weight,
                          const TensorT<T>* bias, const Conv2dParams& p) {
  p.validate();
  const Shape& s = x.shape();
  if (s.c != p.in_channels)
    throw TensorError("conv: input has " + std::to_string(s.c) + " channels, expected " +
                      std::to_string(p.in_channels));
  if (weight.shape() != p.weight_shape())
    throw TensorError("conv: weight shape " + weight.shape().str() + " != " +
                      p.weight_shape().str());
  const ConvGeometry g = conv_geometry(s, p);
  const int cg = p.in_channels / p.groups;
  const int og = p.out_channels / p.groups;
  const std::int64_t n = static_cast<std::int64_t>(g.ho) * g.wo;
  const std::int64_t k = static_cast<std::int64_t>(cg) * p.kh * p.kw;
  TensorT<T> y({s.b, p.out_channels, g.ho, g.wo});
  std::vector<T> col(static_cast<std::size_t>(k) * n);
  for (int bi = 0; bi < s.b; ++bi) {
    for (int gi = 0; gi < p.groups; ++gi) {
      detail::im2col(x, bi, gi * cg, cg, p, g, col.data());
      const T* wg = weight.data() + static_cast<std::int64_t>(gi) * og * k;
      T* yg = y.data() + y.index(bi, gi * og, 0, 0);
      gemm_nn<T>(false, og, static_cast<int>(n), static_cast<int>(k), wg, col.data(), yg);
    }
  }
  if (bias) {
    if (bias->shape() != p.bias_shape())
      throw TensorError("conv: bias shape " + bias->shape().str());
    for (int bi = 0; bi < s.b; ++bi)
      for (int c = 0; c < p.out_channels; ++c) {
        const T bv = bias->data()[c];
        T* yc = y.data() + y.index(bi, c, 0, 0);
        for (std::int64_t i = 0; i < n; ++i) yc[i] += bv;
      }
  }
  return y;
}

template <typename T>
TensorT<T> conv2d_backward_input(const TensorT<T>& gy, const TensorT<T>& weight,
                                 const Conv2dParams& p, const Shape& in_shape) {
  const ConvGeometry g = conv_geometry(in_shape, p);
  const int cg = p.in_channels / p.groups;
  const int og = p.out_channels / p.groups;
  const std::int64_t n = static_cast<std::int64_t>(g.ho) * g.wo;
  const std::int64_t k = static_cast<std::int64_t>(cg) * p.kh * p.kw;
  if (gy.shape().c != p.out_channels || gy.shape().h != g.ho || gy.shape().w != g.wo)
    throw TensorError("conv backward: upstream shape " + gy.shape().str());
  TensorT<T> gx(in_shape);
  std::vector<T> col(static_cast<std::size_t>(k) * n);
  for (int bi = 0; bi < in_shape.b; ++bi) {
    for (int gi = 0; gi < p.groups; ++gi) {
      const T* wg = weight.data() + static_cast<std::int64_t>(gi) * og * k;
      const T* gyg = gy.data() + gy.index(bi, gi * og, 0, 0);
      gemm_tn<T>(false, static_cast<int>(k), static_cast<int>(n), og, wg, gyg, col.data());
      detail::col2im_accumulate(col.data(), bi, gi * cg, cg, p, g, gx);
    }
  }
  return gx;
}

template <typename T>
TensorT<T> conv2d_backward_weight(const TensorT<T>& x, const TensorT<T>& gy,
                                  const Conv2dParams& p) {
  const Shape& s = x.shape();
  const ConvGeometry g = conv_geometry(s, p);
  const int cg = p.in_channels / p.groups;
  const int og = p.out_channels / p.groups;
  const std::int64_t n = static_cast<std::int64_t>(g.ho) * g.wo;
  const std::int64_t k = static_cast<std::int64_t>(cg) * p.kh * p.kw;
  TensorT<T> gw(p.weight_shape());
  std::vector<T> col(static_cast<std::size_t>(k) * n);
  for (int bi = 0; bi < s.b; ++bi) {
    for (int gi = 0; gi < p.groups; ++gi) {
      detail::im2col(x, bi, gi * cg, cg, p, g, col.data());
      const T* gyg = gy.data() + gy.index(bi, gi * og, 0, 0);
      T* gwg = gw.data() + static_cast<std::int64_t>(gi) * og * k;
      gemm_nt<T>(bi > 0, og, static_cast<int>(k), static_cast<int>(n), gyg, col.data(), gwg);
    }
  }
  return gw;
}

template <typename T>
TensorT<T> conv2d_backward_bias(const TensorT<T>& gy) {
  const Shape& s = gy.shape();
  TensorT<T> gb({1, s.c, 1, 1});
  const std::int64_t plane = static_cast<std::int64_t>(s.h) * s.w;
  for (int bi = 0; bi < s.b; ++bi)
    for (int c = 0; c < s.c; ++c) {
      const T* src = gy.data() + gy.index(bi, c, 0, 0);
      T acc = T(0);
      for (std::int64_t i = 0; i < plane; ++i) acc += src[i];
      gb.data()[c] += acc;
    }
  return gb;
}

// Transposed convolution, stride 2 only. Weight layout (in_channels,
// out_channels, kh, kw): the weight of the stride-2 conv this op is the
// adjoint of, so <conv2d(x,w), y> == <x, conv2d_transposed(y,w)> holds
// exactly by construction.
struct ConvTranspose2dParams {
  int in_channels = 0;
  int out_channels = 0;
  int kh = 2, kw = 2;
  int stride = 2;

  void validate() const {
    if (in_channels <= 0 || out_channels <= 0)
      throw TensorError("conv_transposed: non-positive channel count");
    if (stride != 2) throw TensorError("conv_transposed: only stride 2 is supported");
    if (!((kh == 2 && kw == 2) || (kh == 4 && kw == 4)))
      throw TensorError("conv_transposed: only 2x2 or 4x4 kernels are supported");
  }

  Shape weight_shape() const { return {in_channels, out_channels, kh, kw}; }
  Shape bias_shape() const { return {1, out_channels, 1, 1}; }

  Conv2dParams adjoint() const {
    Conv2dParams p;
    p.in_channels = out_channels;
    p.out_channels = in_channels;
    p.kh = kh;
    p.kw = kw;
    p.sh = p.sw = stride;
    p.padding = Padding::kSame;
    return p;
  }
};

template <typename T>
TensorT<T> conv_transposed_forward(const TensorT<T>& x, const TensorT<T>& weight,
                                   const TensorT<T>* bias, const ConvTranspose2dParams& p) {
  p.validate();
  const Shape& s = x.shape();
  if (s.c != p.in_channels)
    throw TensorError("conv_transposed: input has " + std::to_string(s.c) +
                      " channels, expected " + std::to_string(p.in_channels));
  const Shape out_shape{s.b, p.out_channels, s.h * 2, s.w * 2};
  TensorT<T> y = conv2d_backward_input(x, weight, p.adjoint(), out_shape);
  if (bias) {
    const std::int64_t plane = static_cast<std::int64_t>(out_shape.h) * out_shape.w;
    for (int bi = 0; bi < s.b; ++bi)
      for (int c = 0; c < p.out_channels; ++c) {
        const T bv = bias->data()[c];
        T* yc = y.data() + y.index(bi, c, 0, 0);
        for (std::int64_t i = 0; i < plane; ++i) yc[i] += bv;
      }
  }
  return y;
}

template <typename T>
void conv_transposed_backward(const TensorT<T>& x, const TensorT<T>& weight,
                              const ConvTranspose2dParams& p, const TensorT<T>& gy,
                              TensorT<T>* gx, TensorT<T>* gw, TensorT<T>* gb) {
  const Conv2dParams adj = p.adjoint();
  if (gx) *gx = conv2d_forward(gy, weight, static_cast<const TensorT<T>*>(nullptr), adj);
  if (gw) *gw = conv2d_backward_weight(gy, x, adj);
  if (gb) *gb = conv2d_backward_bias(gy);
}

// (B, C, H, W) -> (B, C/r^2, rH, rW); out[b,c,rh+i,rw+j] = in[b, c*r^2+i*r+j, h, w].
template <typename T>
TensorT<T> pixel_shuffle(const TensorT<T>& x, int r) {
  if (r <= 0) throw TensorError("pixel_shuffle: non-positive factor");
  const Shape& s = x.shape();
  if (s.c % (r * r)) throw TensorError("pixel_shuffle: channels not divisible by r^2");
  TensorT<T> y({s.b, s.c / (r * r), s.h * r, s.w * r});
  for (int bi = 0; bi < s.b; ++bi)
    for (int c = 0; c < y.shape().c; ++c)
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < r; ++j) {
          const int cin = c * r * r + i * r + j;
          for (int h = 0; h < s.h; ++h) {
            const T* src = x.data() + x.index(bi, cin, h, 0);
            T* dst = y.data() + y.index(bi, c, h * r + i, j);
            for (int w = 0; w < s.w; ++w) dst[static_cast<std::int64_t>(w) * r] = src[w];
          }
        }
  return y;
}

// Exact inverse of pixel_shuffle under the same channel-ordering convention.
template <typename T>
TensorT<T> space_to_depth(const TensorT<T>& x, int r) {
  if (r <= 0) throw TensorError("space_to_depth: non-positive factor");
  const Shape& s = x.shape();
  if (s.h % r || s.w % r) throw TensorError("space_to_depth: extent not divisible by r");
  TensorT<T> y({s.b, s.c * r * r, s.h / r, s.w / r});
  for (int bi = 0; bi < s.b; ++bi)
    for (int c = 0; c < s.c; ++c)
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < r; ++j) {
          const int cout = c * r * r + i * r + j;
          for (int h = 0; h < y.shape().h; ++h) {
            const T* src = x.data() + x.index(bi, c, h * r + i, j);
            T* dst = y.data() + y.index(bi, cout, h, 0);
            for (int w = 0; w < y.shape().w; ++w) dst[w] = src[static_cast<std::int64_t>(w) * r];
          }
        }
  return y;
}

template <typename T>
TensorT<T> act_forward(Act kind, const TensorT<T>& x) {
  TensorT<T> y(x.shape());
  const T* px = x.data();
  T* py = y.data();
  const std::int64_t n = x.numel();
  switch (kind) {
    case Act::kNone:
      std::copy(px, px + n, py);
      break;
    case Act::kRelu:
      for (std::int64_t i = 0; i < n; ++i) py[i] = px[i] > T(0) ? px[i] : T(0);
      break;
    case Act::kTanh:
      for (std::int64_t i = 0; i < n; ++i) py[i] = std::tanh(px[i]);
      break;
    case Act::kSigmoid:
      for (std::int64_t i = 0; i < n; ++i) py[i] = T(1) / (T(1) + std::exp(-px[i]));
      break;
  }
  return y;
}

template <typename T>
TensorT<T> act_backward(Act kind, const TensorT<T>& x, const TensorT<T>& y,
                        const TensorT<T>& gy) {
  TensorT<T> gx(x.shape());
  const T* px = x.data();
  const T* py = y.data();
  const T* pg = gy.data();
  T* po = gx.data();
  const std::int64_t n = x.numel();
  switch (kind) {
    case Act::kNone:
      std::copy(pg, pg + n, po);
      break;
    case Act::kRelu:
      for (std::int64_t i = 0; i < n; ++i) po[i] = px[i] > T(0) ? pg[i] : T(0);
      break;
    case Act::kTanh:
      for (std::int64_t i = 0; i < n; ++i) po[i] = pg[i] * (T(1) - py[i] * py[i]);
      break;
    case Act::kSigmoid:
      for (std::int64_t i = 0; i < n; ++i) po[i] = pg[i] * py[i] * (T(1) - py[i]);
      break;
  }
  return gx;
}

template <typename T>
TensorT<T> global_avg_pool(const TensorT<T>& x) {
  const Shape& s = x.shape();
  if (s.h < 1 || s.w < 1) throw TensorError("global_avg_pool: empty spatial extent");
  TensorT<T> y({s.b, s.c, 1, 1});
  const std::int64_t plane = static_cast<std::int64_t>(s.h) * s.w;
  for (int bi = 0; bi < s.b; ++bi)
    for (int c = 0; c < s.c; ++c) {
      const T* src = x.data() + x.index(bi, c, 0, 0);
      T acc = T(0);
      for (std::int64_t i = 0; i < plane; ++i) acc += src[i];
      y.at(bi, c, 0, 0) = acc / static_cast<T>(plane);
    }
  return y;
}

template <typename T>
TensorT<T> global_avg_pool_backward(const Shape& in_shape, const TensorT<T>& gy) {
  TensorT<T> gx(in_shape);
  const std::int64_t plane = static_cast<std::int64_t>(in_shape.h) * in_shape.w;
  const T scale = T(1) / static_cast<T>(plane);
  for (int bi = 0; bi < in_shape.b; ++bi)
    for (int c = 0; c < in_shape.c; ++c) {
      const T g = gy.at(bi, c, 0, 0) * scale;
      T* dst = gx.data() + gx.index(bi, c, 0, 0);
      for (std::int64_t i = 0; i < plane; ++i) dst[i] = g;
    }
  return gx;
}

// 2x2 stride-2 max pool; ties go to the first element in (h,w) scan order.
template <typename T>
TensorT<T> max_pool2(const TensorT<T>& x, std::vector<std::int64_t>* argmax = nullptr) {
  const Shape& s = x.shape();
  if (s.h % 2 || s.w % 2) throw TensorError("max_pool2: odd extent " + s.str());
  TensorT<T> y({s.b, s.c, s.h / 2, s.w / 2});
  if (argmax) argmax->assign(static_cast<std::size_t>(y.numel()), 0);
  std::int64_t oidx = 0;
  for (int bi = 0; bi < s.b; ++bi)
    for (int c = 0; c < s.c; ++c)
      for (int oh = 0; oh < y.shape().h; ++oh)
        for (int ow = 0; ow < y.shape().w; ++ow, ++oidx) {
          T best = x.at(bi, c, oh * 2, ow * 2);
          std::int64_t besti = x.index(bi, c, oh * 2, ow * 2);
          for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) {
              const std::int64_t idx = x.index(bi, c, oh * 2 + i, ow * 2 + j);
              if (x.data()[idx] > best) {
                best = x.data()[idx];
                besti = idx;
              }
            }
          y.data()[oidx] = best;
          if (argmax) (*argmax)[oidx] = besti;
        }
  return y;
}

template <typename T>
TensorT<T> max_pool2_backward(const Shape& in_shape, const std::vector<std::int64_t>& argmax,
                              const TensorT<T>& gy) {
  TensorT<T> gx(in_shape);
  for (std::int64_t i = 0; i < gy.numel(); ++i) gx.data()[argmax[i]] += gy.data()[i];
  return gx;
}

template <typename T>
TensorT<T> mean_pool2(const TensorT<T>& x) {
  const Shape& s = x.shape();
  if (s.h % 2 || s.w % 2) throw TensorError("mean_pool2: odd extent " + s.str());
  TensorT<T> y({s.b, s.c, s.h / 2, s.w / 2});
  for (int bi = 0; bi < s.b; ++bi)
    for (int c = 0; c < s.c; ++c)
      for (int oh = 0; oh < y.shape().h; ++oh)
        for (int ow = 0; ow < y.shape().w; ++ow)
          y.at(bi, c, oh, ow) =
              (x.at(bi, c, 2 * oh, 2 * ow) + x.at(bi, c, 2 * oh, 2 * ow + 1) +
               x.at(bi, c, 2 * oh + 1, 2 * ow) + x.at(bi, c, 2 * oh + 1, 2 * ow + 1)) /
              T(4);
  return y;
}

template <typename T>
TensorT<T> mean_pool2_backward(const Shape& in_shape, const TensorT<T>& gy) {
  TensorT<T> gx(in_shape);
  for (int bi = 0; bi < in_shape.b; ++bi)
    for (int c = 0; c < in_shape.c; ++c)
      for (int oh = 0; oh < gy.shape().h; ++oh)
        for (int ow = 0; ow < gy.shape().w; ++ow) {
          const T g = gy.at(bi, c, oh, ow) / T(4);
          gx.at(bi, c, 2 * oh, 2 * ow) += g;
          gx.at(bi, c, 2 * oh, 2 * ow + 1) += g;
          gx.at(bi, c, 2 * oh + 1, 2 * ow) += g;
          gx.at(bi, c, 2 * oh + 1, 2 * ow + 1) += g;
        }
  return gx;
}

namespace detail {

struct LerpTap {
  int i0, i1;
  double f;  // weight of i1
};

inline LerpTap bilinear_tap(int out_idx, int in_extent) {
  // align-corners=false sampling of the x2 grid
  double src = (out_idx + 0.5) / 2.0 - 0.5;
  if (src < 0) src = 0;
  if (src > in_extent - 1) src = in_extent - 1;
  LerpTap t{};
  t.i0 = static_cast<int>(std::floor(src));
  t.i1 = std::min(t.i0 + 1, in_extent - 1);
  t.f = src - t.i0;
  return t;
}

}  // namespace detail

template <typename T>
TensorT<T> bilinear_up2(const TensorT<T>& x) {
  const Shape& s = x.shape();
  TensorT<T> y({s.b, s.c, s.h * 2, s.w * 2});
  std::vector<detail::LerpTap> th(y.shape().h), tw(y.shape().w);
  for (int i = 0; i < y.shape().h; ++i) th[i] = detail::bilinear_tap(i, s.h);
  for (int j = 0; j < y.shape().w; ++j) tw[j] = detail::bilinear_tap(j, s.w);
  for (int bi = 0; bi < s.b; ++bi)
    for (int c = 0; c < s.c; ++c)
      for (int oh = 0; oh < y.shape().h; ++oh) {
        const auto& a = th[oh];
        for (int ow = 0; ow < y.shape().w; ++ow) {
          const auto& b = tw[ow];
          const double v =
              (1 - a.f) * ((1 - b.f) * x.at(bi, c, a.i0, b.i0) + b.f * x.at(bi, c, a.i0, b.i1)) +
              a.f * ((1 - b.f) * x.at(bi, c, a.i1, b.i0) + b.f * x.at(bi, c, a.i1, b.i1));
          y.at(bi, c, oh, ow) = static_cast<T>(v);
        }
      }
  return y;
}

template <typename T>
TensorT<T> bilinear_up2_backward(const Shape& in_shape, const TensorT<T>& gy) {
  TensorT<T> gx(in_shape);
  std::vector<detail::LerpTap> th(gy.shape().h), tw(gy.shape().w);
  for (int i = 0; i < gy.shape().h; ++i) th[i] = detail::bilinear_tap(i, in_shape.h);
  for (int j = 0; j < gy.shape().w; ++j) tw[j] = detail::bilinear_tap(j, in_shape.w);
  for (int bi = 0; bi < in_shape.b; ++bi)
    for (int c = 0; c < in_shape.c; ++c)
      for (int oh = 0; oh < gy.shape().h; ++oh) {
        const auto& a = th[oh];
        for (int ow = 0; ow < gy.shape().w; ++ow) {
          const auto& b = tw[ow];
          const T g = gy.at(bi, c, oh, ow);
          gx.at(bi, c, a.i0, b.i0) += static_cast<T>((1 - a.f) * (1 - b.f)) * g;
          gx.at(bi, c, a.i0, b.i1) += static_cast<T>((1 - a.f) * b.f) * g;
          gx.at(bi, c, a.i1, b.i0) += static_cast<T>(a.f * (1 - b.f)) * g;
          gx.at(bi, c, a.i1, b.i1) += static_cast<T>(a.f * b.f) * g;
        }
      }
  return gx;
}

template <typename T>
TensorT<T> clamp01(const TensorT<T>& x) {
  TensorT<T> y(x.shape());
  for (std::int64_t i = 0; i < x.numel(); ++i)
    y.data()[i] = std::min(T(1), std::max(T(0), x.data()[i]));
  return y;
}

}  // namespace isp
