#pragma once

// Shared test-only helpers: a 64-bit finite-difference gradient harness and
// independent straight-line reference implementations ("oracles") that the
// optimized library code is checked against. These deliberately avoid the
// library's own kernels (im2col, separable filtering, ...) so that agreement
// is meaningful.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "isp/autograd.hpp"
#include "isp/nn_ops.hpp"
#include "isp/png_io.hpp"
#include "isp/raw.hpp"
#include "isp/rng.hpp"
#include "isp/tensor.hpp"

namespace testutil {

using DTensor = isp::TensorT<double>;
using DVar = isp::VarT<double>;

// Central-difference gradient check, everything in double. Returns the worst
// relative error over every element of every input.
inline double gradcheck(const std::function<DVar(std::vector<DVar>&)>& f,
                        const std::vector<DTensor>& inputs, double h = 1e-3) {
  std::vector<DVar> leaves;
  leaves.reserve(inputs.size());
  for (const auto& t : inputs) leaves.push_back(DVar::leaf(t));
  DVar out = f(leaves);
  if (out.value().numel() != 1) throw std::runtime_error("gradcheck: output must be scalar");
  out.backward();

  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const bool has_grad = leaves[k].grad().shape() == inputs[k].shape();
    for (std::int64_t i = 0; i < inputs[k].numel(); ++i) {
      auto eval = [&](double delta) {
        std::vector<DTensor> shifted = inputs;
        shifted[k].data()[i] += delta;
        std::vector<DVar> lv;
        lv.reserve(shifted.size());
        for (auto& t : shifted) lv.push_back(DVar::leaf(t));
        return f(lv).value().data()[0];
      };
      const double fd = (eval(h) - eval(-h)) / (2.0 * h);
      const double an = has_grad ? leaves[k].grad().data()[i] : 0.0;
      const double err = std::abs(an - fd) / std::max({1.0, std::abs(an), std::abs(fd)});
      worst = std::max(worst, err);
    }
  }
  return worst;
}

// Direct six-loop convolution with its own padding arithmetic.
template <typename T>
isp::TensorT<T> naive_conv(const isp::TensorT<T>& x, const isp::TensorT<T>& w,
                           const isp::TensorT<T>* bias, const isp::Conv2dParams& p) {
  const isp::Shape& s = x.shape();
  const int ekh = (p.kh - 1) * p.dh + 1;
  const int ekw = (p.kw - 1) * p.dw + 1;
  int ho, wo, pt, pl;
  if (p.padding == isp::Padding::kSame) {
    ho = (s.h + p.sh - 1) / p.sh;
    wo = (s.w + p.sw - 1) / p.sw;
    pt = std::max((ho - 1) * p.sh + ekh - s.h, 0) / 2;
    pl = std::max((wo - 1) * p.sw + ekw - s.w, 0) / 2;
  } else {
    ho = (s.h - ekh) / p.sh + 1;
    wo = (s.w - ekw) / p.sw + 1;
    pt = pl = 0;
  }
  const int cg = p.in_channels / p.groups;
  const int og = p.out_channels / p.groups;
  isp::TensorT<T> y({s.b, p.out_channels, ho, wo});
  for (int b = 0; b < s.b; ++b)
    for (int oc = 0; oc < p.out_channels; ++oc) {
      const int g = oc / og;
      for (int oh = 0; oh < ho; ++oh)
        for (int ow = 0; ow < wo; ++ow) {
          double acc = bias ? static_cast<double>(bias->data()[oc]) : 0.0;
          for (int ic = 0; ic < cg; ++ic)
            for (int ki = 0; ki < p.kh; ++ki)
              for (int kj = 0; kj < p.kw; ++kj) {
                const int ih = oh * p.sh - pt + ki * p.dh;
                const int iw = ow * p.sw - pl + kj * p.dw;
                if (ih < 0 || ih >= s.h || iw < 0 || iw >= s.w) continue;
                acc += static_cast<double>(x.at(b, g * cg + ic, ih, iw)) *
                       static_cast<double>(w.at(oc, ic, ki, kj));
              }
          y.at(b, oc, oh, ow) = static_cast<T>(acc);
        }
    }
  return y;
}

// Per-window double-precision SSIM with an explicitly materialized 11x11
// Gaussian, averaged over valid positions, channels, and batch.
inline double ssim_ref(const isp::Tensor& a, const isp::Tensor& b) {
  constexpr int K = 11;
  constexpr double sigma = 1.5;
  constexpr double C1 = 0.01 * 0.01, C2 = 0.03 * 0.03;
  double g1d[K], gsum = 0;
  for (int i = 0; i < K; ++i) {
    const double d = i - (K - 1) / 2.0;
    g1d[i] = std::exp(-d * d / (2 * sigma * sigma));
    gsum += g1d[i];
  }
  for (int i = 0; i < K; ++i) g1d[i] /= gsum;
  double win[K][K];
  for (int i = 0; i < K; ++i)
    for (int j = 0; j < K; ++j) win[i][j] = g1d[i] * g1d[j];

  const isp::Shape& s = a.shape();
  double total = 0;
  std::int64_t count = 0;
  for (int bi = 0; bi < s.b; ++bi)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y + K <= s.h; ++y)
        for (int x = 0; x + K <= s.w; ++x) {
          double m1 = 0, m2 = 0, e11 = 0, e22 = 0, e12 = 0;
          for (int i = 0; i < K; ++i)
            for (int j = 0; j < K; ++j) {
              const double va = a.at(bi, c, y + i, x + j);
              const double vb = b.at(bi, c, y + i, x + j);
              m1 += win[i][j] * va;
              m2 += win[i][j] * vb;
              e11 += win[i][j] * va * va;
              e22 += win[i][j] * vb * vb;
              e12 += win[i][j] * va * vb;
            }
          const double s11 = e11 - m1 * m1;
          const double s22 = e22 - m2 * m2;
          const double s12 = e12 - m1 * m2;
          total += ((2 * m1 * m2 + C1) * (2 * s12 + C2)) /
                   ((m1 * m1 + m2 * m2 + C1) * (s11 + s22 + C2));
          ++count;
        }
  return total / static_cast<double>(count);
}

// One-parameter Adam trajectory mirroring the library's float/double mix.
struct ScalarAdamRef {
  float m = 0.0f, v = 0.0f;
  long t = 0;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  float step(float p, float g, double lr) {
    ++t;
    const float b1 = static_cast<float>(beta1);
    const float b2 = static_cast<float>(beta2);
    m = b1 * m + (1.0f - b1) * g;
    v = b2 * v + (1.0f - b2) * g * g;
    const double mhat = m / (1.0 - std::pow(beta1, static_cast<double>(t)));
    const double vhat = v / (1.0 - std::pow(beta2, static_cast<double>(t)));
    return p - static_cast<float>(lr * mhat / (std::sqrt(vhat) + eps));
  }
};

// RGB -> RAW reference: same pipeline contract written as one flat scalar
// pass, with the 3x3 inverse obtained by Gaussian elimination instead of the
// adjugate. Consumes one normal deviate per pixel in raster order whenever
// the noise variance is positive.
inline isp::BayerImage unprocess_ref(const isp::RgbImage& rgb, const isp::UnprocessConfig& cfg) {
  // invert cfg.ccm by row-reducing [M | I]
  double aug[3][6] = {};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) aug[i][j] = cfg.ccm[i][j];
    aug[i][3 + i] = 1.0;
  }
  for (int col = 0; col < 3; ++col) {
    int pivot = col;
    for (int r = col + 1; r < 3; ++r)
      if (std::abs(aug[r][col]) > std::abs(aug[pivot][col])) pivot = r;
    std::swap(aug[col], aug[pivot]);
    const double d = aug[col][col];
    for (int j = 0; j < 6; ++j) aug[col][j] /= d;
    for (int r = 0; r < 3; ++r) {
      if (r == col) continue;
      const double f = aug[r][col];
      for (int j = 0; j < 6; ++j) aug[r][j] -= f * aug[col][j];
    }
  }

  isp::BayerImage out;
  out.width = rgb.width;
  out.height = rgb.height;
  out.data.resize(static_cast<std::size_t>(rgb.width) * rgb.height);
  isp::CounterRng rng(cfg.seed);
  for (int y = 0; y < rgb.height; ++y)
    for (int x = 0; x < rgb.width; ++x) {
      const std::uint8_t* px = rgb.rgb.data() + (static_cast<std::size_t>(y) * rgb.width + x) * 3;
      double lin[3];
      for (int c = 0; c < 3; ++c) {
        const double srgb = px[c] / 255.0;
        lin[c] = srgb <= 0.04045 ? srgb / 12.92 : std::pow((srgb + 0.055) / 1.055, 2.4);
      }
      const int ch = (y % 2 == 0) ? (x % 2 == 0 ? 0 : 1) : (x % 2 == 0 ? 1 : 2);
      double v = aug[ch][3] * lin[0] + aug[ch][4] * lin[1] + aug[ch][5] * lin[2];
      if (ch == 0) v /= cfg.r_gain;
      if (ch == 2) v /= cfg.b_gain;
      const double var = cfg.read_var + cfg.shot * std::max(v, 0.0);
      if (var > 0) v += std::sqrt(var) * rng.normal();
      v = std::min(1.0, std::max(0.0, v));
      out.data[static_cast<std::size_t>(y) * rgb.width + x] =
          static_cast<std::uint16_t>(std::lround(v * 1023.0));
    }
  return out;
}

// Procedural smooth test image: low-frequency color sinusoids plus a few
// soft-edged disks, deterministic in the seed.
inline isp::Png8 synth_image(int w, int h, std::uint64_t seed) {
  isp::CounterRng rng(seed);
  struct Wave { double fx, fy, phase, amp; };
  Wave waves[3][2];
  for (int c = 0; c < 3; ++c)
    for (int k = 0; k < 2; ++k)
      waves[c][k] = {rng.uniform(0.5, 2.5) * 6.2831853 / w, rng.uniform(0.5, 2.5) * 6.2831853 / h,
                     rng.uniform(0.0, 6.2831853), rng.uniform(0.1, 0.25)};
  struct Disk { double cx, cy, r; double col[3]; };
  std::vector<Disk> disks(5);
  for (auto& d : disks) {
    d.cx = rng.uniform(0.0, w);
    d.cy = rng.uniform(0.0, h);
    d.r = rng.uniform(0.08, 0.2) * std::min(w, h);
    for (int c = 0; c < 3; ++c) d.col[c] = rng.uniform(-0.3, 0.3);
  }

  isp::Png8 img;
  img.width = w;
  img.height = h;
  img.rgb.resize(static_cast<std::size_t>(w) * h * 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        double v = 0.5;
        for (int k = 0; k < 2; ++k)
          v += waves[c][k].amp * std::sin(waves[c][k].fx * x + waves[c][k].fy * y +
                                          waves[c][k].phase);
        for (const auto& d : disks) {
          const double dist = std::hypot(x - d.cx, y - d.cy);
          // smooth edge, ~4 px wide
          v += d.col[c] / (1.0 + std::exp((dist - d.r) / 2.0));
        }
        v = std::min(1.0, std::max(0.0, v));
        img.rgb[(static_cast<std::size_t>(y) * w + x) * 3 + c] =
            static_cast<std::uint8_t>(std::lround(v * 255.0));
      }
  return img;
}

inline void write_synth_corpus(const std::string& dir, int n, int w, int h, std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  for (int i = 0; i < n; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "/src%03d.png", i);
    isp::write_png_rgb8(dir + name, synth_image(w, h, isp::derive_seed(seed, i)));
  }
}

inline std::string fresh_dir(const std::string& name) {
  const std::string dir = "tmp_" + name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testutil
