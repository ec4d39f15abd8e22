#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "isp/autograd.hpp"

namespace isp {

enum class LossKind { kL1, kMse, kCharbonnier, kSsim, kMsSsim };

inline const char* loss_kind_name(LossKind k) {
  switch (k) {
    case LossKind::kL1: return "l1";
    case LossKind::kMse: return "mse";
    case LossKind::kCharbonnier: return "charbonnier";
    case LossKind::kSsim: return "ssim";
    case LossKind::kMsSsim: return "ms_ssim";
  }
  return "?";
}

struct LossSpec {
  std::vector<std::pair<LossKind, double>> terms;

  void validate() const {
    if (terms.empty()) throw TensorError("loss spec: no terms");
    for (const auto& [k, w] : terms)
      if (!std::isfinite(w)) throw TensorError("loss spec: non-finite weight");
  }

  // Grammar: comma list of kind:weight, e.g. "charbonnier:1.0,ssim:0.5".
  static LossSpec parse(const std::string& text);
  std::string str() const;
};

inline LossSpec LossSpec::parse(const std::string& text) {
  LossSpec spec;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t comma = text.find(',', pos);
    if (comma == std::string::npos) comma = text.size();
    const std::string item = text.substr(pos, comma - pos);
    const std::size_t colon = item.find(':');
    const std::string kind = item.substr(0, colon);
    const double weight = colon == std::string::npos ? 1.0 : std::stod(item.substr(colon + 1));
    if (kind == "l1") spec.terms.emplace_back(LossKind::kL1, weight);
    else if (kind == "mse") spec.terms.emplace_back(LossKind::kMse, weight);
    else if (kind == "charbonnier") spec.terms.emplace_back(LossKind::kCharbonnier, weight);
    else if (kind == "ssim") spec.terms.emplace_back(LossKind::kSsim, weight);
    else if (kind == "ms_ssim") spec.terms.emplace_back(LossKind::kMsSsim, weight);
    else
      throw TensorError("unknown loss kind '" + kind +
                        "' (valid: l1, mse, charbonnier, ssim, ms_ssim)");
    pos = comma + 1;
  }
  spec.validate();
  return spec;
}

inline std::string LossSpec::str() const {
  std::string out;
  for (const auto& [k, w] : terms) {
    if (!out.empty()) out += ',';
    out += loss_kind_name(k);
    out += ':';
    out += std::to_string(w);
  }
  return out;
}

template <typename T>
void check_same_shape(const VarT<T>& a, const VarT<T>& b, const char* what) {
  if (a.shape() != b.shape())
    throw TensorError(std::string(what) + ": shape mismatch " + a.shape().str() + " vs " +
                      b.shape().str());
}

template <typename T>
VarT<T> l1_loss(VarT<T> pred, VarT<T> target) {
  check_same_shape(pred, target, "l1");
  return ag::mean_all(ag::abs_v(ag::sub(pred, target)));
}

template <typename T>
VarT<T> mse_loss(VarT<T> pred, VarT<T> target) {
  check_same_shape(pred, target, "mse");
  VarT<T> d = ag::sub(pred, target);
  return ag::mean_all(ag::mul(d, d));
}

// mean(sqrt(d^2 + eps^2))
template <typename T>
VarT<T> charbonnier_loss(VarT<T> pred, VarT<T> target, double eps = 1e-3) {
  check_same_shape(pred, target, "charbonnier");
  if (eps <= 0) throw TensorError("charbonnier: eps must be positive");
  VarT<T> d = ag::sub(pred, target);
  return ag::mean_all(
      ag::sqrt_v(ag::add_scalar(ag::mul(d, d), static_cast<T>(eps * eps))));
}

constexpr int kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;
constexpr double kSsimC1 = 0.01 * 0.01;  // (0.01 L)^2, L = 1
constexpr double kSsimC2 = 0.03 * 0.03;

template <typename T>
TensorT<T> gaussian_window(int channels) {
  TensorT<T> w({channels, 1, kSsimWindow, kSsimWindow});
  double kern[kSsimWindow];
  double sum = 0;
  for (int i = 0; i < kSsimWindow; ++i) {
    const double d = i - (kSsimWindow - 1) / 2.0;
    kern[i] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
    sum += kern[i];
  }
  for (int i = 0; i < kSsimWindow; ++i) kern[i] /= sum;
  for (int c = 0; c < channels; ++c)
    for (int i = 0; i < kSsimWindow; ++i)
      for (int j = 0; j < kSsimWindow; ++j)
        w.at(c, 0, i, j) = static_cast<T>(kern[i] * kern[j]);
  return w;
}

namespace detail {

template <typename T>
struct SsimTerms {
  VarT<T> luminance_structure;  // full SSIM map
  VarT<T> contrast_structure;   // cs map only
};

template <typename T>
SsimTerms<T> ssim_maps(VarT<T> pred, VarT<T> target) {
  const Shape& s = pred.shape();
  if (s.h < kSsimWindow || s.w < kSsimWindow)
    throw TensorError("ssim: image smaller than the " + std::to_string(kSsimWindow) +
                      "x" + std::to_string(kSsimWindow) + " window: " + s.str());
  Conv2dParams p;
  p.in_channels = p.out_channels = p.groups = s.c;
  p.kh = p.kw = kSsimWindow;
  p.padding = Padding::kValid;
  VarT<T> win = VarT<T>::leaf(gaussian_window<T>(s.c));
  VarT<T> none;
  auto filt = [&](VarT<T> x) { return ag::conv2d(x, win, none, p, Act::kNone); };

  VarT<T> mu1 = filt(pred);
  VarT<T> mu2 = filt(target);
  VarT<T> mu1mu2 = ag::mul(mu1, mu2);
  VarT<T> s11 = ag::sub(filt(ag::mul(pred, pred)), ag::mul(mu1, mu1));
  VarT<T> s22 = ag::sub(filt(ag::mul(target, target)), ag::mul(mu2, mu2));
  VarT<T> s12 = ag::sub(filt(ag::mul(pred, target)), mu1mu2);

  const T c1 = static_cast<T>(kSsimC1);
  const T c2 = static_cast<T>(kSsimC2);
  VarT<T> lum_num = ag::add_scalar(ag::mul_scalar(mu1mu2, T(2)), c1);
  VarT<T> lum_den = ag::add_scalar(ag::add(ag::mul(mu1, mu1), ag::mul(mu2, mu2)), c1);
  VarT<T> cs_num = ag::add_scalar(ag::mul_scalar(s12, T(2)), c2);
  VarT<T> cs_den = ag::add_scalar(ag::add(s11, s22), c2);

  SsimTerms<T> out;
  out.contrast_structure = ag::div(cs_num, cs_den);
  out.luminance_structure =
      ag::div(ag::mul(lum_num, cs_num), ag::mul(lum_den, cs_den));
  return out;
}

}  // namespace detail

// Mean SSIM over valid (un-padded) windows, channels, and batch.
template <typename T>
VarT<T> ssim(VarT<T> pred, VarT<T> target) {
  check_same_shape(pred, target, "ssim");
  return ag::mean_all(detail::ssim_maps(pred, target).luminance_structure);
}

inline constexpr double kMsSsimWeights[5] = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};

// Multi-scale SSIM: contrast-structure terms at the fine scales, full SSIM at
// the coarsest, combined as a weighted product. Scale count drops (with
// renormalized weights) when the image is too small for all five scales.
template <typename T>
VarT<T> ms_ssim(VarT<T> pred, VarT<T> target) {
  check_same_shape(pred, target, "ms_ssim");
  const Shape& s = pred.shape();
  int scales = 1;
  while (scales < 5 && std::min(s.h, s.w) / (1 << scales) >= kSsimWindow) ++scales;
  double wsum = 0;
  for (int i = 0; i < scales; ++i) wsum += kMsSsimWeights[i];

  VarT<T> result;
  VarT<T> a = pred, b = target;
  for (int i = 0; i < scales; ++i) {
    const double w = kMsSsimWeights[i] / wsum;
    auto maps = detail::ssim_maps(a, b);
    VarT<T> term =
        ag::mean_all(i + 1 == scales ? maps.luminance_structure : maps.contrast_structure);
    VarT<T> factor = ag::pow_scalar(term, w);
    result = result.valid() ? ag::mul(result, factor) : factor;
    if (i + 1 < scales) {
      a = ag::mean_pool2_v(a);
      b = ag::mean_pool2_v(b);
    }
  }
  return result;
}

// Weighted sum of the requested terms; SSIM-family terms enter as (1 - value).
template <typename T>
VarT<T> composite_loss(const LossSpec& spec, VarT<T> pred, VarT<T> target) {
  spec.validate();
  VarT<T> total;
  for (const auto& [kind, weight] : spec.terms) {
    VarT<T> term;
    switch (kind) {
      case LossKind::kL1: term = l1_loss(pred, target); break;
      case LossKind::kMse: term = mse_loss(pred, target); break;
      case LossKind::kCharbonnier: term = charbonnier_loss(pred, target); break;
      case LossKind::kSsim:
        term = ag::add_scalar(ag::mul_scalar(ssim(pred, target), T(-1)), T(1));
        break;
      case LossKind::kMsSsim:
        term = ag::add_scalar(ag::mul_scalar(ms_ssim(pred, target), T(-1)), T(1));
        break;
    }
    term = ag::mul_scalar(term, static_cast<T>(weight));
    total = total.valid() ? ag::add(total, term) : term;
  }
  return total;
}

// 10*log10(max^2 / MSE), capped so identical images stay finite.
template <typename T>
double psnr(const TensorT<T>& pred, const TensorT<T>& target, double max_val = 1.0,
            double cap = 100.0) {
  if (pred.shape() != target.shape())
    throw TensorError("psnr: shape mismatch " + pred.shape().str() + " vs " +
                      target.shape().str());
  double mse = 0;
  for (std::int64_t i = 0; i < pred.numel(); ++i) {
    const double d = static_cast<double>(pred.data()[i]) - static_cast<double>(target.data()[i]);
    mse += d * d;
  }
  mse /= static_cast<double>(pred.numel());
  if (mse < max_val * max_val * std::pow(10.0, -cap / 10.0)) return cap;
  return 10.0 * std::log10(max_val * max_val / mse);
}

// Challenge objective: PSNR + alpha * (0.2 - clip(runtime)), runtime in
// seconds; alpha = 20 for runtime <= 0.2 s, else 0.5; clip to [0.03, 5].
inline double mai_score(double psnr_db, double runtime_s) {
  if (!std::isfinite(psnr_db)) throw TensorError("mai_score: non-finite psnr");
  if (!(runtime_s > 0)) throw TensorError("mai_score: runtime must be positive");
  const double alpha = runtime_s <= 0.2 ? 20.0 : 0.5;
  const double clipped = std::min(std::max(runtime_s, 0.03), 5.0);
  return psnr_db + alpha * (0.2 - clipped);
}

}  // namespace isp
