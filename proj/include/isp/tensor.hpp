#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "isp/rng.hpp"

namespace isp {

struct Shape {
  int b = 0, c = 0, h = 0, w = 0;

  std::int64_t numel() const {
    return static_cast<std::int64_t>(b) * c * h * w;
  }
  bool operator==(const Shape& o) const {
    return b == o.b && c == o.c && h == o.h && w == o.w;
  }
  bool operator!=(const Shape& o) const { return !(*this == o); }

  std::string str() const {
    std::ostringstream os;
    os << "(" << b << "," << c << "," << h << "," << w << ")";
    return os.str();
  }
};

class TensorError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dense rank-4 tensor, row-major (b,c,h,w). Float for training/storage;
// the gradient-check harness instantiates the double variant.
template <typename T>
class TensorT {
 public:
  TensorT() = default;
  explicit TensorT(Shape s) : shape_(s) {
    if (s.b < 0 || s.c < 0 || s.h < 0 || s.w < 0)
      throw TensorError("negative extent in shape " + s.str());
    data_.assign(static_cast<std::size_t>(s.numel()), T(0));
  }

  static TensorT zeros(Shape s) { return TensorT(s); }

  static TensorT full(Shape s, T v) {
    TensorT t(s);
    for (auto& x : t.data_) x = v;
    return t;
  }

  static TensorT ones(Shape s) { return full(s, T(1)); }

  // Reproducible: identical (shape, seed) gives an identical bit pattern.
  static TensorT randn(Shape s, std::uint64_t seed) {
    TensorT t(s);
    CounterRng rng(seed);
    for (auto& x : t.data_) x = static_cast<T>(rng.normal());
    return t;
  }

  static TensorT rand_uniform(Shape s, std::uint64_t seed, double lo, double hi) {
    TensorT t(s);
    CounterRng rng(seed);
    for (auto& x : t.data_) x = static_cast<T>(rng.uniform(lo, hi));
    return t;
  }

  const Shape& shape() const { return shape_; }
  std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  std::int64_t index(int b, int c, int h, int w) const {
    return ((static_cast<std::int64_t>(b) * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }
  T& at(int b, int c, int h, int w) { return data_[index(b, c, h, w)]; }
  T at(int b, int c, int h, int w) const { return data_[index(b, c, h, w)]; }

  bool all_finite() const {
    for (const T& x : data_)
      if (!std::isfinite(static_cast<double>(x))) return false;
    return true;
  }

  void check_finite(const char* what) const {
    if (!all_finite())
      throw TensorError(std::string("non-finite value produced by ") + what);
  }

 private:
  Shape shape_;
  std::vector<T> data_;
};

using Tensor = TensorT<float>;

enum class EwOp { kAdd, kSub, kMul };

// b must either match a's shape or be broadcastable over batch and/or the
// spatial plane: (1|B, C, 1, 1) against (B, C, H, W).
template <typename T>
bool broadcast_compatible(const Shape& a, const Shape& b) {
  if (a == b) return true;
  return (b.b == a.b || b.b == 1) && b.c == a.c && b.h == 1 && b.w == 1;
}

template <typename T>
TensorT<T> elementwise(EwOp op, const TensorT<T>& a, const TensorT<T>& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (!broadcast_compatible<T>(sa, sb))
    throw TensorError("elementwise shape mismatch: " + sa.str() + " vs " + sb.str());
  TensorT<T> out(sa);
  const bool bcast = !(sa == sb);
  const std::int64_t plane = static_cast<std::int64_t>(sa.h) * sa.w;
  T* o = out.data();
  const T* pa = a.data();
  const T* pb = b.data();
  for (int bi = 0; bi < sa.b; ++bi) {
    for (int ci = 0; ci < sa.c; ++ci) {
      const std::int64_t base = (static_cast<std::int64_t>(bi) * sa.c + ci) * plane;
      if (!bcast) {
        switch (op) {
          case EwOp::kAdd: for (std::int64_t i = 0; i < plane; ++i) o[base + i] = pa[base + i] + pb[base + i]; break;
          case EwOp::kSub: for (std::int64_t i = 0; i < plane; ++i) o[base + i] = pa[base + i] - pb[base + i]; break;
          case EwOp::kMul: for (std::int64_t i = 0; i < plane; ++i) o[base + i] = pa[base + i] * pb[base + i]; break;
        }
      } else {
        const T bv = pb[(sb.b == 1 ? 0 : bi) * sb.c + ci];
        switch (op) {
          case EwOp::kAdd: for (std::int64_t i = 0; i < plane; ++i) o[base + i] = pa[base + i] + bv; break;
          case EwOp::kSub: for (std::int64_t i = 0; i < plane; ++i) o[base + i] = pa[base + i] - bv; break;
          case EwOp::kMul: for (std::int64_t i = 0; i < plane; ++i) o[base + i] = pa[base + i] * bv; break;
        }
      }
    }
  }
  out.check_finite("elementwise");
  return out;
}

template <typename T>
TensorT<T> concat_channels(const std::vector<const TensorT<T>*>& parts) {
  if (parts.empty()) throw TensorError("concat_channels: no parts");
  const Shape& s0 = parts[0]->shape();
  int ctotal = 0;
  for (const auto* p : parts) {
    const Shape& s = p->shape();
    if (s.b != s0.b || s.h != s0.h || s.w != s0.w)
      throw TensorError("concat_channels spatial mismatch: " + s0.str() + " vs " + s.str());
    ctotal += s.c;
  }
  TensorT<T> out({s0.b, ctotal, s0.h, s0.w});
  const std::int64_t plane = static_cast<std::int64_t>(s0.h) * s0.w;
  for (int bi = 0; bi < s0.b; ++bi) {
    std::int64_t coff = 0;
    for (const auto* p : parts) {
      const int pc = p->shape().c;
      const T* src = p->data() + static_cast<std::int64_t>(bi) * pc * plane;
      T* dst = out.data() + (static_cast<std::int64_t>(bi) * ctotal + coff) * plane;
      std::copy(src, src + static_cast<std::int64_t>(pc) * plane, dst);
      coff += pc;
    }
  }
  out.check_finite("concat_channels");
  return out;
}

// Channel slice [c0, c0+len), used to route concat gradients back.
template <typename T>
TensorT<T> slice_channels(const TensorT<T>& x, int c0, int len) {
  const Shape& s = x.shape();
  if (c0 < 0 || len < 0 || c0 + len > s.c)
    throw TensorError("slice_channels out of range");
  TensorT<T> out({s.b, len, s.h, s.w});
  const std::int64_t plane = static_cast<std::int64_t>(s.h) * s.w;
  for (int bi = 0; bi < s.b; ++bi) {
    const T* src = x.data() + (static_cast<std::int64_t>(bi) * s.c + c0) * plane;
    T* dst = out.data() + static_cast<std::int64_t>(bi) * len * plane;
    std::copy(src, src + static_cast<std::int64_t>(len) * plane, dst);
  }
  return out;
}

}  // namespace isp
