#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "isp/png_io.hpp"
#include "isp/tensor.hpp"

namespace isp {

// Single-channel 10-bit mosaic, RGGB phase: R at (0,0), G at (0,1)/(1,0),
// B at (1,1). Codes live in the low bits of uint16.
struct BayerImage {
  int width = 0, height = 0;
  std::vector<std::uint16_t> data;
  int bit_depth = 10;

  int max_code() const { return (1 << bit_depth) - 1; }
  std::uint16_t at(int y, int x) const { return data[static_cast<std::size_t>(y) * width + x]; }
  std::uint16_t& at(int y, int x) { return data[static_cast<std::size_t>(y) * width + x]; }
};

using RgbImage = Png8;

// Inverse-ISP parameters for synthesizing RAW from clean RGB.
struct UnprocessConfig {
  std::array<std::array<double, 3>, 3> ccm;  // camera -> sRGB, rows sum to 1
  double r_gain = 2.0;
  double b_gain = 1.5;
  double read_var = 1e-5;  // sigma_read^2
  double shot = 1e-3;      // sigma_shot
  std::uint64_t seed = 0;

  // Fixed mild-mixing matrix: diagonal 1.6, off-diagonal -0.3.
  static UnprocessConfig defaults(std::uint64_t seed = 0);
  // Gains uniform in [1.5,2.5] / [1.3,2.0]; noise log-uniform in
  // [1e-6,1e-4] / [1e-4,1e-2].
  static UnprocessConfig sample(std::uint64_t seed);
  static UnprocessConfig identity(std::uint64_t seed = 0);  // no mixing/gain/noise
};

double srgb_to_linear(double c);
double linear_to_srgb(double c);

// sRGB decode -> inverse CCM -> divide by WB gains at R/B sites -> CFA
// sample -> gaussian noise (var = read_var + shot * v) -> clamp -> quantize.
BayerImage unprocess(const RgbImage& rgb, const UnprocessConfig& cfg);

Tensor normalize(const BayerImage& b);       // (1,1,H,W) in [0,1]
Tensor pack_bayer(const BayerImage& b);      // (1,4,H/2,W/2), channels (R,Gr,Gb,B)
Tensor unpack_bayer(const Tensor& packed);   // inverse of pack on the float path

Tensor rgb_to_tensor(const RgbImage& img);   // (1,3,H,W) in [0,1]
RgbImage tensor_to_rgb(const Tensor& t);     // clamps and quantizes

// Horizontal flip of a packed RAW / RGB pair. The RAW is flipped in the
// unpacked mosaic domain and repacked, which swaps the (R,Gr) and (Gb,B)
// column phases.
void augment_flip(Tensor& raw_packed, Tensor& rgb, bool flip);

struct DatasetManifest {
  std::string dir;  // directory paths in `pairs` are relative to
  std::vector<std::pair<std::string, std::string>> pairs;  // (raw, rgb)
  UnprocessConfig cfg;
  int patch = 256;

  std::string raw_path(std::size_t i) const { return dir + "/" + pairs[i].first; }
  std::string rgb_path(std::size_t i) const { return dir + "/" + pairs[i].second; }
};

// Crops `count` random patches from the PNGs in src_dir, unprocesses each
// into a paired 16-bit RAW PNG, and writes out_dir/manifest.txt. Per-patch
// RNG streams derive from (cfg.seed, patch index).
DatasetManifest make_dataset(const std::string& src_dir, const std::string& out_dir,
                             const UnprocessConfig& cfg, int patch, int count);

DatasetManifest load_manifest(const std::string& path);

// Classic bilinear demosaic baseline. When cfg is given, white balance and
// the color matrix are undone before sRGB encoding; otherwise the linear
// values are encoded as-is.
RgbImage bilinear_demosaic(const BayerImage& b, const UnprocessConfig* cfg = nullptr);

}  // namespace isp
