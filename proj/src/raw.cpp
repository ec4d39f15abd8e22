#include "isp/raw.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "isp/nn_ops.hpp"
#include "isp/rng.hpp"

namespace fs = std::filesystem;

namespace isp {

UnprocessConfig UnprocessConfig::defaults(std::uint64_t seed) {
  UnprocessConfig c;
  c.ccm = {{{1.6, -0.3, -0.3}, {-0.3, 1.6, -0.3}, {-0.3, -0.3, 1.6}}};
  c.seed = seed;
  return c;
}

UnprocessConfig UnprocessConfig::sample(std::uint64_t seed) {
  UnprocessConfig c = defaults(seed);
  CounterRng rng(derive_seed(seed, 0xcf90));
  c.r_gain = rng.uniform(1.5, 2.5);
  c.b_gain = rng.uniform(1.3, 2.0);
  c.read_var = std::exp(rng.uniform(std::log(1e-6), std::log(1e-4)));
  c.shot = std::exp(rng.uniform(std::log(1e-4), std::log(1e-2)));
  return c;
}

UnprocessConfig UnprocessConfig::identity(std::uint64_t seed) {
  UnprocessConfig c;
  c.ccm = {{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
  c.r_gain = c.b_gain = 1.0;
  c.read_var = 0.0;
  c.shot = 0.0;
  c.seed = seed;
  return c;
}

double srgb_to_linear(double c) {
  return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

double linear_to_srgb(double c) {
  return c <= 0.0031308 ? 12.92 * c : 1.055 * std::pow(c, 1.0 / 2.4) - 0.055;
}

namespace {

using Mat3 = std::array<std::array<double, 3>, 3>;

Mat3 invert3x3(const Mat3& m) {
  const double det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                     m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                     m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
  if (std::abs(det) < 1e-12) throw TensorError("unprocess: color matrix is not invertible");
  const double inv = 1.0 / det;
  Mat3 r;
  r[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) * inv;
  r[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) * inv;
  r[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) * inv;
  r[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) * inv;
  r[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) * inv;
  r[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) * inv;
  r[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) * inv;
  r[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) * inv;
  r[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) * inv;
  return r;
}

// CFA channel at (y, x) for RGGB: 0=R, 1=G, 2=B.
int cfa_channel(int y, int x) {
  const bool even_row = (y % 2) == 0;
  const bool even_col = (x % 2) == 0;
  if (even_row) return even_col ? 0 : 1;
  return even_col ? 1 : 2;
}

}  // namespace

BayerImage unprocess(const RgbImage& rgb, const UnprocessConfig& cfg) {
  if (rgb.width % 2 || rgb.height % 2)
    throw TensorError("unprocess: image extents must be even");
  const Mat3 inv_ccm = invert3x3(cfg.ccm);
  BayerImage out;
  out.width = rgb.width;
  out.height = rgb.height;
  out.data.resize(static_cast<std::size_t>(rgb.width) * rgb.height);
  CounterRng rng(cfg.seed);
  const int max_code = out.max_code();
  for (int y = 0; y < rgb.height; ++y) {
    for (int x = 0; x < rgb.width; ++x) {
      const std::uint8_t* px = rgb.rgb.data() + (static_cast<std::size_t>(y) * rgb.width + x) * 3;
      double lin[3];
      for (int c = 0; c < 3; ++c) lin[c] = srgb_to_linear(px[c] / 255.0);
      const int ch = cfa_channel(y, x);
      double v = inv_ccm[ch][0] * lin[0] + inv_ccm[ch][1] * lin[1] + inv_ccm[ch][2] * lin[2];
      if (ch == 0) v /= cfg.r_gain;
      if (ch == 2) v /= cfg.b_gain;
      const double var = cfg.read_var + cfg.shot * std::max(v, 0.0);
      if (var > 0) v += std::sqrt(var) * rng.normal();
      v = std::min(1.0, std::max(0.0, v));
      out.at(y, x) = static_cast<std::uint16_t>(std::lround(v * max_code));
    }
  }
  return out;
}

Tensor normalize(const BayerImage& b) {
  if (b.width % 2 || b.height % 2)
    throw TensorError("normalize: image extents must be even");
  Tensor t({1, 1, b.height, b.width});
  const float scale = 1.0f / static_cast<float>(b.max_code());
  for (std::int64_t i = 0; i < t.numel(); ++i)
    t.data()[i] = static_cast<float>(b.data[i]) * scale;
  return t;
}

Tensor pack_bayer(const BayerImage& b) { return space_to_depth(normalize(b), 2); }

Tensor unpack_bayer(const Tensor& packed) { return pixel_shuffle(packed, 2); }

Tensor rgb_to_tensor(const RgbImage& img) {
  Tensor t({1, 3, img.height, img.width});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x)
        t.at(0, c, y, x) =
            img.rgb[(static_cast<std::size_t>(y) * img.width + x) * 3 + c] / 255.0f;
  return t;
}

RgbImage tensor_to_rgb(const Tensor& t) {
  const Shape& s = t.shape();
  if (s.b != 1 || s.c != 3) throw TensorError("tensor_to_rgb: expected (1,3,H,W), got " + s.str());
  RgbImage img;
  img.width = s.w;
  img.height = s.h;
  img.rgb.resize(static_cast<std::size_t>(s.w) * s.h * 3);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < s.h; ++y)
      for (int x = 0; x < s.w; ++x) {
        const float v = std::min(1.0f, std::max(0.0f, t.at(0, c, y, x)));
        img.rgb[(static_cast<std::size_t>(y) * s.w + x) * 3 + c] =
            static_cast<std::uint8_t>(std::lround(v * 255.0f));
      }
  return img;
}

namespace {

template <typename T>
TensorT<T> flip_w(const TensorT<T>& x) {
  const Shape& s = x.shape();
  TensorT<T> y(s);
  for (int bi = 0; bi < s.b; ++bi)
    for (int c = 0; c < s.c; ++c)
      for (int h = 0; h < s.h; ++h)
        for (int w = 0; w < s.w; ++w) y.at(bi, c, h, w) = x.at(bi, c, h, s.w - 1 - w);
  return y;
}

}  // namespace

void augment_flip(Tensor& raw_packed, Tensor& rgb, bool flip) {
  if (!flip) return;
  raw_packed = space_to_depth(flip_w(pixel_shuffle(raw_packed, 2)), 2);
  rgb = flip_w(rgb);
}

namespace {

std::string ccm_to_string(const UnprocessConfig& cfg) {
  std::ostringstream os;
  os.precision(17);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      if (i || j) os << ',';
      os << cfg.ccm[i][j];
    }
  return os.str();
}

void ccm_from_string(const std::string& s, UnprocessConfig& cfg) {
  std::istringstream is(s);
  std::string item;
  for (int i = 0; i < 9; ++i) {
    if (!std::getline(is, item, ',')) throw IoError("manifest: malformed ccm");
    cfg.ccm[i / 3][i % 3] = std::stod(item);
  }
}

std::string pair_name(int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%06d.png", i);
  return buf;
}

}  // namespace

DatasetManifest make_dataset(const std::string& src_dir, const std::string& out_dir,
                             const UnprocessConfig& cfg, int patch, int count) {
  if (patch <= 0 || patch % 2) throw IoError("make_dataset: patch size must be positive and even");
  std::vector<std::string> sources;
  if (!fs::is_directory(src_dir)) throw IoError("make_dataset: '" + src_dir + "' is not a directory");
  for (const auto& e : fs::directory_iterator(src_dir))
    if (e.is_regular_file() && e.path().extension() == ".png")
      sources.push_back(e.path().string());
  std::sort(sources.begin(), sources.end());
  if (sources.empty()) throw IoError("make_dataset: no PNG files in '" + src_dir + "'");

  fs::create_directories(fs::path(out_dir) / "raw");
  fs::create_directories(fs::path(out_dir) / "rgb");

  // Sources are decoded lazily and kept; typical corpora are small.
  std::vector<Png8> cache(sources.size());
  DatasetManifest man;
  man.dir = out_dir;
  man.cfg = cfg;
  man.patch = patch;
  for (int i = 0; i < count; ++i) {
    CounterRng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(i)));
    const std::size_t si = static_cast<std::size_t>(rng.next_u64() % sources.size());
    if (cache[si].width == 0) {
      cache[si] = read_png_rgb8(sources[si]);
      if (cache[si].width < patch || cache[si].height < patch)
        throw IoError("make_dataset: '" + sources[si] + "' smaller than the patch size");
    }
    const Png8& src = cache[si];
    const int x0 = static_cast<int>(rng.next_u64() % (src.width - patch + 1));
    const int y0 = static_cast<int>(rng.next_u64() % (src.height - patch + 1));
    RgbImage crop;
    crop.width = crop.height = patch;
    crop.rgb.resize(static_cast<std::size_t>(patch) * patch * 3);
    for (int y = 0; y < patch; ++y)
      std::copy_n(src.rgb.data() + ((static_cast<std::size_t>(y0 + y) * src.width) + x0) * 3,
                  static_cast<std::size_t>(patch) * 3,
                  crop.rgb.data() + static_cast<std::size_t>(y) * patch * 3);

    UnprocessConfig pc = cfg;
    pc.seed = derive_seed(cfg.seed, 0x7261770000ull + static_cast<std::uint64_t>(i));
    BayerImage raw = unprocess(crop, pc);

    Png16 raw_png;
    raw_png.width = raw.width;
    raw_png.height = raw.height;
    raw_png.gray = raw.data;
    const std::string name = pair_name(i);
    write_png_gray16(out_dir + "/raw/" + name, raw_png);
    write_png_rgb8(out_dir + "/rgb/" + name, crop);
    man.pairs.emplace_back("raw/" + name, "rgb/" + name);
  }

  std::ofstream os(out_dir + "/manifest.txt");
  if (!os) throw IoError("cannot write manifest in '" + out_dir + "'");
  os << "# seed=" << cfg.seed << "\n";
  os << "# patch=" << patch << "\n";
  os << "# count=" << count << "\n";
  os << "# ccm=" << ccm_to_string(cfg) << "\n";
  std::ostringstream num;
  num.precision(17);
  num << "# r_gain=" << cfg.r_gain << "\n# b_gain=" << cfg.b_gain
      << "\n# read_var=" << cfg.read_var << "\n# shot=" << cfg.shot << "\n";
  os << num.str();
  for (const auto& [r, g] : man.pairs) os << r << "\t" << g << "\n";
  return man;
}

DatasetManifest load_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open manifest '" + path + "'");
  DatasetManifest man;
  man.dir = fs::path(path).parent_path().string();
  if (man.dir.empty()) man.dir = ".";
  man.cfg = UnprocessConfig::defaults(0);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      const std::size_t eq = line.find('=');
      if (eq == std::string::npos) continue;
      std::string key = line.substr(1, eq - 1);
      key.erase(0, key.find_first_not_of(' '));
      const std::string val = line.substr(eq + 1);
      if (key == "seed") man.cfg.seed = std::stoull(val);
      else if (key == "patch") man.patch = std::stoi(val);
      else if (key == "ccm") ccm_from_string(val, man.cfg);
      else if (key == "r_gain") man.cfg.r_gain = std::stod(val);
      else if (key == "b_gain") man.cfg.b_gain = std::stod(val);
      else if (key == "read_var") man.cfg.read_var = std::stod(val);
      else if (key == "shot") man.cfg.shot = std::stod(val);
      continue;
    }
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos) throw IoError("manifest: malformed line '" + line + "'");
    man.pairs.emplace_back(line.substr(0, tab), line.substr(tab + 1));
  }
  if (man.pairs.empty()) throw IoError("manifest '" + path + "' lists no pairs");
  return man;
}

RgbImage bilinear_demosaic(const BayerImage& b, const UnprocessConfig* cfg) {
  const int w = b.width, h = b.height;
  const double scale = 1.0 / b.max_code();
  std::vector<double> rgb(static_cast<std::size_t>(w) * h * 3, 0.0);

  auto raw = [&](int y, int x) {
    y = std::clamp(y, 0, h - 1);
    x = std::clamp(x, 0, w - 1);
    return b.at(y, x) * scale;
  };

  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double* px = rgb.data() + (static_cast<std::size_t>(y) * w + x) * 3;
      const int ch = cfa_channel(y, x);
      if (ch == 0) {  // red site
        px[0] = raw(y, x);
        px[1] = (raw(y - 1, x) + raw(y + 1, x) + raw(y, x - 1) + raw(y, x + 1)) / 4;
        px[2] = (raw(y - 1, x - 1) + raw(y - 1, x + 1) + raw(y + 1, x - 1) + raw(y + 1, x + 1)) / 4;
      } else if (ch == 2) {  // blue site
        px[2] = raw(y, x);
        px[1] = (raw(y - 1, x) + raw(y + 1, x) + raw(y, x - 1) + raw(y, x + 1)) / 4;
        px[0] = (raw(y - 1, x - 1) + raw(y - 1, x + 1) + raw(y + 1, x - 1) + raw(y + 1, x + 1)) / 4;
      } else {  // green site
        px[1] = raw(y, x);
        if (y % 2 == 0) {  // R row: horizontal neighbours are red
          px[0] = (raw(y, x - 1) + raw(y, x + 1)) / 2;
          px[2] = (raw(y - 1, x) + raw(y + 1, x)) / 2;
        } else {
          px[0] = (raw(y - 1, x) + raw(y + 1, x)) / 2;
          px[2] = (raw(y, x - 1) + raw(y, x + 1)) / 2;
        }
      }
    }

  RgbImage out;
  out.width = w;
  out.height = h;
  out.rgb.resize(static_cast<std::size_t>(w) * h * 3);
  for (std::size_t i = 0; i < static_cast<std::size_t>(w) * h; ++i) {
    double lin[3] = {rgb[i * 3], rgb[i * 3 + 1], rgb[i * 3 + 2]};
    if (cfg) {
      lin[0] *= cfg->r_gain;
      lin[2] *= cfg->b_gain;
      double mixed[3];
      for (int r = 0; r < 3; ++r)
        mixed[r] = cfg->ccm[r][0] * lin[0] + cfg->ccm[r][1] * lin[1] + cfg->ccm[r][2] * lin[2];
      std::copy(mixed, mixed + 3, lin);
    }
    for (int c = 0; c < 3; ++c) {
      const double v = linear_to_srgb(std::min(1.0, std::max(0.0, lin[c])));
      out.rgb[i * 3 + c] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
  }
  return out;
}

}  // namespace isp
