#include "isp/model.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>

#include "isp/rng.hpp"

namespace isp {

const char* LayerSpec::kind_name() const {
  switch (kind) {
    case Kind::kInput: return "input";
    case Kind::kConv:
      return conv.groups > 1 ? "conv_dw" : (conv.sh > 1 ? "conv_s2" : "conv");
    case Kind::kConvTranspose: return "conv_transpose";
    case Kind::kPixelShuffle: return "pixel_shuffle";
    case Kind::kSpaceToDepth: return "space_to_depth";
    case Kind::kGlobalAvgPool: return "global_avg_pool";
    case Kind::kMaxPool2: return "max_pool2";
    case Kind::kBilinearUp2: return "bilinear_up2";
    case Kind::kAdd: return "add";
    case Kind::kMul: return "mul";
    case Kind::kConcat: return "concat";
  }
  return "?";
}

int LayerSpec::out_channels(const std::vector<int>& in_ch) const {
  switch (kind) {
    case Kind::kInput: return in_ch.empty() ? 0 : in_ch[0];
    case Kind::kConv:
      if (in_ch[0] != conv.in_channels)
        throw ModelError("layer '" + name + "': input has " + std::to_string(in_ch[0]) +
                         " channels, conv declares " + std::to_string(conv.in_channels));
      return conv.out_channels;
    case Kind::kConvTranspose:
      if (in_ch[0] != convt.in_channels)
        throw ModelError("layer '" + name + "': input has " + std::to_string(in_ch[0]) +
                         " channels, conv_transpose declares " +
                         std::to_string(convt.in_channels));
      return convt.out_channels;
    case Kind::kPixelShuffle:
      if (in_ch[0] % (factor * factor))
        throw ModelError("pixel_shuffle: channels not divisible by r^2");
      return in_ch[0] / (factor * factor);
    case Kind::kSpaceToDepth: return in_ch[0] * factor * factor;
    case Kind::kGlobalAvgPool:
    case Kind::kMaxPool2:
    case Kind::kBilinearUp2: return in_ch[0];
    case Kind::kAdd:
    case Kind::kMul:
      if (in_ch[0] != in_ch[1])
        throw ModelError("add/mul: channel mismatch " + std::to_string(in_ch[0]) + " vs " +
                         std::to_string(in_ch[1]));
      return in_ch[0];
    case Kind::kConcat: {
      int total = 0;
      for (int c : in_ch) total += c;
      return total;
    }
  }
  return 0;
}

void ModelGraph::validate() const {
  if (layers.empty() || layers[0].kind != LayerSpec::Kind::kInput)
    throw ModelError("model '" + name + "': first layer must be the input");
  std::vector<int> channels(layers.size());
  channels[0] = input_channels;
  for (std::size_t i = 1; i < layers.size(); ++i) {
    const LayerSpec& l = layers[i];
    std::vector<int> in_ch;
    for (int idx : l.inputs) {
      if (idx < 0 || idx >= static_cast<int>(i))
        throw ModelError("model '" + name + "': layer " + std::to_string(i) +
                         " references layer " + std::to_string(idx));
      in_ch.push_back(channels[idx]);
    }
    channels[i] = l.out_channels(in_ch);
    if (l.has_params()) {
      const Shape ws = l.kind == LayerSpec::Kind::kConv ? l.conv.weight_shape()
                                                        : l.convt.weight_shape();
      const Shape bs = l.kind == LayerSpec::Kind::kConv ? l.conv.bias_shape()
                                                        : l.convt.bias_shape();
      auto wit = params.find(l.name + ".weight");
      auto bit = params.find(l.name + ".bias");
      if (wit == params.end() || bit == params.end())
        throw ModelError("model '" + name + "': missing parameters for layer '" + l.name + "'");
      if (wit->second.shape() != ws)
        throw ModelError("layer '" + l.name + "': weight shape " + wit->second.shape().str() +
                         " != " + ws.str());
      if (bit->second.shape() != bs)
        throw ModelError("layer '" + l.name + "': bias shape " + bit->second.shape().str());
    }
  }
  std::int64_t stored = 0;
  for (const auto& [k, v] : params) stored += v.numel();
  if (stored != param_count())
    throw ModelError("model '" + name + "': stored parameter count " + std::to_string(stored) +
                     " != analytic " + std::to_string(param_count()));
}

std::int64_t ModelGraph::param_count() const {
  std::int64_t total = 0;
  for (const LayerSpec& l : layers) {
    if (l.kind == LayerSpec::Kind::kConv)
      total += l.conv.weight_shape().numel() + l.conv.bias_shape().numel();
    else if (l.kind == LayerSpec::Kind::kConvTranspose)
      total += l.convt.weight_shape().numel() + l.convt.bias_shape().numel();
  }
  return total;
}

namespace {

Tensor run_layer(const ModelGraph& m, const LayerSpec& l,
                 const std::vector<Tensor>& outs) {
  auto in = [&](int i) -> const Tensor& { return outs[l.inputs[i]]; };
  switch (l.kind) {
    case LayerSpec::Kind::kInput: throw ModelError("input layer executed");
    case LayerSpec::Kind::kConv: {
      const Tensor& w = m.params.at(l.name + ".weight");
      const Tensor& b = m.params.at(l.name + ".bias");
      return act_forward(l.act, conv2d_forward(in(0), w, &b, l.conv));
    }
    case LayerSpec::Kind::kConvTranspose: {
      const Tensor& w = m.params.at(l.name + ".weight");
      const Tensor& b = m.params.at(l.name + ".bias");
      return act_forward(l.act, conv_transposed_forward(in(0), w, &b, l.convt));
    }
    case LayerSpec::Kind::kPixelShuffle: return pixel_shuffle(in(0), l.factor);
    case LayerSpec::Kind::kSpaceToDepth: return space_to_depth(in(0), l.factor);
    case LayerSpec::Kind::kGlobalAvgPool: return global_avg_pool(in(0));
    case LayerSpec::Kind::kMaxPool2: return max_pool2(in(0));
    case LayerSpec::Kind::kBilinearUp2: return bilinear_up2(in(0));
    case LayerSpec::Kind::kAdd: return elementwise(EwOp::kAdd, in(0), in(1));
    case LayerSpec::Kind::kMul: return elementwise(EwOp::kMul, in(0), in(1));
    case LayerSpec::Kind::kConcat: {
      std::vector<const Tensor*> parts;
      for (int idx : l.inputs) parts.push_back(&outs[idx]);
      return concat_channels(parts);
    }
  }
  throw ModelError("unknown layer kind");
}

void check_input_geometry(const ModelGraph& m, const Shape& s) {
  if (s.c != m.input_channels)
    throw ModelError("model '" + m.name + "': expects " + std::to_string(m.input_channels) +
                     " input channels, got " + s.str());
  if (s.h % m.downsample_factor || s.w % m.downsample_factor)
    throw ModelError("model '" + m.name + "': input " + s.str() +
                     " not divisible by downsampling factor " +
                     std::to_string(m.downsample_factor));
}

}  // namespace

Tensor ModelGraph::forward(const Tensor& input) const {
  return forward_timed(input, nullptr);
}

Tensor ModelGraph::forward_eval(const Tensor& input) const {
  return clamp01(forward(input));
}

Tensor ModelGraph::forward_timed(const Tensor& input, std::vector<double>* layer_ms) const {
  check_input_geometry(*this, input.shape());
  std::vector<Tensor> outs(layers.size());
  outs[0] = input;
  if (layer_ms) layer_ms->clear();
  for (std::size_t i = 1; i < layers.size(); ++i) {
    if (layer_ms) {
      auto t0 = std::chrono::steady_clock::now();
      outs[i] = run_layer(*this, layers[i], outs);
      auto t1 = std::chrono::steady_clock::now();
      layer_ms->push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    } else {
      outs[i] = run_layer(*this, layers[i], outs);
    }
  }
  return outs.back();
}

std::map<std::string, Var> ModelGraph::make_param_vars() const {
  std::map<std::string, Var> vars;
  for (const auto& [k, v] : params) vars[k] = Var::leaf(v);
  return vars;
}

Var ModelGraph::forward_var(Var input, std::map<std::string, Var>& pv) const {
  check_input_geometry(*this, input.shape());
  std::vector<Var> outs(layers.size());
  outs[0] = input;
  for (std::size_t i = 1; i < layers.size(); ++i) {
    const LayerSpec& l = layers[i];
    auto in = [&](int j) { return outs[l.inputs[j]]; };
    switch (l.kind) {
      case LayerSpec::Kind::kInput: break;
      case LayerSpec::Kind::kConv:
        outs[i] = ag::conv2d(in(0), pv.at(l.name + ".weight"), pv.at(l.name + ".bias"),
                             l.conv, l.act);
        break;
      case LayerSpec::Kind::kConvTranspose:
        outs[i] = ag::conv_transposed(in(0), pv.at(l.name + ".weight"),
                                      pv.at(l.name + ".bias"), l.convt, l.act);
        break;
      case LayerSpec::Kind::kPixelShuffle: outs[i] = ag::pixel_shuffle_v(in(0), l.factor); break;
      case LayerSpec::Kind::kSpaceToDepth: outs[i] = ag::space_to_depth_v(in(0), l.factor); break;
      case LayerSpec::Kind::kGlobalAvgPool: outs[i] = ag::global_avg_pool_v(in(0)); break;
      case LayerSpec::Kind::kMaxPool2: outs[i] = ag::max_pool2_v(in(0)); break;
      case LayerSpec::Kind::kBilinearUp2: outs[i] = ag::bilinear_up2_v(in(0)); break;
      case LayerSpec::Kind::kAdd: outs[i] = ag::add(in(0), in(1)); break;
      case LayerSpec::Kind::kMul: outs[i] = ag::mul(in(0), in(1)); break;
      case LayerSpec::Kind::kConcat: {
        std::vector<Var> parts;
        for (int idx : l.inputs) parts.push_back(outs[idx]);
        outs[i] = ag::concat(parts);
        break;
      }
    }
  }
  return outs.back();
}

namespace {

// Kaiming-uniform fan-in init for conv weights, zero biases.
class GraphBuilder {
 public:
  GraphBuilder(std::string name, std::uint64_t seed) : seed_(seed) {
    g_.name = std::move(name);
    LayerSpec input;
    input.kind = LayerSpec::Kind::kInput;
    g_.layers.push_back(input);
  }

  int conv(int from, const std::string& name, int in_ch, int out_ch, int k, Act act,
           int stride = 1, int dilation = 1, int groups = 1,
           Padding pad = Padding::kSame) {
    LayerSpec l;
    l.kind = LayerSpec::Kind::kConv;
    l.inputs = {from};
    l.name = name;
    l.conv.in_channels = in_ch;
    l.conv.out_channels = out_ch;
    l.conv.kh = l.conv.kw = k;
    l.conv.sh = l.conv.sw = stride;
    l.conv.dh = l.conv.dw = dilation;
    l.conv.groups = groups;
    l.conv.padding = pad;
    l.act = act;
    init_param(name, l.conv.weight_shape(), (in_ch / groups) * k * k);
    g_.params[name + ".bias"] = Tensor(l.conv.bias_shape());
    return push(l);
  }

  int convt(int from, const std::string& name, int in_ch, int out_ch, int k, Act act) {
    LayerSpec l;
    l.kind = LayerSpec::Kind::kConvTranspose;
    l.inputs = {from};
    l.name = name;
    l.convt.in_channels = in_ch;
    l.convt.out_channels = out_ch;
    l.convt.kh = l.convt.kw = k;
    l.act = act;
    init_param(name, l.convt.weight_shape(), in_ch * k * k);
    g_.params[name + ".bias"] = Tensor(l.convt.bias_shape());
    return push(l);
  }

  int pixel_shuffle(int from, int r) { return structural(LayerSpec::Kind::kPixelShuffle, {from}, r); }
  int global_avg_pool(int from) { return structural(LayerSpec::Kind::kGlobalAvgPool, {from}); }
  int max_pool2(int from) { return structural(LayerSpec::Kind::kMaxPool2, {from}); }
  int bilinear_up2(int from) { return structural(LayerSpec::Kind::kBilinearUp2, {from}); }
  int add(int a, int b) { return structural(LayerSpec::Kind::kAdd, {a, b}); }
  int mul(int a, int b) { return structural(LayerSpec::Kind::kMul, {a, b}); }
  int concat(std::vector<int> from) { return structural(LayerSpec::Kind::kConcat, std::move(from)); }

  ModelGraph finish(int downsample_factor = 1) {
    g_.downsample_factor = downsample_factor;
    g_.validate();
    return std::move(g_);
  }

 private:
  int push(LayerSpec l) {
    g_.layers.push_back(std::move(l));
    return static_cast<int>(g_.layers.size()) - 1;
  }

  int structural(LayerSpec::Kind kind, std::vector<int> inputs, int factor = 1) {
    LayerSpec l;
    l.kind = kind;
    l.inputs = std::move(inputs);
    l.factor = factor;
    return push(l);
  }

  void init_param(const std::string& name, Shape ws, int fan_in) {
    const double limit = std::sqrt(6.0 / fan_in);
    g_.params[name + ".weight"] =
        Tensor::rand_uniform(ws, derive_seed(seed_, param_index_++), -limit, limit);
  }

  ModelGraph g_;
  std::uint64_t seed_;
  std::uint64_t param_index_ = 0;
};

}  // namespace

ModelGraph build_smallnet(std::uint64_t seed) {
  GraphBuilder b("smallnet", seed);
  int x = b.conv(0, "conv1", 4, 16, 3, Act::kTanh);
  x = b.conv(x, "conv2", 16, 16, 3, Act::kRelu);
  x = b.conv(x, "conv3", 16, 12, 3, Act::kRelu);
  b.pixel_shuffle(x, 2);
  return b.finish();
}

ModelGraph build_csanet(const CsanetConfig& cfg, std::uint64_t seed) {
  if (cfg.base_channels <= 0 || cfg.dam_blocks <= 0 || cfg.ca_reduction <= 0)
    throw ModelError("csanet: config values must be positive");
  const int c = cfg.base_channels;
  const int c2 = 2 * cfg.base_channels;
  if (c2 % cfg.ca_reduction)
    throw ModelError("csanet: channels not divisible by the attention reduction factor");
  GraphBuilder b("csanet", seed);
  int x = b.conv(0, "head1", 4, c, 3, Act::kRelu);
  x = b.conv(x, "head2", c, c2, 3, Act::kRelu, /*stride=*/2);
  for (int i = 0; i < cfg.dam_blocks; ++i) {
    const std::string p = "dam" + std::to_string(i);
    int f = b.conv(x, p + ".conv1", c2, c2, 3, Act::kRelu);
    f = b.conv(f, p + ".conv2", c2, c2, 3, Act::kRelu);
    // spatial attention: dilated depthwise 5x5 gate
    int sa_gate = b.conv(f, p + ".sa", c2, c2, 5, Act::kNone, 1, /*dilation=*/2,
                         /*groups=*/c2);
    int sa = b.mul(f, sa_gate);
    // channel attention: squeeze-and-excite gate
    int ca = b.global_avg_pool(f);
    ca = b.conv(ca, p + ".ca1", c2, c2 / cfg.ca_reduction, 1, Act::kRelu);
    ca = b.conv(ca, p + ".ca2", c2 / cfg.ca_reduction, c2, 1, Act::kSigmoid);
    ca = b.mul(f, ca);
    int fused = b.conv(b.concat({sa, ca}), p + ".fuse", 2 * c2, c2, 1, Act::kNone);
    x = b.add(x, fused);
  }
  x = b.convt(x, "up", c2, c, 2, Act::kRelu);
  x = b.conv(x, "tail1", c, 12, 3, Act::kNone);
  x = b.pixel_shuffle(x, 2);
  b.conv(x, "tail2", 3, 3, 3, Act::kSigmoid);
  return b.finish(/*downsample_factor=*/2);
}

ModelGraph build_tuned_unet(const UnetConfig& cfg, std::uint64_t seed) {
  if (cfg.depth <= 0 || cfg.base_channels <= 0)
    throw ModelError("unet: config values must be positive");
  GraphBuilder b("unet", seed);
  int x = 0;
  int ch = 4;
  std::vector<int> skips;
  std::vector<int> skip_ch;
  for (int d = 0; d < cfg.depth; ++d) {
    const int oc = cfg.base_channels << d;
    const std::string p = "enc" + std::to_string(d);
    x = b.conv(x, p + ".conv1", ch, oc, 3, Act::kRelu);
    x = b.conv(x, p + ".conv2", oc, oc, 3, Act::kRelu);
    skips.push_back(x);
    skip_ch.push_back(oc);
    x = b.max_pool2(x);
    ch = oc;
  }
  const int bc = cfg.base_channels << cfg.depth;
  x = b.conv(x, "bottleneck.conv1", ch, bc, 3, Act::kRelu);
  x = b.conv(x, "bottleneck.conv2", bc, bc, 3, Act::kRelu);
  ch = bc;
  for (int d = cfg.depth - 1; d >= 0; --d) {
    const int oc = cfg.base_channels << d;
    const std::string p = "dec" + std::to_string(d);
    x = b.bilinear_up2(x);
    // project the up path down to the skip width so the concat is 2x oc
    x = b.conv(x, p + ".proj", ch, oc, 1, Act::kRelu);
    x = b.concat({skips[d], x});
    x = b.conv(x, p + ".conv1", 2 * oc, oc, 3, Act::kRelu);
    x = b.conv(x, p + ".conv2", oc, oc, 3, Act::kRelu);
    ch = oc;
  }
  x = b.conv(x, "head", ch, 12, 3, Act::kNone);
  x = b.pixel_shuffle(x, 2);
  b.conv(x, "out", 3, 3, 3, Act::kSigmoid);
  return b.finish(/*downsample_factor=*/1 << cfg.depth);
}

ModelGraph build_by_name(const std::string& name, std::uint64_t seed) {
  if (name == "smallnet") return build_smallnet(seed);
  if (name == "csanet") return build_csanet({}, seed);
  if (name == "unet") return build_tuned_unet({}, seed);
  throw ModelError("unknown model '" + name + "' (valid: smallnet, csanet, unet)");
}

namespace {

constexpr char kMagic[4] = {'M', 'A', 'I', 'I'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), 4);
}

std::uint32_t read_u32(std::istream& is, const char* what) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 4);
  if (!is) throw ModelError(std::string("checkpoint truncated reading ") + what);
  return v;
}

std::string read_string(std::istream& is, const char* what) {
  const std::uint32_t len = read_u32(is, what);
  if (len > 4096) throw ModelError(std::string("checkpoint: implausible name length for ") + what);
  std::string s(len, '\0');
  is.read(s.data(), len);
  if (!is) throw ModelError(std::string("checkpoint truncated reading ") + what);
  return s;
}

}  // namespace

void save_checkpoint(const ModelGraph& m, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ModelError("cannot open '" + path + "' for writing");
  os.write(kMagic, 4);
  write_u32(os, kVersion);
  write_u32(os, static_cast<std::uint32_t>(m.name.size()));
  os.write(m.name.data(), static_cast<std::streamsize>(m.name.size()));
  write_u32(os, static_cast<std::uint32_t>(m.params.size()));
  for (const auto& [pname, t] : m.params) {
    write_u32(os, static_cast<std::uint32_t>(pname.size()));
    os.write(pname.data(), static_cast<std::streamsize>(pname.size()));
    write_u32(os, 4);
    const Shape& s = t.shape();
    write_u32(os, static_cast<std::uint32_t>(s.b));
    write_u32(os, static_cast<std::uint32_t>(s.c));
    write_u32(os, static_cast<std::uint32_t>(s.h));
    write_u32(os, static_cast<std::uint32_t>(s.w));
    os.write(reinterpret_cast<const char*>(t.data()),
             static_cast<std::streamsize>(t.numel() * sizeof(float)));
  }
  if (!os) throw ModelError("write failed for '" + path + "'");
}

ModelGraph load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ModelError("cannot open checkpoint '" + path + "'");
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw ModelError("bad magic in '" + path + "'");
  const std::uint32_t version = read_u32(is, "version");
  if (version != kVersion)
    throw ModelError("checkpoint version " + std::to_string(version) + " unsupported (expected " +
                     std::to_string(kVersion) + ")");
  const std::string name = read_string(is, "model name");
  ModelGraph m = build_by_name(name);
  const std::uint32_t entries = read_u32(is, "entry count");
  for (std::uint32_t e = 0; e < entries; ++e) {
    const std::string pname = read_string(is, "parameter name");
    auto it = m.params.find(pname);
    if (it == m.params.end())
      throw ModelError("checkpoint: unknown parameter name '" + pname + "'");
    const std::uint32_t rank = read_u32(is, "rank");
    if (rank != 4) throw ModelError("checkpoint: rank " + std::to_string(rank) + " != 4");
    Shape s;
    s.b = static_cast<int>(read_u32(is, "extent"));
    s.c = static_cast<int>(read_u32(is, "extent"));
    s.h = static_cast<int>(read_u32(is, "extent"));
    s.w = static_cast<int>(read_u32(is, "extent"));
    if (s != it->second.shape())
      throw ModelError("checkpoint: parameter '" + pname + "' shape " + s.str() + " != " +
                       it->second.shape().str());
    is.read(reinterpret_cast<char*>(it->second.data()),
            static_cast<std::streamsize>(it->second.numel() * sizeof(float)));
    if (!is) throw ModelError("checkpoint truncated reading data of '" + pname + "'");
  }
  m.validate();
  return m;
}

}  // namespace isp
