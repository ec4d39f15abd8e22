#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "isp/autograd.hpp"
#include "isp/nn_ops.hpp"
#include "isp/tensor.hpp"

namespace isp {

class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// One node of a model DAG. Structural layers (add/mul/concat) carry no
// parameters; conv layers own "<name>.weight" / "<name>.bias" entries in the
// graph's parameter map. Activations are attributes of the conv that
// produces them, matching how mobile runtimes fuse them.
struct LayerSpec {
  enum class Kind {
    kInput,
    kConv,
    kConvTranspose,
    kPixelShuffle,
    kSpaceToDepth,
    kGlobalAvgPool,
    kMaxPool2,
    kBilinearUp2,
    kAdd,
    kMul,
    kConcat,
  };

  Kind kind = Kind::kInput;
  std::vector<int> inputs;  // indices of producing layers
  std::string name;         // parameter prefix, empty for structural layers
  Conv2dParams conv;
  ConvTranspose2dParams convt;
  Act act = Act::kNone;
  int factor = 1;  // pixel_shuffle / space_to_depth

  const char* kind_name() const;
  int out_channels(const std::vector<int>& in_channels) const;
  bool has_params() const { return kind == Kind::kConv || kind == Kind::kConvTranspose; }
};

class ModelGraph {
 public:
  std::string name;
  std::vector<LayerSpec> layers;
  std::map<std::string, Tensor> params;
  int input_channels = 4;
  int downsample_factor = 1;  // spatial divisibility the packed input must satisfy

  // Checks channel chaining across the whole DAG and that the stored
  // parameters match every layer's declared shapes.
  void validate() const;

  std::int64_t param_count() const;
  std::int64_t param_bytes() const { return param_count() * 4; }

  // Inference forward; pure function of (params, input).
  Tensor forward(const Tensor& input) const;
  // Same, with [0,1] clamping applied (evaluation contract).
  Tensor forward_eval(const Tensor& input) const;
  // Per-layer wall time in ms (one entry per non-input layer), for profiling.
  Tensor forward_timed(const Tensor& input, std::vector<double>* layer_ms) const;

  // Training forward on the tape. param_vars must hold one leaf per
  // parameter (created by make_param_vars) so gradients can be read back.
  Var forward_var(Var input, std::map<std::string, Var>& param_vars) const;
  std::map<std::string, Var> make_param_vars() const;
};

ModelGraph build_smallnet(std::uint64_t seed = 1);

struct CsanetConfig {
  int base_channels = 32;
  int dam_blocks = 2;
  int ca_reduction = 4;
};
ModelGraph build_csanet(const CsanetConfig& cfg = {}, std::uint64_t seed = 1);

struct UnetConfig {
  int depth = 3;
  int base_channels = 16;
};
ModelGraph build_tuned_unet(const UnetConfig& cfg = {}, std::uint64_t seed = 1);

// Rebuilds a default-configured model from its registered name.
ModelGraph build_by_name(const std::string& name, std::uint64_t seed = 1);

// Binary checkpoint: magic "MAII", u32 version, model name, u32 entry count,
// then per entry: u32 name length, name bytes, u32 rank (4), four u32
// extents, little-endian f32 data. Round-trips bitwise.
void save_checkpoint(const ModelGraph& m, const std::string& path);
ModelGraph load_checkpoint(const std::string& path);

}  // namespace isp
