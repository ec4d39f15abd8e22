#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "isp/losses.hpp"
#include "isp/model.hpp"
#include "isp/raw.hpp"

namespace isp {

class TrainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class LrSchedule { kConstant, kStepHalve, kLinearDecay };

struct TrainConfig {
  int batch_size = 4;
  double lr_initial = 1e-4;
  double lr_final = 1e-4;
  LrSchedule schedule = LrSchedule::kConstant;
  long halve_every = 1000;  // step_halve period
  long total_steps = 0;
  LossSpec loss{{{LossKind::kCharbonnier, 1.0}}};
  bool augment_flip = false;
  std::uint64_t seed = 0;
  long validate_every = 0;
  long checkpoint_every = 0;
  std::string checkpoint_path;   // written periodically and on completion
  std::string val_manifest;      // optional; enables best-by-validation
  std::string log_path;          // optional CSV step log
  // Resume from <checkpoint_path>.opt (written next to every checkpoint);
  // continues bit-exactly where the saved run stopped.
  bool resume = false;

  void validate() const {
    if (total_steps < 0) throw TrainError("total_steps must be non-negative");
    if (batch_size <= 0) throw TrainError("batch_size must be positive");
    if (lr_final > lr_initial) throw TrainError("lr_final must not exceed lr_initial");
    loss.validate();
  }
};

double lr_at(const TrainConfig& cfg, long step);

struct AdamState {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  long step = 0;
  std::map<std::string, Tensor> m, v;
};

// Standard bias-corrected Adam update; throws (naming the parameter) on a
// non-finite gradient.
void adam_step(ModelGraph& model, const std::map<std::string, Tensor>& grads,
               AdamState& state, double lr);

struct StepLogEntry {
  long step;
  double lr;
  double loss;
  double seconds;
};

struct TrainResult {
  double first_loss = 0;
  double final_loss = 0;
  std::vector<StepLogEntry> log;
};

TrainResult train(ModelGraph& model, const DatasetManifest& data, const TrainConfig& cfg);

// Mean (PSNR, SSIM) of clamped model outputs over the manifest.
std::pair<double, double> evaluate(const ModelGraph& model, const DatasetManifest& data);

// Mean PSNR of the bilinear-demosaic baseline over the manifest (the fixed
// reference the trained models are compared against).
double evaluate_baseline(const DatasetManifest& data);

}  // namespace isp
