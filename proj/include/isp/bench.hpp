#pragma once

#include <optional>
#include <string>
#include <vector>

#include "isp/model.hpp"
#include "isp/raw.hpp"

namespace isp {

struct LayerTiming {
  int index;
  std::string kind;
  double median_ms;
  double pct_of_total;
};

struct BenchReport {
  std::string model;
  int input_height = 0, input_width = 0;  // RAW mosaic geometry
  std::vector<LayerTiming> layers;
  double total_ms = 0;       // median over runs of the forward wall time
  double attributed_ms = 0;  // median over runs of the per-run layer-time sum
  std::int64_t param_bytes = 0;
  int runs = 0, warmup = 0;
  int threads = 1;  // pinned parallelism configuration
  std::optional<double> psnr, ssim, score;
};

// Times the forward pass per layer on a random packed input at the given
// mosaic geometry. Medians over `runs` timed runs after `warmup` untimed
// ones. Never mutates the model.
BenchReport profile(const ModelGraph& model, int height = 1088, int width = 1920,
                    int runs = 10, int warmup = 3);

// Fills psnr/ssim from the validation manifest and the challenge score from
// (psnr, total_ms / 1000).
void score_report(const ModelGraph& model, const DatasetManifest& val, BenchReport& report);

std::string report_text(const BenchReport& r);
std::string report_csv(const BenchReport& r);

}  // namespace isp
