#include "isp/bench.hpp"

#include <algorithm>
#include <chrono>
#include <iomanip>
#include <sstream>

#include "isp/losses.hpp"
#include "isp/trainer.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace isp {

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

BenchReport profile(const ModelGraph& model, int height, int width, int runs, int warmup) {
  if (runs < 5 || warmup < 2) throw ModelError("profile: need runs >= 5 and warmup >= 2");
  if (height % 2 || width % 2) throw ModelError("profile: geometry must be even");
  const int ph = height / 2, pw = width / 2;
  if (ph % model.downsample_factor || pw % model.downsample_factor)
    throw ModelError("profile: packed geometry (" + std::to_string(ph) + "," +
                     std::to_string(pw) + ") incompatible with model downsampling");

  BenchReport r;
  r.model = model.name;
  r.input_height = height;
  r.input_width = width;
  r.runs = runs;
  r.warmup = warmup;
  r.param_bytes = model.param_bytes();
#ifdef _OPENMP
  r.threads = omp_get_max_threads();
#endif

  const Tensor input = Tensor::rand_uniform({1, 4, ph, pw}, /*seed=*/42, 0.0, 1.0);
  const int n_layers = static_cast<int>(model.layers.size()) - 1;
  std::vector<std::vector<double>> layer_runs(n_layers);
  std::vector<double> totals;
  std::vector<double> attributed;
  std::vector<double> layer_ms;

  for (int run = 0; run < warmup + runs; ++run) {
    const auto t0 = std::chrono::steady_clock::now();
    model.forward_timed(input, &layer_ms);
    const auto t1 = std::chrono::steady_clock::now();
    if (run < warmup) continue;
    double sum = 0;
    for (int i = 0; i < n_layers; ++i) {
      layer_runs[i].push_back(layer_ms[i]);
      sum += layer_ms[i];
    }
    attributed.push_back(sum);
    totals.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }

  r.total_ms = median(totals);
  r.attributed_ms = median(attributed);
  for (int i = 0; i < n_layers; ++i) {
    LayerTiming t;
    t.index = i;
    t.kind = model.layers[i + 1].kind_name();
    t.median_ms = median(layer_runs[i]);
    t.pct_of_total = r.total_ms > 0 ? 100.0 * t.median_ms / r.total_ms : 0.0;
    r.layers.push_back(std::move(t));
  }
  return r;
}

void score_report(const ModelGraph& model, const DatasetManifest& val, BenchReport& report) {
  if (report.total_ms <= 0) throw ModelError("score_report: report has no runtime");
  const auto [p, s] = evaluate(model, val);
  report.psnr = p;
  report.ssim = s;
  report.score = mai_score(p, report.total_ms / 1000.0);
}

std::string report_text(const BenchReport& r) {
  std::ostringstream os;
  os << std::fixed;
  os << "model: " << r.model << "\n"
     << "input: " << r.input_width << "x" << r.input_height << " RAW (packed 4x"
     << r.input_height / 2 << "x" << r.input_width / 2 << ")\n"
     << "params: " << r.param_bytes << " bytes (" << std::setprecision(1)
     << r.param_bytes / 1024.0 << " KB)\n"
     << "runs: " << r.runs << " (+" << r.warmup << " warmup), threads: " << r.threads << "\n"
     << "note: desktop CPU timings; not comparable to mobile APU results\n\n";
  os << std::setw(5) << "layer" << "  " << std::setw(16) << std::left << "kind" << std::right
     << std::setw(12) << "median ms" << std::setw(9) << "%" << "\n";
  double sum = 0;
  for (const auto& l : r.layers) {
    os << std::setw(5) << l.index << "  " << std::setw(16) << std::left << l.kind << std::right
       << std::setw(12) << std::setprecision(3) << l.median_ms << std::setw(8)
       << std::setprecision(1) << l.pct_of_total << "%\n";
    sum += l.median_ms;
  }
  os << "\ntotal: " << std::setprecision(3) << r.total_ms << " ms (layer sum "
     << sum << " ms)\n";
  if (r.psnr) os << "psnr: " << std::setprecision(2) << *r.psnr << " dB\n";
  if (r.ssim) os << "ssim: " << std::setprecision(4) << *r.ssim << "\n";
  if (r.score) os << "final score: " << std::setprecision(2) << *r.score << "\n";
  return os.str();
}

std::string report_csv(const BenchReport& r) {
  std::ostringstream os;
  os << "layer,kind,median_ms,pct_of_total\n";
  for (const auto& l : r.layers)
    os << l.index << "," << l.kind << "," << l.median_ms << "," << l.pct_of_total << "\n";
  os << "total,," << r.total_ms << ",100\n";
  return os.str();
}

}  // namespace isp
