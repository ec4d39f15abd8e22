#include "isp/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

#include "isp/rng.hpp"

namespace isp {

double lr_at(const TrainConfig& cfg, long step) {
  switch (cfg.schedule) {
    case LrSchedule::kConstant:
      return cfg.lr_initial;
    case LrSchedule::kStepHalve: {
      if (cfg.halve_every <= 0) throw TrainError("step_halve: period must be positive");
      const double lr = cfg.lr_initial * std::pow(2.0, -static_cast<double>(step / cfg.halve_every));
      return std::max(lr, cfg.lr_final);
    }
    case LrSchedule::kLinearDecay:
      if (cfg.total_steps == 0) return cfg.lr_initial;
      return cfg.lr_initial +
             (cfg.lr_final - cfg.lr_initial) *
                 (static_cast<double>(step) / static_cast<double>(cfg.total_steps));
  }
  return cfg.lr_initial;
}

void adam_step(ModelGraph& model, const std::map<std::string, Tensor>& grads,
               AdamState& state, double lr) {
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (auto& [name, param] : model.params) {
    auto git = grads.find(name);
    if (git == grads.end()) throw TrainError("adam: missing gradient for '" + name + "'");
    const Tensor& g = git->second;
    if (!g.all_finite()) throw TrainError("adam: non-finite gradient for '" + name + "'");
    Tensor& m = state.m.try_emplace(name, Tensor(param.shape())).first->second;
    Tensor& v = state.v.try_emplace(name, Tensor(param.shape())).first->second;
    const float b1 = static_cast<float>(state.beta1);
    const float b2 = static_cast<float>(state.beta2);
    for (std::int64_t i = 0; i < param.numel(); ++i) {
      const float gi = g.data()[i];
      m.data()[i] = b1 * m.data()[i] + (1.0f - b1) * gi;
      v.data()[i] = b2 * v.data()[i] + (1.0f - b2) * gi * gi;
      const double mhat = m.data()[i] / bc1;
      const double vhat = v.data()[i] / bc2;
      param.data()[i] -= static_cast<float>(lr * mhat / (std::sqrt(vhat) + state.eps));
    }
  }
}

namespace {

struct PairStore {
  std::vector<BayerImage> raws;
  std::vector<RgbImage> rgbs;
};

PairStore load_pairs(const DatasetManifest& man) {
  PairStore s;
  s.raws.reserve(man.pairs.size());
  s.rgbs.reserve(man.pairs.size());
  for (std::size_t i = 0; i < man.pairs.size(); ++i) {
    Png16 raw = read_png_gray16(man.raw_path(i));
    BayerImage b;
    b.width = raw.width;
    b.height = raw.height;
    b.data = std::move(raw.gray);
    s.raws.push_back(std::move(b));
    s.rgbs.push_back(read_png_rgb8(man.rgb_path(i)));
  }
  return s;
}

void copy_into_batch(Tensor& batch, int slot, const Tensor& sample) {
  const std::int64_t n = sample.numel();
  std::copy(sample.data(), sample.data() + n, batch.data() + slot * n);
}

// Optimizer sidecar so a resumed run continues bit-exactly: global step,
// epoch/cursor of the data sweep, and the Adam moment buffers.
struct TrainerState {
  long step = 0;
  long epoch = -1;
  int cursor = 0;
  AdamState adam;
};

void save_trainer_state(const std::string& path, const ModelGraph& model,
                        const TrainerState& st) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw TrainError("cannot write optimizer state '" + path + "'");
  os.write("MAIO", 4);
  auto w64 = [&](std::int64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); };
  w64(st.step);
  w64(st.epoch);
  w64(st.cursor);
  w64(st.adam.step);
  for (const auto& [name, p] : model.params) {
    const Tensor& m = st.adam.m.at(name);
    const Tensor& v = st.adam.v.at(name);
    os.write(reinterpret_cast<const char*>(m.data()),
             static_cast<std::streamsize>(m.numel() * sizeof(float)));
    os.write(reinterpret_cast<const char*>(v.data()),
             static_cast<std::streamsize>(v.numel() * sizeof(float)));
  }
  if (!os) throw TrainError("write failed for '" + path + "'");
}

TrainerState load_trainer_state(const std::string& path, const ModelGraph& model) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw TrainError("cannot open optimizer state '" + path + "'");
  char magic[4];
  is.read(magic, 4);
  if (!is || std::string(magic, 4) != "MAIO")
    throw TrainError("bad magic in optimizer state '" + path + "'");
  TrainerState st;
  auto r64 = [&]() {
    std::int64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 8);
    return v;
  };
  st.step = r64();
  st.epoch = r64();
  st.cursor = static_cast<int>(r64());
  st.adam.step = r64();
  for (const auto& [name, p] : model.params) {
    Tensor m(p.shape()), v(p.shape());
    is.read(reinterpret_cast<char*>(m.data()),
            static_cast<std::streamsize>(m.numel() * sizeof(float)));
    is.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(v.numel() * sizeof(float)));
    st.adam.m.emplace(name, std::move(m));
    st.adam.v.emplace(name, std::move(v));
  }
  if (!is) throw TrainError("optimizer state '" + path + "' truncated");
  return st;
}

}  // namespace

TrainResult train(ModelGraph& model, const DatasetManifest& data, const TrainConfig& cfg) {
  cfg.validate();
  TrainResult result;
  if (cfg.total_steps == 0) return result;
  if (data.pairs.empty()) throw TrainError("train: empty dataset");

  PairStore store = load_pairs(data);
  const int n = static_cast<int>(store.raws.size());
  {
    const Tensor probe = pack_bayer(store.raws[0]);
    if (probe.shape().c != model.input_channels)
      throw TrainError("train: data/model channel contract mismatch");
  }

  DatasetManifest val;
  const bool use_val = !cfg.val_manifest.empty() && cfg.validate_every > 0;
  if (use_val) val = load_manifest(cfg.val_manifest);
  std::map<std::string, Tensor> best_params;
  double best_psnr = -1e30;

  std::ofstream log;
  if (!cfg.log_path.empty()) {
    log.open(cfg.log_path);
    if (!log) throw TrainError("cannot open step log '" + cfg.log_path + "'");
    log << "step,lr,loss,seconds\n";
  }

  TrainerState st;
  if (cfg.resume) {
    if (cfg.checkpoint_path.empty()) throw TrainError("resume requires checkpoint_path");
    st = load_trainer_state(cfg.checkpoint_path + ".opt", model);
  }

  std::vector<int> order(n);
  auto reshuffle = [&](long epoch) {
    for (int i = 0; i < n; ++i) order[i] = i;
    CounterRng shuffle_rng(derive_seed(cfg.seed, 0x5u + static_cast<std::uint64_t>(epoch)));
    for (int i = n - 1; i > 0; --i)
      std::swap(order[i], order[shuffle_rng.next_u64() % (i + 1)]);
  };
  if (cfg.resume && st.epoch >= 0)
    reshuffle(st.epoch);
  else
    st.cursor = n;  // forces a reshuffle on the first step
  const auto t_start = std::chrono::steady_clock::now();

  for (long step = st.step; step < cfg.total_steps; ++step) {
    // seeded, epoch-stable shuffle
    Tensor raw_batch({cfg.batch_size, 4, store.raws[0].height / 2, store.raws[0].width / 2});
    Tensor rgb_batch({cfg.batch_size, 3, store.rgbs[0].height, store.rgbs[0].width});
    for (int slot = 0; slot < cfg.batch_size; ++slot) {
      if (st.cursor >= n) {
        ++st.epoch;
        reshuffle(st.epoch);
        st.cursor = 0;
      }
      const int idx = order[st.cursor++];
      Tensor raw = pack_bayer(store.raws[idx]);
      Tensor rgb = rgb_to_tensor(store.rgbs[idx]);
      if (cfg.augment_flip) {
        CounterRng coin(derive_seed(cfg.seed, 0xf11au + static_cast<std::uint64_t>(
                                                  step * cfg.batch_size + slot)));
        augment_flip(raw, rgb, coin.uniform() < 0.5);
      }
      copy_into_batch(raw_batch, slot, raw);
      copy_into_batch(rgb_batch, slot, rgb);
    }

    auto pv = model.make_param_vars();
    Var out = model.forward_var(Var::leaf(std::move(raw_batch)), pv);
    Var loss = composite_loss(cfg.loss, out, Var::leaf(std::move(rgb_batch)));
    const double loss_value = static_cast<double>(loss.value().data()[0]);
    if (!std::isfinite(loss_value))
      throw TrainError("train: non-finite loss at step " + std::to_string(step) +
                       (cfg.checkpoint_path.empty()
                            ? ""
                            : "; last checkpoint retained at " + cfg.checkpoint_path));
    loss.backward();

    std::map<std::string, Tensor> grads;
    for (auto& [name, var] : pv) grads.emplace(name, var.grad());
    const double lr = lr_at(cfg, step);
    adam_step(model, grads, st.adam, lr);
    st.step = step + 1;

    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    result.log.push_back({step, lr, loss_value, secs});
    if (log) log << step << "," << lr << "," << loss_value << "," << secs << "\n";
    if (result.log.size() == 1) result.first_loss = loss_value;
    result.final_loss = loss_value;

    if (cfg.checkpoint_every > 0 && !cfg.checkpoint_path.empty() &&
        (step + 1) % cfg.checkpoint_every == 0) {
      save_checkpoint(model, cfg.checkpoint_path);
      save_trainer_state(cfg.checkpoint_path + ".opt", model, st);
    }
    if (use_val && (step + 1) % cfg.validate_every == 0) {
      const double p = evaluate(model, val).first;
      if (p > best_psnr) {
        best_psnr = p;
        best_params = model.params;
      }
    }
  }

  if (use_val && !best_params.empty()) {
    const double p = evaluate(model, val).first;
    if (p > best_psnr) best_psnr = p;
    else model.params = best_params;
  }
  if (!cfg.checkpoint_path.empty()) {
    save_checkpoint(model, cfg.checkpoint_path);
    save_trainer_state(cfg.checkpoint_path + ".opt", model, st);
  }
  return result;
}

std::pair<double, double> evaluate(const ModelGraph& model, const DatasetManifest& data) {
  if (data.pairs.empty()) throw TrainError("evaluate: empty manifest");
  double psnr_sum = 0, ssim_sum = 0;
  for (std::size_t i = 0; i < data.pairs.size(); ++i) {
    Png16 raw_png = read_png_gray16(data.raw_path(i));
    BayerImage b;
    b.width = raw_png.width;
    b.height = raw_png.height;
    b.data = std::move(raw_png.gray);
    const Tensor target = rgb_to_tensor(read_png_rgb8(data.rgb_path(i)));
    const Tensor pred = model.forward_eval(pack_bayer(b));
    psnr_sum += psnr(pred, target);
    ssim_sum += static_cast<double>(ssim(Var::leaf(pred), Var::leaf(target)).value().data()[0]);
  }
  const double inv = 1.0 / static_cast<double>(data.pairs.size());
  return {psnr_sum * inv, ssim_sum * inv};
}

double evaluate_baseline(const DatasetManifest& data) {
  if (data.pairs.empty()) throw TrainError("evaluate_baseline: empty manifest");
  double psnr_sum = 0;
  for (std::size_t i = 0; i < data.pairs.size(); ++i) {
    Png16 raw_png = read_png_gray16(data.raw_path(i));
    BayerImage b;
    b.width = raw_png.width;
    b.height = raw_png.height;
    b.data = std::move(raw_png.gray);
    const Tensor target = rgb_to_tensor(read_png_rgb8(data.rgb_path(i)));
    const Tensor pred = rgb_to_tensor(bilinear_demosaic(b, &data.cfg));
    psnr_sum += psnr(pred, target);
  }
  return psnr_sum / static_cast<double>(data.pairs.size());
}

}  // namespace isp
