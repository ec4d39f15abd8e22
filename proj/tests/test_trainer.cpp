#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "isp/trainer.hpp"
#include "testutil.hpp"

using namespace isp;

namespace {

bool same_bits(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() &&
         std::memcmp(a.data(), b.data(), sizeof(float) * a.numel()) == 0;
}

// Small on-disk corpus shared by the training tests.
DatasetManifest tiny_dataset(const std::string& tag, int pairs, std::uint64_t seed) {
  const std::string src = testutil::fresh_dir(tag + "_src");
  testutil::write_synth_corpus(src, 2, 96, 96, seed);
  const std::string out = testutil::fresh_dir(tag + "_data");
  UnprocessConfig cfg = UnprocessConfig::defaults(seed);
  cfg.read_var = 1e-6;
  cfg.shot = 1e-4;
  DatasetManifest man = make_dataset(src, out, cfg, 64, pairs);
  std::filesystem::remove_all(src);
  return man;
}

}  // namespace

TEST_CASE("learning-rate schedules") {
  TrainConfig c;
  c.lr_initial = 1e-3;
  c.lr_final = 1e-5;

  SUBCASE("constant") {
    c.schedule = LrSchedule::kConstant;
    CHECK(lr_at(c, 0) == 1e-3);
    CHECK(lr_at(c, 100000) == 1e-3);
  }
  SUBCASE("halving steps down and respects the floor") {
    c.schedule = LrSchedule::kStepHalve;
    c.halve_every = 100;
    CHECK(lr_at(c, 0) == 1e-3);
    CHECK(lr_at(c, 99) == 1e-3);
    CHECK(lr_at(c, 100) == doctest::Approx(5e-4).epsilon(1e-12));
    CHECK(lr_at(c, 350) == doctest::Approx(1.25e-4).epsilon(1e-12));
    CHECK(lr_at(c, 100000) == 1e-5);  // floored at lr_final
    c.halve_every = 0;
    CHECK_THROWS_AS(lr_at(c, 1), TrainError);
  }
  SUBCASE("linear decay hits lr_final exactly at the last step") {
    c.schedule = LrSchedule::kLinearDecay;
    c.total_steps = 1000;
    CHECK(lr_at(c, 0) == 1e-3);
    CHECK(lr_at(c, 500) == doctest::Approx(0.5 * (1e-3 + 1e-5)).epsilon(1e-12));
    CHECK(lr_at(c, 1000) == doctest::Approx(1e-5).epsilon(1e-12));
  }
  SUBCASE("config validation") {
    TrainConfig bad;
    bad.lr_initial = 1e-5;
    bad.lr_final = 1e-3;
    CHECK_THROWS_AS(bad.validate(), TrainError);
    TrainConfig bad2;
    bad2.batch_size = 0;
    CHECK_THROWS_AS(bad2.validate(), TrainError);
  }
}

TEST_CASE("adam leaves parameters untouched on a zero gradient") {
  ModelGraph m;
  m.name = "probe";
  m.params["p"] = Tensor::full({1, 1, 1, 2}, 0.7f);
  AdamState st;
  std::map<std::string, Tensor> grads;
  grads["p"] = Tensor::zeros({1, 1, 1, 2});
  adam_step(m, grads, st, 0.1);
  CHECK(m.params["p"].data()[0] == 0.7f);
  CHECK(m.params["p"].data()[1] == 0.7f);
  CHECK(st.step == 1);
}

TEST_CASE("first adam step moves by roughly lr in the gradient direction") {
  ModelGraph m;
  m.params["p"] = Tensor::zeros({1, 1, 1, 2});
  AdamState st;
  std::map<std::string, Tensor> grads;
  grads["p"] = Tensor({1, 1, 1, 2});
  grads["p"].data()[0] = 0.5f;
  grads["p"].data()[1] = -3.0f;
  adam_step(m, grads, st, 0.01);
  CHECK(m.params["p"].data()[0] == doctest::Approx(-0.01).epsilon(1e-4));
  CHECK(m.params["p"].data()[1] == doctest::Approx(0.01).epsilon(1e-4));
}

TEST_CASE("adam trajectory matches the scalar reference on a quadratic") {
  // f(p) = 0.5 (p - 3)^2, gradient p - 3
  ModelGraph m;
  m.params["p"] = Tensor::zeros({1, 1, 1, 1});
  AdamState st;
  testutil::ScalarAdamRef ref;
  float ref_p = 0.0f;
  for (int i = 0; i < 10; ++i) {
    const float g = m.params["p"].data()[0] - 3.0f;
    std::map<std::string, Tensor> grads;
    grads["p"] = Tensor::full({1, 1, 1, 1}, g);
    adam_step(m, grads, st, 0.1);
    ref_p = ref.step(ref_p, ref_p - 3.0f, 0.1);
    CHECK(std::abs(m.params["p"].data()[0] - ref_p) < 1e-7);
  }
}

TEST_CASE("adam rejects missing or non-finite gradients") {
  ModelGraph m;
  m.params["p"] = Tensor::zeros({1, 1, 1, 1});
  AdamState st;
  std::map<std::string, Tensor> empty;
  CHECK_THROWS_WITH_AS(adam_step(m, empty, st, 0.1), doctest::Contains("p"), TrainError);
  std::map<std::string, Tensor> nang;
  nang["p"] = Tensor::full({1, 1, 1, 1}, std::nanf(""));
  CHECK_THROWS_WITH_AS(adam_step(m, nang, st, 0.1), doctest::Contains("p"), TrainError);
}

TEST_CASE("zero steps is a no-op") {
  DatasetManifest man = tiny_dataset("t0", 2, 1);
  ModelGraph m = build_smallnet(1);
  std::map<std::string, Tensor> before = m.params;
  TrainConfig cfg;
  cfg.total_steps = 0;
  TrainResult r = train(m, man, cfg);
  CHECK(r.log.empty());
  for (const auto& [k, v] : m.params) CHECK(same_bits(v, before.at(k)));
  std::filesystem::remove_all(man.dir);
}

TEST_CASE("loss decreases over the first steps on a fixed batch") {
  DatasetManifest man = tiny_dataset("t1", 4, 2);
  ModelGraph m = build_smallnet(3);
  TrainConfig cfg;
  cfg.batch_size = 4;  // batch == dataset, so every step sees the same data
  cfg.total_steps = 5;
  cfg.lr_initial = cfg.lr_final = 1e-3;
  TrainResult r = train(m, man, cfg);
  REQUIRE(r.log.size() == 5);
  for (std::size_t i = 1; i < r.log.size(); ++i) CHECK(r.log[i].loss < r.log[i - 1].loss);
  CHECK(r.first_loss == r.log.front().loss);
  CHECK(r.final_loss == r.log.back().loss);
  std::filesystem::remove_all(man.dir);
}

TEST_CASE("training is bitwise deterministic") {
  DatasetManifest man = tiny_dataset("t2", 3, 4);
  TrainConfig cfg;
  cfg.batch_size = 2;
  cfg.total_steps = 6;
  cfg.lr_initial = cfg.lr_final = 1e-3;
  cfg.augment_flip = true;
  cfg.seed = 9;

  ModelGraph a = build_smallnet(5);
  ModelGraph b = build_smallnet(5);
  TrainResult ra = train(a, man, cfg);
  TrainResult rb = train(b, man, cfg);
  for (const auto& [k, v] : a.params) CHECK(same_bits(v, b.params.at(k)));
  REQUIRE(ra.log.size() == rb.log.size());
  for (std::size_t i = 0; i < ra.log.size(); ++i) CHECK(ra.log[i].loss == rb.log[i].loss);
  std::filesystem::remove_all(man.dir);
}

TEST_CASE("interrupt plus resume reproduces the uninterrupted run bitwise") {
  DatasetManifest man = tiny_dataset("t3", 3, 6);
  const std::string dir = testutil::fresh_dir("t3_ck");
  TrainConfig cfg;
  cfg.batch_size = 2;
  cfg.total_steps = 8;
  cfg.lr_initial = cfg.lr_final = 1e-3;
  cfg.seed = 11;

  // straight-through run
  ModelGraph full = build_smallnet(7);
  TrainConfig cfg_full = cfg;
  cfg_full.checkpoint_path = dir + "/full.ckpt";
  train(full, man, cfg_full);

  // stop at step 5, then resume to 8
  ModelGraph part = build_smallnet(7);
  TrainConfig cfg_part = cfg;
  cfg_part.total_steps = 5;
  cfg_part.checkpoint_path = dir + "/part.ckpt";
  train(part, man, cfg_part);

  ModelGraph resumed = load_checkpoint(dir + "/part.ckpt");
  TrainConfig cfg_resume = cfg;
  cfg_resume.checkpoint_path = dir + "/part.ckpt";
  cfg_resume.resume = true;
  train(resumed, man, cfg_resume);

  for (const auto& [k, v] : full.params) CHECK(same_bits(v, resumed.params.at(k)));

  TrainConfig bad = cfg;
  bad.resume = true;  // no checkpoint_path
  ModelGraph m = build_smallnet(7);
  CHECK_THROWS_AS(train(m, man, bad), TrainError);

  std::filesystem::remove_all(man.dir);
  std::filesystem::remove_all(dir);
}

TEST_CASE("a diverging run aborts instead of continuing with garbage") {
  DatasetManifest man = tiny_dataset("t4", 2, 8);
  ModelGraph m = build_smallnet(9);
  TrainConfig cfg;
  cfg.batch_size = 2;
  cfg.total_steps = 10;
  cfg.lr_initial = cfg.lr_final = 1e20;  // guarantees overflow within a few steps
  LossSpec spec;
  spec.terms = {{LossKind::kMse, 1.0}};
  cfg.loss = spec;
  CHECK_THROWS_AS(train(m, man, cfg), std::runtime_error);
  std::filesystem::remove_all(man.dir);
}

TEST_CASE("evaluate averages per-image psnr and ssim of clamped outputs") {
  DatasetManifest man = tiny_dataset("t5", 2, 10);
  ModelGraph m = build_smallnet(11);
  const auto [p, s] = evaluate(m, man);

  double psum = 0, ssum = 0;
  for (std::size_t i = 0; i < man.pairs.size(); ++i) {
    Png16 raw_png = read_png_gray16(man.raw_path(i));
    BayerImage b;
    b.width = raw_png.width;
    b.height = raw_png.height;
    b.data = std::move(raw_png.gray);
    Tensor target = rgb_to_tensor(read_png_rgb8(man.rgb_path(i)));
    Tensor pred = m.forward_eval(pack_bayer(b));
    psum += psnr(pred, target);
    ssum += static_cast<double>(
        ssim(Var::leaf(pred), Var::leaf(target)).value().data()[0]);
  }
  CHECK(p == doctest::Approx(psum / 2).epsilon(1e-9));
  CHECK(s == doctest::Approx(ssum / 2).epsilon(1e-9));
  std::filesystem::remove_all(man.dir);
}

TEST_CASE("demosaic baseline is reasonable on low-noise data") {
  DatasetManifest man = tiny_dataset("t6", 3, 12);
  const double base = evaluate_baseline(man);
  CHECK(base > 15.0);
  CHECK(base < 60.0);
  std::filesystem::remove_all(man.dir);
}

TEST_CASE("step log is written as csv") {
  DatasetManifest man = tiny_dataset("t7", 2, 14);
  const std::string dir = testutil::fresh_dir("t7_log");
  ModelGraph m = build_smallnet(13);
  TrainConfig cfg;
  cfg.batch_size = 2;
  cfg.total_steps = 3;
  cfg.log_path = dir + "/log.csv";
  train(m, man, cfg);
  std::ifstream is(dir + "/log.csv");
  std::string header;
  std::getline(is, header);
  CHECK(header == "step,lr,loss,seconds");
  int lines = 0;
  std::string line;
  while (std::getline(is, line))
    if (!line.empty()) ++lines;
  CHECK(lines == 3);
  std::filesystem::remove_all(man.dir);
  std::filesystem::remove_all(dir);
}
