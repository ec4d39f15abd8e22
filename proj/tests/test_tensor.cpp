#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "isp/autograd.hpp"
#include "isp/tensor.hpp"
#include "testutil.hpp"

using namespace isp;

TEST_CASE("layout is row-major (b,c,h,w)") {
  Tensor t({2, 3, 4, 5});
  CHECK(t.numel() == 120);
  CHECK(t.index(0, 0, 0, 0) == 0);
  CHECK(t.index(0, 0, 0, 1) == 1);
  CHECK(t.index(0, 0, 1, 0) == 5);
  CHECK(t.index(0, 1, 0, 0) == 20);
  CHECK(t.index(1, 0, 0, 0) == 60);
  CHECK(t.index(1, 2, 3, 4) == 119);
}

TEST_CASE("constructors") {
  Tensor z = Tensor::zeros({1, 2, 3, 3});
  for (std::int64_t i = 0; i < z.numel(); ++i) CHECK(z.data()[i] == 0.0f);
  Tensor f = Tensor::full({1, 1, 2, 2}, 2.5f);
  for (std::int64_t i = 0; i < f.numel(); ++i) CHECK(f.data()[i] == 2.5f);
  CHECK_THROWS_AS(Tensor(Shape{-1, 1, 1, 1}), TensorError);
}

TEST_CASE("randn is reproducible and roughly standard") {
  Tensor a = Tensor::randn({1, 1, 100, 100}, 7);
  Tensor b = Tensor::randn({1, 1, 100, 100}, 7);
  CHECK(std::memcmp(a.data(), b.data(), sizeof(float) * a.numel()) == 0);
  Tensor c = Tensor::randn({1, 1, 100, 100}, 8);
  CHECK(std::memcmp(a.data(), c.data(), sizeof(float) * a.numel()) != 0);

  Tensor big = Tensor::randn({1, 1, 1000, 1000}, 3);
  double mean = 0, var = 0;
  for (std::int64_t i = 0; i < big.numel(); ++i) mean += big.data()[i];
  mean /= big.numel();
  for (std::int64_t i = 0; i < big.numel(); ++i) {
    const double d = big.data()[i] - mean;
    var += d * d;
  }
  var /= big.numel();
  CHECK(std::abs(mean) < 0.01);
  CHECK(std::abs(var - 1.0) < 0.01);
}

TEST_CASE("elementwise identities") {
  Tensor x = Tensor::randn({2, 3, 4, 4}, 1);
  Tensor z = Tensor::zeros(x.shape());
  Tensor o = Tensor::ones(x.shape());
  Tensor xz = elementwise(EwOp::kAdd, x, z);
  Tensor xo = elementwise(EwOp::kMul, x, o);
  CHECK(std::memcmp(xz.data(), x.data(), sizeof(float) * x.numel()) == 0);
  CHECK(std::memcmp(xo.data(), x.data(), sizeof(float) * x.numel()) == 0);
  Tensor xx = elementwise(EwOp::kSub, x, x);
  for (std::int64_t i = 0; i < xx.numel(); ++i) CHECK(xx.data()[i] == 0.0f);
}

TEST_CASE("per-channel broadcast against a scalar loop") {
  Tensor x = Tensor::randn({2, 3, 5, 5}, 11);
  Tensor s = Tensor::randn({1, 3, 1, 1}, 12);
  Tensor y = elementwise(EwOp::kMul, x, s);
  for (int b = 0; b < 2; ++b)
    for (int c = 0; c < 3; ++c)
      for (int h = 0; h < 5; ++h)
        for (int w = 0; w < 5; ++w)
          CHECK(y.at(b, c, h, w) == x.at(b, c, h, w) * s.at(0, c, 0, 0));

  Tensor sb = Tensor::randn({2, 3, 1, 1}, 13);
  Tensor yb = elementwise(EwOp::kAdd, x, sb);
  for (int b = 0; b < 2; ++b)
    for (int c = 0; c < 3; ++c)
      CHECK(yb.at(b, c, 4, 4) == x.at(b, c, 4, 4) + sb.at(b, c, 0, 0));
}

TEST_CASE("elementwise rejects incompatible shapes") {
  Tensor a({1, 3, 4, 4});
  CHECK_THROWS_AS(elementwise(EwOp::kAdd, a, Tensor({1, 2, 4, 4})), TensorError);
  CHECK_THROWS_AS(elementwise(EwOp::kAdd, a, Tensor({1, 3, 2, 2})), TensorError);
  CHECK_THROWS_AS(elementwise(EwOp::kAdd, a, Tensor({3, 3, 1, 1})), TensorError);
}

TEST_CASE("non-finite values are reported, not propagated silently") {
  Tensor a = Tensor::ones({1, 1, 2, 2});
  Tensor b = Tensor::full({1, 1, 2, 2}, std::numeric_limits<float>::max());
  CHECK_THROWS_AS(elementwise(EwOp::kMul, b, b), TensorError);
  CHECK(a.all_finite());
  a.data()[3] = std::nanf("");
  CHECK(!a.all_finite());
  CHECK_THROWS_AS(a.check_finite("test"), TensorError);
}

TEST_CASE("concat of one part is the identity") {
  Tensor x = Tensor::randn({2, 5, 3, 3}, 4);
  Tensor y = concat_channels<float>({&x});
  CHECK(y.shape() == x.shape());
  CHECK(std::memcmp(y.data(), x.data(), sizeof(float) * x.numel()) == 0);
}

TEST_CASE("concat then slice recovers each part") {
  Tensor a = Tensor::randn({2, 2, 3, 3}, 21);
  Tensor b = Tensor::randn({2, 5, 3, 3}, 22);
  Tensor c = Tensor::randn({2, 1, 3, 3}, 23);
  Tensor cat = concat_channels<float>({&a, &b, &c});
  CHECK(cat.shape() == Shape{2, 8, 3, 3});
  Tensor sa = slice_channels(cat, 0, 2);
  Tensor sb = slice_channels(cat, 2, 5);
  Tensor sc = slice_channels(cat, 7, 1);
  CHECK(std::memcmp(sa.data(), a.data(), sizeof(float) * a.numel()) == 0);
  CHECK(std::memcmp(sb.data(), b.data(), sizeof(float) * b.numel()) == 0);
  CHECK(std::memcmp(sc.data(), c.data(), sizeof(float) * c.numel()) == 0);
  Tensor bad({1, 1, 4, 4});
  CHECK_THROWS_AS(concat_channels<float>({&a, &bad}), TensorError);
  CHECK_THROWS_AS(slice_channels(cat, 7, 2), TensorError);
}

TEST_CASE("gradient of mean(concat) routes back to every part") {
  using namespace testutil;
  DTensor a = DTensor::randn({1, 2, 3, 3}, 31);
  DTensor b = DTensor::randn({1, 3, 3, 3}, 32);
  const double err = gradcheck(
      [](std::vector<DVar>& v) { return ag::mean_all(ag::concat<double>({v[0], v[1]})); },
      {a, b});
  CHECK(err < 1e-6);
}

TEST_CASE("arithmetic gradients match finite differences") {
  using namespace testutil;
  DTensor a = DTensor::randn({2, 2, 3, 3}, 41);
  DTensor b = DTensor::randn({2, 2, 3, 3}, 42);
  DTensor s = DTensor::randn({1, 2, 1, 1}, 43);

  CHECK(gradcheck([](std::vector<DVar>& v) { return ag::mean_all(ag::mul(v[0], v[1])); },
                  {a, b}) < 1e-6);
  CHECK(gradcheck([](std::vector<DVar>& v) { return ag::mean_all(ag::sub(v[0], v[1])); },
                  {a, b}) < 1e-6);
  // broadcast second operand
  CHECK(gradcheck([](std::vector<DVar>& v) { return ag::mean_all(ag::mul(v[0], v[1])); },
                  {a, s}) < 1e-6);
  CHECK(gradcheck([](std::vector<DVar>& v) { return ag::mean_all(ag::add(v[0], v[1])); },
                  {a, s}) < 1e-6);
}

TEST_CASE("repeated evaluation is bitwise identical") {
  Tensor x = Tensor::randn({1, 4, 8, 8}, 9);
  Tensor y = Tensor::randn({1, 4, 8, 8}, 10);
  Tensor r1 = elementwise(EwOp::kMul, x, y);
  Tensor r2 = elementwise(EwOp::kMul, x, y);
  CHECK(std::memcmp(r1.data(), r2.data(), sizeof(float) * r1.numel()) == 0);
}
