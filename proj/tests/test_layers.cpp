#include <doctest.h>

#include <cmath>

#include "srvp/layers.hpp"
#include "test_util.hpp"

using namespace srvp;
using srvp::test::naive_conv;
using srvp::test::naive_matmul;
using srvp::test::random_tensor;

namespace {

Var project(const Var& y, std::uint64_t seed) {
  return sum(hadamard(y, constant(random_tensor(y.shape(), seed))));
}

}  // namespace

TEST_CASE("1x1 unit conv is the identity") {
  const Tensor x = random_tensor({1, 4, 5}, 1);
  const Var y = conv2d(constant(x), constant(Tensor({1, 1, 1, 1}, 1.0)), constant(Tensor({1})));
  CHECK(y.value() == x);
}

TEST_CASE("3x3 all-ones kernel on a constant image") {
  const double v = 0.7;
  const Tensor y =
      conv2d(constant(Tensor({1, 5, 5}, v)), constant(Tensor({1, 1, 3, 3}, 1.0)), Var()).value();
  CHECK(y[2 * 5 + 2] == doctest::Approx(9 * v).epsilon(1e-15));
  CHECK(y[0] == doctest::Approx(4 * v).epsilon(1e-15));
  CHECK(y[24] == doctest::Approx(4 * v).epsilon(1e-15));
  CHECK(y[2] == doctest::Approx(6 * v).epsilon(1e-15));
}

TEST_CASE("conv2d equals the direct loop oracle") {
  for (std::size_t k : {1, 3, 5}) {
    const Tensor x = random_tensor({2, 5, 5}, 10 + k);
    const Tensor w = random_tensor({3, 2, k, k}, 20 + k);
    const Tensor b = random_tensor({3}, 30 + k);
    const Tensor y = conv2d(constant(x), constant(w), constant(b)).value();
    CHECK(max_abs_diff(y, naive_conv(x, w, &b)) <= 1e-12);
  }
  // Non-square spatial extent.
  const Tensor x = random_tensor({3, 4, 7}, 5);
  const Tensor w = random_tensor({2, 3, 3, 3}, 6);
  CHECK(max_abs_diff(conv2d(constant(x), constant(w), Var()).value(), naive_conv(x, w, nullptr)) <=
        1e-12);
}

TEST_CASE("batched conv2d matches per-item convolution") {
  const Tensor x = random_tensor({3, 2, 6, 6}, 7);
  const Tensor w = random_tensor({4, 2, 3, 3}, 8);
  const Tensor y = conv2d(constant(x), constant(w), Var()).value();
  CHECK(y.shape() == Shape{3, 4, 6, 6});
  for (std::size_t n = 0; n < 3; ++n) {
    const Tensor xn({2, 6, 6}, std::vector<double>(x.data().begin() + n * 72,
                                                   x.data().begin() + (n + 1) * 72));
    const Tensor yn = naive_conv(xn, w, nullptr);
    for (std::size_t i = 0; i < yn.size(); ++i) REQUIRE(std::abs(y[n * 144 + i] - yn[i]) <= 1e-12);
  }
}

TEST_CASE("conv2d is linear in its input") {
  const Tensor w = random_tensor({3, 2, 3, 3}, 1);
  const Tensor x = random_tensor({2, 6, 5}, 2), z = random_tensor({2, 6, 5}, 3);
  const double a = 1.7, b = -0.4;
  const Var lhs = conv2d(a * constant(x) + b * constant(z), constant(w), Var());
  const Var rhs = a * conv2d(constant(x), constant(w), Var()) + b * conv2d(constant(z), constant(w), Var());
  CHECK(max_abs_diff(lhs.value(), rhs.value()) <= 1e-9);
}

TEST_CASE("conv2d rejects mismatched shapes") {
  CHECK_THROWS_AS(conv2d(constant(Tensor({2, 4, 4})), constant(Tensor({1, 3, 3, 3})), Var()),
                  DimensionError);
  CHECK_THROWS_AS(conv2d(constant(Tensor({2, 4, 4})), constant(Tensor({1, 2, 2, 2})), Var()),
                  DimensionError);
  CHECK_THROWS_AS(
      conv2d(constant(Tensor({2, 4, 4})), constant(Tensor({1, 2, 3, 3})), constant(Tensor({2}))),
      DimensionError);
}

TEST_CASE("layernorm examples") {
  ParamStore store;
  const NormLayer ln = make_layernorm(store, "ln", {3, 4});
  param_init(store, 1);
  Binding params(store, false, false);
  const Tensor flat = normalize(constant(Tensor({3, 4}, 2.5)), ln, params).value();
  for (double v : flat.data()) CHECK(v == 0.0);

  const Tensor y = normalize(constant(random_tensor({2, 3, 4}, 4, -3, 5)), ln, params).value();
  for (std::size_t n = 0; n < 2; ++n) {
    double m = 0.0, var = 0.0;
    for (std::size_t i = 0; i < 12; ++i) m += y[n * 12 + i];
    m /= 12;
    for (std::size_t i = 0; i < 12; ++i) var += (y[n * 12 + i] - m) * (y[n * 12 + i] - m);
    var /= 12;
    CHECK(std::abs(m) <= 1e-6);
    CHECK(std::abs(var - 1.0) <= 1e-6 + 1e-5);  // eps in the denominator
  }
}

TEST_CASE("batchnorm training statistics and eval determinism") {
  ParamStore store;
  const NormLayer bn = make_batchnorm2d(store, "bn", 2);
  param_init(store, 1);
  const Tensor x = random_tensor({3, 2, 4, 4}, 5, 0, 2);

  Binding train(store, false, true);
  const Tensor y = normalize(constant(x), bn, train).value();
  REQUIRE(train.batch_stats().size() == 1);
  const BatchStats& st = train.batch_stats()[0];
  CHECK(st.count == 48);
  for (std::size_t c = 0; c < 2; ++c) {
    double m = 0.0, ym = 0.0;
    for (std::size_t n = 0; n < 3; ++n)
      for (std::size_t p = 0; p < 16; ++p) {
        m += x[(n * 2 + c) * 16 + p];
        ym += y[(n * 2 + c) * 16 + p];
      }
    CHECK(st.mean[c] == doctest::Approx(m / 48).epsilon(1e-12));
    CHECK(std::abs(ym / 48) <= 1e-9);
  }

  apply_batch_stats(store, train.batch_stats(), 0.1);
  const Tensor& rm = store[*bn.running_mean].value;
  const Tensor& rv = store[*bn.running_var].value;
  CHECK(rm[0] == doctest::Approx(0.1 * st.mean[0]).epsilon(1e-15));
  CHECK(rv[1] == doctest::Approx(0.9 + 0.1 * st.var[1] * 48.0 / 47.0).epsilon(1e-15));

  Binding eval(store, false, false);
  const Tensor e1 = normalize(constant(x), bn, eval).value();
  const Tensor e2 = normalize(constant(x), bn, eval).value();
  CHECK(e1 == e2);
  CHECK(eval.batch_stats().empty());
  // Eval mode applies the running statistics directly.
  CHECK(e1[0] == doctest::Approx((x[0] - rm[0]) / std::sqrt(rv[0] + 1e-5)).epsilon(1e-12));
}

TEST_CASE("batchnorm with a single zero-variance sample stays finite") {
  ParamStore store;
  const NormLayer bn = make_batchnorm2d(store, "bn", 1);
  param_init(store, 1);
  Binding train(store, true, true);
  const Var y = normalize(constant(Tensor({1, 1, 1, 1}, 3.0)), bn, train);
  CHECK(y.value().item() == 0.0);
}

TEST_CASE("channel_linear examples") {
  const Tensor x = random_tensor({3, 5}, 1);
  const Tensor eye = Tensor::matrix({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
  CHECK(channel_linear(constant(x), constant(eye), Var()).value() == x);
  const Tensor b = Tensor::vector({0.5, -2});
  const Tensor y = channel_linear(constant(x), constant(Tensor({2, 3})), constant(b)).value();
  for (std::size_t c = 0; c < 5; ++c) {
    CHECK(y.at(0, c) == 0.5);
    CHECK(y.at(1, c) == -2);
  }
  const Tensor w = random_tensor({4, 3}, 2);
  CHECK(max_abs_diff(channel_linear(constant(x), constant(w), Var()).value(), naive_matmul(w, x)) <=
        1e-12);
  CHECK_THROWS_AS(channel_linear(constant(x), constant(Tensor({2, 4})), Var()), DimensionError);
}

TEST_CASE("param_init is seeded, zero-biased and bounded") {
  auto build = [](std::uint64_t seed) {
    ParamStore store;
    make_conv2d(store, "conv", 4, 8, 3);
    make_channel_linear(store, "lin", 40, 25);
    param_init(store, seed);
    return store;
  };
  const ParamStore a = build(3), b = build(3), c = build(4);
  CHECK(a[0].value == b[0].value);
  CHECK_FALSE(a[0].value == c[0].value);
  for (double v : a[1].value.data()) CHECK(v == 0.0);

  const Param& w = a[2];
  REQUIRE(w.value.size() == 1000);
  const double bound = std::sqrt(6.0 / (40 + 25));
  double m = 0.0;
  for (double v : w.value.data()) {
    CHECK(std::abs(v) <= bound);
    m += v;
  }
  CHECK(std::abs(m / 1000) < 3 * bound / std::sqrt(1000.0));
  CHECK(a.trainable_count() == 4 * 8 * 9 + 8 + 1000 + 25);
}

TEST_CASE("store lookup and buffers") {
  ParamStore store;
  const NormLayer bn = make_batchnorm2d(store, "bn", 3);
  CHECK(store.find("bn.running_var") == bn.running_var);
  CHECK_FALSE(store.find("missing").has_value());
  CHECK_FALSE(store[*bn.running_mean].trainable);
  CHECK(store.trainable_count() == 6);
  CHECK(store.trainable_indices() == std::vector<std::size_t>{0, 1});
}

TEST_CASE("layer kernels pass gradcheck") {
  SUBCASE("conv2d") {
    const auto r = gradcheck(
        [](const std::vector<Var>& v) { return project(conv2d(v[0], v[1], v[2]), 1); },
        {random_tensor({2, 2, 5, 4}, 1), random_tensor({3, 2, 3, 3}, 2), random_tensor({3}, 3)});
    CHECK(r.max_rel_error < 1e-4);
  }
  SUBCASE("batchnorm training") {
    const Tensor rm({3}), rv({3}, 1.0);
    const auto r = gradcheck(
        [&](const std::vector<Var>& v) {
          return project(batchnorm2d(v[0], v[1], v[2], true, rm, rv, 1e-5), 2);
        },
        {random_tensor({2, 3, 4, 4}, 4), random_tensor({3}, 5), random_tensor({3}, 6)});
    CHECK(r.max_rel_error < 1e-4);
  }
  SUBCASE("batchnorm eval") {
    const Tensor rm = random_tensor({3}, 7), rv = random_tensor({3}, 8, 0.5, 2);
    const auto r = gradcheck(
        [&](const std::vector<Var>& v) {
          return project(batchnorm2d(v[0], v[1], v[2], false, rm, rv, 1e-5), 2);
        },
        {random_tensor({2, 3, 4, 4}, 4), random_tensor({3}, 5), random_tensor({3}, 6)});
    CHECK(r.max_rel_error < 1e-4);
  }
  SUBCASE("layernorm") {
    const auto r = gradcheck(
        [](const std::vector<Var>& v) { return project(layernorm(v[0], v[1], v[2], 1e-5), 3); },
        {random_tensor({3, 4, 5}, 9), random_tensor({4, 5}, 10), random_tensor({4, 5}, 11)});
    CHECK(r.max_rel_error < 1e-4);
  }
  SUBCASE("channel_linear") {
    const auto r = gradcheck(
        [](const std::vector<Var>& v) { return project(channel_linear(v[0], v[1], v[2]), 4); },
        {random_tensor({3, 6}, 12), random_tensor({5, 3}, 13), random_tensor({5}, 14)});
    CHECK(r.max_rel_error < 1e-4);
  }
}
