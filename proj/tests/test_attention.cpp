#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "srvp/attention.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace srvp;
using namespace srvp::test;

namespace {

struct Block {
  ParamStore store;
  AttentionBlock block;
  Block(std::size_t channels, bool cross, std::uint64_t seed) {
    block = make_attention_block(store, "sa", channels, cross);
    param_init(store, seed);
    // Nonzero projection biases so the oracle sees them.
    for (std::size_t i = 0; i < store.size(); ++i)
      if (store[i].value.rank() == 1) store[i].value = random_tensor(store[i].value.shape(), seed + i);
  }
  Mat apply(const ChannelLinear& l, const Mat& x) const {
    return linear(store[l.weight].value, store[*l.bias].value, x);
  }
};

Var project(const Var& y, std::uint64_t seed) {
  return sum(hadamard(y, constant(random_tensor(y.shape(), seed))));
}

}  // namespace

TEST_CASE("temporal attention with a single reference returns that reference") {
  const Tensor ref = random_tensor({1, 12}, 1);
  const auto out = temporal_attention(constant(random_tensor({3, 12}, 2)), constant(ref), 3);
  for (double w : out.weights.value().data()) CHECK(w == 1.0);
  CHECK(out.output.shape() == Shape{3, 4});
  CHECK(max_abs_diff(out.output.value(), ref.reshaped({3, 4})) <= 1e-15);
}

TEST_CASE("temporal attention hand case L=1 N=2") {
  // ω = [3, 4] → normalized [0.6, 0.8] → /sqrt(4) → [0.3, 0.4].
  const Tensor target = Tensor::matrix({{1, 0, 0, 0}});
  const Tensor ref = Tensor::matrix({{3, 1, 0, 0}, {4, 0, 1, 0}});
  const double w2 = std::exp(0.1) / (1 + std::exp(0.1)), w1 = 1 - w2;
  const auto out = temporal_attention(constant(target), constant(ref), 2);
  const Tensor expect({2, 2}, {3 * w1 + 4 * w2, w1, w2, 0});
  CHECK(max_abs_diff(out.output.value(), expect) <= 1e-10);
  CHECK(out.weights.value()[0] == doctest::Approx(w1).epsilon(1e-14));
}

TEST_CASE("temporal attention matches the loop oracle in both logit orders") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Tensor target = random_tensor({2, 12}, seed), ref = random_tensor({3, 12}, seed + 10);
    for (bool norm_first : {true, false}) {
      const auto order =
          norm_first ? TemporalLogitOrder::NormThenScale : TemporalLogitOrder::ScaleThenNorm;
      const auto out = temporal_attention(constant(target), constant(ref), 4, order);
      const auto expect = temporal_oracle(to_mat(target), to_mat(ref), norm_first);
      CHECK(max_diff(out.output.value(), {expect}) <= 1e-10);
    }
  }
}

TEST_CASE("temporal attention is invariant to reference order") {
  const Tensor target = random_tensor({2, 8}, 1), ref = random_tensor({4, 8}, 2);
  const Tensor base = temporal_attention(constant(target), constant(ref), 2).output.value();
  std::vector<std::size_t> perm{0, 1, 2, 3};
  while (std::next_permutation(perm.begin(), perm.end())) {
    Tensor shuffled({4, 8});
    for (std::size_t n = 0; n < 4; ++n)
      for (std::size_t f = 0; f < 8; ++f) shuffled[n * 8 + f] = ref[perm[n] * 8 + f];
    const Tensor out = temporal_attention(constant(target), constant(shuffled), 2).output.value();
    REQUIRE(max_abs_diff(out, base) <= 1e-12);
  }
}

TEST_CASE("temporal weights are invariant to positive target scaling and row-stochastic") {
  const Tensor target = random_tensor({3, 8}, 4), ref = random_tensor({5, 8}, 5);
  const Tensor w = temporal_attention(constant(target), constant(ref), 2).weights.value();
  const Tensor w7 = temporal_attention(7.5 * constant(target), constant(ref), 2).weights.value();
  CHECK(max_abs_diff(w, w7) <= 1e-9);
  for (std::size_t l = 0; l < 3; ++l) {
    double s = 0.0;
    for (std::size_t n = 0; n < 5; ++n) s += w.at(l, n);
    CHECK(std::abs(s - 1.0) <= 1e-9);
  }
}

TEST_CASE("temporal attention rejects mismatched features") {
  CHECK_THROWS_AS(temporal_attention(constant(Tensor({2, 8})), constant(Tensor({3, 6})), 2),
                  DimensionError);
  CHECK_THROWS_AS(temporal_attention(constant(Tensor({2, 8})), constant(Tensor({3, 8})), 3),
                  DimensionError);
}

TEST_CASE("spatial self-attention with zero query/key projections averages V") {
  Block b(3, false, 1);
  b.store[b.block.spatial.q.weight].value = Tensor({3, 3});
  b.store[b.block.spatial.k.weight].value = Tensor({3, 3});
  b.store[*b.block.spatial.q.bias].value = Tensor({3});
  b.store[*b.block.spatial.k.bias].value = Tensor({3});
  b.store[b.block.spatial.v.weight].value = Tensor::matrix({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
  b.store[*b.block.spatial.v.bias].value = Tensor({3});
  Binding params(b.store, false, false);
  const Tensor states = random_tensor({2, 3, 5}, 2);
  const auto out = spatial_self_attention(constant(states), b.block.spatial, params);
  for (double w : out.weights.value().data()) CHECK(w == doctest::Approx(1.0 / 3).epsilon(1e-14));
  const Mat x = reduce_oracle(states);
  for (std::size_t p = 0; p < 5; ++p) {
    const double col_mean = (x[0][p] + x[1][p] + x[2][p]) / 3;
    for (std::size_t m = 0; m < 3; ++m) CHECK(std::abs(out.output.value()[m * 5 + p] - col_mean) <= 1e-12);
  }
}

TEST_CASE("spatial self-attention matches the small-matrix oracle") {
  for (std::size_t L : {1, 2, 3}) {
    Block b(2, false, 10 + L);
    Binding params(b.store, false, false);
    const Tensor states = random_tensor({L, 2, 3}, L);
    const auto out = spatial_self_attention(constant(states), b.block.spatial, params);
    CHECK(out.output.shape() == Shape{2, 3});
    const Mat x = reduce_oracle(states);
    const auto& s = b.block.spatial;
    CHECK(max_diff(reduce_layers(constant(states)).value(), x) <= 1e-12);
    const Mat expect = attend(b.apply(s.q, x), b.apply(s.k, x), b.apply(s.v, x));
    CHECK(max_diff(out.output.value(), expect) <= 1e-10);
  }
}

TEST_CASE("cross-attention fusion matches the small-matrix oracle") {
  Block b(2, true, 3);
  Binding params(b.store, false, false);
  const Tensor at = random_tensor({2, 2}, 1), as = random_tensor({2, 2}, 2);
  const Tensor f = cross_attention_fuse(constant(at), constant(as), *b.block.cross, params).value();
  CHECK(f.shape() == Shape{4, 2});
  const auto& pt = b.block.cross->temporal;
  const auto& ps = b.block.cross->spatial;
  const Mat mt = to_mat(at), ms = to_mat(as);
  Mat expect = attend(b.apply(pt.q, mt), b.apply(ps.k, ms), b.apply(ps.v, ms));
  const Mat second = attend(b.apply(ps.q, ms), b.apply(pt.k, mt), b.apply(pt.v, mt));
  expect.insert(expect.end(), second.begin(), second.end());
  CHECK(max_diff(f, expect) <= 1e-10);
  CHECK_THROWS_AS(cross_attention_fuse(constant(at), constant(Tensor({2, 3})), *b.block.cross, params),
                  DimensionError);
}

TEST_CASE("cross-attention with equal contexts and shared projections is symmetric") {
  Block b(3, true, 4);
  auto& c = *b.block.cross;
  for (auto [from, to] : {std::pair{c.temporal.q, c.spatial.q}, {c.temporal.k, c.spatial.k},
                          {c.temporal.v, c.spatial.v}}) {
    b.store[to.weight].value = b.store[from.weight].value;
    b.store[*to.bias].value = b.store[*from.bias].value;
  }
  Binding params(b.store, false, false);
  const Tensor a = random_tensor({3, 4}, 9);
  const Tensor f = cross_attention_fuse(constant(a), constant(a), c, params).value();
  for (std::size_t i = 0; i < 12; ++i) CHECK(f[i] == f[12 + i]);
}

TEST_CASE("fusion without cross projections concatenates") {
  Block b(2, false, 5);
  Binding params(b.store, false, false);
  const Tensor at = random_tensor({2, 3}, 1), as = random_tensor({2, 3}, 2);
  const Tensor f = fuse_contexts(constant(at), constant(as), b.block, params).value();
  CHECK(slice(constant(f), 0, 0, 2).value() == at);
  CHECK(slice(constant(f), 0, 2, 4).value() == as);
}

TEST_CASE("standard attention shapes for any layer count") {
  for (std::size_t L : {1, 2, 4}) {
    Block b(3, true, L);
    Binding params(b.store, false, false);
    const auto out = standard_attention(constant(random_tensor({L, 3, 6}, 1)),
                                        constant(random_tensor({4, 18}, 2)), b.block, params,
                                        TemporalLogitOrder::NormThenScale);
    CHECK(out.temporal.shape() == Shape{3, 6});
    CHECK(out.spatial.shape() == Shape{3, 6});
    CHECK(out.fused.shape() == Shape{6, 6});
  }
}

TEST_CASE("attention rows sum to one") {
  const auto out = scaled_dot_attention(constant(random_tensor({4, 6}, 1, -30, 30)),
                                        constant(random_tensor({4, 6}, 2, -30, 30)),
                                        constant(random_tensor({4, 6}, 3)));
  for (std::size_t i = 0; i < 4; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < 4; ++j) s += out.weights.value().at(i, j);
    CHECK(std::abs(s - 1.0) <= 1e-9);
  }
}

TEST_CASE("full standard attention passes gradcheck") {
  Block b(4, true, 7);
  const auto r = gradcheck(
      [&](const std::vector<Var>& v) {
        Binding params(b.store, false, true);
        return project(standard_attention(v[0], v[1], b.block, params,
                                          TemporalLogitOrder::NormThenScale)
                           .fused,
                       3);
      },
      {random_tensor({2, 4, 16}, 1), random_tensor({3, 64}, 2)});
  CHECK(r.max_rel_error < 1e-4);
}
