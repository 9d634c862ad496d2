#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "srvp/config.hpp"
#include "srvp/metrics.hpp"
#include "srvp/training.hpp"
#include "test_util.hpp"

using namespace srvp;
using srvp::test::random_tensor;

namespace {

RunConfig tiny_config() {
  RunConfig c;
  c.model.layers = 1;
  c.model.hidden = c.model.reinforced = 2;
  c.model.height = c.model.width = 8;
  c.model.input_len = 2;
  c.model.pred_len = 2;
  c.train.epochs = 3;
  c.train.batch = 3;
  c.train.lr_max = 1e-2;
  c.train.seed = 11;
  return c;
}

Dataset tiny_data(const RunConfig& c, std::size_t n, std::uint64_t seed) {
  GenerateOptions o;
  o.num_sequences = n;
  o.frames = c.model.input_len + c.model.pred_len;
  o.height = c.model.height;
  o.width = c.model.width;
  o.seed = seed;
  return generate(o);
}

std::vector<std::uint8_t> slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

}  // namespace

TEST_CASE("bce examples") {
  CHECK(bce_loss(constant(Tensor({2, 3}, 0.5)), constant(random_tensor({2, 3}, 1, 0, 1)))
            .value()
            .item() == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  const double expect = -(0.9 * std::log(0.9) + 0.1 * std::log(0.1));
  CHECK(std::abs(expect - 0.325083) < 1e-6);
  CHECK(std::abs(bce_loss(constant(Tensor({4}, 0.9)), constant(Tensor({4}, 0.9))).value().item() -
                 expect) <= 1e-15);

  const Var p = leaf(Tensor({5}, 0.5));
  backward(bce_loss(p, constant(Tensor({5}, 1.0))));
  for (double g : p.grad().data()) CHECK(g * 5 == doctest::Approx(-2.0).epsilon(1e-15));

  CHECK_THROWS_AS(bce_loss(constant(Tensor({2}, 0.5)), constant(Tensor({3}))), DimensionError);
}

TEST_CASE("bce clamps saturated predictions") {
  const Var p = leaf(Tensor::vector({0.0, 1.0, 0.3}));
  const Var loss = bce_loss(p, constant(Tensor::vector({1.0, 0.0, 0.5})));
  CHECK(std::isfinite(loss.value().item()));
  CHECK(loss.value().item() == doctest::Approx(
      (-std::log(1e-7) - std::log(1.0 - (1.0 - 1e-7)) - 0.5 * std::log(0.3) - 0.5 * std::log(0.7)) / 3).epsilon(1e-12));
  backward(loss);
  CHECK(p.grad()[0] == 0.0);
  CHECK(p.grad()[1] == 0.0);
  CHECK(p.grad()[2] != 0.0);
}

TEST_CASE("bce passes gradcheck in both arguments") {
  const auto r = gradcheck([](const std::vector<Var>& v) { return bce_loss(v[0], v[1]); },
                           {random_tensor({3, 4}, 1, 0.05, 0.95), random_tensor({3, 4}, 2, 0, 1)});
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("rmsprop single steps") {
  Tensor theta = Tensor::vector({0.0, 5.0});
  Tensor v = Tensor::vector({0.0, 0.5});
  rmsprop_update(theta, Tensor::vector({1.0, 0.0}), v, 0.1, 0.99, 1e-8);
  CHECK(v[0] == doctest::Approx(0.01).epsilon(1e-15));
  CHECK(theta[0] == doctest::Approx(-0.1 / (0.1 + 1e-8)).epsilon(1e-15));
  // Zero gradient: unchanged parameter, decayed accumulator, no cross-talk.
  CHECK(theta[1] == 5.0);
  CHECK(v[1] == doctest::Approx(0.99 * 0.5).epsilon(1e-15));
  CHECK(v[0] >= 0.0);
  CHECK_THROWS_AS(rmsprop_update(theta, Tensor({3}), v, 0.1, 0.99, 1e-8), DimensionError);

  Tensor a = random_tensor({6}, 1), b = a, va({6}), vb({6});
  const Tensor g = random_tensor({6}, 2);
  rmsprop_update(a, g, va, 1e-3, 0.99, 1e-8);
  rmsprop_update(b, g, vb, 1e-3, 0.99, 1e-8);
  CHECK(a == b);
  CHECK(va == vb);
}

TEST_CASE("rmsprop_step skips buffers") {
  ParamStore store;
  const NormLayer bn = make_batchnorm2d(store, "bn", 2);
  OptimizerState state = make_optimizer_state(store);
  CHECK(state.sq_avg[bn.scale].shape() == Shape{2});
  CHECK(state.sq_avg[*bn.running_mean].empty());
  std::vector<Tensor> grads(store.size(), Tensor({2}, 1.0));
  rmsprop_step(store, grads, state, 0.1);
  CHECK(store[bn.scale].value[0] < 1.0);
  CHECK(store[*bn.running_mean].value[0] == 0.0);
}

TEST_CASE("cosine schedule") {
  CHECK(cosine_lr(0, 10, 1e-3, 1e-6) == 1e-3);
  CHECK(cosine_lr(10, 10, 1e-3, 1e-6) == doctest::Approx(1e-6).epsilon(1e-12));
  CHECK(cosine_lr(5, 10, 1e-3, 1e-6) == doctest::Approx((1e-3 + 1e-6) / 2).epsilon(1e-12));
  CHECK(cosine_lr(3, 10, 1e-4) == doctest::Approx(1e-6 + 0.5 * (1e-4 - 1e-6) * (1 + std::cos(0.3 * M_PI))).epsilon(1e-14));
  CHECK_THROWS_AS(cosine_lr(11, 10, 1e-3), std::out_of_range);
  CHECK_THROWS_AS(cosine_lr(0, 0, 1e-3), std::out_of_range);
}

TEST_CASE("global norm clipping") {
  std::vector<Tensor> g{Tensor::vector({3, 0}), Tensor::vector({4})};
  CHECK(clip_global_norm(g, 1.0) == 5.0);
  CHECK(g[0][0] == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(g[1][0] == doctest::Approx(0.8).epsilon(1e-15));
  for (std::uint64_t s = 0; s < 10; ++s) {
    std::vector<Tensor> r{random_tensor({7}, s, -3, 3), random_tensor({2, 2}, s + 50, -3, 3), Tensor()};
    clip_global_norm(r, 1.0);
    double n = 0.0;
    for (const auto& t : r)
      for (double v : t.data()) n += v * v;
    CHECK(std::sqrt(n) <= 1.0 + 1e-9);
  }
  std::vector<Tensor> small{Tensor::vector({0.1, 0.2})};
  clip_global_norm(small, 1.0);
  CHECK(small[0] == Tensor::vector({0.1, 0.2}));
}

TEST_CASE("checkpoint encoding round-trips byte-exactly") {
  Checkpoint c;
  c.config_text = to_config_text(tiny_config());
  c.epoch = 7;
  c.rng_state = "1 2 3";
  c.best_val_mse = 123.456;
  c.params = {{"a", random_tensor({2, 3}, 1)}, {"b", random_tensor({4}, 2)}};
  c.optimizer = {{"a", random_tensor({2, 3}, 3)}};
  const auto bytes = encode_checkpoint(c);
  CHECK(std::string(bytes.begin(), bytes.begin() + 8) == "SRVPCK1\n");
  const Checkpoint back = decode_checkpoint(bytes);
  CHECK(back == c);
  CHECK(encode_checkpoint(back) == bytes);

  const auto p = std::filesystem::temp_directory_path() / "srvp_test.ckpt";
  save_checkpoint(c, p);
  const auto p2 = std::filesystem::temp_directory_path() / "srvp_test2.ckpt";
  save_checkpoint(load_checkpoint(p), p2);
  CHECK(slurp(p) == slurp(p2));
  std::filesystem::remove(p);
  std::filesystem::remove(p2);

  auto bad = bytes;
  bad[1] = 'X';
  CHECK_THROWS_WITH_AS(decode_checkpoint(bad), doctest::Contains("bad magic"), FormatError);
  CHECK_THROWS_WITH_AS(decode_checkpoint(std::span(bytes).first(bytes.size() - 3)),
                       doctest::Contains("truncated"), FormatError);
  auto longer = bytes;
  longer.push_back(1);
  CHECK_THROWS_AS(decode_checkpoint(longer), FormatError);
}

TEST_CASE("restoring into a mismatched store is a shape error") {
  ParamStore store;
  store.add("w", {2, 2}, InitKind::Zeros);
  CHECK_THROWS_AS(restore_params(store, {{"w", Tensor({3, 2})}}), DimensionError);
  CHECK_THROWS_AS(restore_params(store, {{"v", Tensor({2, 2})}}), DimensionError);
  restore_params(store, {{"w", Tensor({2, 2}, 3.0)}});
  CHECK(store[0].value == Tensor({2, 2}, 3.0));

  RunConfig small = tiny_config(), big = tiny_config();
  big.model.hidden = big.model.reinforced = 3;
  SrvpModel a(small.model, 1), b(big.model, 1);
  Trainer ta(a, small);
  Trainer tb(b, big);
  CHECK_THROWS_AS(tb.restore(ta.checkpoint()), DimensionError);
  CHECK_THROWS_AS(Trainer(a, big), std::invalid_argument);
}

TEST_CASE("training log csv") {
  const std::string csv = training_log_csv({{1, 0.5, 0.25, 100.0}, {2, 0.125, 0.2, 90.5}});
  CHECK(csv == "epoch,lr,train_loss,val_mse\n1,0.5,0.25,100\n2,0.125,0.20000000000000001,90.5\n");
}

TEST_CASE("sequence step and evaluation") {
  const RunConfig c = tiny_config();
  const SrvpModel model(c.model, 3);
  const Tensor x = random_tensor({2, 1, 8, 8}, 1, 0, 1), y = random_tensor({2, 1, 8, 8}, 2, 0, 1);
  const StepResult r = sequence_step(model, x, y, false);
  CHECK(r.grads.size() == model.params().size());
  const double expect = bce_loss(constant(predict(model, x, 2)), constant(y)).value().item();
  // Training mode differs from eval mode only through batchnorm statistics.
  CHECK(std::isfinite(r.loss));
  CHECK(std::abs(r.loss - expect) < 0.5);
  CHECK(r.stats.size() == 2);

  const Dataset ds = tiny_data(c, 3, 4);
  double total = 0.0;
  for (std::size_t i = 0; i < 3; ++i)
    total += mse(predict(model, ds.frames_tensor(i, 0, 2), 2), ds.frames_tensor(i, 2, 2));
  CHECK(evaluate_mse(model, ds) == doctest::Approx(total / 3).epsilon(1e-14));
}

TEST_CASE("fit is deterministic and lowers the training loss") {
  const RunConfig c = tiny_config();
  const Dataset train = tiny_data(c, 9, 1), val = tiny_data(c, 3, 2);
  SrvpModel m1(c.model, 5), m2(c.model, 5);
  const FitResult r1 = fit(m1, train, val, c);
  const FitResult r2 = fit(m2, train, val, c);
  REQUIRE(r1.log.size() == 3);
  CHECK(training_log_csv(r1.log) == training_log_csv(r2.log));
  CHECK(encode_checkpoint(r1.last) == encode_checkpoint(r2.last));
  for (const auto& e : r1.log) {
    CHECK(std::isfinite(e.train_loss));
    CHECK(std::isfinite(e.val_mse));
  }
  CHECK(r1.log.back().train_loss < r1.log.front().train_loss);
  CHECK(r1.log[0].lr == c.train.lr_max);
  CHECK(r1.last.epoch == 3);
  double best = 1e300;
  for (const auto& e : r1.log) best = std::min(best, e.val_mse);
  CHECK(r1.best.best_val_mse == best);
}

TEST_CASE("thread count does not change results") {
  RunConfig c = tiny_config();
  c.train.epochs = 1;
  const Dataset train = tiny_data(c, 6, 1), val = tiny_data(c, 2, 2);
  SrvpModel m1(c.model, 5), m3(c.model, 5);
  const FitResult r1 = fit(m1, train, val, c);
  c.train.threads = 3;
  const FitResult r3 = fit(m3, train, val, c);
  CHECK(r1.log == r3.log);
  CHECK(r1.last.params == r3.last.params);
}

TEST_CASE("two epochs equal one epoch plus a resumed epoch") {
  RunConfig c = tiny_config();
  c.train.epochs = 2;
  const Dataset train = tiny_data(c, 7, 1), val = tiny_data(c, 2, 2);
  SrvpModel straight(c.model, 8);
  const FitResult full = fit(straight, train, val, c);

  SrvpModel first(c.model, 8);
  Trainer t1(first, c);
  t1.run_epoch(train, val);
  const auto bytes = encode_checkpoint(t1.checkpoint());

  SrvpModel resumed(c.model, 99);  // different init, overwritten by the checkpoint
  Trainer t2(resumed, c);
  t2.restore(decode_checkpoint(bytes));
  CHECK(t2.epoch() == 1);
  const EpochLog second = t2.run_epoch(train, val);
  CHECK(t2.finished());
  CHECK(second == full.log[1]);
  CHECK(encode_checkpoint(t2.checkpoint()) == encode_checkpoint(full.last));
  CHECK_THROWS_AS(t2.run_epoch(train, val), std::logic_error);
}
