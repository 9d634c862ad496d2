#include <doctest.h>

#include "srvp/tensor.hpp"

#include <limits>

using namespace srvp;

TEST_CASE("tensor size matches product of shape") {
  Tensor t({2, 3, 4});
  CHECK(t.size() == 24);
  CHECK(t.rank() == 3);
  CHECK(t.dim(2) == 4);
  CHECK(shape_size({5, 1, 7}) == 35);
  CHECK(shape_str({2, 3}) == "(2,3)");
}

TEST_CASE("tensor rejects zero-length axes, empty shapes and data mismatches") {
  CHECK_THROWS_AS(Tensor(Shape{}), DimensionError);
  CHECK_THROWS_AS(Tensor(Shape{2, 0}), DimensionError);
  CHECK_THROWS_AS(Tensor(Shape{2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
  CHECK_THROWS_AS(Tensor::matrix({{1, 2}, {3}}), DimensionError);
  CHECK_THROWS_AS(Tensor({2}).dim(1), DimensionError);
}

TEST_CASE("matrix literal is row-major") {
  const Tensor m = Tensor::matrix({{1, 2, 3}, {4, 5, 6}});
  CHECK(m.shape() == Shape{2, 3});
  CHECK(m.at(1, 0) == 4);
  CHECK(m[2] == 3);
}

TEST_CASE("reshape keeps data and rejects count changes") {
  const Tensor m = Tensor::matrix({{1, 2}, {3, 4}});
  const Tensor r = m.reshaped({4});
  CHECK(r.data()[3] == 4);
  CHECK_THROWS_AS(m.reshaped({3}), DimensionError);
}

TEST_CASE("item requires a single element") {
  CHECK(Tensor::scalar(2.5).item() == 2.5);
  CHECK_THROWS_AS(Tensor({2}).item(), DimensionError);
}

TEST_CASE("finiteness detection") {
  Tensor t({3}, 1.0);
  CHECK(t.all_finite());
  t[1] = std::numeric_limits<double>::quiet_NaN();
  CHECK_FALSE(t.all_finite());
  CHECK_THROWS_AS(t.check_finite("probe"), NumericalError);
  t[1] = -std::numeric_limits<double>::infinity();
  CHECK_FALSE(t.all_finite());
  t[1] = std::numeric_limits<double>::max();
  CHECK(t.all_finite());
  t[1] = std::numeric_limits<double>::denorm_min();
  CHECK(t.all_finite());
}

TEST_CASE("max_abs_diff") {
  CHECK(max_abs_diff(Tensor::vector({1, 2}), Tensor::vector({1.5, 0})) == 2.0);
  CHECK_THROWS_AS(max_abs_diff(Tensor({2}), Tensor({3})), DimensionError);
}
