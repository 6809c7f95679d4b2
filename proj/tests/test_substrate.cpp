#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "graspvq/gradcheck.hpp"
#include "graspvq/ops.hpp"
#include "graspvq/rng.hpp"
#include "operator_checks.hpp"

using namespace graspvq;
using V = Var<double>;
using Td = Tensor<double>;

namespace {

Td random_tensor(Shape shape, Rng& rng) {
  Td t(std::move(shape));
  for (auto& v : t.values()) v = rng.uniform(-1.0, 1.0);
  return t;
}

V param(Shape shape, Rng& rng) { return V::leaf(random_tensor(std::move(shape), rng), true); }

// Projects an arbitrary tensor output onto a scalar with fixed random weights
// so every output element influences the loss differently.
V project(const V& y, std::uint64_t seed) {
  Rng rng(seed);
  return ops::sum(ops::mul(y, V::leaf(random_tensor(y.shape(), rng))));
}

}  // namespace

TEST_CASE("relu forward") {
  auto x = V::leaf(Td({3}, {-1.0, 0.0, 2.0}));
  CHECK(ops::relu(x).value().values()[0] == 0.0);
  CHECK(ops::relu(x).value().values()[1] == 0.0);
  CHECK(ops::relu(x).value().values()[2] == 2.0);
}

TEST_CASE("conv2d with a 1x1 identity kernel returns the image") {
  Rng rng(1);
  auto x = V::leaf(random_tensor({1, 1, 5, 7}, rng));
  auto w = V::leaf(Td({1, 1, 1, 1}, {1.0}));
  auto y = ops::conv2d(x, w, V(), 1, 0);
  CHECK(y.value() == x.value());

  // Multi-channel identity via an identity channel mixing matrix.
  auto x3 = V::leaf(random_tensor({2, 3, 4, 4}, rng));
  Td eye({3, 3, 1, 1});
  for (int i = 0; i < 3; ++i) eye[i * 3 + i] = 1.0;
  CHECK(ops::conv2d(x3, V::leaf(eye), V(), 1, 0).value() == x3.value());
}

TEST_CASE("conv2d 3x3 ones kernel over 3x3 ones image gives 9 at the centre") {
  auto x = V::leaf(Td({1, 1, 3, 3}, 1.0));
  auto w = V::leaf(Td({1, 1, 3, 3}, 1.0));
  auto y = ops::conv2d(x, w, V(), 1, 1);
  REQUIRE(y.shape() == Shape{1, 1, 3, 3});
  CHECK(y.value()[4] == 9.0);
  CHECK(y.value()[0] == 4.0);  // corner sees a 2x2 window
}

TEST_CASE("backward of 0.5 x^2 at 3 is 3") {
  auto x = V::leaf(Td({1}, {3.0}), true);
  backward(ops::scale(ops::mul(x, x), 0.5));
  CHECK(x.grad()[0] == doctest::Approx(3.0));
}

TEST_CASE("stop-gradient branch contributes nothing") {
  auto x = V::leaf(Td({3}, {0.5, -2.0, 4.0}), true);
  auto sg = ops::stop_gradient(x);
  CHECK(sg.value() == x.value());
  CHECK(std::string(sg.kind()) == "stop-gradient");
  backward(ops::sum(ops::mul(sg, x)));
  CHECK(x.grad() == x.value());
}

TEST_CASE("backward rejects non-scalar losses") {
  auto x = V::leaf(Td({2}, {1.0, 2.0}), true);
  CHECK_THROWS_AS(backward(ops::relu(x)), ShapeError);
}

TEST_CASE("unreachable parameters receive zero gradient") {
  auto x = V::leaf(Td({2}, {1.0, 2.0}), true);
  auto unused = V::leaf(Td({2}, {3.0, 4.0}), true);
  backward(ops::sum(x));
  CHECK(unused.grad() == Td({2}, 0.0));
  CHECK(x.grad() == Td({2}, 1.0));
}

TEST_CASE("shape mismatches name the offending dimension") {
  auto a = V::leaf(Td({2, 3}));
  auto b = V::leaf(Td({2, 4}));
  try {
    ops::add(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("dimension 1") != std::string::npos);
  }
  auto x = V::leaf(Td({1, 3, 8, 8}));
  auto w = V::leaf(Td({4, 2, 3, 3}));
  try {
    ops::conv2d(x, w, V(), 1, 1);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("input channels") != std::string::npos);
  }
  CHECK_THROWS_AS(Td({2, 2}, std::vector<double>{1.0}), ShapeError);
}

TEST_CASE("finite_difference_check arithmetic") {
  auto square = [](const V& x) { return ops::sum(ops::mul(x, x)); };
  CHECK(finite_difference_check(square, Td({2}, {1.0, 2.0}), 1e-5) < 1e-6);

  auto constant = [](const V&) { return V::leaf(Td({1}, {4.0})); };
  CHECK(finite_difference_check(constant, Td({3}, 0.5), 1e-5) == 0.0);

  int calls = 0;
  auto flaky = [&calls](const V& x) {
    return ops::scale(ops::sum(x), static_cast<double>(++calls));
  };
  CHECK_THROWS_AS(finite_difference_check(flaky, Td({2}, 1.0), 1e-5), NonDeterministicFunction);
  CHECK_THROWS_AS(finite_difference_check(square, Td({2}, 1.0), 0.0), std::invalid_argument);
}

TEST_CASE("conv2d kernel gradient on a 4x4 input matches central differences") {
  Rng rng(7);
  auto x = V::leaf(random_tensor({1, 2, 4, 4}, rng));
  auto w = param({3, 2, 3, 3}, rng);
  auto f = [&] { return project(ops::conv2d(x, w, V(), 1, 1), 11); };
  CHECK(finite_difference_check(f, w, 1e-4).max_relative_error < 1e-3);
}

TEST_CASE("every operator matches finite differences over 20 random trials") {
  const double worst = oracle::worst_operator_error(20);
  MESSAGE("worst relative error: " << worst);
  CHECK(worst < 1e-3);
}

TEST_CASE("conv2d_transpose is the adjoint of conv2d") {
  Rng rng(3);
  auto w = V::leaf(random_tensor({4, 3, 3, 3}, rng));  // conv: 3 -> 4 channels
  for (int stride : {1, 2}) {
    auto x = V::leaf(random_tensor({1, 3, 7, 7}, rng));
    auto y = ops::conv2d(x, w, V(), stride, 1);
    auto u = V::leaf(random_tensor(y.shape(), rng));
    auto xt = ops::conv2d_transpose(u, w, V(), stride, 1);
    REQUIRE(xt.shape() == x.shape());
    double lhs = 0.0, rhs = 0.0;
    for (std::int64_t i = 0; i < y.value().numel(); ++i) lhs += y.value()[i] * u.value()[i];
    for (std::int64_t i = 0; i < x.value().numel(); ++i) rhs += x.value()[i] * xt.value()[i];
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
  }
}

TEST_CASE("straight-through copies the downstream gradient to the continuous input") {
  Rng rng(5);
  auto ze = param({1, 2, 3, 3}, rng);
  auto zq = param({1, 2, 3, 3}, rng);
  auto out = ops::straight_through(ze, zq);
  CHECK(out.value() == zq.value());
  backward(ops::sum(out));
  CHECK(ze.grad() == Td(ze.shape(), 1.0));
  CHECK(!zq.has_grad());
}

TEST_CASE("forward passes are bit-deterministic") {
  Rng rng(9);
  auto x = V::leaf(random_tensor({2, 3, 8, 8}, rng));
  auto w = V::leaf(random_tensor({4, 3, 3, 3}, rng));
  auto a = ops::relu(ops::conv2d(x, w, V(), 2, 1));
  auto b = ops::relu(ops::conv2d(x, w, V(), 2, 1));
  CHECK(std::memcmp(a.value().data(), b.value().data(), sizeof(double) * a.value().numel()) == 0);
}

TEST_CASE("forward on finite inputs stays finite") {
  Rng rng(12);
  auto x = Var<float>::leaf(Tensor<float>({1, 2, 6, 6}, 1e3f));
  auto w = Var<float>::leaf(Tensor<float>({2, 2, 3, 3}, 0.5f));
  auto y = ops::sigmoid(ops::conv2d(x, w, Var<float>(), 1, 1));
  CHECK(y.value().all_finite());
}
