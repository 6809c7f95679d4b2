#pragma once

#include <algorithm>
#include <functional>

#include "graspvq/gradcheck.hpp"
#include "graspvq/ops.hpp"
#include "graspvq/rng.hpp"

// Central-difference check of every differentiable operator on random
// inputs; returns the worst relative error seen.
namespace oracle {

inline double worst_operator_error(int trials) {
  using namespace graspvq;
  using V = Var<double>;
  using Td = Tensor<double>;
  auto random_tensor = [](Shape shape, Rng& rng) {
    Td t(std::move(shape));
    for (auto& v : t.values()) v = rng.uniform(-1.0, 1.0);
    return t;
  };
  auto param = [&](Shape shape, Rng& rng) { return V::leaf(random_tensor(std::move(shape), rng), true); };
  // Fixed random weights so every output element influences the loss differently.
  auto project = [&](const V& y, std::uint64_t seed) {
    Rng rng(seed);
    return ops::sum(ops::mul(y, V::leaf(random_tensor(y.shape(), rng))));
  };
  auto check = [](const std::function<V()>& f, V wrt) {
    return finite_difference_check(f, wrt, 1e-6).max_relative_error;
  };

  double worst = 0.0;
  for (std::uint64_t trial = 0; trial < static_cast<std::uint64_t>(trials); ++trial) {
    Rng rng(100 + trial);
    auto a = param({2, 3, 5, 5}, rng);
    auto b = param({2, 3, 5, 5}, rng);
    const std::uint64_t seed = 1000 + trial;

    worst = std::max(worst, check([&] { return project(ops::add(a, b), seed); }, a));
    worst = std::max(worst, check([&] { return project(ops::sub(a, b), seed); }, b));
    worst = std::max(worst, check([&] { return project(ops::mul(a, b), seed); }, a));
    worst = std::max(worst, check([&] { return project(ops::scale(a, -1.7), seed); }, a));
    worst = std::max(worst, check([&] { return project(ops::relu(a), seed); }, a));
    worst = std::max(worst, check([&] { return project(ops::sigmoid(a), seed); }, a));
    worst = std::max(worst, check([&] { return ops::mean(ops::mul(a, a)); }, a));
    worst = std::max(worst, check([&] { return ops::mse_loss(a, b); }, a));
    worst = std::max(worst, check([&] { return ops::mse_loss(a, b); }, b));
    worst = std::max(worst, check([&] { return ops::sum_squared_error(a, b, 0.3); }, b));

    auto x2 = param({4, 6}, rng);
    auto lw = param({5, 6}, rng);
    auto lb = param({5}, rng);
    worst = std::max(worst, check([&] { return project(ops::linear(x2, lw, lb), seed); }, x2));
    worst = std::max(worst, check([&] { return project(ops::linear(x2, lw, lb), seed); }, lw));
    worst = std::max(worst, check([&] { return project(ops::linear(x2, lw, lb), seed); }, lb));

    auto cw = param({4, 3, 3, 3}, rng);
    auto cb = param({4}, rng);
    for (int stride : {1, 2}) {
      auto f = [&] { return project(ops::conv2d(a, cw, cb, stride, 1), seed); };
      worst = std::max({worst, check(f, a), check(f, cw), check(f, cb)});
    }
    auto pw = param({4, 3, 1, 1}, rng);
    auto fp = [&] { return project(ops::conv2d(a, pw, cb, 1, 0), seed); };
    worst = std::max({worst, check(fp, a), check(fp, pw)});

    auto tw = param({3, 2, 4, 4}, rng);
    auto tb = param({2}, rng);
    auto ft = [&] { return project(ops::conv2d_transpose(a, tw, tb, 2, 1), seed); };
    worst = std::max({worst, check(ft, a), check(ft, tw), check(ft, tb)});

    auto gx = param({2, 4, 3, 3}, rng);
    auto gamma = param({4}, rng);
    auto beta = param({4}, rng);
    auto fg = [&] { return project(ops::group_norm(gx, gamma, beta, 2), seed); };
    worst = std::max({worst, check(fg, gx), check(fg, gamma), check(fg, beta)});

    auto table = param({5, 3}, rng);
    std::vector<std::int32_t> idx;
    for (int i = 0; i < 2 * 2 * 2; ++i) idx.push_back(static_cast<std::int32_t>(rng.below(5)));
    worst = std::max(worst, check([&] { return project(ops::gather_rows(table, idx, 2, 2, 2), seed); },
                                  table));

    auto c1 = param({2, 1, 3, 3}, rng);
    auto c2 = param({2, 2, 3, 3}, rng);
    worst = std::max(worst, check([&] { return project(ops::concat_channels<double>({c1, c2}), seed); },
                                  c2));
  }
  return worst;
}

}  // namespace oracle
