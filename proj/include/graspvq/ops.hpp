#pragma once

#include <cstdint>
#include <vector>

#include "graspvq/autograd.hpp"

// Differentiable operators. Image tensors are laid out B x C x H x W.
namespace graspvq::ops {

template <typename T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> scale(const Var<T>& a, T factor);

template <typename T> Var<T> relu(const Var<T>& x);
template <typename T> Var<T> sigmoid(const Var<T>& x);

template <typename T> Var<T> sum(const Var<T>& x);
template <typename T> Var<T> mean(const Var<T>& x);
/// Mean over all elements of (a - b)^2.
template <typename T> Var<T> mse_loss(const Var<T>& a, const Var<T>& b);
/// factor * sum over all elements of (a - b)^2.
template <typename T> Var<T> sum_squared_error(const Var<T>& a, const Var<T>& b, T factor);

/// x: N x in, weight: out x in, bias: out (may be an empty Var).
template <typename T> Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias);

/// weight: O x C x k x k, bias: O (may be an empty Var).
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int stride, int padding);

/// Adjoint of conv2d with the same stride/padding. weight: C_in x O x k x k.
/// Output side is (H - 1) * stride - 2 * padding + k.
template <typename T>
Var<T> conv2d_transpose(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int stride,
                        int padding);

/// gamma, beta: C. C must be divisible by groups.
template <typename T>
Var<T> group_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, int groups,
                  T eps = T(1e-5));

/// Forwards x unchanged; no gradient reaches x through this node.
template <typename T> Var<T> stop_gradient(const Var<T>& x);

/// Value of quantized, gradient routed unchanged to continuous. The quantized
/// operand receives nothing through this node.
template <typename T> Var<T> straight_through(const Var<T>& continuous, const Var<T>& quantized);

/// Row lookup. table: K x D, indices over B x h x w positions (row-major),
/// result: B x D x h x w.
template <typename T>
Var<T> gather_rows(const Var<T>& table, const std::vector<std::int32_t>& indices, std::int64_t batch,
                   std::int64_t height, std::int64_t width);

/// Concatenation of 4-D tensors along the channel axis.
template <typename T> Var<T> concat_channels(const std::vector<Var<T>>& parts);

}  // namespace graspvq::ops
