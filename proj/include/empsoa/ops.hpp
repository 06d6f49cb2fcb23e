#pragma once

// Differentiable primitives. Each op checks shapes, computes its value with
// the kernels in kernels.hpp and, when recording, registers its gradient rule
// on the active tape. There is no implicit broadcasting apart from add_bias.

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "empsoa/tensor.hpp"

namespace empsoa {

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
// x[..×n] + b, with b holding n values.
Tensor add_bias(const Tensor& x, const Tensor& b);
// alpha·x + beta, elementwise.
Tensor affine(const Tensor& x, double alpha, double beta);
inline Tensor scale(const Tensor& x, double alpha) { return affine(x, alpha, 0.0); }
inline Tensor one_minus(const Tensor& x) { return affine(x, -1.0, 1.0); }

Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor log(const Tensor& x);

// Softmax along `axis` (negative counts from the back), max-subtracted.
Tensor softmax(const Tensor& x, int axis = -1);
// Softmax over the last axis restricted to entries with allowed != 0.
// `allowed` has x.size() entries; fully masked rows produce zeros.
Tensor masked_softmax(const Tensor& x, std::span<const std::uint8_t> allowed);

Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& x, int axis, std::size_t begin, std::size_t end);
Tensor reshape(const Tensor& x, Shape shape);

// Rows of a matrix picked by index; repeats allowed, gradients scatter-add.
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> indices);
// [1×n] → [m×n].
Tensor repeat_rows(const Tensor& x, std::size_t m);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// Column means of a matrix, [m×n] → [1×n].
Tensor mean_rows(const Tensor& x);

// Row-wise layer normalization of a matrix with learned gain and bias.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-6);

// Inverted dropout; identity when rate == 0.
Tensor dropout(const Tensor& x, double rate, std::mt19937_64& rng);

// Mean over rows t of −w_t·log(max(probs[t, target_t], eps)).
// `probs` is [T×C]; `weights` may be empty (all ones).
Tensor cross_entropy(const Tensor& probs, std::span<const std::size_t> targets, double eps = 1e-12,
                     std::span<const double> weights = {});

}  // namespace empsoa
