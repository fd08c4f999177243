#pragma once

#include <vector>

#include "mmfx/tensor.hpp"

namespace mmfx {

// Differentiable primitives. Each op computes its value eagerly and, when any
// input lives on a tape, records the matching backward rule. Inputs that are
// plain values (no tape handle) are treated as constants and receive no
// gradient. Mixing nodes of two different tapes is an error.

// out[i,j] = sum_t A[i,t] * W[t,j] + b[j]. A is [m x k], W is [k x n],
// b (optional) is [n].
Tensor matmul_bias(const Tensor& a, const Tensor& w, const Tensor& b);
Tensor matmul(const Tensor& a, const Tensor& w);

Tensor transpose(const Tensor& x);  // [m x n] -> [n x m]

Tensor scale(const Tensor& x, double c);
Tensor add(const Tensor& x, const Tensor& y);       // same shape
Tensor mul_elem(const Tensor& x, const Tensor& y);  // same shape
Tensor relu(const Tensor& x);                       // subgradient at 0 is 0

// Row-wise softmax with max subtraction. Rows sum to 1.
Tensor softmax_rows(const Tensor& x);

// Per-row standardization (population variance) then affine map:
// out[i,:] = gamma .* (x[i,:] - mu_i) / sqrt(var_i + eps) + beta.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

// Cross-correlation. input [c_in x h x w], kernels [c_out x c_in x kh x kw].
// Output spatial size (h + 2*padding - kh) / stride + 1 must divide exactly.
Tensor conv2d(const Tensor& input, const Tensor& kernels, int stride, int padding);

Tensor bias_channels(const Tensor& x, const Tensor& b);  // x [c x h x w], b [c]

Tensor global_avg_pool(const Tensor& x);  // [c x h x w] -> [c]
Tensor mean_rows(const Tensor& x);        // [m x d] -> [d]

// Same data, new shape (numel preserved).
Tensor reshape(const Tensor& x, std::vector<int> new_shape);

// Concatenation along axis 0. Rank-1 vectors concatenate end to end; rank-2
// operands must agree on the column count.
Tensor concat(const Tensor& a, const Tensor& b);

// Stacks n row vectors (each [d] or [1 x d]) into an [n x d] matrix.
Tensor stack_rows(const std::vector<Tensor>& rows);

// Picks one element as a scalar [1] tensor, e.g. a class logit.
Tensor select(const Tensor& x, int flat_index);

Tensor sum_all(const Tensor& x);  // scalar [1]

// Mean negative log-likelihood of the labels under row-wise softmax of the
// logits. Numerically stable (log-sum-exp).
Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels);

}  // namespace mmfx
