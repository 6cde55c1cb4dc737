#pragma once

#include <span>
#include <vector>

#include "titlegen/tensor/tensor.hpp"

// Differentiable operations. Every op validates shapes up front, computes the
// forward value with the kernels, and registers a pull-back closure on the
// active tape when gradients are being tracked.

namespace titlegen::tensor {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
Tensor scalar_mul(const Tensor& a, double c);

// a[m x n] + v[n] broadcast over rows.
Tensor add_rowvec(const Tensor& a, const Tensor& v);
// a[m x n] scaled per row by c[m].
Tensor mul_colvec(const Tensor& a, const Tensor& c);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor relu(const Tensor& a);

Tensor sum(const Tensor& a);  // scalar

Tensor concat_rows(std::span<const Tensor> parts);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end);
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end);
Tensor reshape(const Tensor& a, Shape shape);

// [B x n] -> [B*times x n], row b*times+t = input row b.
Tensor repeat_rows_block(const Tensor& a, std::size_t times);

// Output row i = a row rows[i]; gradient scatters back additively (rows may
// repeat).
Tensor gather_rows(const Tensor& a, std::span<const std::size_t> rows);

// Rows of embeddings gathered by id; gradient scatters back additively.
Tensor embedding_lookup(const Tensor& embeddings, std::span<const int> ids);

// Stable softmax along `axis` (negative axes count from the back).
Tensor softmax(const Tensor& a, int axis);

// Normalizes the last dimension to zero mean / unit variance (eps inside the
// sqrt), then applies the affine gamma/beta.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);

// Mean over non-ignored positions of -log softmax(logits)[target].
// Positions whose target equals ignore_index contribute neither loss nor
// count. Throws DegenerateInputError when every position is ignored.
Tensor cross_entropy_nll(const Tensor& logits, std::span<const int> targets,
                         int ignore_index);

// Inverted dropout; identity when rate == 0. Draws one mask from rng.
Tensor dropout(const Tensor& a, double rate, Rng& rng);

// Non-differentiating helper shared by evaluation paths: per-position NLL sum
// and the count of non-ignored positions.
struct NllSum {
  double sum = 0.0;
  std::size_t count = 0;
};
NllSum cross_entropy_sum(const Tensor& logits, std::span<const int> targets,
                         int ignore_index);

}  // namespace titlegen::tensor
