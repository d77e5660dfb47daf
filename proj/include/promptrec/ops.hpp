#pragma once

#include <optional>
#include <random>
#include <span>
#include <vector>

#include "promptrec/tensor.hpp"

namespace promptrec {

// Additive pre-softmax surrogate for -infinity.
inline constexpr double kMaskedLogit = -1e9;

// ---- linear algebra ----
Tensor matmul(const Tensor& a, const Tensor& b);     // [r x k] . [k x c]
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // [r x k] . [c x k]^T

// ---- elementwise ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor log_sigmoid(const Tensor& a);
// Multiplies by a constant 0/1 pattern; masked entries pass no gradient.
Tensor mask(const Tensor& a, std::span<const double> pattern);
// a[r x c] + bias broadcast over rows (bias holds c values).
Tensor add_bias(const Tensor& a, const Tensor& bias);

// ---- normalization ----
Tensor softmax_rows(const Tensor& a, const std::optional<Tensor>& additive_mask = std::nullopt);
Tensor log_softmax_rows(const Tensor& a);
Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias, double eps = 1e-8);
Tensor l2_normalize_rows(const Tensor& a);

// ---- indexing and layout ----
Tensor embedding_lookup(const Tensor& table, std::span<const int> ids);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t count);
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count);
Tensor reshape(const Tensor& a, Shape shape);
// Picks entries by flat row-major index into a rank-1 tensor.
Tensor take(const Tensor& a, std::span<const std::size_t> flat_indices);

// ---- reductions ----
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor row_sums(const Tensor& a);  // [r x c] -> [r x 1]

// Inverted dropout; rate 0 returns the input unchanged.
Tensor dropout(const Tensor& a, double rate, std::mt19937_64& rng);

}  // namespace promptrec
