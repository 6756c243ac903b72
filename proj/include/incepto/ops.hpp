#pragma once

#include <span>
#include <vector>

#include "incepto/rng.hpp"
#include "incepto/tensor.hpp"

// Differentiable tensor operations. Every op computes its value eagerly and,
// when a tape is active and an input requires grad, records a backward node.

namespace incepto::ops {

inline constexpr double kSeluAlpha = 1.6732632423543772;
inline constexpr double kSeluScale = 1.0507009873554805;

Tensor add(const Tensor& a, const Tensor& b);
/// x + b where b's shape equals the trailing dimensions of x.
Tensor add_broadcast(const Tensor& x, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// Mean over one axis; the axis is removed from the result.
Tensor mean_axis(const Tensor& x, std::size_t axis);

/// [m x k] * [k x n]
Tensor matmul(const Tensor& a, const Tensor& b);
/// Batched [B x m x k] * [B x k x n], or [B x m x k] * [B x n x k]^T.
Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b = false);
/// x[..., in] * w[in x out] (+ bias[out]). Pass an undefined bias for none.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias = {});

/// Same-padded 1D convolution. x is [C_in x T] or [N x C_in x T]; weights are
/// [C_out x C_in x K] with K odd; bias is [C_out].
Tensor conv1d(const Tensor& x, const Tensor& weights, const Tensor& bias);

Tensor selu(const Tensor& x);
/// Softmax over the last axis with max subtraction.
Tensor softmax(const Tensor& x);
/// Scaled dot-product attention softmax(q k^T * scale) v for q, k, v of shape
/// [B x L x d]. Only the [B x L x L] probabilities are kept for backward; they
/// are copied to `probs` when given.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, double scale,
                 std::vector<double>* probs = nullptr);
/// Mean over the batch of -log softmax(logits)[label]. logits is [B x C].
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);

Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, std::span<const std::size_t> order);
Tensor concat(std::span<const Tensor> xs, std::size_t axis);
/// Slice index `index` of `axis`; the axis is removed.
Tensor select(const Tensor& x, std::size_t axis, std::size_t index);
Tensor stack(std::span<const Tensor> xs, std::size_t axis);

/// Inverted dropout: kept activations are divided by (1 - rate).
/// rate == 0 returns x unchanged.
Tensor dropout(const Tensor& x, double rate, Rng& rng);

struct BatchNormState {
  std::span<double> running_mean;
  std::span<double> running_var;
  double momentum = 0.1;
  double epsilon = 1e-5;
};

/// Per-channel batch normalization of [N x C x T] (or [C x T]). Training mode
/// normalizes with statistics over (N, T) and updates the running statistics;
/// eval mode uses the running statistics.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormState state,
                  bool training);

/// Normalization over the last axis.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double epsilon = 1e-5);

}  // namespace incepto::ops
