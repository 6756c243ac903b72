#pragma once

#include <functional>
#include <string>
#include <vector>

#include "incepto/ops.hpp"
#include "incepto/rng.hpp"
#include "incepto/tensor.hpp"

namespace incepto::nn {

enum class Mode { Train, Eval };

/// Per-call forward settings. `rng` drives dropout masks and must be set in
/// train mode whenever a dropout rate is non-zero.
struct ForwardContext {
  Mode mode = Mode::Eval;
  Rng* rng = nullptr;

  bool training() const { return mode == Mode::Train; }
};

/// Receives (path, tensor, trainable) for every parameter and buffer.
using ParamSink = std::function<void(const std::string& path, Tensor& tensor, bool trainable)>;

/// Normal(0, 1/fan_in) initialization.
Tensor lecun_normal(Shape shape, std::size_t fan_in, Rng& rng);

class Dense {
 public:
  Dense() = default;
  Dense(std::size_t in, std::size_t out, Rng& rng, bool with_bias = true);

  Tensor forward(const Tensor& x) const { return ops::linear(x, weight, bias); }
  void visit(const std::string& prefix, const ParamSink& sink);
  std::size_t in_features() const { return weight.dim(0); }
  std::size_t out_features() const { return weight.dim(1); }

  Tensor weight;  // [in x out]
  Tensor bias;    // [out], undefined when built without bias
};

class Conv1D {
 public:
  Conv1D() = default;
  Conv1D(std::size_t in_channels, std::size_t filters, std::size_t kernel_size, Rng& rng);

  Tensor forward(const Tensor& x) const { return ops::conv1d(x, weight, bias); }
  void visit(const std::string& prefix, const ParamSink& sink);

  Tensor weight;  // [filters x in_channels x K]
  Tensor bias;    // [filters]
};

class BatchNorm1D {
 public:
  BatchNorm1D() = default;
  explicit BatchNorm1D(std::size_t channels, double momentum = 0.1, double epsilon = 1e-5);

  Tensor forward(const Tensor& x, const ForwardContext& ctx);
  void visit(const std::string& prefix, const ParamSink& sink);

  Tensor gamma, beta;
  Tensor running_mean, running_var;
  double momentum = 0.1;
  double epsilon = 1e-5;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  explicit LayerNorm(std::size_t width, double epsilon = 1e-5);

  Tensor forward(const Tensor& x) const { return ops::layer_norm(x, gamma, beta, epsilon); }
  void visit(const std::string& prefix, const ParamSink& sink);

  Tensor gamma, beta;
  double epsilon = 1e-5;
};

/// Parallel K-sized same-padded convolution streams, each followed by SeLU,
/// concatenated on the channel axis, batch-normalized and activated again.
class InceptionBlock1D {
 public:
  InceptionBlock1D() = default;
  InceptionBlock1D(std::size_t in_channels, std::size_t filters, const std::vector<std::size_t>& kernel_sizes,
                   Rng& rng);

  /// x: [N x C_in x T] or [C_in x T]; returns [.. x streams*filters x T].
  Tensor forward(const Tensor& x, const ForwardContext& ctx);
  void visit(const std::string& prefix, const ParamSink& sink);

  std::size_t in_channels() const { return in_channels_; }
  std::size_t out_channels() const { return streams.size() * filters_; }

  std::vector<Conv1D> streams;
  BatchNorm1D batchnorm;

 private:
  std::size_t in_channels_ = 0;
  std::size_t filters_ = 0;
};

/// Scaled dot-product attention over all positions (no masking), projections
/// without bias.
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(std::size_t d_model, std::size_t heads, Rng& rng);

  /// x: [B x L x d_model] or [L x d_model]. When `weights` is non-null it
  /// receives the attention probabilities laid out [B x heads x L x L].
  Tensor forward(const Tensor& x, std::vector<double>* weights = nullptr) const;
  void visit(const std::string& prefix, const ParamSink& sink);

  std::size_t d_model() const { return d_model_; }
  std::size_t heads() const { return heads_; }

  Tensor w_q, w_k, w_v, w_o;  // [d_model x d_model]

 private:
  std::size_t d_model_ = 0;
  std::size_t heads_ = 0;
};

enum class PeNormalization { Scaled, RowUnitNorm };

/// Fixed sinusoidal table added to a sequence:
/// table(pos, 2i) = sin(pos / 10000^(2i/d)), table(pos, 2i+1) = cos(same).
class PositionalEncoding {
 public:
  PositionalEncoding() = default;
  PositionalEncoding(std::size_t length, std::size_t dim, double scale,
                     PeNormalization normalization = PeNormalization::Scaled);

  static std::vector<double> sinusoid_table(std::size_t length, std::size_t dim);

  /// x: [.. x length x dim]
  Tensor apply(const Tensor& x) const;
  const Tensor& table() const { return table_; }
  std::size_t length() const { return length_; }
  std::size_t dim() const { return dim_; }
  double scale() const { return scale_; }

 private:
  std::size_t length_ = 0;
  std::size_t dim_ = 0;
  double scale_ = 0.0;
  Tensor table_;  // scaled, ready to add
};

class FeedForward {
 public:
  FeedForward() = default;
  FeedForward(std::size_t d_model, std::size_t hidden, Rng& rng);

  Tensor forward(const Tensor& x) const { return project.forward(ops::selu(expand.forward(x))); }
  void visit(const std::string& prefix, const ParamSink& sink);

  Dense expand, project;
};

/// Post-norm encoder block: h = norm1(x + attn(x)); out = norm2(h + ffn(h)).
class TransformerEncoderBlock {
 public:
  TransformerEncoderBlock() = default;
  TransformerEncoderBlock(std::size_t d_model, std::size_t heads, std::size_t ffn_hidden, double dropout, Rng& rng);

  Tensor forward(const Tensor& x, const ForwardContext& ctx, std::vector<double>* attention_weights = nullptr) const;
  void visit(const std::string& prefix, const ParamSink& sink);

  MultiHeadAttention attention;
  LayerNorm norm1, norm2;
  FeedForward ffn;
  double dropout = 0.0;
};

/// Dropout that is the identity outside train mode.
Tensor apply_dropout(const Tensor& x, double rate, const ForwardContext& ctx);

}  // namespace incepto::nn
