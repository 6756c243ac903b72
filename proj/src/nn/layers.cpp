#include "incepto/layers.hpp"

#include <cmath>

#include "incepto/errors.hpp"

namespace incepto::nn {

Tensor lecun_normal(Shape shape, std::size_t fan_in, Rng& rng) {
  const double std_dev = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = std_dev * rng.normal();
  return Tensor(std::move(shape), std::move(v), true);
}

Tensor apply_dropout(const Tensor& x, double rate, const ForwardContext& ctx) {
  if (!ctx.training() || rate <= 0.0) return x;
  if (ctx.rng == nullptr) throw ContractError("dropout in train mode needs a random stream");
  return ops::dropout(x, rate, *ctx.rng);
}

// --- Dense / Conv1D ----------------------------------------------------------

Dense::Dense(std::size_t in, std::size_t out, Rng& rng, bool with_bias)
    : weight(lecun_normal({in, out}, in, rng)) {
  if (with_bias) bias = Tensor::zeros({out}, true);
}

void Dense::visit(const std::string& prefix, const ParamSink& sink) {
  sink(prefix + ".weight", weight, true);
  if (bias.defined()) sink(prefix + ".bias", bias, true);
}

Conv1D::Conv1D(std::size_t in_channels, std::size_t filters, std::size_t kernel_size, Rng& rng) {
  if (kernel_size % 2 == 0) throw ConfigError("Conv1D kernel size must be odd, got " + std::to_string(kernel_size));
  weight = lecun_normal({filters, in_channels, kernel_size}, in_channels * kernel_size, rng);
  bias = Tensor::zeros({filters}, true);
}

void Conv1D::visit(const std::string& prefix, const ParamSink& sink) {
  sink(prefix + ".weight", weight, true);
  sink(prefix + ".bias", bias, true);
}

// --- normalization -------------------------------------------------------------

BatchNorm1D::BatchNorm1D(std::size_t channels, double momentum_, double epsilon_)
    : gamma(Tensor::full({channels}, 1.0, true)),
      beta(Tensor::zeros({channels}, true)),
      running_mean(Tensor::zeros({channels})),
      running_var(Tensor::full({channels}, 1.0)),
      momentum(momentum_),
      epsilon(epsilon_) {}

Tensor BatchNorm1D::forward(const Tensor& x, const ForwardContext& ctx) {
  ops::BatchNormState state{running_mean.mutable_data(), running_var.mutable_data(), momentum, epsilon};
  return ops::batch_norm(x, gamma, beta, state, ctx.training());
}

void BatchNorm1D::visit(const std::string& prefix, const ParamSink& sink) {
  sink(prefix + ".gamma", gamma, true);
  sink(prefix + ".beta", beta, true);
  sink(prefix + ".running_mean", running_mean, false);
  sink(prefix + ".running_var", running_var, false);
}

LayerNorm::LayerNorm(std::size_t width, double epsilon_)
    : gamma(Tensor::full({width}, 1.0, true)), beta(Tensor::zeros({width}, true)), epsilon(epsilon_) {}

void LayerNorm::visit(const std::string& prefix, const ParamSink& sink) {
  sink(prefix + ".gamma", gamma, true);
  sink(prefix + ".beta", beta, true);
}

// --- Inception -----------------------------------------------------------------

InceptionBlock1D::InceptionBlock1D(std::size_t in_channels, std::size_t filters,
                                   const std::vector<std::size_t>& kernel_sizes, Rng& rng)
    : in_channels_(in_channels), filters_(filters) {
  if (kernel_sizes.empty()) throw ConfigError("Inception block needs at least one kernel size");
  for (std::size_t k : kernel_sizes) streams.emplace_back(in_channels, filters, k, rng);
  batchnorm = BatchNorm1D(kernel_sizes.size() * filters);
}

Tensor InceptionBlock1D::forward(const Tensor& x, const ForwardContext& ctx) {
  const std::size_t channel_axis = x.rank() == 3 ? 1 : 0;
  if (x.rank() < 2 || x.dim(channel_axis) != in_channels_) {
    throw DimensionError("Inception block expects " + std::to_string(in_channels_) + " input channels, got " +
                         x.shape_string());
  }
  std::vector<Tensor> outs;
  outs.reserve(streams.size());
  for (const Conv1D& conv : streams) outs.push_back(ops::selu(conv.forward(x)));
  const Tensor merged = ops::concat(outs, channel_axis);
  return ops::selu(batchnorm.forward(merged, ctx));
}

void InceptionBlock1D::visit(const std::string& prefix, const ParamSink& sink) {
  for (std::size_t i = 0; i < streams.size(); ++i) streams[i].visit(prefix + ".stream" + std::to_string(i), sink);
  batchnorm.visit(prefix + ".bn", sink);
}

// --- attention -------------------------------------------------------------------

MultiHeadAttention::MultiHeadAttention(std::size_t d_model, std::size_t heads, Rng& rng)
    : d_model_(d_model), heads_(heads) {
  if (heads == 0 || d_model % heads != 0) {
    throw ConfigError("attention width " + std::to_string(d_model) + " is not divisible by " + std::to_string(heads) +
                      " heads");
  }
  w_q = lecun_normal({d_model, d_model}, d_model, rng);
  w_k = lecun_normal({d_model, d_model}, d_model, rng);
  w_v = lecun_normal({d_model, d_model}, d_model, rng);
  w_o = lecun_normal({d_model, d_model}, d_model, rng);
}

Tensor MultiHeadAttention::forward(const Tensor& x, std::vector<double>* weights) const {
  if (x.rank() == 2) {
    const Tensor y = forward(ops::reshape(x, {1, x.dim(0), x.dim(1)}), weights);
    return ops::reshape(y, x.shape());
  }
  if (x.rank() != 3 || x.dim(2) != d_model_) {
    throw DimensionError("attention expects [B x L x " + std::to_string(d_model_) + "], got " + x.shape_string());
  }
  const std::size_t batch = x.dim(0), len = x.dim(1), hd = d_model_ / heads_;
  const std::size_t split[] = {0, 2, 1, 3};
  auto heads_first = [&](const Tensor& t) {
    return ops::reshape(ops::permute(ops::reshape(t, {batch, len, heads_, hd}), split), {batch * heads_, len, hd});
  };
  const Tensor q = heads_first(ops::linear(x, w_q));
  const Tensor k = heads_first(ops::linear(x, w_k));
  const Tensor v = heads_first(ops::linear(x, w_v));
  const Tensor ctx = ops::attention(q, k, v, 1.0 / std::sqrt(static_cast<double>(hd)), weights);
  const Tensor merged =
      ops::reshape(ops::permute(ops::reshape(ctx, {batch, heads_, len, hd}), split), {batch, len, d_model_});
  return ops::linear(merged, w_o);
}

void MultiHeadAttention::visit(const std::string& prefix, const ParamSink& sink) {
  sink(prefix + ".w_q", w_q, true);
  sink(prefix + ".w_k", w_k, true);
  sink(prefix + ".w_v", w_v, true);
  sink(prefix + ".w_o", w_o, true);
}

// --- positional encoding -----------------------------------------------------------

std::vector<double> PositionalEncoding::sinusoid_table(std::size_t length, std::size_t dim) {
  std::vector<double> table(length * dim);
  for (std::size_t pos = 0; pos < length; ++pos) {
    for (std::size_t j = 0; j < dim; ++j) {
      const std::size_t pair = j - j % 2;
      const double angle =
          static_cast<double>(pos) / std::pow(10000.0, static_cast<double>(pair) / static_cast<double>(dim));
      table[pos * dim + j] = (j % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return table;
}

PositionalEncoding::PositionalEncoding(std::size_t length, std::size_t dim, double scale,
                                       PeNormalization normalization)
    : length_(length), dim_(dim), scale_(scale) {
  std::vector<double> table = sinusoid_table(length, dim);
  for (std::size_t pos = 0; pos < length; ++pos) {
    double factor = scale;
    if (normalization == PeNormalization::RowUnitNorm) {
      double norm = 0.0;
      for (std::size_t j = 0; j < dim; ++j) norm += table[pos * dim + j] * table[pos * dim + j];
      factor = norm > 0.0 ? scale / std::sqrt(norm) : 0.0;
    }
    for (std::size_t j = 0; j < dim; ++j) table[pos * dim + j] *= factor;
  }
  table_ = Tensor({length, dim}, std::move(table));
}

Tensor PositionalEncoding::apply(const Tensor& x) const {
  if (x.rank() < 2 || x.dim(x.rank() - 2) != length_ || x.dim(x.rank() - 1) != dim_) {
    throw DimensionError("positional encoding for " + std::to_string(length_) + "x" + std::to_string(dim_) +
                         " cannot apply to " + x.shape_string());
  }
  if (scale_ == 0.0) return x;
  return ops::add_broadcast(x, table_);
}

// --- transformer ---------------------------------------------------------------------

FeedForward::FeedForward(std::size_t d_model, std::size_t hidden, Rng& rng)
    : expand(d_model, hidden, rng), project(hidden, d_model, rng) {}

void FeedForward::visit(const std::string& prefix, const ParamSink& sink) {
  expand.visit(prefix + ".expand", sink);
  project.visit(prefix + ".project", sink);
}

TransformerEncoderBlock::TransformerEncoderBlock(std::size_t d_model, std::size_t heads, std::size_t ffn_hidden,
                                                 double dropout_, Rng& rng)
    : attention(d_model, heads, rng), norm1(d_model), norm2(d_model), ffn(d_model, ffn_hidden, rng), dropout(dropout_) {}

Tensor TransformerEncoderBlock::forward(const Tensor& x, const ForwardContext& ctx,
                                        std::vector<double>* attention_weights) const {
  const Tensor attended = apply_dropout(attention.forward(x, attention_weights), dropout, ctx);
  const Tensor h = norm1.forward(ops::add(x, attended));
  const Tensor fed = apply_dropout(ffn.forward(h), dropout, ctx);
  return norm2.forward(ops::add(h, fed));
}

void TransformerEncoderBlock::visit(const std::string& prefix, const ParamSink& sink) {
  attention.visit(prefix + ".attn", sink);
  norm1.visit(prefix + ".norm1", sink);
  norm2.visit(prefix + ".norm2", sink);
  ffn.visit(prefix + ".ffn", sink);
}

}  // namespace incepto::nn
