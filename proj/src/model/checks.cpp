#include "incepto/checks.hpp"

#include <chrono>
#include <functional>

#include "incepto/layers.hpp"
#include "incepto/model.hpp"
#include "incepto/ops.hpp"
#include "incepto/rng.hpp"

namespace incepto {

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double sd = 1.0, double offset = 0.0) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = offset + sd * rng.normal();
  return Tensor(std::move(shape), std::move(v));
}

std::vector<Tensor> with_params(Tensor x, auto& layer) {
  std::vector<Tensor> out{std::move(x)};
  layer.visit("", [&](const std::string&, Tensor& t, bool trainable) {
    if (trainable) out.push_back(t);
  });
  return out;
}

// sum(f(x) * probe) so every output entry gets a distinct upstream gradient.
LayerCheck run(const std::string& name, std::vector<Tensor> params, const std::function<Tensor(const Tensor&)>& f,
               Rng& rng) {
  const Shape out_shape = f(params[0]).shape();
  const Tensor probe = random_tensor(out_shape, rng);
  const auto t0 = std::chrono::steady_clock::now();
  LayerCheck c;
  c.name = name;
  c.report = gradcheck([&] { return ops::sum(ops::mul(f(params[0]), probe)); }, params);
  c.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return c;
}

}  // namespace

std::vector<LayerCheck> layer_gradchecks(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<LayerCheck> out;
  const nn::ForwardContext eval_ctx{};

  for (std::size_t k : {1, 3, 5}) {
    nn::Conv1D conv(2, 3, k, rng);
    out.push_back(run("conv1d_k" + std::to_string(k), with_params(random_tensor({2, 2, 7}, rng), conv),
                      [&](const Tensor& x) { return conv.forward(x); }, rng));
  }
  {
    nn::BatchNorm1D bn(3);
    bn.gamma = random_tensor({3}, rng, 0.3, 1.0);
    bn.beta = random_tensor({3}, rng);
    bn.running_mean = random_tensor({3}, rng);
    bn.running_var = random_tensor({3}, rng, 0.2, 1.0);
    out.push_back(run("batchnorm_eval", with_params(random_tensor({2, 3, 5}, rng), bn),
                      [&](const Tensor& x) { return bn.forward(x, eval_ctx); }, rng));
  }
  {
    nn::Dense dense(4, 3, rng);
    out.push_back(run("dense", with_params(random_tensor({5, 4}, rng), dense),
                      [&](const Tensor& x) { return dense.forward(x); }, rng));
  }
  out.push_back(run("selu", {random_tensor({4, 6}, rng)}, [](const Tensor& x) { return ops::selu(x); }, rng));
  {
    nn::MultiHeadAttention mha(8, 2, rng);
    out.push_back(run("attention_2head", with_params(random_tensor({2, 4, 8}, rng), mha),
                      [&](const Tensor& x) { return mha.forward(x); }, rng));
  }
  {
    nn::FeedForward ffn(4, 16, rng);
    out.push_back(run("feed_forward", with_params(random_tensor({3, 4}, rng), ffn),
                      [&](const Tensor& x) { return ffn.forward(x); }, rng));
  }
  {
    nn::LayerNorm ln(6);
    ln.gamma = random_tensor({6}, rng, 0.3, 1.0);
    ln.beta = random_tensor({6}, rng);
    out.push_back(run("layer_norm", with_params(random_tensor({3, 6}, rng), ln),
                      [&](const Tensor& x) { return ln.forward(x); }, rng));
  }
  {
    nn::InceptionBlock1D block(2, 2, {1, 3, 5}, rng);
    out.push_back(run("inception_eval", with_params(random_tensor({2, 2, 6}, rng), block),
                      [&](const Tensor& x) { return block.forward(x, eval_ctx); }, rng));
  }
  {
    nn::TransformerEncoderBlock block(8, 2, 32, 0.0, rng);
    out.push_back(run("transformer_block", with_params(random_tensor({2, 4, 8}, rng), block),
                      [&](const Tensor& x) { return block.forward(x, eval_ctx); }, rng));
  }
  {
    ModelConfig c;
    c.n_signals = 2;
    c.segment_len = 10;
    c.filters_per_stream = 2;
    c.cascade_depth = 2;
    c.reduced_dim = 4;
    c.classifier_widths = {8, 6};
    c.dropout = 0.0;
    InceptoFormer model(c, rng.index(1u << 30));
    const Tensor x = random_tensor({3, 2, 10}, rng);
    const std::vector<int> labels{0, 3, 2};
    std::vector<Tensor> params = model.parameters();
    const auto t0 = std::chrono::steady_clock::now();
    LayerCheck check;
    check.name = "inceptoformer_tiny";
    check.report = gradcheck([&] { return ops::cross_entropy(model.forward(x, eval_ctx), labels); }, params);
    check.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.push_back(check);
  }
  return out;
}

const std::vector<std::string>& differentiable_ops() {
  static const std::vector<std::string> ops{
      "add", "add_broadcast", "attention", "batch_norm", "bmm", "concat", "conv1d",
      "cross_entropy", "dropout", "layer_norm", "linear", "matmul", "mean_axis", "mul",
      "permute", "reshape", "scale", "select", "selu", "softmax", "sum"};
  return ops;
}

}  // namespace incepto
