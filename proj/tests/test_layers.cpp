#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "incepto/errors.hpp"
#include "incepto/gradcheck.hpp"
#include "incepto/layers.hpp"

using namespace incepto;
using namespace incepto::nn;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double sd = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = sd * rng.normal();
  return Tensor(std::move(shape), std::move(v));
}

void set_identity(Tensor& w) {
  auto d = w.mutable_data();
  std::fill(d.begin(), d.end(), 0.0);
  for (std::size_t i = 0; i < w.dim(0); ++i) d[i * w.dim(1) + i] = 1.0;
}

double selu_ref(double x) {
  const double alpha = 1.6732632423543772848170429916717;
  const double lambda = 1.0507009873554804934193349852946;
  return x > 0 ? lambda * x : lambda * alpha * (std::exp(x) - 1.0);
}

std::vector<Tensor*> collect(auto& layer, bool trainable_only = true) {
  std::vector<Tensor*> out;
  layer.visit("m", [&](const std::string&, Tensor& t, bool trainable) {
    if (trainable || !trainable_only) out.push_back(&t);
  });
  return out;
}

}  // namespace

TEST_CASE("inception: zero input gives zero output with beta 0") {
  Rng rng(1);
  InceptionBlock1D block(1, 32, {1, 3, 5}, rng);
  ForwardContext train{Mode::Train, nullptr};
  const Tensor y = block.forward(Tensor::zeros({1, 1, 100}), train);
  REQUIRE(y.shape() == Shape{1, 96, 100});
  for (double v : y.data()) CHECK(std::abs(v) < 1e-12);
}

TEST_CASE("inception: channels and time length follow the shape contract") {
  Rng rng(2);
  for (std::size_t t : {1u, 7u, 100u}) {
    InceptionBlock1D first(1, 32, {1, 3, 5}, rng);
    InceptionBlock1D second(96, 32, {1, 3, 5}, rng);
    ForwardContext eval{};
    const Tensor y = second.forward(first.forward(random_tensor({2, 1, t}, rng), eval), eval);
    CHECK(y.shape() == Shape{2, 96, t});
    CHECK(second.out_channels() == 3 * 32);
  }
  InceptionBlock1D block(96, 4, {1, 3, 5}, rng);
  ForwardContext eval{};
  CHECK_THROWS_AS(block.forward(random_tensor({1, 5, 10}, rng), eval), DimensionError);
}

TEST_CASE("inception: identity-like K=1 stream reproduces selu through eval-mode normalization") {
  // Running stats (0, 1) make the normalization x / sqrt(1 + eps); the block
  // applies selu before and after it.
  Rng rng(3);
  InceptionBlock1D block(1, 32, {1, 3, 5}, rng);
  for (std::size_t s = 0; s < 3; ++s) {
    auto w = block.streams[s].weight.mutable_data();
    std::fill(w.begin(), w.end(), 0.0);
  }
  auto w1 = block.streams[0].weight.mutable_data();
  for (std::size_t f = 0; f < 32; ++f) w1[f] = 1.0;  // [32 x 1 x 1]
  const Tensor x = random_tensor({1, 1, 50}, rng);
  const Tensor y = block.forward(x, ForwardContext{});
  const double denom = std::sqrt(1.0 + block.batchnorm.epsilon);
  for (std::size_t c = 0; c < 96; ++c)
    for (std::size_t t = 0; t < 50; ++t) {
      const double expect = c < 32 ? selu_ref(selu_ref(x[t]) / denom) : 0.0;
      CHECK(y[c * 50 + t] == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("batchnorm train mode normalizes per channel") {
  Rng rng(4);
  BatchNorm1D bn(5);
  const Tensor x = random_tensor({8, 5, 30}, rng, 3.0);
  // shift channels to make the test non-trivial
  auto xd = const_cast<Tensor&>(x).mutable_data();
  for (std::size_t i = 0; i < xd.size(); ++i) xd[i] += static_cast<double>((i / 30) % 5) * 2.5;
  ForwardContext train{Mode::Train, nullptr};
  const Tensor y = bn.forward(x, train);
  for (std::size_t c = 0; c < 5; ++c) {
    double mean = 0.0, sq = 0.0;
    for (std::size_t n = 0; n < 8; ++n)
      for (std::size_t t = 0; t < 30; ++t) mean += y[(n * 5 + c) * 30 + t];
    mean /= 240.0;
    for (std::size_t n = 0; n < 8; ++n)
      for (std::size_t t = 0; t < 30; ++t) sq += std::pow(y[(n * 5 + c) * 30 + t] - mean, 2);
    CHECK(std::abs(mean) < 1e-6);
    CHECK(std::abs(sq / 240.0 - 1.0) < 1e-4);
  }
  // running stats moved from (0, 1) toward the batch statistics
  CHECK(bn.running_mean[4] > 0.0);
  const Tensor e1 = bn.forward(x, ForwardContext{});
  const Tensor e2 = bn.forward(x, ForwardContext{});
  CHECK(std::equal(e1.data().begin(), e1.data().end(), e2.data().begin()));
}

TEST_CASE("attention: single token attends to itself") {
  Rng rng(5);
  MultiHeadAttention mha(6, 2, rng);
  const Tensor x = random_tensor({1, 6}, rng);
  std::vector<double> weights;
  const Tensor y = mha.forward(x, &weights);
  REQUIRE(weights.size() == 2);
  CHECK(weights[0] == 1.0);
  CHECK(weights[1] == 1.0);
  // oracle: x W_v W_o by explicit loops
  for (std::size_t j = 0; j < 6; ++j) {
    double acc = 0.0;
    for (std::size_t m = 0; m < 6; ++m) {
      double v = 0.0;
      for (std::size_t i = 0; i < 6; ++i) v += x[i] * mha.w_v[i * 6 + m];
      acc += v * mha.w_o[m * 6 + j];
    }
    CHECK(y[j] == doctest::Approx(acc).epsilon(1e-12));
  }
}

TEST_CASE("attention: identical tokens give identical rows") {
  Rng rng(6);
  MultiHeadAttention mha(4, 2, rng);
  for (Tensor* w : {&mha.w_q, &mha.w_k, &mha.w_v, &mha.w_o}) set_identity(*w);
  const Tensor x({2, 4}, {0.3, -1.2, 2.0, 0.7, 0.3, -1.2, 2.0, 0.7});
  const Tensor y = mha.forward(x);
  for (std::size_t j = 0; j < 4; ++j) CHECK(y[j] == y[4 + j]);
}

TEST_CASE("attention: weights are a distribution per query in every head") {
  Rng rng(7);
  MultiHeadAttention mha(8, 2, rng);
  std::vector<double> weights;
  mha.forward(random_tensor({3, 3, 8}, rng, 2.0), &weights);
  REQUIRE(weights.size() == 3 * 2 * 3 * 3);
  for (std::size_t row = 0; row < weights.size() / 3; ++row) {
    double s = 0.0;
    for (std::size_t j = 0; j < 3; ++j) {
      CHECK(weights[row * 3 + j] >= 0.0);
      s += weights[row * 3 + j];
    }
    CHECK(std::abs(s - 1.0) < 1e-9);
  }
  CHECK_THROWS_AS(mha.forward(random_tensor({3, 7}, rng)), DimensionError);
  CHECK_THROWS_AS(MultiHeadAttention(7, 2, rng), ConfigError);
}

TEST_CASE("attention matches a per-head oracle") {
  Rng rng(8);
  const std::size_t L = 4, d = 6, h = 2, hd = 3;
  MultiHeadAttention mha(d, h, rng);
  const Tensor x = random_tensor({L, d}, rng);
  const Tensor y = mha.forward(x);
  auto project = [&](const Tensor& w) {
    std::vector<double> out(L * d, 0.0);
    for (std::size_t l = 0; l < L; ++l)
      for (std::size_t j = 0; j < d; ++j)
        for (std::size_t i = 0; i < d; ++i) out[l * d + j] += x[l * d + i] * w[i * d + j];
    return out;
  };
  const auto q = project(mha.w_q), k = project(mha.w_k), v = project(mha.w_v);
  std::vector<double> merged(L * d, 0.0);
  for (std::size_t head = 0; head < h; ++head)
    for (std::size_t a = 0; a < L; ++a) {
      std::vector<double> s(L);
      double mx = -1e300, z = 0.0;
      for (std::size_t b = 0; b < L; ++b) {
        double acc = 0.0;
        for (std::size_t e = 0; e < hd; ++e) acc += q[a * d + head * hd + e] * k[b * d + head * hd + e];
        s[b] = acc / std::sqrt(static_cast<double>(hd));
        mx = std::max(mx, s[b]);
      }
      for (double& sb : s) z += (sb = std::exp(sb - mx));
      for (std::size_t b = 0; b < L; ++b)
        for (std::size_t e = 0; e < hd; ++e) merged[a * d + head * hd + e] += s[b] / z * v[b * d + head * hd + e];
    }
  for (std::size_t l = 0; l < L; ++l)
    for (std::size_t j = 0; j < d; ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < d; ++i) acc += merged[l * d + i] * mha.w_o[i * d + j];
      CHECK(y[l * d + j] == doctest::Approx(acc).epsilon(1e-12));
    }
}

TEST_CASE("positional encoding examples") {
  Rng rng(9);
  const Tensor x = random_tensor({5, 6}, rng);
  const Tensor same = PositionalEncoding(5, 6, 0.0).apply(x);
  CHECK(std::equal(same.data().begin(), same.data().end(), x.data().begin()));

  const Tensor table = PositionalEncoding(5, 6, 1.0).apply(Tensor::zeros({5, 6}));
  for (std::size_t j = 0; j < 6; ++j) CHECK(table[j] == (j % 2 == 0 ? 0.0 : 1.0));
  CHECK(table[1 * 6 + 0] == std::sin(1.0));
  CHECK(table[3 * 6 + 3] == std::cos(3.0 / std::pow(10000.0, 2.0 / 6.0)));

  for (double scale : {0.1, 0.5, 1.0}) {
    const Tensor y = PositionalEncoding(5, 6, scale).apply(x);
    const Tensor added = PositionalEncoding(5, 6, scale).table();
    for (double v : added.data()) CHECK(std::abs(v) <= scale);
    // y - x is itself rounded, so allow the rounding error of the addition
    for (std::size_t i = 0; i < x.numel(); ++i)
      CHECK(std::abs(y[i] - x[i]) <= scale + 2 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(x[i])));
  }
  const Tensor unit = PositionalEncoding(5, 6, 1.0, PeNormalization::RowUnitNorm).table();
  for (std::size_t p = 0; p < 5; ++p) {
    double n = 0.0;
    for (std::size_t j = 0; j < 6; ++j) n += unit[p * 6 + j] * unit[p * 6 + j];
    CHECK(n == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK_THROWS_AS(PositionalEncoding(4, 6, 0.1).apply(x), DimensionError);
  CHECK(PositionalEncoding::sinusoid_table(100, 12) == PositionalEncoding::sinusoid_table(100, 12));
  for (double v : PositionalEncoding::sinusoid_table(100, 12)) CHECK(std::abs(v) <= 1.0);
}

TEST_CASE("transformer block: determinism and shapes") {
  Rng rng(10);
  TransformerEncoderBlock block(12, 2, 48, 0.1, rng);
  for (std::size_t L : {1u, 18u, 100u}) {
    const Tensor x = random_tensor({2, L, 12}, rng);
    const Tensor a = block.forward(x, ForwardContext{});
    const Tensor b = block.forward(x, ForwardContext{});
    CHECK(a.shape() == x.shape());
    CHECK(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
  }
  Rng drop(11);
  const Tensor x = random_tensor({1, 5, 12}, rng);
  const Tensor t = block.forward(x, ForwardContext{Mode::Train, &drop});
  const Tensor e = block.forward(x, ForwardContext{});
  CHECK_FALSE(std::equal(t.data().begin(), t.data().end(), e.data().begin()));
  CHECK_THROWS_AS(block.forward(x, ForwardContext{Mode::Train, nullptr}), ContractError);
}

TEST_CASE("transformer block: output equals norm2(h + ffn(h)) with h = norm1(x + attn(x))") {
  Rng rng(12);
  TransformerEncoderBlock block(4, 2, 16, 0.0, rng);
  const Tensor x = random_tensor({3, 4}, rng);
  const Tensor y = block.forward(x, ForwardContext{});
  auto norm = [](std::vector<double> v) {
    for (std::size_t r = 0; r < v.size() / 4; ++r) {
      double m = 0, s = 0;
      for (std::size_t j = 0; j < 4; ++j) m += v[r * 4 + j] / 4;
      for (std::size_t j = 0; j < 4; ++j) s += std::pow(v[r * 4 + j] - m, 2) / 4;
      for (std::size_t j = 0; j < 4; ++j) v[r * 4 + j] = (v[r * 4 + j] - m) / std::sqrt(s + 1e-5);
    }
    return v;
  };
  const Tensor attn = block.attention.forward(x);
  std::vector<double> h(12);
  for (std::size_t i = 0; i < 12; ++i) h[i] = x[i] + attn[i];
  h = norm(h);
  const Tensor f = block.ffn.forward(Tensor({3, 4}, h));
  std::vector<double> o(12);
  for (std::size_t i = 0; i < 12; ++i) o[i] = h[i] + f[i];
  o = norm(o);
  for (std::size_t i = 0; i < 12; ++i) CHECK(y[i] == doctest::Approx(o[i]).epsilon(1e-12));
}

TEST_CASE("gradcheck through a transformer block at d=8, L=4") {
  Rng rng(13);
  TransformerEncoderBlock block(8, 2, 32, 0.0, rng);
  Tensor x = random_tensor({4, 8}, rng);
  const Tensor probe = random_tensor({4, 8}, rng);
  std::vector<Tensor> params{x};
  for (Tensor* p : collect(block)) params.push_back(*p);
  const auto report = gradcheck(
      [&] { return ops::sum(ops::mul(block.forward(params[0], ForwardContext{}), probe)); }, params);
  CAPTURE(report.max_rel_error);
  CHECK(report.pass);
  CHECK(report.max_rel_error < 1e-4);
}

TEST_CASE("gradcheck through inception, dense and feed-forward layers") {
  Rng rng(14);
  SUBCASE("inception in train mode") {
    InceptionBlock1D block(2, 3, {1, 3, 5}, rng);
    Tensor x = random_tensor({3, 2, 6}, rng);
    const Tensor probe = random_tensor({3, 9, 6}, rng);
    std::vector<Tensor> params{x};
    for (Tensor* p : collect(block)) params.push_back(*p);
    const auto report = gradcheck(
        [&] { return ops::sum(ops::mul(block.forward(params[0], ForwardContext{Mode::Train, nullptr}), probe)); },
        params);
    CAPTURE(report.max_rel_error);
    CHECK(report.pass);
  }
  SUBCASE("feed-forward") {
    FeedForward ffn(4, 16, rng);
    Tensor x = random_tensor({3, 4}, rng);
    const Tensor probe = random_tensor({3, 4}, rng);
    std::vector<Tensor> params{x};
    for (Tensor* p : collect(ffn)) params.push_back(*p);
    const auto report = gradcheck([&] { return ops::sum(ops::mul(ffn.forward(params[0]), probe)); }, params);
    CHECK(report.pass);
  }
}

TEST_CASE("layer visitors name every parameter and buffer") {
  Rng rng(15);
  InceptionBlock1D block(1, 4, {1, 3, 5}, rng);
  std::vector<std::string> names;
  std::size_t buffers = 0;
  block.visit("inc", [&](const std::string& path, Tensor&, bool trainable) {
    names.push_back(path);
    if (!trainable) ++buffers;
  });
  CHECK(names.size() == 3 * 2 + 4);
  CHECK(buffers == 2);
  CHECK(names.front() == "inc.stream0.weight");
  CHECK(names.back() == "inc.bn.running_var");
}

TEST_CASE("lecun normal init has the requested spread") {
  Rng rng(16);
  const Tensor w = lecun_normal({200, 100}, 200, rng);
  double s = 0.0;
  for (double v : w.data()) s += v * v;
  CHECK(std::sqrt(s / w.numel()) == doctest::Approx(1.0 / std::sqrt(200.0)).epsilon(0.02));
  CHECK(w.requires_grad());
}
