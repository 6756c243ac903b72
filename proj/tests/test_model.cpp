#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "incepto/errors.hpp"
#include "incepto/gradcheck.hpp"
#include "incepto/model.hpp"

using namespace incepto;

namespace {

Tensor random_batch(std::size_t b, std::size_t s, std::size_t t, Rng& rng) {
  std::vector<double> v(b * s * t);
  for (double& x : v) x = rng.normal();
  return Tensor({b, s, t}, std::move(v));
}

ModelConfig tiny() {
  ModelConfig c;
  c.n_signals = 2;
  c.segment_len = 10;
  c.filters_per_stream = 4;
  c.reduced_dim = 8;
  c.classifier_widths = {16, 8};
  return c;
}

// Closed-form trainable parameter counts from the layer definitions.
std::size_t dense_params(std::size_t in, std::size_t out) { return in * out + out; }
std::size_t inception_params(std::size_t in, std::size_t f, const std::vector<std::size_t>& ks) {
  std::size_t n = 0;
  for (std::size_t k : ks) n += in * k * f + f;
  return n + 2 * ks.size() * f;
}
std::size_t transformer_params(std::size_t d, std::size_t expansion) {
  return 4 * d * d + 2 * 2 * d + dense_params(d, expansion * d) + dense_params(expansion * d, d);
}

std::size_t closed_form(const ModelConfig& c) {
  const std::size_t d = c.d_model();
  std::size_t per_signal = dense_params(d, c.reduced_dim);
  if (c.use_inception) {
    std::size_t in = 1;
    for (std::size_t b = 0; b < c.cascade_depth; ++b) {
      per_signal += inception_params(in, c.filters_per_stream, c.kernel_sizes);
      in = d;
    }
  } else {
    per_signal += dense_params(1, d);
  }
  if (c.use_transformers) per_signal += transformer_params(d, c.ffn_expansion);
  std::size_t total = c.n_signals * per_signal;
  if (c.use_transformers) total += transformer_params(c.reduced_dim, c.ffn_expansion);
  std::size_t in = c.n_signals * c.reduced_dim;
  for (std::size_t w : c.classifier_widths) {
    total += dense_params(in, w);
    in = w;
  }
  return total + dense_params(in, c.n_classes);
}

std::size_t count_matching(InceptoFormer& m, const std::string& needle) {
  std::size_t n = 0;
  m.visit([&](const std::string& path, Tensor& t, bool) {
    if (path.find(needle) != std::string::npos) n += t.numel();
  });
  return n;
}

}  // namespace

TEST_CASE("default config builds 18 independent stacks ending in 32-wide vectors") {
  InceptoFormer model(ModelConfig{}, 1);
  REQUIRE(model.signals.size() == 18);
  for (const SignalStack& s : model.signals) {
    CHECK(s.cascade.size() == 3);
    CHECK(s.cascade.front().in_channels() == 1);
    CHECK(s.cascade.back().out_channels() == 96);
    CHECK(s.reduction.out_features() == 32);
  }
  CHECK_FALSE(model.signals[0].reduction.weight.same(model.signals[1].reduction.weight));
  CHECK(model.signals[0].reduction.weight[0] != model.signals[1].reduction.weight[0]);
  CHECK(model.classifier.back().out_features() == 4);
  CHECK(model.parameter_count() == closed_form(ModelConfig{}));
}

TEST_CASE("tiny config parameter count equals the hand-derived sum") {
  InceptoFormer model(tiny(), 2);
  // inception: 72 + 468 + 468; temporal block: 576 + 48 + 1212; reduce: 104
  // per signal 2948, two signals 5896; spatial block 840; classifier 444
  CHECK(model.parameter_count() == 7180);
  CHECK(closed_form(tiny()) == 7180);
  for (Variant v : {Variant::Model1, Variant::Model2, Variant::Model3}) {
    InceptoFormer m(ablation_variant(tiny(), v), 3);
    CHECK(m.parameter_count() == closed_form(m.config()));
  }
}

TEST_CASE("ablation variants") {
  const ModelConfig base;
  CHECK(to_json(ablation_variant(base, Variant::Model3)) == to_json(base));
  InceptoFormer m1(ablation_variant(base, Variant::Model1), 1);
  InceptoFormer m2(ablation_variant(base, Variant::Model2), 1);
  InceptoFormer m3(base, 1);
  CHECK(count_matching(m1, ".attn.") == 0);
  CHECK(count_matching(m2, ".inception") == 0);
  CHECK(count_matching(m2, ".stream") == 0);
  CHECK(count_matching(m3, ".attn.") > 0);
  CHECK(m3.parameter_count() > m1.parameter_count());
  CHECK(m3.parameter_count() > m2.parameter_count());
  CHECK_THROWS_AS(parse_variant("model4"), ConfigError);

  Rng rng(4);
  ModelConfig small = tiny();
  small.n_signals = 18;
  small.segment_len = 100;
  const Tensor x = random_batch(2, 18, 100, rng);
  for (Variant v : {Variant::Model1, Variant::Model2, Variant::Model3}) {
    InceptoFormer m(ablation_variant(small, v), 5);
    CHECK(m.forward(x, nn::ForwardContext{}).shape() == Shape{2, 4});
  }
}

TEST_CASE("config validation names the field") {
  auto expect_field = [](ModelConfig c, const std::string& field) {
    try {
      c.validate();
      FAIL("expected a ConfigError for " << field);
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find(field) != std::string::npos);
    }
  };
  ModelConfig c;
  c.kernel_sizes = {1, 4};
  expect_field(c, "kernel_sizes");
  c = {};
  c.n_classes = 1;
  expect_field(c, "n_classes");
  c = {};
  c.dropout = 1.0;
  expect_field(c, "dropout");
  c = {};
  c.use_inception = c.use_transformers = false;
  expect_field(c, "use_inception");
  c = {};
  c.reduced_dim = 7;
  expect_field(c, "spatial_heads");
  CHECK_THROWS_AS(InceptoFormer(c, 0), ConfigError);
  CHECK_THROWS_AS(model_config_from_json(nlohmann::json{{"bogus", 1}}), ConfigError);
  CHECK_THROWS_AS(model_config_from_json(nlohmann::json{{"dropout", "high"}}), ConfigError);
}

TEST_CASE("config JSON round-trips and the hash follows content") {
  ModelConfig c = tiny();
  c.pe_normalization = nn::PeNormalization::RowUnitNorm;
  const ModelConfig back = model_config_from_json(to_json(c));
  CHECK(to_json(back) == to_json(c));
  CHECK(config_hash(back) == config_hash(c));
  c.dropout = 0.25;
  CHECK(config_hash(c) != config_hash(back));
}

TEST_CASE("zero input gives finite logits; bad shapes are rejected") {
  InceptoFormer model(ModelConfig{}, 6);
  const Tensor logits = model.forward(Tensor::zeros({1, 18, 100}), nn::ForwardContext{});
  REQUIRE(logits.shape() == Shape{1, 4});
  for (double v : logits.data()) CHECK(std::isfinite(v));
  CHECK_THROWS_AS(model.forward(Tensor::zeros({1, 17, 100}), nn::ForwardContext{}), DimensionError);
  CHECK_THROWS_AS(model.forward(Tensor::zeros({1, 18, 99}), nn::ForwardContext{}), DimensionError);
}

TEST_CASE("eval forward is deterministic and batch-permutation equivariant") {
  Rng rng(7);
  InceptoFormer model(tiny(), 8);
  const Tensor x = random_batch(5, 2, 10, rng);
  const std::size_t perm[] = {3, 0, 4, 1, 2};
  std::vector<double> permuted(x.numel());
  for (std::size_t i = 0; i < 5; ++i)
    std::copy_n(x.data().begin() + perm[i] * 20, 20, permuted.begin() + i * 20);
  const Tensor a = model.forward(x, nn::ForwardContext{});
  const Tensor a2 = model.forward(x, nn::ForwardContext{});
  const Tensor b = model.forward(Tensor({5, 2, 10}, permuted), nn::ForwardContext{});
  CHECK(std::equal(a.data().begin(), a.data().end(), a2.data().begin()));
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t c = 0; c < 4; ++c) CHECK(b[i * 4 + c] == doctest::Approx(a[perm[i] * 4 + c]).epsilon(1e-12));
}

TEST_CASE("attention rows sum to one in every head of every layer") {
  Rng rng(9);
  InceptoFormer model(tiny(), 10);
  AttentionCapture capture;
  model.forward(random_batch(3, 2, 10, rng), nn::ForwardContext{}, &capture);
  REQUIRE(capture.size() == 3);  // two temporal blocks and the spatial block
  CHECK(capture[0].size() == 3 * 2 * 10 * 10);
  CHECK(capture[2].size() == 3 * 2 * 2 * 2);
  for (const auto& layer : capture) {
    const std::size_t L = capture.back().size() == layer.size() ? 2 : 10;
    for (std::size_t r = 0; r < layer.size() / L; ++r) {
      const double s = std::accumulate(layer.begin() + r * L, layer.begin() + (r + 1) * L, 0.0);
      CHECK(std::abs(s - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("reduce examples") {
  Rng rng(11);
  nn::Dense proj(3, 3, rng);
  std::vector<double> h(2 * 4 * 3);
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t t = 0; t < 4; ++t)
      for (std::size_t c = 0; c < 3; ++c) h[(b * 4 + t) * 3 + c] = 0.5 * static_cast<double>(c) - static_cast<double>(b);
  const Tensor pooled = ops::mean_axis(Tensor({2, 4, 3}, h), 1);
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t c = 0; c < 3; ++c) CHECK(pooled[b * 3 + c] == 0.5 * static_cast<double>(c) - static_cast<double>(b));

  auto w = proj.weight.mutable_data();
  std::fill(w.begin(), w.end(), 0.0);
  for (std::size_t i = 0; i < 3; ++i) w[i * 3 + i] = 1.0;
  const Tensor z = reduce(Tensor({2, 4, 3}, h), proj);
  for (std::size_t i = 0; i < 6; ++i) {
    const double p = pooled[i];
    const double expect = p > 0 ? ops::kSeluScale * p : ops::kSeluScale * ops::kSeluAlpha * (std::exp(p) - 1.0);
    CHECK(z[i] == doctest::Approx(expect).epsilon(1e-14));
  }
  CHECK(reduce(Tensor({1, 5, 3}, std::vector<double>(15, 1.0)), nn::Dense(3, 7, rng)).shape() == Shape{1, 7});
}

TEST_CASE("argmax and predict") {
  const std::vector<double> a{0.1, 3.0, 0.2, 0.1};
  const std::vector<double> tie{1, 1, 0, 0};
  CHECK(argmax(a) == 1);
  CHECK(argmax(tie) == 0);
  Rng rng(12);
  InceptoFormer model(tiny(), 13);
  const Prediction p = predict(model, random_batch(4, 2, 10, rng));
  REQUIRE(p.classes.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    const double s = std::accumulate(p.probabilities.begin() + i * 4, p.probabilities.begin() + (i + 1) * 4, 0.0);
    CHECK(std::abs(s - 1.0) < 1e-9);
    CHECK(p.classes[i] == static_cast<int>(argmax(std::span<const double>(p.probabilities).subspan(i * 4, 4))));
  }
}

TEST_CASE("full-model gradcheck at a tiny config") {
  Rng rng(14);
  ModelConfig c = tiny();
  c.reduced_dim = 4;
  c.classifier_widths = {8, 6};
  c.dropout = 0.0;
  InceptoFormer model(c, 15);
  const Tensor x = random_batch(3, 2, 10, rng);
  const std::vector<int> labels{0, 3, 2};
  std::vector<Tensor> params = model.parameters();
  SUBCASE("train mode (batch statistics)") {
    // One K=1 filter at this seed has weight ~1e-3, so its batch-normalized
    // channel divides by a tiny std and the loss is strongly curved there;
    // eps 1e-5 then carries O(eps^2) truncation error of ~4e-3 relative.
    const auto report = gradcheck(
        [&] { return ops::cross_entropy(model.forward(x, nn::ForwardContext{nn::Mode::Train, nullptr}), labels); },
        params, 1e-6);
    CAPTURE(report.max_rel_error);
    CAPTURE(report.worst_param);
    CAPTURE(report.worst_analytic);
    CAPTURE(report.worst_numeric);
    CAPTURE(report.worst_index);
    CHECK(report.max_rel_error < 1e-4);
  }
  SUBCASE("eval mode") {
    const auto report = gradcheck(
        [&] { return ops::cross_entropy(model.forward(x, nn::ForwardContext{}), labels); }, params);
    CAPTURE(report.max_rel_error);
    CHECK(report.max_rel_error < 1e-4);
  }
}

TEST_CASE("checkpoint round-trip gives bit-identical logits") {
  Rng rng(16);
  const auto dir = std::filesystem::temp_directory_path() / "incepto_test_model";
  std::filesystem::create_directories(dir);
  const auto path = dir / "m.ckpt";
  ModelConfig c = tiny();
  InceptoFormer model(c, 17);
  // move the batchnorm buffers off their defaults
  model.forward(random_batch(4, 2, 10, rng), nn::ForwardContext{nn::Mode::Train, &rng});
  const Tensor x = random_batch(3, 2, 10, rng);
  const Tensor before = model.forward(x, nn::ForwardContext{});
  save_checkpoint(path, model, {{"opt.t", {1}, {42.0}}});

  InceptoFormer other(c, 99);
  const Checkpoint ck = load_checkpoint_into(path, other);
  REQUIRE(ck.extra.size() == 1);
  CHECK(ck.extra[0].values[0] == 42.0);
  const Tensor after = other.forward(x, nn::ForwardContext{});
  CHECK(std::equal(before.data().begin(), before.data().end(), after.data().begin()));

  InceptoFormer rebuilt(read_checkpoint(path).config, 0);
  load_checkpoint_into(path, rebuilt);
  const Tensor again = rebuilt.forward(x, nn::ForwardContext{});
  CHECK(std::equal(before.data().begin(), before.data().end(), again.data().begin()));

  ModelConfig different = c;
  different.dropout = 0.3;
  InceptoFormer mismatch(different, 17);
  CHECK_THROWS_AS(load_checkpoint_into(path, mismatch), FormatError);

  {
    std::ofstream bad(dir / "bad.ckpt", std::ios::binary);
    bad << "NOTACKPT";
  }
  CHECK_THROWS_AS(read_checkpoint(dir / "bad.ckpt"), FormatError);
  {
    // truncated file
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), {});
    std::ofstream out(dir / "short.ckpt", std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
  }
  CHECK_THROWS_AS(read_checkpoint(dir / "short.ckpt"), FormatError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("named array records round-trip") {
  std::stringstream ss;
  const std::vector<io::NamedArray> arrays{{"a", {2, 3}, {1, -2, 3.5, 1e-300, -0.0, 7}}, {"b.c", {}, {9}}};
  io::write_arrays(ss, arrays);
  const auto back = io::read_arrays(ss);
  REQUIRE(back.size() == 2);
  CHECK(back[0].name == "a");
  CHECK(back[0].shape == Shape{2, 3});
  CHECK(back[0].values == arrays[0].values);
  CHECK(std::signbit(back[0].values[4]));
  CHECK(back[1].values == std::vector<double>{9});
}
