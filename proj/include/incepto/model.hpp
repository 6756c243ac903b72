#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "incepto/layers.hpp"
#include "incepto/serialize.hpp"

namespace incepto {

struct ModelConfig {
  std::size_t n_signals = 18;
  std::size_t segment_len = 100;
  std::size_t filters_per_stream = 32;
  std::vector<std::size_t> kernel_sizes{1, 3, 5};
  std::size_t cascade_depth = 3;
  std::size_t temporal_heads = 2;
  std::size_t spatial_heads = 2;
  std::size_t reduced_dim = 32;
  std::vector<std::size_t> classifier_widths{128, 64};
  std::size_t n_classes = 4;
  double dropout = 0.2;
  double pe_scale = 0.1;
  nn::PeNormalization pe_normalization = nn::PeNormalization::Scaled;
  std::size_t ffn_expansion = 4;
  bool use_inception = true;
  bool use_transformers = true;

  /// Width of the per-signal sequence features fed to the temporal transformer.
  std::size_t d_model() const { return kernel_sizes.size() * filters_per_stream; }

  /// Throws ConfigError naming the first offending field.
  void validate() const;
};

nlohmann::json to_json(const ModelConfig& config);
/// Missing keys keep their defaults; unknown keys are rejected.
ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig base = {});
/// FNV-1a over the canonical (sorted-key) JSON dump.
std::uint64_t config_hash(const ModelConfig& config);

enum class Variant { Model1, Model2, Model3 };

Variant parse_variant(const std::string& name);
std::string variant_name(Variant v);
/// model1: inception only; model2: transformers only; model3: full model.
ModelConfig ablation_variant(ModelConfig config, Variant variant);

/// Independent weights for one input signal.
struct SignalStack {
  std::vector<nn::InceptionBlock1D> cascade;  // empty without inception
  nn::Dense lift;                             // 1 -> d_model, only without inception
  nn::PositionalEncoding pe;
  nn::TransformerEncoderBlock temporal;       // only with transformers
  nn::Dense reduction;                        // d_model -> reduced_dim
};

/// Optional per-call capture of attention probabilities: one entry per
/// attention layer in evaluation order, each laid out [B x heads x L x L].
using AttentionCapture = std::vector<std::vector<double>>;

class InceptoFormer {
 public:
  explicit InceptoFormer(ModelConfig config, std::uint64_t seed = 0);

  const ModelConfig& config() const { return config_; }

  /// batch: [B x n_signals x segment_len] -> logits [B x n_classes].
  Tensor forward(const Tensor& batch, const nn::ForwardContext& ctx, AttentionCapture* capture = nullptr);

  /// Per-signal embedding [B x reduced_dim] for x_s: [B x segment_len].
  Tensor encode_signal(std::size_t signal, const Tensor& x_s, const nn::ForwardContext& ctx,
                       AttentionCapture* capture = nullptr);

  /// Visits every parameter and buffer with a stable hierarchical path.
  void visit(const nn::ParamSink& sink);
  std::vector<Tensor> parameters();
  std::size_t parameter_count();

  std::vector<io::NamedArray> state();
  /// Restores weights and buffers; names and shapes must match exactly.
  void load_state(const std::vector<io::NamedArray>& arrays);

  std::vector<SignalStack> signals;
  nn::PositionalEncoding spatial_pe;
  nn::TransformerEncoderBlock spatial;
  std::vector<nn::Dense> classifier;  // hidden layers followed by the output layer

 private:
  ModelConfig config_;
};

/// Mean over the time axis of h [B x T x d], then selu(dense(.)).
Tensor reduce(const Tensor& h, const nn::Dense& projection);

/// Index of the largest value; ties go to the lowest index.
std::size_t argmax(std::span<const double> values);

struct Prediction {
  std::vector<int> classes;
  std::vector<double> probabilities;  // [B x n_classes]
};

/// Eval-mode forward, softmax and argmax.
Prediction predict(InceptoFormer& model, const Tensor& batch);

// Checkpoint file: "INCFCKPT", u32 version, config JSON string, u64 config
// hash, model arrays, u64 extra-array flag, optional extra arrays.
struct Checkpoint {
  ModelConfig config;
  std::vector<io::NamedArray> model;
  std::vector<io::NamedArray> extra;
};

void save_checkpoint(const std::filesystem::path& path, InceptoFormer& model,
                     const std::vector<io::NamedArray>& extra = {});
Checkpoint read_checkpoint(const std::filesystem::path& path);
/// Loads weights into `model`; throws FormatError if the stored config hash
/// differs from the model's.
Checkpoint load_checkpoint_into(const std::filesystem::path& path, InceptoFormer& model);

}  // namespace incepto
