#include "incepto/model.hpp"

#include <cmath>
#include <fstream>
#include <map>

#include "incepto/errors.hpp"

namespace incepto {

using nlohmann::json;

namespace {

void require(bool ok, const std::string& field, const std::string& why) {
  if (!ok) throw ConfigError("model config: " + field + " " + why);
}

const char* pe_norm_name(nn::PeNormalization n) {
  return n == nn::PeNormalization::Scaled ? "scaled" : "row_unit_norm";
}

}  // namespace

void ModelConfig::validate() const {
  require(n_signals >= 1, "n_signals", "must be >= 1");
  require(segment_len >= 1, "segment_len", "must be >= 1");
  require(filters_per_stream >= 1, "filters_per_stream", "must be >= 1");
  require(!kernel_sizes.empty(), "kernel_sizes", "must not be empty");
  for (std::size_t k : kernel_sizes) require(k % 2 == 1, "kernel_sizes", "must all be odd, got " + std::to_string(k));
  require(use_inception || use_transformers, "use_inception/use_transformers", "cannot both be false");
  require(!use_inception || cascade_depth >= 1, "cascade_depth", "must be >= 1");
  require(reduced_dim >= 1, "reduced_dim", "must be >= 1");
  require(n_classes >= 2, "n_classes", "must be >= 2");
  require(dropout >= 0.0 && dropout < 1.0, "dropout", "must be in [0, 1)");
  require(std::isfinite(pe_scale) && pe_scale >= 0.0, "pe_scale", "must be finite and >= 0");
  require(ffn_expansion >= 1, "ffn_expansion", "must be >= 1");
  for (std::size_t w : classifier_widths) require(w >= 1, "classifier_widths", "entries must be >= 1");
  if (use_transformers) {
    require(temporal_heads >= 1 && d_model() % temporal_heads == 0, "temporal_heads",
            "must divide d_model = " + std::to_string(d_model()));
    require(spatial_heads >= 1 && reduced_dim % spatial_heads == 0, "spatial_heads",
            "must divide reduced_dim = " + std::to_string(reduced_dim));
  }
}

json to_json(const ModelConfig& c) {
  return json{{"n_signals", c.n_signals},
              {"segment_len", c.segment_len},
              {"filters_per_stream", c.filters_per_stream},
              {"kernel_sizes", c.kernel_sizes},
              {"cascade_depth", c.cascade_depth},
              {"temporal_heads", c.temporal_heads},
              {"spatial_heads", c.spatial_heads},
              {"reduced_dim", c.reduced_dim},
              {"classifier_widths", c.classifier_widths},
              {"n_classes", c.n_classes},
              {"dropout", c.dropout},
              {"pe_scale", c.pe_scale},
              {"pe_normalization", pe_norm_name(c.pe_normalization)},
              {"ffn_expansion", c.ffn_expansion},
              {"use_inception", c.use_inception},
              {"use_transformers", c.use_transformers}};
}

ModelConfig model_config_from_json(const json& j, ModelConfig c) {
  if (!j.is_object()) throw ConfigError("model config must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& key = it.key();
    const json& v = it.value();
    try {
      if (key == "n_signals") c.n_signals = v.get<std::size_t>();
      else if (key == "segment_len") c.segment_len = v.get<std::size_t>();
      else if (key == "filters_per_stream") c.filters_per_stream = v.get<std::size_t>();
      else if (key == "kernel_sizes") c.kernel_sizes = v.get<std::vector<std::size_t>>();
      else if (key == "cascade_depth") c.cascade_depth = v.get<std::size_t>();
      else if (key == "temporal_heads") c.temporal_heads = v.get<std::size_t>();
      else if (key == "spatial_heads") c.spatial_heads = v.get<std::size_t>();
      else if (key == "reduced_dim") c.reduced_dim = v.get<std::size_t>();
      else if (key == "classifier_widths") c.classifier_widths = v.get<std::vector<std::size_t>>();
      else if (key == "n_classes") c.n_classes = v.get<std::size_t>();
      else if (key == "dropout") c.dropout = v.get<double>();
      else if (key == "pe_scale") c.pe_scale = v.get<double>();
      else if (key == "ffn_expansion") c.ffn_expansion = v.get<std::size_t>();
      else if (key == "use_inception") c.use_inception = v.get<bool>();
      else if (key == "use_transformers") c.use_transformers = v.get<bool>();
      else if (key == "pe_normalization") {
        const auto name = v.get<std::string>();
        if (name == "scaled") c.pe_normalization = nn::PeNormalization::Scaled;
        else if (name == "row_unit_norm") c.pe_normalization = nn::PeNormalization::RowUnitNorm;
        else throw ConfigError("model config: pe_normalization must be scaled or row_unit_norm, got " + name);
      } else {
        throw ConfigError("model config: unknown field " + key);
      }
    } catch (const json::exception& e) {
      throw ConfigError("model config: field " + key + " has the wrong type (" + e.what() + ")");
    }
  }
  return c;
}

std::uint64_t config_hash(const ModelConfig& config) { return io::fnv1a64(to_json(config).dump()); }

Variant parse_variant(const std::string& name) {
  if (name == "model1") return Variant::Model1;
  if (name == "model2") return Variant::Model2;
  if (name == "model3") return Variant::Model3;
  throw ConfigError("unknown ablation variant '" + name + "' (expected model1, model2 or model3)");
}

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::Model1: return "model1";
    case Variant::Model2: return "model2";
    case Variant::Model3: return "model3";
  }
  return "?";
}

ModelConfig ablation_variant(ModelConfig config, Variant variant) {
  config.use_inception = variant != Variant::Model2;
  config.use_transformers = variant != Variant::Model1;
  return config;
}

// --- model -----------------------------------------------------------------------

InceptoFormer::InceptoFormer(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  Rng rng(seed);
  const std::size_t d = config_.d_model();
  const std::size_t rd = config_.reduced_dim;
  signals.resize(config_.n_signals);
  for (SignalStack& s : signals) {
    if (config_.use_inception) {
      std::size_t in = 1;
      for (std::size_t b = 0; b < config_.cascade_depth; ++b) {
        s.cascade.emplace_back(in, config_.filters_per_stream, config_.kernel_sizes, rng);
        in = s.cascade.back().out_channels();
      }
    } else {
      s.lift = nn::Dense(1, d, rng);
    }
    if (config_.use_transformers) {
      s.pe = nn::PositionalEncoding(config_.segment_len, d, config_.pe_scale, config_.pe_normalization);
      s.temporal = nn::TransformerEncoderBlock(d, config_.temporal_heads, config_.ffn_expansion * d,
                                               config_.dropout, rng);
    }
    s.reduction = nn::Dense(d, rd, rng);
  }
  if (config_.use_transformers) {
    spatial_pe = nn::PositionalEncoding(config_.n_signals, rd, config_.pe_scale, config_.pe_normalization);
    spatial = nn::TransformerEncoderBlock(rd, config_.spatial_heads, config_.ffn_expansion * rd, config_.dropout, rng);
  }
  std::size_t in = config_.n_signals * rd;
  for (std::size_t w : config_.classifier_widths) {
    classifier.emplace_back(in, w, rng);
    in = w;
  }
  classifier.emplace_back(in, config_.n_classes, rng);
}

Tensor reduce(const Tensor& h, const nn::Dense& projection) {
  if (h.rank() != 3) throw DimensionError("reduce expects [B x T x d], got " + h.shape_string());
  return ops::selu(projection.forward(ops::mean_axis(h, 1)));
}

Tensor InceptoFormer::encode_signal(std::size_t signal, const Tensor& x_s, const nn::ForwardContext& ctx,
                                    AttentionCapture* capture) {
  SignalStack& s = signals.at(signal);
  const std::size_t batch = x_s.dim(0), len = x_s.dim(1);
  Tensor h;
  if (config_.use_inception) {
    h = ops::reshape(x_s, {batch, 1, len});
    for (nn::InceptionBlock1D& block : s.cascade) h = block.forward(h, ctx);
    const std::size_t to_time_major[] = {0, 2, 1};
    h = ops::permute(h, to_time_major);  // [B x T x d]
  } else {
    h = s.lift.forward(ops::reshape(x_s, {batch, len, 1}));
  }
  if (config_.use_transformers) {
    std::vector<double>* weights = nullptr;
    if (capture != nullptr) weights = &capture->emplace_back();
    h = s.temporal.forward(s.pe.apply(h), ctx, weights);
  }
  return reduce(h, s.reduction);
}

Tensor InceptoFormer::forward(const Tensor& batch, const nn::ForwardContext& ctx, AttentionCapture* capture) {
  if (batch.rank() != 3 || batch.dim(1) != config_.n_signals || batch.dim(2) != config_.segment_len) {
    throw DimensionError("model expects [B x " + std::to_string(config_.n_signals) + " x " +
                         std::to_string(config_.segment_len) + "], got " + batch.shape_string());
  }
  const std::size_t b = batch.dim(0);
  std::vector<Tensor> tokens;
  tokens.reserve(config_.n_signals);
  for (std::size_t s = 0; s < config_.n_signals; ++s) {
    tokens.push_back(encode_signal(s, ops::select(batch, 1, s), ctx, capture));
  }
  Tensor seq = ops::stack(tokens, 1);  // [B x S x rd]
  if (config_.use_transformers) {
    std::vector<double>* weights = nullptr;
    if (capture != nullptr) weights = &capture->emplace_back();
    seq = spatial.forward(spatial_pe.apply(seq), ctx, weights);
  }
  Tensor h = ops::reshape(seq, {b, config_.n_signals * config_.reduced_dim});
  for (std::size_t i = 0; i + 1 < classifier.size(); ++i) {
    h = nn::apply_dropout(ops::selu(classifier[i].forward(h)), config_.dropout, ctx);
  }
  return classifier.back().forward(h);
}

void InceptoFormer::visit(const nn::ParamSink& sink) {
  for (std::size_t i = 0; i < signals.size(); ++i) {
    SignalStack& s = signals[i];
    const std::string p = "signal" + std::to_string(i);
    for (std::size_t b = 0; b < s.cascade.size(); ++b) s.cascade[b].visit(p + ".inception" + std::to_string(b), sink);
    if (!config_.use_inception) s.lift.visit(p + ".lift", sink);
    if (config_.use_transformers) s.temporal.visit(p + ".temporal", sink);
    s.reduction.visit(p + ".reduce", sink);
  }
  if (config_.use_transformers) spatial.visit("spatial", sink);
  for (std::size_t i = 0; i < classifier.size(); ++i) classifier[i].visit("classifier" + std::to_string(i), sink);
}

std::vector<Tensor> InceptoFormer::parameters() {
  std::vector<Tensor> out;
  visit([&](const std::string&, Tensor& t, bool trainable) {
    if (trainable) out.push_back(t);
  });
  return out;
}

std::size_t InceptoFormer::parameter_count() {
  std::size_t n = 0;
  for (const Tensor& t : parameters()) n += t.numel();
  return n;
}

std::vector<io::NamedArray> InceptoFormer::state() {
  std::vector<io::NamedArray> out;
  visit([&](const std::string& path, Tensor& t, bool) {
    out.push_back({path, t.shape(), std::vector<double>(t.data().begin(), t.data().end())});
  });
  return out;
}

void InceptoFormer::load_state(const std::vector<io::NamedArray>& arrays) {
  std::map<std::string, const io::NamedArray*> by_name;
  for (const auto& a : arrays) by_name[a.name] = &a;
  std::size_t used = 0;
  visit([&](const std::string& path, Tensor& t, bool) {
    auto it = by_name.find(path);
    if (it == by_name.end()) throw FormatError("checkpoint is missing " + path);
    if (it->second->shape != t.shape()) {
      throw FormatError("checkpoint entry " + path + " has shape " + shape_str(it->second->shape) + ", expected " +
                        t.shape_string());
    }
    std::copy(it->second->values.begin(), it->second->values.end(), t.mutable_data().begin());
    ++used;
  });
  if (used != arrays.size()) throw FormatError("checkpoint has entries the model does not use");
}

std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return best;
}

Prediction predict(InceptoFormer& model, const Tensor& batch) {
  const Tensor probs = ops::softmax(model.forward(batch, nn::ForwardContext{}));
  const std::size_t c = model.config().n_classes;
  Prediction p;
  p.probabilities.assign(probs.data().begin(), probs.data().end());
  for (std::size_t i = 0; i < probs.dim(0); ++i) {
    p.classes.push_back(static_cast<int>(argmax(std::span<const double>(p.probabilities).subspan(i * c, c))));
  }
  return p;
}

// --- checkpoints -------------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'I', 'N', 'C', 'F', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

}  // namespace

void save_checkpoint(const std::filesystem::path& path, InceptoFormer& model,
                     const std::vector<io::NamedArray>& extra) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(kMagic, sizeof kMagic);
  io::write_u32(out, kVersion);
  io::write_string(out, to_json(model.config()).dump());
  io::write_u64(out, config_hash(model.config()));
  io::write_arrays(out, model.state());
  io::write_u64(out, extra.empty() ? 0 : 1);
  if (!extra.empty()) io::write_arrays(out, extra);
  if (!out) throw IoError("failed writing " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char magic[8];
  in.read(magic, sizeof magic);
  if (in.gcount() != 8 || !std::equal(magic, magic + 8, kMagic)) {
    throw FormatError(path.string() + " is not a model checkpoint");
  }
  const std::uint32_t version = io::read_u32(in);
  if (version != kVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ckpt;
  json j;
  try {
    j = json::parse(io::read_string(in));
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint config is not valid JSON: ") + e.what());
  }
  ckpt.config = model_config_from_json(j);
  const std::uint64_t stored = io::read_u64(in);
  if (stored != config_hash(ckpt.config)) throw FormatError("checkpoint config hash does not match its config");
  ckpt.model = io::read_arrays(in);
  if (io::read_u64(in) != 0) ckpt.extra = io::read_arrays(in);
  return ckpt;
}

Checkpoint load_checkpoint_into(const std::filesystem::path& path, InceptoFormer& model) {
  Checkpoint ckpt = read_checkpoint(path);
  if (config_hash(ckpt.config) != config_hash(model.config())) {
    throw FormatError("checkpoint " + path.string() + " was written for a different model config");
  }
  model.load_state(ckpt.model);
  return ckpt;
}

}  // namespace incepto
