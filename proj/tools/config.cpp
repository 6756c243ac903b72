#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "cli.hpp"
#include "incepto/errors.hpp"
#include "incepto/serialize.hpp"

namespace incepto::cli {

CLI::Option* Overrides::add_switch(CLI::App* app, const std::string& flag, const std::string& pointer,
                                   bool value_when_set, const std::string& help) {
  auto set = std::make_shared<bool>(false);
  appliers_.push_back([set, pointer, value_when_set](json& j) {
    if (*set) j[json::json_pointer(pointer)] = value_when_set;
  });
  return app->add_flag(flag, *set, help);
}

void Overrides::apply(json& j) const {
  for (const auto& f : appliers_) f(j);
}

namespace {

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

// The model and train sections are checked key by key by their own parsers.
void check_keys(const json& known, const json& patch, const std::string& where) {
  if (!patch.is_object()) throw ConfigError("config section '" + where + "' must be an object");
  for (const auto& [key, value] : patch.items()) {
    const std::string path = where.empty() ? key : where + "." + key;
    if (!known.contains(key)) throw ConfigError("unknown config key '" + path + "'");
    if (path == "model" || path == "train") continue;
    if (known[key].is_object()) check_keys(known[key], value, path);
  }
}

std::string hex64(std::uint64_t v) { return fmt::format("{:016x}", v); }

}  // namespace

json default_model_json() { return to_json(ModelConfig{}); }
json default_train_json() { return to_json(TrainConfig{}); }

json default_cv_json() {
  const eval::CvOptions o;
  return {{"k", o.k},
          {"unit", data::split_unit_name(o.unit)},
          {"smote", eval::smote_mode_name(o.smote)},
          {"smote_k", o.smote_k},
          {"minority", o.minority},
          {"normalize", o.normalize},
          {"averaging", eval::averaging_name(o.averaging)},
          {"variant", ""}};
}

json resolve_config(const std::string& command, json defaults, const Options& options, const Overrides& flags) {
  if (options.tiny && defaults.contains("model")) {
    json& m = defaults["model"];
    m["filters_per_stream"] = 2;
    m["cascade_depth"] = 1;
    m["reduced_dim"] = 4;
    m["classifier_widths"] = {8};
    m["dropout"] = 0.0;
  }
  if (!options.config_file.empty()) {
    json patch = read_json(options.config_file);
    if (patch.contains("config") && patch.contains("command")) {
      if (patch["command"] != command) {
        throw ConfigError("manifest " + options.config_file + " is for '" + patch["command"].get<std::string>() +
                          "', not '" + command + "'");
      }
      patch = patch["config"];
    }
    check_keys(defaults, patch, "");
    defaults.merge_patch(patch);
  }
  flags.apply(defaults);
  return defaults;
}

ModelConfig model_from(const json& config) {
  ModelConfig m = model_config_from_json(config.at("model"));
  if (config.contains("cv")) {
    const std::string variant = config["cv"].value("variant", "");
    if (!variant.empty()) m = ablation_variant(m, parse_variant(variant));
  }
  m.validate();
  return m;
}

TrainConfig train_from(const json& config) {
  TrainConfig t = train_config_from_json(config.at("train"));
  t.validate();
  return t;
}

eval::CvOptions cv_from(const json& config) {
  const json& c = config.at("cv");
  eval::CvOptions o;
  try {
    o.k = c.at("k").get<std::size_t>();
    o.unit = data::parse_split_unit(c.at("unit").get<std::string>());
    o.smote = eval::parse_smote_mode(c.at("smote").get<std::string>());
    o.smote_k = c.at("smote_k").get<std::size_t>();
    o.minority = c.at("minority").get<std::vector<int>>();
    o.normalize = c.at("normalize").get<bool>();
    o.averaging = eval::parse_averaging(c.at("averaging").get<std::string>());
    o.variant = c.at("variant").get<std::string>();
    o.seed = config.at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("cv config: ") + e.what());
  }
  if (o.k < 2) throw ConfigError("cv.k must be >= 2");
  if (o.variant.empty()) {
    const ModelConfig m = model_from(config);
    o.variant = m.use_inception && m.use_transformers ? "model3"
                : m.use_inception                     ? "model1"
                : m.use_transformers                  ? "model2"
                                                      : "custom";
  }
  return o;
}

void write_manifest(const std::filesystem::path& path, const std::string& command, const json& config,
                    const std::vector<std::pair<std::string, std::filesystem::path>>& inputs) {
  json in = json::object();
  for (const auto& [name, p] : inputs) {
    json entry{{"path", p.string()}};
    if (std::filesystem::is_regular_file(p)) {
      std::ifstream f(p, std::ios::binary);
      std::ostringstream ss;
      ss << f.rdbuf();
      entry["fnv1a64"] = hex64(io::fnv1a64(ss.str()));
    }
    in[name] = entry;
  }
  const json manifest{{"tool", "incepto"}, {"manifest_version", 1}, {"command", command}, {"inputs", in},
                      {"config", config}};
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  eval::write_text(path, manifest.dump(2) + "\n");
}

std::vector<io::NamedArray> scaler_arrays(const data::ChannelScaler& scaler) {
  if (scaler.empty()) return {};
  return {{"scaler.mean", {scaler.mean.size()}, scaler.mean}, {"scaler.std", {scaler.stdev.size()}, scaler.stdev}};
}

data::ChannelScaler scaler_from(const std::vector<io::NamedArray>& arrays) {
  data::ChannelScaler s;
  for (const auto& a : arrays) {
    if (a.name == "scaler.mean") s.mean = a.values;
    if (a.name == "scaler.std") s.stdev = a.values;
  }
  return s;
}

}  // namespace incepto::cli
