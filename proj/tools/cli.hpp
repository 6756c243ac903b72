#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "incepto/data.hpp"
#include "incepto/evaluation.hpp"
#include "incepto/model.hpp"
#include "incepto/training.hpp"

namespace incepto::cli {

using nlohmann::json;

/// Collects flag values; only flags given on the command line are applied on
/// top of the defaults and the config file.
class Overrides {
 public:
  template <class T>
  CLI::Option* add(CLI::App* app, const std::string& flag, const std::string& pointer, const std::string& help) {
    auto value = std::make_shared<std::optional<T>>();
    appliers_.push_back([value, pointer](json& j) {
      if (*value) j[json::json_pointer(pointer)] = **value;
    });
    return app->add_option(flag, *value, help);
  }
  CLI::Option* add_switch(CLI::App* app, const std::string& flag, const std::string& pointer, bool value_when_set,
                          const std::string& help);
  void apply(json& j) const;

 private:
  std::vector<std::function<void(json&)>> appliers_;
};

struct Options {
  std::string config_file;
  std::string out;
  std::size_t jobs = 1;
  bool tiny = false;
  bool resume = false;
  std::string archive;
  std::string data_dir;
  std::string demographics;
  std::string corrupt;
  std::string input;
  std::string svg;
};

/// defaults < tiny preset < config file < flags. A manifest is accepted as a
/// config file (its "config" tree is used).
json resolve_config(const std::string& command, json defaults, const Options& options, const Overrides& flags);

ModelConfig model_from(const json& config);
TrainConfig train_from(const json& config);
eval::CvOptions cv_from(const json& config);

/// Writes the manifest before any computation: command, inputs with content
/// hashes, and the resolved config tree.
void write_manifest(const std::filesystem::path& path, const std::string& command, const json& config,
                    const std::vector<std::pair<std::string, std::filesystem::path>>& inputs);

std::vector<io::NamedArray> scaler_arrays(const data::ChannelScaler& scaler);
data::ChannelScaler scaler_from(const std::vector<io::NamedArray>& arrays);

json default_model_json();
json default_train_json();
json default_cv_json();

int cmd_synth(const json& config, const Options& options);
int cmd_preprocess(const json& config, const Options& options);
int cmd_train(const json& config, const Options& options);
int cmd_crossval(const json& config, const Options& options);
int cmd_ablate(const json& config, const Options& options);
int cmd_gradcheck(const json& config, const Options& options);
int cmd_report(const Options& options);

}  // namespace incepto::cli
