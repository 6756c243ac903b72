#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "incepto/data.hpp"
#include "incepto/model.hpp"

namespace incepto {

struct NadamState {
  std::size_t t = 0;
  std::vector<std::vector<double>> m, v;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eta = 1e-4;
  double epsilon = 1e-8;
};

NadamState nadam_init(std::span<const Tensor> params, double eta = 1e-4);

/// One update from each parameter's accumulated gradient:
///   m = b1 m + (1-b1) g;  v = b2 v + (1-b2) g^2
///   m_hat = b1 m / (1 - b1^(t+1)) + (1-b1) g / (1 - b1^t);  v_hat = v / (1 - b2^t)
///   w -= eta m_hat / (sqrt(v_hat) + eps)
/// A non-finite gradient throws NumericalError naming the parameter (from
/// `names` when given) before anything is modified.
void nadam_apply(std::span<Tensor> params, NadamState& state, std::span<const std::string> names = {});

std::vector<io::NamedArray> nadam_to_arrays(const NadamState& state, std::span<const std::string> names);
NadamState nadam_from_arrays(const std::vector<io::NamedArray>& arrays, std::span<const Tensor> params,
                             std::span<const std::string> names);

struct TrainConfig {
  std::size_t batch_size = 64;
  double learning_rate = 1e-4;
  std::size_t max_epochs = 500;
  std::size_t patience = 10;
  double min_delta = 1e-4;
  std::uint64_t seed = 0;
  bool clip = false;
  double clip_norm = 5.0;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double train_acc = 0.0;  // running accuracy of the train-mode batches
  double val_loss = 0.0;
  double val_acc = 0.0;
  double wall_ms = 0.0;
};

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;  // fraction in [0, 1]
  std::vector<int> predictions;
};

/// Eval-mode loss and accuracy over `segments` in batches.
EvalResult evaluate(InceptoFormer& model, const std::vector<const data::Segment*>& segments,
                    std::size_t batch_size = 64);

/// Replaces the validation pass; receives the 1-based epoch.
using Evaluator = std::function<EvalResult(InceptoFormer& model, std::size_t epoch)>;

/// Everything needed to continue a run exactly where it stopped.
struct TrainProgress {
  std::size_t epoch = 0;  // epochs completed
  NadamState optimizer;
  std::vector<io::NamedArray> best_state;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
  double patience_ref = 0.0;
  std::size_t stale = 0;
};

std::vector<io::NamedArray> progress_to_arrays(const TrainProgress& progress, std::span<const std::string> names);
TrainProgress progress_from_arrays(const std::vector<io::NamedArray>& arrays, std::span<const Tensor> params,
                                   std::span<const std::string> names);

struct TrainResult {
  std::vector<io::NamedArray> best_state;
  std::size_t best_epoch = 0;  // 0: the initial weights
  double best_val_loss = 0.0;
  std::vector<EpochRecord> history;
  bool stopped_early = false;
  std::vector<io::NamedArray> last_state;  // weights after the final epoch
  TrainProgress last;                      // optimizer and early-stopping state to resume from
};

struct TrainHooks {
  Evaluator evaluator;                               // default: evaluate() on the validation set
  std::function<void(const EpochRecord&)> on_epoch;  // progress reporting
  const TrainProgress* resume = nullptr;             // model must already hold the matching weights
  std::function<bool(const EpochRecord&)> stop;      // true ends training after this epoch
};

/// Trainable parameters and their visit paths, in visit order.
std::pair<std::vector<Tensor>, std::vector<std::string>> named_parameters(InceptoFormer& model);

/// Mini-batch Nadam with early stopping on validation loss. On return the
/// model holds the best epoch's weights.
TrainResult train(InceptoFormer& model, const std::vector<const data::Segment*>& train_set,
                  const std::vector<const data::Segment*>& val_set, const TrainConfig& config,
                  const TrainHooks& hooks = {});

/// Batch boundaries for n samples: full batches, with a trailing batch of one
/// merged into the previous batch.
std::vector<std::pair<std::size_t, std::size_t>> batch_ranges(std::size_t n, std::size_t batch_size);

/// wall_ms is the only non-reproducible column, so it is opt-in.
void write_history_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& history,
                       bool with_timing = false);

}  // namespace incepto
