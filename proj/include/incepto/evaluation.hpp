#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "incepto/data.hpp"
#include "incepto/model.hpp"
#include "incepto/training.hpp"

namespace incepto::eval {

/// counts[i * n + j]: samples of true class i predicted as j.
struct ConfusionMatrix {
  std::size_t n_classes = 0;
  std::vector<std::size_t> counts;

  explicit ConfusionMatrix(std::size_t classes = data::kNumClasses) : n_classes(classes), counts(classes * classes, 0) {}

  std::size_t at(std::size_t truth, std::size_t pred) const { return counts[truth * n_classes + pred]; }
  std::size_t total() const;
  std::size_t row_sum(std::size_t c) const;
  std::size_t col_sum(std::size_t c) const;
  std::size_t trace() const;
  /// Rows divided by their sums; empty rows stay zero.
  std::vector<double> row_normalized() const;
};

ConfusionMatrix confusion(std::span<const int> truth, std::span<const int> predicted,
                          std::size_t n_classes = data::kNumClasses);

enum class Averaging { Macro, Weighted };

Averaging parse_averaging(const std::string& name);
std::string averaging_name(Averaging a);

struct ClassMetrics {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  bool no_support = false;      // no true samples: recall reported as 0
  bool no_predictions = false;  // never predicted: precision reported as 0
};

struct Metrics {
  std::vector<ClassMetrics> per_class;
  Averaging averaging = Averaging::Macro;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double accuracy = 0.0;  // percent
};

/// One-vs-rest counts per class; aggregates are unweighted (macro) or
/// support-weighted means of the per-class values.
Metrics metrics(const ConfusionMatrix& cm, Averaging averaging = Averaging::Macro);

double f1_score(double precision, double recall);

// --- cross-validation --------------------------------------------------------------

enum class SmoteMode { PerFold, Global, Off };

SmoteMode parse_smote_mode(const std::string& name);
std::string smote_mode_name(SmoteMode m);

struct CvOptions {
  std::size_t k = 10;
  data::SplitUnit unit = data::SplitUnit::Segment;
  std::uint64_t seed = 0;
  SmoteMode smote = SmoteMode::PerFold;
  std::size_t smote_k = 5;
  std::vector<int> minority{0, 3};
  bool normalize = true;  // per-channel standardization fitted on each training side
  std::size_t jobs = 1;
  Averaging averaging = Averaging::Macro;
  std::string variant;  // label only
  std::function<void(std::size_t fold, const EpochRecord&)> on_epoch;
};

nlohmann::json to_json(const CvOptions& options);

struct FoldResult {
  std::size_t fold = 0;
  std::uint64_t seed = 0;
  ConfusionMatrix cm;
  Metrics metrics;
  std::size_t best_epoch = 0;
  std::size_t epochs_run = 0;
  std::size_t n_train = 0;
  std::size_t n_val = 0;
  std::size_t n_synthetic = 0;
  std::vector<double> class_balance;
  std::vector<EpochRecord> history;
  std::vector<io::NamedArray> best_state;
  data::ChannelScaler scaler;
};

struct Summary {
  double mean = 0.0;
  double stdev = 0.0;  // sample standard deviation across folds
};

struct CvReport {
  ModelConfig model;
  TrainConfig train;
  CvOptions options;
  std::vector<FoldResult> folds;
  ConfusionMatrix pooled;                 // sum over folds
  std::vector<double> averaged;           // element-wise mean of the fold matrices
  Metrics pooled_metrics;
  Summary accuracy, precision, recall, f1;
};

/// k-fold cross-validation: each fold oversamples its training side (per-fold
/// mode), trains a fresh model and evaluates on the held-out real segments.
/// Folds run on up to options.jobs threads; results do not depend on it.
CvReport cross_validate(const std::vector<data::Segment>& dataset, const ModelConfig& model_config,
                        const TrainConfig& train_config, const CvOptions& options);

Summary summarize(std::span<const double> values);

/// Seed of fold f: its model, training and SMOTE streams derive from it.
std::uint64_t fold_seed(std::uint64_t master_seed, std::size_t fold);

/// The pool folds are cut from: the dataset itself, or with global SMOTE the
/// oversampled dataset. Rejects per-fold SMOTE on an already oversampled set.
std::vector<data::Segment> prepare_pool(const std::vector<data::Segment>& dataset, std::size_t channels,
                                        const CvOptions& options, int n_classes = data::kNumClasses);

struct FoldData {
  std::vector<data::Segment> train, val;
  data::ChannelScaler scaler;  // empty unless options.normalize
  std::size_t n_synthetic = 0;
};

/// Materializes one split: per-fold SMOTE on the training side, then the
/// scaler fitted on the training side and applied to both.
FoldData prepare_fold(const std::vector<data::Segment>& pool, const data::FoldSplit& split, std::size_t channels,
                      const CvOptions& options, std::uint64_t seed, int n_classes = data::kNumClasses);

// --- ablation ----------------------------------------------------------------

struct AblationRow {
  Variant variant;
  CvReport report;
  // differences against model3 in percentage points (accuracy) or raw units
  double d_accuracy = 0.0, d_precision = 0.0, d_recall = 0.0, d_f1 = 0.0;
};

/// Cross-validates each variant on identical fold splits.
std::vector<AblationRow> ablate(const std::vector<data::Segment>& dataset, const ModelConfig& base,
                                const TrainConfig& train_config, const CvOptions& options,
                                std::span<const Variant> variants = {});

// --- reports -----------------------------------------------------------------------

/// Deterministic report tree (no timings or timestamps).
nlohmann::json report_json(const CvReport& report);
nlohmann::json ablation_json(const std::vector<AblationRow>& rows);
void write_report_csv(const std::filesystem::path& path, const CvReport& report);
void write_ablation_csv(const std::filesystem::path& path, const std::vector<AblationRow>& rows);
/// Heat map of a row-normalized matrix as a standalone SVG document.
std::string confusion_svg(const std::vector<double>& row_normalized, std::size_t n_classes,
                          const std::vector<std::string>& labels, const std::string& title);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace incepto::eval
