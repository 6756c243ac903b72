#include <algorithm>
#include <atomic>
#include <exception>
#include <map>
#include <thread>

#include <spdlog/spdlog.h>

#include "incepto/errors.hpp"
#include "incepto/evaluation.hpp"
#include "incepto/rng.hpp"

namespace incepto::eval {

SmoteMode parse_smote_mode(const std::string& name) {
  if (name == "per-fold") return SmoteMode::PerFold;
  if (name == "global") return SmoteMode::Global;
  if (name == "off") return SmoteMode::Off;
  throw ConfigError("unknown SMOTE mode '" + name + "' (expected per-fold, global or off)");
}

std::string smote_mode_name(SmoteMode m) {
  switch (m) {
    case SmoteMode::PerFold: return "per-fold";
    case SmoteMode::Global: return "global";
    case SmoteMode::Off: return "off";
  }
  return "?";
}

nlohmann::json to_json(const CvOptions& o) {
  return {{"k", o.k},
          {"cv_unit", data::split_unit_name(o.unit)},
          {"master_seed", o.seed},
          {"smote_mode", smote_mode_name(o.smote)},
          {"smote_k", o.smote_k},
          {"minority_classes", o.minority},
          {"normalize", o.normalize},
          {"averaging", averaging_name(o.averaging)},
          {"variant", o.variant}};
}

namespace {

std::vector<const data::Segment*> ptrs(const std::vector<data::Segment>& segs) {
  std::vector<const data::Segment*> out;
  out.reserve(segs.size());
  for (const auto& s : segs) out.push_back(&s);
  return out;
}

FoldResult run_fold(const std::vector<data::Segment>& pool, const data::FoldSplit& split,
                    const ModelConfig& model_config, const TrainConfig& train_config, const CvOptions& options) {
  FoldResult r;
  r.fold = split.fold_index;
  r.seed = fold_seed(options.seed, split.fold_index);
  r.class_balance = split.class_balance;

  FoldData fd = prepare_fold(pool, split, model_config.n_signals, options, r.seed,
                             static_cast<int>(model_config.n_classes));
  r.n_synthetic = fd.n_synthetic;
  r.n_train = fd.train.size();
  r.n_val = fd.val.size();
  r.scaler = fd.scaler;

  InceptoFormer model(model_config, derive_seed(r.seed, 0));
  TrainConfig tc = train_config;
  tc.seed = derive_seed(r.seed, 1);
  TrainHooks hooks;
  if (options.on_epoch) hooks.on_epoch = [&](const EpochRecord& rec) { options.on_epoch(split.fold_index, rec); };
  const auto train_ptrs = ptrs(fd.train);
  const auto val_ptrs = ptrs(fd.val);
  TrainResult tr = train(model, train_ptrs, val_ptrs, tc, hooks);

  const EvalResult ev = evaluate(model, val_ptrs, tc.batch_size);
  std::vector<int> truth;
  for (const auto& s : fd.val) truth.push_back(s.label);
  r.cm = confusion(truth, ev.predictions, model_config.n_classes);
  r.metrics = metrics(r.cm, options.averaging);
  r.best_epoch = tr.best_epoch;
  r.epochs_run = tr.history.size();
  r.history = std::move(tr.history);
  r.best_state = std::move(tr.best_state);
  spdlog::info("fold {}: accuracy {:.2f}% (best epoch {} of {}, {} train / {} val)", split.fold_index,
               r.metrics.accuracy, r.best_epoch, r.epochs_run, r.n_train, r.n_val);
  return r;
}

}  // namespace

std::uint64_t fold_seed(std::uint64_t master_seed, std::size_t fold) { return derive_seed(master_seed, 1000 + fold); }

std::vector<data::Segment> prepare_pool(const std::vector<data::Segment>& dataset, std::size_t channels,
                                        const CvOptions& options, int n_classes) {
  if (dataset.empty()) throw ConfigError("dataset is empty");
  const bool has_synthetic = std::any_of(dataset.begin(), dataset.end(),
                                         [](const data::Segment& s) { return s.origin == data::Origin::Synthetic; });
  if (has_synthetic && options.smote == SmoteMode::PerFold) {
    throw ConfigError("dataset already contains synthetic segments; per-fold SMOTE needs an un-oversampled archive "
                      "(use the global SMOTE mode)");
  }
  if (options.smote != SmoteMode::Global || has_synthetic) return dataset;
  const auto plan = data::make_plan(data::class_counts(dataset, n_classes), options.minority, options.smote_k);
  data::SmoteOptions so;
  so.channels = channels;
  return data::smote(dataset, plan, derive_seed(options.seed, 1), so);
}

FoldData prepare_fold(const std::vector<data::Segment>& pool, const data::FoldSplit& split, std::size_t channels,
                      const CvOptions& options, std::uint64_t seed, int n_classes) {
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (!index.emplace(pool[i].id, i).second) throw FormatError("duplicate segment id " + pool[i].id);
  }
  FoldData fd;
  fd.train.reserve(split.train_ids.size());
  for (const auto& id : split.train_ids) fd.train.push_back(pool[index.at(id)]);
  for (const auto& id : split.val_ids) fd.val.push_back(pool[index.at(id)]);

  if (options.smote == SmoteMode::PerFold) {
    const auto plan = data::make_plan(data::class_counts(fd.train, n_classes), options.minority, options.smote_k);
    data::SmoteOptions so;
    so.id_prefix = "smote/f" + std::to_string(split.fold_index);
    so.channels = channels;
    fd.train = data::smote(fd.train, plan, derive_seed(seed, 2), so);
  }
  fd.n_synthetic = static_cast<std::size_t>(std::count_if(
      fd.train.begin(), fd.train.end(), [](const data::Segment& s) { return s.origin == data::Origin::Synthetic; }));

  if (options.normalize) {
    fd.scaler = data::ChannelScaler::fit(ptrs(fd.train), channels);
    for (auto& s : fd.train) fd.scaler.apply(s.values);
    for (auto& s : fd.val) fd.scaler.apply(s.values);
  }
  return fd;
}

CvReport cross_validate(const std::vector<data::Segment>& dataset, const ModelConfig& model_config,
                        const TrainConfig& train_config, const CvOptions& options) {
  model_config.validate();
  train_config.validate();
  if (dataset.empty()) throw ConfigError("cross-validation dataset is empty");
  const int n_classes = static_cast<int>(model_config.n_classes);
  const std::vector<data::Segment> source = prepare_pool(dataset, model_config.n_signals, options, n_classes);
  const auto splits = data::stratified_folds(source, options.k, options.unit, derive_seed(options.seed, 0), n_classes);

  CvReport report;
  report.model = model_config;
  report.train = train_config;
  report.options = options;
  report.options.on_epoch = nullptr;
  report.folds.resize(splits.size());

  std::vector<std::exception_ptr> errors(splits.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t f = next++; f < splits.size(); f = next++) {
      try {
        report.folds[f] = run_fold(source, splits[f], model_config, train_config, options);
      } catch (...) {
        errors[f] = std::current_exception();
      }
    }
  };
  const std::size_t jobs = std::clamp<std::size_t>(options.jobs, 1, splits.size());
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (std::size_t j = 0; j < jobs; ++j) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  for (std::size_t f = 0; f < errors.size(); ++f) {
    if (!errors[f]) continue;
    try {
      std::rethrow_exception(errors[f]);
    } catch (const Error& e) {
      throw_error(e.kind(), "fold " + std::to_string(f) + ": " + e.what());
    }
  }

  const std::size_t nc = model_config.n_classes;
  report.pooled = ConfusionMatrix(nc);
  report.averaged.assign(nc * nc, 0.0);
  std::vector<double> acc, pre, rec, f1;
  for (const auto& fr : report.folds) {
    for (std::size_t i = 0; i < nc * nc; ++i) {
      report.pooled.counts[i] += fr.cm.counts[i];
      report.averaged[i] += static_cast<double>(fr.cm.counts[i]);
    }
    acc.push_back(fr.metrics.accuracy);
    pre.push_back(fr.metrics.precision);
    rec.push_back(fr.metrics.recall);
    f1.push_back(fr.metrics.f1);
  }
  for (double& v : report.averaged) v /= static_cast<double>(report.folds.size());
  report.pooled_metrics = metrics(report.pooled, options.averaging);
  report.accuracy = summarize(acc);
  report.precision = summarize(pre);
  report.recall = summarize(rec);
  report.f1 = summarize(f1);
  return report;
}

std::vector<AblationRow> ablate(const std::vector<data::Segment>& dataset, const ModelConfig& base,
                                const TrainConfig& train_config, const CvOptions& options,
                                std::span<const Variant> variants) {
  static constexpr Variant kAll[] = {Variant::Model1, Variant::Model2, Variant::Model3};
  if (variants.empty()) variants = kAll;
  std::vector<AblationRow> rows;
  for (Variant v : variants) {
    CvOptions o = options;
    o.variant = variant_name(v);
    spdlog::info("ablation: {}", o.variant);
    rows.push_back({v, cross_validate(dataset, ablation_variant(base, v), train_config, o)});
  }
  const auto ref = std::find_if(rows.begin(), rows.end(), [](const AblationRow& r) { return r.variant == Variant::Model3; });
  if (ref != rows.end()) {
    const CvReport& m3 = ref->report;
    for (auto& r : rows) {
      r.d_accuracy = r.report.accuracy.mean - m3.accuracy.mean;
      r.d_precision = r.report.precision.mean - m3.precision.mean;
      r.d_recall = r.report.recall.mean - m3.recall.mean;
      r.d_f1 = r.report.f1.mean - m3.f1.mean;
    }
  }
  return rows;
}

}  // namespace incepto::eval
