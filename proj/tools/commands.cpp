#include <algorithm>
#include <cstdlib>
#include <fstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "cli.hpp"
#include "incepto/checks.hpp"
#include "incepto/errors.hpp"
#include "incepto/rng.hpp"

namespace incepto::cli {

namespace fs = std::filesystem;

namespace {

const std::vector<std::string> kClassNames{"healthy", "H&Y 2", "H&Y 2.5", "H&Y 3"};

fs::path require_out(const Options& o) {
  if (o.out.empty()) throw ConfigError("--out is required");
  return o.out;
}

std::vector<const data::Segment*> ptrs(const std::vector<data::Segment>& segs) {
  std::vector<const data::Segment*> out;
  for (const auto& s : segs) out.push_back(&s);
  return out;
}

void print_histogram(const std::string& title, const std::vector<std::size_t>& counts) {
  std::size_t total = 0, peak = 1;
  for (std::size_t c : counts) {
    total += c;
    peak = std::max(peak, c);
  }
  fmt::print("{} ({} segments)\n", title, total);
  for (std::size_t c = 0; c < counts.size(); ++c) {
    const double share = total ? 100.0 * static_cast<double>(counts[c]) / static_cast<double>(total) : 0.0;
    const std::size_t bar = counts[c] * 40 / peak;
    fmt::print("  {} {:<8} {:>7} {:>6.1f}%  {}\n", c, c < kClassNames.size() ? kClassNames[c] : "", counts[c], share,
               std::string(bar, '#'));
  }
}

std::vector<data::Segment> load_archive(const Options& o, std::size_t& channels) {
  if (o.archive.empty()) throw ConfigError("--archive is required");
  return data::read_archive(o.archive, &channels);
}

ModelConfig model_for_archive(const json& config, std::size_t channels) {
  ModelConfig m = model_from(config);
  if (m.n_signals != channels) {
    throw ConfigError(fmt::format("model.n_signals is {} but the archive has {} channels", m.n_signals, channels));
  }
  return m;
}

io::NamedArray history_array(const std::vector<EpochRecord>& history) {
  io::NamedArray a{"train.history", {history.size(), 5}, {}};
  for (const auto& r : history) a.values.insert(a.values.end(), {double(r.epoch), r.train_loss, r.train_acc, r.val_loss, r.val_acc});
  return a;
}

std::vector<EpochRecord> history_from(const std::vector<io::NamedArray>& arrays) {
  std::vector<EpochRecord> out;
  for (const auto& a : arrays) {
    if (a.name != "train.history") continue;
    for (std::size_t i = 0; i + 5 <= a.values.size(); i += 5) {
      const double* v = &a.values[i];
      out.push_back({static_cast<std::size_t>(v[0]), v[1], v[2], v[3], v[4], 0.0});
    }
  }
  return out;
}

void save_state(const fs::path& path, const ModelConfig& mc, const std::vector<io::NamedArray>& state,
                const std::vector<io::NamedArray>& extra) {
  InceptoFormer m(mc);
  m.load_state(state);
  save_checkpoint(path, m, extra);
}

std::vector<double> row_normalize(const std::vector<double>& m, std::size_t n) {
  std::vector<double> out(m.size(), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += m[i * n + j];
    if (s > 0.0)
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] = m[i * n + j] / s;
  }
  return out;
}

void write_cv_outputs(const fs::path& dir, const eval::CvReport& r, const std::string& title) {
  fs::create_directories(dir);
  eval::write_text(dir / "report.json", eval::report_json(r).dump(2) + "\n");
  eval::write_report_csv(dir / "report.csv", r);
  const std::size_t n = r.model.n_classes;
  eval::write_text(dir / "confusion.svg",
                   eval::confusion_svg(r.pooled.row_normalized(), n, kClassNames, title + " (pooled, row %)"));
  eval::write_text(dir / "confusion_averaged.svg",
                   eval::confusion_svg(row_normalize(r.averaged, n), n, kClassNames, title + " (fold mean, row %)"));
  for (const auto& f : r.folds) {
    const fs::path fd = dir / fmt::format("fold_{:02}", f.fold);
    fs::create_directories(fd);
    write_history_csv(fd / "history.csv", f.history);
    write_history_csv(fd / "timing.csv", f.history, true);
    save_state(fd / "best.ckpt", r.model, f.best_state, scaler_arrays(f.scaler));
  }
}

void print_cv_summary(const eval::CvReport& r) {
  fmt::print("{:>4} {:>9} {:>9} {:>9} {:>9} {:>6}\n", "fold", "accuracy", "precision", "recall", "f1", "best");
  for (const auto& f : r.folds) {
    fmt::print("{:>4} {:>8.2f}% {:>9.4f} {:>9.4f} {:>9.4f} {:>6}\n", f.fold, f.metrics.accuracy, f.metrics.precision,
               f.metrics.recall, f.metrics.f1, f.best_epoch);
  }
  fmt::print("mean {:>8.2f}% {:>9.4f} {:>9.4f} {:>9.4f}\n", r.accuracy.mean, r.precision.mean, r.recall.mean, r.f1.mean);
  fmt::print("std  {:>8.2f}  {:>9.4f} {:>9.4f} {:>9.4f}\n", r.accuracy.stdev, r.precision.stdev, r.recall.stdev,
             r.f1.stdev);
}

void print_ablation(const json& j) {
  fmt::print("{:<8} {:>9} {:>8} {:>9} {:>9} {:>9} {:>9}\n", "variant", "accuracy", "std", "precision", "recall", "f1",
             "d_acc");
  for (const auto& row : j.at("rows")) {
    fmt::print("{:<8} {:>8.2f}% {:>8.2f} {:>9.4f} {:>9.4f} {:>9.4f} {:>+9.2f}\n", row["variant"].get<std::string>(),
               row["accuracy"]["mean"].get<double>(), row["accuracy"]["std"].get<double>(),
               row["precision"]["mean"].get<double>(), row["recall"]["mean"].get<double>(),
               row["f1"]["mean"].get<double>(), row["delta_vs_model3"]["accuracy"].get<double>());
  }
}

}  // namespace

int cmd_synth(const json& config, const Options& o) {
  const fs::path out = require_out(o);
  write_manifest(out / "manifest.json", "synth", config, {});
  const std::uint64_t seed = config.at("seed").get<std::uint64_t>();
  const json& b = config.at("benchmark");
  if (b.at("enabled").get<bool>()) {
    data::BenchmarkSpec spec;
    spec.per_class = b.at("per_class").get<std::size_t>();
    spec.n_channels = b.at("channels").get<std::size_t>();
    spec.noise_std = b.at("noise_std").get<double>();
    spec.seed = seed;
    const auto segs = data::benchmark_segments(spec);
    data::write_archive(out / "benchmark.seg", segs, spec.n_channels);
    fmt::print("wrote {} benchmark segments ({} channels) to {}\n", segs.size(), spec.n_channels,
               (out / "benchmark.seg").string());
    return 0;
  }
  const json& s = config.at("synth");
  data::SynthSpec spec;
  spec.n_subjects_per_class = s.at("subjects_per_class").get<std::size_t>();
  spec.n_timesteps = s.at("timesteps").get<std::size_t>();
  spec.noise_std = s.at("noise_std").get<double>();
  spec.seed = seed;
  const auto ids = data::write_physionet(out, data::synth_dataset(spec));
  fmt::print("wrote {} walks and demographics.txt to {}\n", ids.size(), out.string());
  return 0;
}

int cmd_preprocess(const json& config, const Options& o) {
  fs::path dir = o.data_dir;
  if (dir.empty()) {
    if (const char* env = std::getenv("INCEPTO_DATA_DIR")) dir = env;
  }
  if (dir.empty()) throw ConfigError("no data directory: pass --data or set INCEPTO_DATA_DIR");
  const fs::path demo = o.demographics.empty() ? dir / "demographics.txt" : fs::path(o.demographics);
  const fs::path out = require_out(o);
  write_manifest(out.string() + ".manifest.json", "preprocess", config, {{"data_dir", dir}, {"demographics", demo}});

  const std::uint64_t seed = config.at("seed").get<std::uint64_t>();
  const data::Demographics demographics = data::parse_demographics(demo);
  const auto records = data::load_directory(dir, demographics, o.jobs, config.at("data").at("skip_unlabeled"));
  auto segs = data::segment_all(records);
  const auto counts = data::class_counts(segs);
  print_histogram(fmt::format("{} walks", records.size()), counts);

  const json& sm = config.at("smote");
  if (sm.at("global").get<bool>()) {
    const auto plan = data::make_plan(counts, sm.at("minority").get<std::vector<int>>(), sm.at("k").get<std::size_t>());
    segs = data::smote(segs, plan, derive_seed(seed, 1));
    print_histogram("after global SMOTE", data::class_counts(segs));
  }
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  data::write_archive(out, segs);
  fmt::print("archive: {}\n", out.string());
  return 0;
}

int cmd_train(const json& config, const Options& o) {
  std::size_t channels = 0;
  const auto segs = load_archive(o, channels);
  const fs::path out = require_out(o);
  const ModelConfig mc = model_for_archive(config, channels);
  const TrainConfig tc_base = train_from(config);
  const eval::CvOptions cv = cv_from(config);
  const std::size_t k = config.at("holdout").at("k").get<std::size_t>();
  const std::size_t fold = config.at("holdout").at("fold").get<std::size_t>();
  if (k < 2 || fold >= k) throw ConfigError(fmt::format("holdout needs k >= 2 and fold < k (k={}, fold={})", k, fold));
  fs::create_directories(out);
  write_manifest(out / "manifest.json", "train", config, {{"archive", o.archive}});

  const int n_classes = static_cast<int>(mc.n_classes);
  const auto pool = eval::prepare_pool(segs, channels, cv, n_classes);
  const auto splits = data::stratified_folds(pool, k, cv.unit, derive_seed(cv.seed, 0), n_classes);
  const std::uint64_t fseed = eval::fold_seed(cv.seed, fold);
  const eval::FoldData fd = eval::prepare_fold(pool, splits[fold], channels, cv, fseed, n_classes);

  InceptoFormer model(mc, derive_seed(fseed, 0));
  TrainConfig tc = tc_base;
  tc.seed = derive_seed(fseed, 1);
  auto [params, names] = named_parameters(model);

  TrainHooks hooks;
  TrainProgress progress;
  std::vector<EpochRecord> history;
  if (o.resume) {
    const Checkpoint ck = load_checkpoint_into(out / "last.ckpt", model);
    progress = progress_from_arrays(ck.extra, params, names);
    history = history_from(ck.extra);
    hooks.resume = &progress;
    spdlog::info("resuming after epoch {}", progress.epoch);
  }
  hooks.on_epoch = [](const EpochRecord& r) {
    spdlog::info("epoch {:>4}  train loss {:.5f} acc {:.3f}  val loss {:.5f} acc {:.3f}", r.epoch, r.train_loss,
                 r.train_acc, r.val_loss, r.val_acc);
  };
  TrainResult r = train(model, ptrs(fd.train), ptrs(fd.val), tc, hooks);
  history.insert(history.end(), r.history.begin(), r.history.end());

  auto last_extra = progress_to_arrays(r.last, names);
  for (auto& a : scaler_arrays(fd.scaler)) last_extra.push_back(std::move(a));
  last_extra.push_back(history_array(history));
  save_state(out / "last.ckpt", mc, r.last_state, last_extra);
  save_checkpoint(out / "best.ckpt", model, scaler_arrays(fd.scaler));
  write_history_csv(out / "history.csv", history);
  write_history_csv(out / "timing.csv", r.history, true);

  const EvalResult ev = evaluate(model, ptrs(fd.val), tc.batch_size);
  const json summary{{"best_epoch", r.best_epoch},       {"best_val_loss", r.best_val_loss},
                     {"epochs_completed", r.last.epoch}, {"stopped_early", r.stopped_early},
                     {"val_accuracy", ev.accuracy},      {"n_train", fd.train.size()},
                     {"n_val", fd.val.size()},           {"n_synthetic", fd.n_synthetic}};
  eval::write_text(out / "summary.json", summary.dump(2) + "\n");
  fmt::print("best epoch {} of {}: val loss {:.5f}, val accuracy {:.2f}%\n", r.best_epoch, r.last.epoch,
             r.best_val_loss, 100.0 * ev.accuracy);
  return 0;
}

int cmd_crossval(const json& config, const Options& o) {
  std::size_t channels = 0;
  const auto segs = load_archive(o, channels);
  const fs::path out = require_out(o);
  const ModelConfig mc = model_for_archive(config, channels);
  const TrainConfig tc = train_from(config);
  eval::CvOptions cv = cv_from(config);
  cv.jobs = o.jobs;
  cv.on_epoch = [](std::size_t fold, const EpochRecord& r) {
    spdlog::debug("fold {} epoch {}: val loss {:.5f} acc {:.3f}", fold, r.epoch, r.val_loss, r.val_acc);
  };
  fs::create_directories(out);
  write_manifest(out / "manifest.json", "crossval", config, {{"archive", o.archive}});

  const eval::CvReport r = eval::cross_validate(segs, mc, tc, cv);
  write_cv_outputs(out, r, cv.variant);
  print_cv_summary(r);
  return 0;
}

int cmd_ablate(const json& config, const Options& o) {
  std::size_t channels = 0;
  const auto segs = load_archive(o, channels);
  const fs::path out = require_out(o);
  json base_config = config;
  base_config["cv"]["variant"] = "";
  ModelConfig mc = model_config_from_json(config.at("model"));
  if (mc.n_signals != channels) {
    throw ConfigError(fmt::format("model.n_signals is {} but the archive has {} channels", mc.n_signals, channels));
  }
  const TrainConfig tc = train_from(config);
  eval::CvOptions cv = cv_from(base_config);
  cv.jobs = o.jobs;
  fs::create_directories(out);
  write_manifest(out / "manifest.json", "ablate", config, {{"archive", o.archive}});

  const auto rows = eval::ablate(segs, mc, tc, cv);
  for (const auto& row : rows) write_cv_outputs(out / variant_name(row.variant), row.report, variant_name(row.variant));
  const json j = eval::ablation_json(rows);
  eval::write_text(out / "ablation.json", j.dump(2) + "\n");
  eval::write_ablation_csv(out / "ablation.csv", rows);
  print_ablation(j);
  return 0;
}

int cmd_gradcheck(const json& config, const Options& o) {
  if (!o.corrupt.empty()) {
    const auto& known = differentiable_ops();
    if (std::find(known.begin(), known.end(), o.corrupt) == known.end()) {
      throw ConfigError("--corrupt: unknown op '" + o.corrupt + "'");
    }
    detail::set_backward_corruption(o.corrupt);
  }
  std::string lines;
  if (!o.out.empty()) write_manifest(fs::path(o.out) / "manifest.json", "gradcheck", config, {});
  const auto checks = layer_gradchecks(config.at("seed").get<std::uint64_t>());
  std::size_t failed = 0;
  for (const auto& c : checks) {
    json line{{"check", c.name},
              {"pass", c.report.pass},
              {"max_rel_error", c.report.max_rel_error},
              {"checked", c.report.checked}};
    if (!c.report.pass) {
      ++failed;
      line["param"] = c.report.worst_param;
      line["index"] = c.report.worst_index;
      line["analytic"] = c.report.worst_analytic;
      line["numeric"] = c.report.worst_numeric;
    }
    lines += line.dump() + "\n";
    line["seconds"] = c.seconds;
    fmt::print("{}\n", line.dump());
  }
  if (!o.out.empty()) eval::write_text(fs::path(o.out) / "gradcheck.jsonl", lines);
  detail::set_backward_corruption("");
  if (failed > 0) {
    spdlog::error("{} of {} gradient checks failed", failed, checks.size());
    return 4;
  }
  spdlog::info("all {} gradient checks passed", checks.size());
  return 0;
}

int cmd_report(const Options& o) {
  fs::path path = o.input;
  if (path.empty()) throw ConfigError("report needs an input path");
  if (fs::is_directory(path)) path = fs::exists(path / "ablation.json") ? path / "ablation.json" : path / "report.json";
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  if (j.contains("rows")) {
    print_ablation(j);
    return 0;
  }
  if (!j.contains("folds") || !j.contains("pooled")) throw FormatError(path.string() + " is not a report");
  fmt::print("variant {}  k {}  unit {}  smote {}  averaging {}\n", j["variant"].get<std::string>(),
             j["cv"]["k"].get<std::size_t>(), j["cv"]["cv_unit"].get<std::string>(),
             j["cv"]["smote_mode"].get<std::string>(), j["cv"]["averaging"].get<std::string>());
  for (const auto& f : j["folds"]) {
    fmt::print("fold {:>2}: {:>6.2f}%  f1 {:.4f}  best epoch {}\n", f["fold"].get<std::size_t>(),
               f["metrics"]["accuracy"].get<double>(), f["metrics"]["f1"].get<double>(),
               f["best_epoch"].get<std::size_t>());
  }
  for (const char* m : {"accuracy", "precision", "recall", "f1"}) {
    fmt::print("{:<10} {:.4f} +- {:.4f}\n", m, j["aggregate"][m]["mean"].get<double>(),
               j["aggregate"][m]["std"].get<double>());
  }
  if (!o.svg.empty()) {
    const auto rows = j["pooled"]["confusion"].get<std::vector<std::vector<double>>>();
    std::vector<double> flat;
    for (const auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
    eval::write_text(o.svg, eval::confusion_svg(row_normalize(flat, rows.size()), rows.size(), kClassNames,
                                                j["variant"].get<std::string>() + " (pooled, row %)"));
    fmt::print("heat map: {}\n", o.svg);
  }
  return 0;
}

}  // namespace incepto::cli
