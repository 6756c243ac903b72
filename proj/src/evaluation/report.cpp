#include <algorithm>
#include <fstream>

#include <fmt/format.h>

#include "incepto/errors.hpp"
#include "incepto/evaluation.hpp"

namespace incepto::eval {

namespace {

nlohmann::json matrix_json(const std::vector<std::size_t>& counts, std::size_t n) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < n; ++i) {
    rows.push_back(std::vector<std::size_t>(counts.begin() + static_cast<std::ptrdiff_t>(i * n),
                                            counts.begin() + static_cast<std::ptrdiff_t>((i + 1) * n)));
  }
  return rows;
}

nlohmann::json matrix_json(const std::vector<double>& values, std::size_t n) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < n; ++i) {
    rows.push_back(std::vector<double>(values.begin() + static_cast<std::ptrdiff_t>(i * n),
                                       values.begin() + static_cast<std::ptrdiff_t>((i + 1) * n)));
  }
  return rows;
}

nlohmann::json metrics_json(const Metrics& m) {
  nlohmann::json per_class = nlohmann::json::array();
  for (const auto& c : m.per_class) {
    per_class.push_back({{"tp", c.tp},
                         {"fp", c.fp},
                         {"fn", c.fn},
                         {"tn", c.tn},
                         {"precision", c.precision},
                         {"recall", c.recall},
                         {"f1", c.f1},
                         {"no_support", c.no_support},
                         {"no_predictions", c.no_predictions}});
  }
  return {{"averaging", averaging_name(m.averaging)},
          {"accuracy", m.accuracy},
          {"precision", m.precision},
          {"recall", m.recall},
          {"f1", m.f1},
          {"per_class", per_class}};
}

nlohmann::json summary_json(const Summary& s) { return {{"mean", s.mean}, {"std", s.stdev}}; }

std::string hex64(std::uint64_t v) { return fmt::format("{:016x}", v); }

}  // namespace

nlohmann::json report_json(const CvReport& r) {
  const std::size_t nc = r.model.n_classes;
  nlohmann::json folds = nlohmann::json::array();
  for (const auto& f : r.folds) {
    folds.push_back({{"fold", f.fold},
                     {"seed", f.seed},
                     {"n_train", f.n_train},
                     {"n_val", f.n_val},
                     {"n_synthetic", f.n_synthetic},
                     {"val_class_balance", f.class_balance},
                     {"best_epoch", f.best_epoch},
                     {"epochs_run", f.epochs_run},
                     {"confusion", matrix_json(f.cm.counts, nc)},
                     {"metrics", metrics_json(f.metrics)}});
  }
  std::vector<double> averaged_norm(nc * nc, 0.0);
  for (std::size_t i = 0; i < nc; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < nc; ++j) s += r.averaged[i * nc + j];
    if (s > 0.0)
      for (std::size_t j = 0; j < nc; ++j) averaged_norm[i * nc + j] = r.averaged[i * nc + j] / s;
  }
  nlohmann::json j;
  j["variant"] = r.options.variant;
  j["cv"] = to_json(r.options);
  j["model_config"] = to_json(r.model);
  j["model_config_hash"] = hex64(config_hash(r.model));
  j["train_config"] = to_json(r.train);
  j["folds"] = folds;
  j["aggregate"] = {{"accuracy", summary_json(r.accuracy)},
                    {"precision", summary_json(r.precision)},
                    {"recall", summary_json(r.recall)},
                    {"f1", summary_json(r.f1)}};
  j["pooled"] = {{"confusion", matrix_json(r.pooled.counts, nc)}, {"metrics", metrics_json(r.pooled_metrics)}};
  j["averaged_confusion"] = matrix_json(r.averaged, nc);
  j["averaged_confusion_row_normalized"] = matrix_json(averaged_norm, nc);
  return j;
}

nlohmann::json ablation_json(const std::vector<AblationRow>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows) {
    out.push_back({{"variant", variant_name(r.variant)},
                   {"model_config_hash", hex64(config_hash(r.report.model))},
                   {"accuracy", summary_json(r.report.accuracy)},
                   {"precision", summary_json(r.report.precision)},
                   {"recall", summary_json(r.report.recall)},
                   {"f1", summary_json(r.report.f1)},
                   {"delta_vs_model3",
                    {{"accuracy", r.d_accuracy}, {"precision", r.d_precision}, {"recall", r.d_recall}, {"f1", r.d_f1}}}});
  }
  nlohmann::json j;
  j["rows"] = out;
  if (!rows.empty()) j["cv"] = to_json(rows.front().report.options);
  if (!rows.empty()) j["train_config"] = to_json(rows.front().report.train);
  return j;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

void write_report_csv(const std::filesystem::path& path, const CvReport& r) {
  std::string s = fmt::format("# variant={} averaging={} smote={} unit={} k={} seed={} config_hash={}\n",
                              r.options.variant.empty() ? "-" : r.options.variant, averaging_name(r.options.averaging),
                              smote_mode_name(r.options.smote), data::split_unit_name(r.options.unit), r.options.k,
                              r.options.seed, hex64(config_hash(r.model)));
  s += "fold,accuracy,precision,recall,f1,best_epoch,epochs_run,n_train,n_val,n_synthetic\n";
  for (const auto& f : r.folds) {
    s += fmt::format("{},{:.6f},{:.6f},{:.6f},{:.6f},{},{},{},{},{}\n", f.fold, f.metrics.accuracy, f.metrics.precision,
                     f.metrics.recall, f.metrics.f1, f.best_epoch, f.epochs_run, f.n_train, f.n_val, f.n_synthetic);
  }
  s += fmt::format("mean,{:.6f},{:.6f},{:.6f},{:.6f},,,,,\n", r.accuracy.mean, r.precision.mean, r.recall.mean, r.f1.mean);
  s += fmt::format("std,{:.6f},{:.6f},{:.6f},{:.6f},,,,,\n", r.accuracy.stdev, r.precision.stdev, r.recall.stdev,
                   r.f1.stdev);
  write_text(path, s);
}

void write_ablation_csv(const std::filesystem::path& path, const std::vector<AblationRow>& rows) {
  std::string s = "variant,accuracy,accuracy_std,precision,recall,f1,d_accuracy,d_precision,d_recall,d_f1\n";
  for (const auto& r : rows) {
    s += fmt::format("{},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{:+.6f},{:+.6f},{:+.6f},{:+.6f}\n", variant_name(r.variant),
                     r.report.accuracy.mean, r.report.accuracy.stdev, r.report.precision.mean, r.report.recall.mean,
                     r.report.f1.mean, r.d_accuracy, r.d_precision, r.d_recall, r.d_f1);
  }
  write_text(path, s);
}

std::string confusion_svg(const std::vector<double>& m, std::size_t n, const std::vector<std::string>& labels,
                          const std::string& title) {
  const int cell = 80, left = 110, top = 60;
  const int size = cell * static_cast<int>(n);
  std::string s = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" font-family=\"sans-serif\" "
      "font-size=\"14\">\n",
      left + size + 20, top + size + 60);
  s += fmt::format("<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">{}</text>\n", left + size / 2, title);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double v = std::clamp(m[i * n + j], 0.0, 1.0);
      // white to dark blue
      const int r = static_cast<int>(255 - v * 225), g = static_cast<int>(255 - v * 180), b = static_cast<int>(255 - v * 75);
      const int x = left + static_cast<int>(j) * cell, y = top + static_cast<int>(i) * cell;
      s += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"rgb({},{},{})\" stroke=\"#888\"/>\n", x,
                       y, cell, cell, r, g, b);
      s += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" fill=\"{}\">{:.1f}%</text>\n", x + cell / 2,
                       y + cell / 2 + 5, v > 0.6 ? "white" : "black", v * 100.0);
    }
    const std::string label = i < labels.size() ? labels[i] : std::to_string(i);
    s += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n", left - 8,
                     top + static_cast<int>(i) * cell + cell / 2 + 5, label);
    s += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
                     left + static_cast<int>(i) * cell + cell / 2, top + size + 20, label);
  }
  s += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">predicted</text>\n", left + size / 2, top + size + 45);
  s += fmt::format("<text x=\"20\" y=\"{}\" transform=\"rotate(-90 20 {})\" text-anchor=\"middle\">true</text>\n",
                   top + size / 2, top + size / 2);
  s += "</svg>\n";
  return s;
}

}  // namespace incepto::eval
