#include <cmath>
#include <numeric>

#include "incepto/errors.hpp"
#include "incepto/evaluation.hpp"

namespace incepto::eval {

std::size_t ConfusionMatrix::total() const { return std::accumulate(counts.begin(), counts.end(), std::size_t{0}); }

std::size_t ConfusionMatrix::row_sum(std::size_t c) const {
  std::size_t s = 0;
  for (std::size_t j = 0; j < n_classes; ++j) s += at(c, j);
  return s;
}

std::size_t ConfusionMatrix::col_sum(std::size_t c) const {
  std::size_t s = 0;
  for (std::size_t i = 0; i < n_classes; ++i) s += at(i, c);
  return s;
}

std::size_t ConfusionMatrix::trace() const {
  std::size_t s = 0;
  for (std::size_t i = 0; i < n_classes; ++i) s += at(i, i);
  return s;
}

std::vector<double> ConfusionMatrix::row_normalized() const {
  std::vector<double> out(counts.size(), 0.0);
  for (std::size_t i = 0; i < n_classes; ++i) {
    const std::size_t r = row_sum(i);
    if (r == 0) continue;
    for (std::size_t j = 0; j < n_classes; ++j) {
      out[i * n_classes + j] = static_cast<double>(at(i, j)) / static_cast<double>(r);
    }
  }
  return out;
}

ConfusionMatrix confusion(std::span<const int> truth, std::span<const int> predicted, std::size_t n_classes) {
  if (truth.size() != predicted.size()) {
    throw DimensionError("confusion: " + std::to_string(truth.size()) + " true labels but " +
                         std::to_string(predicted.size()) + " predictions");
  }
  ConfusionMatrix cm(n_classes);
  const int n = static_cast<int>(n_classes);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= n || predicted[i] < 0 || predicted[i] >= n) {
      throw IndexError("confusion: label pair (" + std::to_string(truth[i]) + ", " + std::to_string(predicted[i]) +
                       ") at position " + std::to_string(i) + " outside [0, " + std::to_string(n) + ")");
    }
    ++cm.counts[static_cast<std::size_t>(truth[i]) * n_classes + static_cast<std::size_t>(predicted[i])];
  }
  return cm;
}

Averaging parse_averaging(const std::string& name) {
  if (name == "macro") return Averaging::Macro;
  if (name == "weighted") return Averaging::Weighted;
  throw ConfigError("unknown averaging mode '" + name + "' (expected macro or weighted)");
}

std::string averaging_name(Averaging a) { return a == Averaging::Macro ? "macro" : "weighted"; }

double f1_score(double precision, double recall) {
  const double s = precision + recall;
  return s == 0.0 ? 0.0 : 2.0 * precision * recall / s;
}

Metrics metrics(const ConfusionMatrix& cm, Averaging averaging) {
  const std::size_t total = cm.total();
  if (total == 0) throw ContractError("metrics: confusion matrix is empty");
  Metrics m;
  m.averaging = averaging;
  for (std::size_t c = 0; c < cm.n_classes; ++c) {
    ClassMetrics k;
    k.tp = cm.at(c, c);
    k.fp = cm.col_sum(c) - k.tp;
    k.fn = cm.row_sum(c) - k.tp;
    k.tn = total - k.tp - k.fp - k.fn;
    k.no_predictions = k.tp + k.fp == 0;
    k.no_support = k.tp + k.fn == 0;
    k.precision = k.no_predictions ? 0.0 : static_cast<double>(k.tp) / static_cast<double>(k.tp + k.fp);
    k.recall = k.no_support ? 0.0 : static_cast<double>(k.tp) / static_cast<double>(k.tp + k.fn);
    k.f1 = f1_score(k.precision, k.recall);
    m.per_class.push_back(k);
  }
  for (std::size_t c = 0; c < cm.n_classes; ++c) {
    const double w = averaging == Averaging::Macro
                         ? 1.0 / static_cast<double>(cm.n_classes)
                         : static_cast<double>(cm.row_sum(c)) / static_cast<double>(total);
    m.precision += w * m.per_class[c].precision;
    m.recall += w * m.per_class[c].recall;
    m.f1 += w * m.per_class[c].f1;
  }
  m.accuracy = static_cast<double>(cm.trace()) / static_cast<double>(total) * 100.0;
  return m;
}

Summary summarize(std::span<const double> values) {
  Summary s;
  if (values.empty()) return s;
  const double n = static_cast<double>(values.size());
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.stdev = std::sqrt(ss / (n - 1.0));
  }
  return s;
}

}  // namespace incepto::eval
