#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "incepto/errors.hpp"
#include "incepto/ops.hpp"
#include "incepto/rng.hpp"
#include "incepto/training.hpp"

namespace incepto {

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (patience < 1) throw ConfigError("early_stop_patience must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be > 0");
  if (!(min_delta >= 0.0)) throw ConfigError("early_stop_min_delta must be >= 0");
  if (clip && !(clip_norm > 0.0)) throw ConfigError("clip_norm must be > 0");
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"batch_size", c.batch_size},     {"learning_rate", c.learning_rate},
          {"max_epochs", c.max_epochs},     {"early_stop_patience", c.patience},
          {"early_stop_min_delta", c.min_delta}, {"seed", c.seed},
          {"clip", c.clip},                 {"clip_norm", c.clip_norm}};
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c) {
  if (!j.is_object()) throw ConfigError("training config must be an object");
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "batch_size") c.batch_size = value.get<std::size_t>();
      else if (key == "learning_rate") c.learning_rate = value.get<double>();
      else if (key == "max_epochs") c.max_epochs = value.get<std::size_t>();
      else if (key == "early_stop_patience") c.patience = value.get<std::size_t>();
      else if (key == "early_stop_min_delta") c.min_delta = value.get<double>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "clip") c.clip = value.get<bool>();
      else if (key == "clip_norm") c.clip_norm = value.get<double>();
      else throw ConfigError("unknown training config key '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("training config key '" + key + "': " + e.what());
    }
  }
  c.validate();
  return c;
}

std::vector<std::pair<std::size_t, std::size_t>> batch_ranges(std::size_t n, std::size_t batch_size) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t b = 0; b < n; b += batch_size) out.emplace_back(b, std::min(n, b + batch_size));
  // batchnorm needs two samples; fold a lone trailing sample into the batch before it
  if (out.size() > 1 && out.back().second - out.back().first == 1) {
    out[out.size() - 2].second = n;
    out.pop_back();
  }
  return out;
}

namespace {

std::vector<int> labels_of(const std::vector<const data::Segment*>& segs) {
  std::vector<int> out;
  out.reserve(segs.size());
  for (const auto* s : segs) out.push_back(s->label);
  return out;
}

std::size_t count_correct(const Tensor& logits, std::span<const int> labels) {
  const std::size_t classes = logits.dim(1);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (static_cast<int>(argmax(logits.data().subspan(i * classes, classes))) == labels[i]) ++correct;
  }
  return correct;
}

void clip_global_norm(std::vector<Tensor>& params, double max_norm) {
  double sq = 0.0;
  for (Tensor& p : params)
    for (double g : p.mutable_grad()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm <= max_norm || !std::isfinite(norm)) return;
  const double f = max_norm / norm;
  for (Tensor& p : params)
    for (double& g : p.mutable_grad()) g *= f;
}

}  // namespace

EvalResult evaluate(InceptoFormer& model, const std::vector<const data::Segment*>& segments, std::size_t batch_size) {
  EvalResult r;
  if (segments.empty()) return r;
  const std::size_t channels = model.config().n_signals;
  const nn::ForwardContext ctx{nn::Mode::Eval, nullptr};
  double loss_sum = 0.0;
  std::size_t correct = 0;
  for (auto [lo, hi] : batch_ranges(segments.size(), std::max<std::size_t>(batch_size, 1))) {
    std::vector<const data::Segment*> batch(segments.begin() + static_cast<std::ptrdiff_t>(lo),
                                            segments.begin() + static_cast<std::ptrdiff_t>(hi));
    const auto labels = labels_of(batch);
    const Tensor logits = model.forward(data::to_batch(batch, channels), ctx);
    loss_sum += ops::cross_entropy(logits, labels).item() * static_cast<double>(hi - lo);
    correct += count_correct(logits, labels);
    const std::size_t classes = logits.dim(1);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      r.predictions.push_back(static_cast<int>(argmax(logits.data().subspan(i * classes, classes))));
    }
  }
  r.loss = loss_sum / static_cast<double>(segments.size());
  r.accuracy = static_cast<double>(correct) / static_cast<double>(segments.size());
  return r;
}

TrainResult train(InceptoFormer& model, const std::vector<const data::Segment*>& train_set,
                  const std::vector<const data::Segment*>& val_set, const TrainConfig& config,
                  const TrainHooks& hooks) {
  config.validate();
  if (train_set.empty()) throw ConfigError("training set is empty");
  if (val_set.empty() && !hooks.evaluator) throw ConfigError("validation set is empty");

  auto [params, names] = named_parameters(model);

  TrainProgress p;
  if (hooks.resume) {
    p = *hooks.resume;
    if (p.optimizer.m.size() != params.size()) throw FormatError("optimizer state does not match the model");
  } else {
    p.optimizer = nadam_init(params, config.learning_rate);
    p.best_state = model.state();
    p.best_val_loss = std::numeric_limits<double>::infinity();
    p.patience_ref = std::numeric_limits<double>::infinity();
  }
  p.optimizer.eta = config.learning_rate;

  TrainResult result;
  const std::size_t channels = model.config().n_signals;
  std::vector<std::size_t> order(train_set.size());

  for (std::size_t epoch = p.epoch + 1; epoch <= config.max_epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    // fresh streams per epoch so a resumed run continues the same sequence
    Rng shuffle_rng(derive_seed(config.seed, 2 * epoch));
    Rng dropout_rng(derive_seed(config.seed, 2 * epoch + 1));
    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle_rng.shuffle(order);

    const nn::ForwardContext ctx{nn::Mode::Train, &dropout_rng};
    double loss_sum = 0.0;
    std::size_t correct = 0;
    const auto ranges = batch_ranges(order.size(), config.batch_size);
    for (std::size_t b = 0; b < ranges.size(); ++b) {
      const auto [lo, hi] = ranges[b];
      std::vector<const data::Segment*> batch;
      for (std::size_t i = lo; i < hi; ++i) batch.push_back(train_set[order[i]]);
      const auto labels = labels_of(batch);
      for (Tensor& t : params) t.zero_grad();
      Tape tape;
      double batch_loss;
      {
        TapeGuard guard(tape);
        const Tensor logits = model.forward(data::to_batch(batch, channels), ctx);
        const Tensor loss = ops::cross_entropy(logits, labels);
        batch_loss = loss.item();
        if (!std::isfinite(batch_loss)) {
          throw NumericalError(fmt::format("non-finite training loss at epoch {} batch {}", epoch, b));
        }
        correct += count_correct(logits, labels);
        tape.backward(loss);
      }
      if (config.clip) clip_global_norm(params, config.clip_norm);
      nadam_apply(params, p.optimizer, names);
      loss_sum += batch_loss * static_cast<double>(hi - lo);
    }

    const EvalResult val = hooks.evaluator ? hooks.evaluator(model, epoch) : evaluate(model, val_set, config.batch_size);
    if (!std::isfinite(val.loss)) throw NumericalError(fmt::format("non-finite validation loss at epoch {}", epoch));

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(train_set.size());
    rec.train_acc = static_cast<double>(correct) / static_cast<double>(train_set.size());
    rec.val_loss = val.loss;
    rec.val_acc = val.accuracy;
    rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
    result.history.push_back(rec);
    spdlog::debug("epoch {}: train_loss {:.6f} train_acc {:.4f} val_loss {:.6f} val_acc {:.4f}", epoch,
                  rec.train_loss, rec.train_acc, rec.val_loss, rec.val_acc);
    if (hooks.on_epoch) hooks.on_epoch(rec);

    // The returned weights are the strict minimum; patience only counts
    // improvements larger than min_delta.
    p.epoch = epoch;
    if (val.loss < p.best_val_loss) {
      p.best_val_loss = val.loss;
      p.best_epoch = epoch;
      p.best_state = model.state();
    }
    if (val.loss < p.patience_ref - config.min_delta) {
      p.patience_ref = val.loss;
      p.stale = 0;
    } else if (++p.stale >= config.patience) {
      result.stopped_early = true;
      break;
    }
    if (hooks.stop && hooks.stop(rec)) break;
  }
  result.best_state = p.best_state;
  result.best_epoch = p.best_epoch;
  result.best_val_loss = p.best_val_loss;
  result.last = std::move(p);
  result.last_state = model.state();
  model.load_state(result.best_state);
  return result;
}

std::pair<std::vector<Tensor>, std::vector<std::string>> named_parameters(InceptoFormer& model) {
  std::vector<Tensor> params;
  std::vector<std::string> names;
  model.visit([&](const std::string& path, Tensor& t, bool trainable) {
    if (!trainable) return;
    params.push_back(t);
    names.push_back(path);
  });
  return {std::move(params), std::move(names)};
}

std::vector<io::NamedArray> progress_to_arrays(const TrainProgress& p, std::span<const std::string> names) {
  auto out = nadam_to_arrays(p.optimizer, names);
  out.push_back({"train.progress", {5},
                 {static_cast<double>(p.epoch), static_cast<double>(p.best_epoch), p.best_val_loss, p.patience_ref,
                  static_cast<double>(p.stale)}});
  for (const auto& a : p.best_state) out.push_back({"best." + a.name, a.shape, a.values});
  return out;
}

TrainProgress progress_from_arrays(const std::vector<io::NamedArray>& arrays, std::span<const Tensor> params,
                                   std::span<const std::string> names) {
  TrainProgress p;
  p.optimizer = nadam_from_arrays(arrays, params, names);
  bool found = false;
  for (const auto& a : arrays) {
    if (a.name == "train.progress" && a.values.size() == 5) {
      p.epoch = static_cast<std::size_t>(a.values[0]);
      p.best_epoch = static_cast<std::size_t>(a.values[1]);
      p.best_val_loss = a.values[2];
      p.patience_ref = a.values[3];
      p.stale = static_cast<std::size_t>(a.values[4]);
      found = true;
    } else if (a.name.starts_with("best.")) {
      p.best_state.push_back({a.name.substr(5), a.shape, a.values});
    }
  }
  if (!found) throw FormatError("checkpoint has no training progress record");
  return p;
}

void write_history_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& history, bool with_timing) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "epoch,train_loss,train_acc,val_loss,val_acc" << (with_timing ? ",wall_ms\n" : "\n");
  for (const auto& r : history) {
    out << fmt::format("{},{:.17g},{:.17g},{:.17g},{:.17g}", r.epoch, r.train_loss, r.train_acc, r.val_loss, r.val_acc);
    out << (with_timing ? fmt::format(",{:.3f}\n", r.wall_ms) : "\n");
  }
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace incepto
