#include <fstream>
#include <iostream>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "cli.hpp"
#include "incepto/errors.hpp"
#include "incepto/serialize.hpp"

using namespace incepto;
using namespace incepto::cli;

namespace {

// Exit codes: 0 ok, 1 other, 2 config, 3 data format, 4 numerical.
int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config:
    case ErrorKind::Split:
    case ErrorKind::Oversampling: return 2;
    case ErrorKind::Format:
    case ErrorKind::Labeling: return 3;
    case ErrorKind::Numerical: return 4;
    default: return 1;
  }
}

// Channel count from the archive header, so the model default can follow it.
std::size_t archive_channels(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open archive " + path);
  char magic[8] = {};
  in.read(magic, 8);
  if (!in || std::string(magic, 8) != "INCFSEGS") throw FormatError(path + " is not a segment archive");
  io::read_u32(in);
  return io::read_u32(in);
}

void add_model_flags(CLI::App* app, Overrides& f) {
  f.add<std::size_t>(app, "--filters", "/model/filters_per_stream", "filters per inception stream");
  f.add<std::size_t>(app, "--depth", "/model/cascade_depth", "inception blocks per signal");
  f.add<std::size_t>(app, "--reduced-dim", "/model/reduced_dim", "per-signal embedding width");
  f.add<std::vector<std::size_t>>(app, "--classifier", "/model/classifier_widths", "hidden classifier widths");
  f.add<double>(app, "--dropout", "/model/dropout", "classifier dropout rate");
  f.add<double>(app, "--pe-scale", "/model/pe_scale", "positional encoding scale");
  f.add<std::size_t>(app, "--signals", "/model/n_signals", "input signals (defaults to the archive's channels)");
}

void add_train_flags(CLI::App* app, Overrides& f) {
  f.add<std::size_t>(app, "--batch-size", "/train/batch_size", "mini-batch size");
  f.add<double>(app, "--lr", "/train/learning_rate", "Nadam learning rate");
  f.add<std::size_t>(app, "--epochs", "/train/max_epochs", "maximum epochs");
  f.add<std::size_t>(app, "--patience", "/train/early_stop_patience", "early stopping patience");
  f.add<double>(app, "--min-delta", "/train/early_stop_min_delta", "minimum validation loss improvement");
  f.add_switch(app, "--clip", "/train/clip", true, "clip gradients to global norm train.clip_norm");
}

void add_cv_flags(CLI::App* app, Overrides& f, bool with_variant) {
  f.add<std::size_t>(app, "-k,--folds", "/cv/k", "number of folds");
  f.add<std::string>(app, "--unit", "/cv/unit", "fold unit: segment or subject");
  f.add<std::string>(app, "--smote", "/cv/smote", "per-fold, global or off");
  f.add<std::size_t>(app, "--smote-k", "/cv/smote_k", "SMOTE nearest neighbours");
  f.add<std::string>(app, "--averaging", "/cv/averaging", "macro or weighted");
  f.add_switch(app, "--no-normalize", "/cv/normalize", false, "skip per-channel standardization");
  if (with_variant) f.add<std::string>(app, "--variant", "/cv/variant", "model1, model2 or model3");
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("incepto"));
  CLI::App app{"InceptoFormer gait severity pipeline"};
  app.require_subcommand(1);
  Options o;
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn or error");

  Overrides f_synth, f_pre, f_train, f_cv, f_abl, f_grad;
  auto seed_flag = [](CLI::App* sub, Overrides& f) { f.add<std::uint64_t>(sub, "--seed", "/seed", "master seed"); };
  auto common = [&](CLI::App* sub) { sub->add_option("--config", o.config_file, "JSON config file or manifest"); };

  CLI::App* synth = app.add_subcommand("synth", "write a synthetic dataset");
  common(synth);
  seed_flag(synth, f_synth);
  synth->add_option("--out", o.out, "output directory")->required();
  f_synth.add<std::size_t>(synth, "--subjects", "/synth/subjects_per_class", "subjects per class");
  f_synth.add<std::size_t>(synth, "--timesteps", "/synth/timesteps", "samples per walk (100 Hz)");
  f_synth.add<double>(synth, "--noise", "/synth/noise_std", "Gaussian noise sd (also the benchmark noise)");
  f_synth.add_switch(synth, "--benchmark", "/benchmark/enabled", true, "write the segment-level ablation benchmark");
  f_synth.add<std::size_t>(synth, "--per-class", "/benchmark/per_class", "benchmark segments per class");
  f_synth.add<std::size_t>(synth, "--channels", "/benchmark/channels", "benchmark channels");

  CLI::App* pre = app.add_subcommand("preprocess", "parse, segment and label walks into an archive");
  common(pre);
  seed_flag(pre, f_pre);
  pre->add_option("--data", o.data_dir, "walk directory (default $INCEPTO_DATA_DIR)");
  pre->add_option("--demographics", o.demographics, "demographics table (default <data>/demographics.txt)");
  pre->add_option("--out", o.out, "archive path")->required();
  pre->add_option("--jobs", o.jobs, "parser threads");
  f_pre.add_switch(pre, "--smote-global", "/smote/global", true, "oversample the whole pool before any split");
  f_pre.add<std::size_t>(pre, "--smote-k", "/smote/k", "SMOTE nearest neighbours");
  f_pre.add_switch(pre, "--skip-unlabeled", "/data/skip_unlabeled", true, "drop walks whose subject has no class");

  CLI::App* tr = app.add_subcommand("train", "train on one stratified holdout split");
  CLI::App* cv = app.add_subcommand("crossval", "k-fold cross-validation");
  CLI::App* abl = app.add_subcommand("ablate", "cross-validate model1, model2 and model3 on identical folds");
  for (auto [sub, f] : {std::pair{tr, &f_train}, std::pair{cv, &f_cv}, std::pair{abl, &f_abl}}) {
    common(sub);
    seed_flag(sub, *f);
    sub->add_option("--archive", o.archive, "segment archive")->required();
    sub->add_option("--out", o.out, "output directory")->required();
    sub->add_flag("--tiny", o.tiny, "small model preset for desk-scale runs");
    add_model_flags(sub, *f);
    add_train_flags(sub, *f);
    add_cv_flags(sub, *f, sub != abl);
  }
  tr->add_option("--jobs", o.jobs, "unused; accepted for symmetry");
  cv->add_option("--jobs", o.jobs, "folds trained in parallel");
  abl->add_option("--jobs", o.jobs, "folds trained in parallel");
  f_train.add<std::size_t>(tr, "--holdout-k", "/holdout/k", "split into k folds and validate on one");
  f_train.add<std::size_t>(tr, "--fold", "/holdout/fold", "validation fold index");
  tr->add_flag("--resume", o.resume, "continue from <out>/last.ckpt");

  CLI::App* grad = app.add_subcommand("gradcheck", "finite-difference gradient checks per layer and tiny model");
  common(grad);
  seed_flag(grad, f_grad);
  grad->add_option("--corrupt", o.corrupt, "test hook: scale one op's backward by 1.5");
  grad->add_option("--out", o.out, "optional directory for gradcheck.jsonl and the manifest");

  CLI::App* rep = app.add_subcommand("report", "summarize a report or ablation JSON");
  rep->add_option("input", o.input, "report.json, ablation.json or a directory holding one")->required();
  rep->add_option("--svg", o.svg, "write the pooled heat map here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    spdlog::set_level(spdlog::level::from_str(log_level));
    const json seed_only{{"seed", 0}};
    const json learn{{"seed", 0},
                     {"model", default_model_json()},
                     {"train", default_train_json()},
                     {"cv", default_cv_json()}};
    if (synth->parsed()) {
      json d = seed_only;
      d["synth"] = {{"subjects_per_class", 5}, {"timesteps", 3000}, {"noise_std", 0.0}};
      d["benchmark"] = {{"enabled", false}, {"per_class", 20}, {"channels", 2}, {"noise_std", 0.5}};
      json c = resolve_config("synth", d, o, f_synth);
      // --noise drives whichever generator runs
      if (c["benchmark"]["enabled"].get<bool>() && synth->count("--noise")) {
        c["benchmark"]["noise_std"] = c["synth"]["noise_std"];
      }
      return cmd_synth(c, o);
    }
    if (pre->parsed()) {
      json d = seed_only;
      d["data"] = {{"skip_unlabeled", false}};
      d["smote"] = {{"global", false}, {"k", 5}, {"minority", {0, 3}}};
      return cmd_preprocess(resolve_config("preprocess", d, o, f_pre), o);
    }
    if (tr->parsed() || cv->parsed() || abl->parsed()) {
      json d = learn;
      d["model"]["n_signals"] = archive_channels(o.archive);
      if (tr->parsed()) {
        d["holdout"] = {{"k", 5}, {"fold", 0}};
        return cmd_train(resolve_config("train", d, o, f_train), o);
      }
      if (cv->parsed()) return cmd_crossval(resolve_config("crossval", d, o, f_cv), o);
      return cmd_ablate(resolve_config("ablate", d, o, f_abl), o);
    }
    if (grad->parsed()) return cmd_gradcheck(resolve_config("gradcheck", seed_only, o, f_grad), o);
    if (rep->parsed()) return cmd_report(o);
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return exit_code(e.kind());
  } catch (const nlohmann::json::exception& e) {
    spdlog::error("config: {}", e.what());
    return 2;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 1;
}
