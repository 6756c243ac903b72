#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "incepto/tensor.hpp"

namespace incepto::data {

inline constexpr std::size_t kSignalChannels = 18;
inline constexpr std::size_t kSegmentLength = 100;
inline constexpr int kNumClasses = 4;

/// One walk: channels[c][t] in file column order.
struct SignalRecord {
  std::string subject_id;
  bool parkinsonian = false;
  double hy_stage = 0.0;
  int label = 0;
  std::vector<std::vector<double>> channels;
  std::size_t n_timesteps = 0;
  std::string source_file;
};

struct SubjectInfo {
  bool parkinsonian = false;
  double hy_stage = 0.0;
  int label = -1;  // -1 when the stage has no severity class
};

using Demographics = std::map<std::string, SubjectInfo>;

/// healthy -> 0, H&Y 2 -> 1, 2.5 -> 2, 3 -> 3; anything else is a LabelingError.
int severity_label(bool parkinsonian, double hy_stage);

/// Delimited table (tab, comma or whitespace) with a header row naming an id
/// column ("ID"/"subject"), a group column ("Group": PD/CO or 1/2) and a stage
/// column ("HoehnYahr"/"H&Y"/"hy_stage").
Demographics parse_demographics(std::istream& in);
Demographics parse_demographics(const std::filesystem::path& path);

/// Physionet walk files are named <subject>_<walk>.txt.
std::string subject_from_filename(const std::filesystem::path& file);

SignalRecord parse_vgrf(std::istream& in, const std::string& subject_id, const Demographics& demographics,
                        const std::string& source_name = "<stream>");
SignalRecord parse_vgrf(const std::filesystem::path& file, const Demographics& demographics);

/// All walk files in `dir` (sorted by name), parsed on up to `jobs` threads.
/// With skip_unlabeled, walks whose subject cannot be labeled are dropped with
/// a warning instead of failing the load.
std::vector<SignalRecord> load_directory(const std::filesystem::path& dir, const Demographics& demographics,
                                         std::size_t jobs = 1, bool skip_unlabeled = false);

enum class Origin { Real, Synthetic };

/// values are channel-major: values[c * length + t].
struct Segment {
  std::string id;
  std::vector<double> values;
  int label = 0;
  std::string subject_id;
  Origin origin = Origin::Real;
  std::optional<std::pair<std::string, std::string>> parents;
  double lambda = 0.0;  // interpolation coefficient, synthetic only
};

std::size_t segment_count(std::size_t n_timesteps, std::size_t length = kSegmentLength, double overlap = 0.5);

/// Fixed windows with stride length*(1-overlap). Records shorter than `length`
/// give no segments and a logged warning.
std::vector<Segment> segment(const SignalRecord& record, std::size_t length = kSegmentLength, double overlap = 0.5);
std::vector<Segment> segment_all(const std::vector<SignalRecord>& records, std::size_t length = kSegmentLength,
                                 double overlap = 0.5);

/// Stacks segments into a [N x channels x length] batch.
Tensor to_batch(const std::vector<const Segment*>& segments, std::size_t channels = kSignalChannels);

// --- oversampling ----------------------------------------------------------------

struct OversamplePlan {
  std::vector<std::size_t> class_counts;
  int majority_class = 0;
  std::vector<std::size_t> n_new;
  std::size_t k_neighbors = 5;
};

std::vector<std::size_t> class_counts(const std::vector<Segment>& segments, int n_classes = kNumClasses);

/// n_new[c] = N_majority - N_c for c in `minority`, 0 otherwise. The majority
/// class is the most populous, ties to the lowest index.
OversamplePlan make_plan(const std::vector<std::size_t>& counts, const std::vector<int>& minority = {0, 3},
                         std::size_t k_neighbors = 5);

struct SmoteOptions {
  std::optional<double> fixed_lambda;  // test hook; otherwise U(0,1)
  std::string id_prefix = "smote";
  std::size_t channels = kSignalChannels;  // for the per-channel z-scoring
};

/// Returns the input segments followed by the synthetic ones.
std::vector<Segment> smote(const std::vector<Segment>& segments, const OversamplePlan& plan, std::uint64_t seed,
                           const SmoteOptions& options = {});

// --- cross-validation folds ------------------------------------------------------

enum class SplitUnit { Segment, Subject };

SplitUnit parse_split_unit(const std::string& name);
std::string split_unit_name(SplitUnit unit);

struct FoldSplit {
  std::size_t fold_index = 0;
  std::vector<std::string> train_ids;
  std::vector<std::string> val_ids;
  std::vector<double> class_balance;  // validation fractions per class
};

/// Validation sets partition the real segments; synthetic segments are always
/// on the training side.
std::vector<FoldSplit> stratified_folds(const std::vector<Segment>& segments, std::size_t k, SplitUnit unit,
                                        std::uint64_t seed, int n_classes = kNumClasses);

// --- synthetic data ------------------------------------------------------------------

struct SynthSpec {
  std::size_t n_subjects_per_class = 5;
  std::size_t n_timesteps = 3000;
  double noise_std = 0.0;
  std::uint64_t seed = 0;
  int n_classes = kNumClasses;
  std::size_t n_channels = kSignalChannels;
};

/// Class c: every channel is A_c sin(2 pi f_c t + phi_ch) plus N(0, noise_std^2).
std::vector<SignalRecord> synth_dataset(const SynthSpec& spec);
double synth_amplitude(int label);
double synth_frequency(int label);  // cycles per timestep

/// Writes <dir>/<subject>_01.txt (time column plus 18 signals, tab separated,
/// 100 Hz) and <dir>/demographics.txt. Subject ids are rewritten to the
/// Physionet letters-then-digits pattern; returns the new ids in input order.
std::vector<std::string> write_physionet(const std::filesystem::path& dir, const std::vector<SignalRecord>& records);

/// Segment-level benchmark for comparing architecture variants. Each segment
/// holds one Gaussian-windowed burst per channel; the class is
/// 2 * (burst is late) + (burst oscillates), so a model needs both where the
/// burst sits and its local shape.
struct BenchmarkSpec {
  std::size_t per_class = 20;
  std::size_t n_channels = 2;
  double noise_std = 0.5;
  std::uint64_t seed = 0;
};

std::vector<Segment> benchmark_segments(const BenchmarkSpec& spec);

// --- normalization ---------------------------------------------------------------------

/// Per-channel standardization fitted on a set of segments.
struct ChannelScaler {
  std::vector<double> mean;
  std::vector<double> stdev;

  static ChannelScaler fit(const std::vector<const Segment*>& segments, std::size_t channels = kSignalChannels);
  void apply(std::vector<double>& values) const;
  bool empty() const { return mean.empty(); }
};

// --- archive -------------------------------------------------------------------------

// Segment archive: "INCFSEGS", u32 version, u32 channels, u32 length, u64 count,
// then per segment: id, subject, i32 label, u8 origin, u8 has_parents,
// [parent a, parent b, f64 lambda], channels*length f64 values.
void write_archive(const std::filesystem::path& path, const std::vector<Segment>& segments,
                   std::size_t channels = kSignalChannels);
std::vector<Segment> read_archive(const std::filesystem::path& path, std::size_t* channels = nullptr);

}  // namespace incepto::data
