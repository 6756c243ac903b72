#include <cmath>
#include <fstream>
#include <numbers>

#include <fmt/format.h>

#include "incepto/data.hpp"
#include "incepto/errors.hpp"
#include "incepto/rng.hpp"

namespace incepto::data {

double synth_amplitude(int label) { return 1.0 + 0.5 * label; }

// 1.0, 1.2, 1.4, ... cycles per 100 steps: roughly a gait cadence at 100 Hz.
double synth_frequency(int label) { return (1.0 + 0.2 * label) / 100.0; }

std::vector<SignalRecord> synth_dataset(const SynthSpec& spec) {
  if (spec.n_timesteps < kSegmentLength) {
    throw ConfigError("synthetic walks need n_timesteps >= " + std::to_string(kSegmentLength));
  }
  if (spec.n_classes < 1 || spec.n_channels < 1) throw ConfigError("synthetic spec needs classes and channels");
  if (!(spec.noise_std >= 0.0)) throw ConfigError("noise_std must be >= 0");
  Rng rng(spec.seed);
  std::vector<SignalRecord> out;
  for (int c = 0; c < spec.n_classes; ++c) {
    const double amp = synth_amplitude(c);
    const double freq = synth_frequency(c);
    for (std::size_t s = 0; s < spec.n_subjects_per_class; ++s) {
      SignalRecord r;
      r.subject_id = "SYN_c" + std::to_string(c) + "_s" + std::to_string(s);
      r.parkinsonian = c != 0;
      r.hy_stage = c == 0 ? 0.0 : c == 1 ? 2.0 : c == 2 ? 2.5 : 3.0;
      r.label = c;
      r.n_timesteps = spec.n_timesteps;
      r.source_file = "synthetic/" + r.subject_id + "_01";
      r.channels.assign(spec.n_channels, std::vector<double>(spec.n_timesteps));
      for (std::size_t ch = 0; ch < spec.n_channels; ++ch) {
        const double phase = 2.0 * std::numbers::pi * static_cast<double>(ch) / static_cast<double>(spec.n_channels);
        for (std::size_t t = 0; t < spec.n_timesteps; ++t) {
          double v = amp * std::sin(2.0 * std::numbers::pi * freq * static_cast<double>(t) + phase);
          if (spec.noise_std > 0.0) v += spec.noise_std * rng.normal();
          r.channels[ch][t] = v;
        }
      }
      out.push_back(std::move(r));
    }
  }
  return out;
}

std::vector<std::string> write_physionet(const std::filesystem::path& dir, const std::vector<SignalRecord>& records) {
  static const char* kPrefix[] = {"SyCo", "SyPa", "SyPb", "SyPc"};
  std::filesystem::create_directories(dir);
  std::vector<std::string> ids;
  std::vector<std::size_t> per_class(kNumClasses, 0);
  std::string demo = "ID\tGroup\tHoehnYahr\n";
  for (const SignalRecord& r : records) {
    if (r.channels.size() != kSignalChannels) {
      throw ConfigError("Physionet files need " + std::to_string(kSignalChannels) + " channels, record " +
                        r.subject_id + " has " + std::to_string(r.channels.size()));
    }
    if (r.label < 0 || r.label >= kNumClasses) throw LabelingError("record " + r.subject_id + " has no severity class");
    const std::string id = fmt::format("{}{:02}", kPrefix[r.label], ++per_class[static_cast<std::size_t>(r.label)]);
    ids.push_back(id);
    demo += fmt::format("{}\t{}\t{}\n", id, r.parkinsonian ? "PD" : "CO", r.hy_stage);

    std::string body;
    for (std::size_t t = 0; t < r.n_timesteps; ++t) {
      body += fmt::format("{:.2f}", static_cast<double>(t) / 100.0);
      for (const auto& ch : r.channels) body += fmt::format("\t{:.9g}", ch[t]);
      body += '\n';
    }
    const auto path = dir / (id + "_01.txt");
    std::ofstream out(path, std::ios::binary);
    out << body;
    if (!out) throw IoError("failed writing " + path.string());
  }
  std::ofstream out(dir / "demographics.txt", std::ios::binary);
  out << demo;
  if (!out) throw IoError("failed writing " + (dir / "demographics.txt").string());
  return ids;
}

std::vector<Segment> benchmark_segments(const BenchmarkSpec& spec) {
  if (spec.per_class < 1 || spec.n_channels < 1) throw ConfigError("benchmark spec needs segments and channels");
  if (!(spec.noise_std >= 0.0)) throw ConfigError("noise_std must be >= 0");
  Rng rng(spec.seed);
  std::vector<Segment> out;
  const std::size_t len = kSegmentLength;
  for (int c = 0; c < kNumClasses; ++c) {
    const bool late = c / 2 == 1, oscillates = c % 2 == 1;
    for (std::size_t i = 0; i < spec.per_class; ++i) {
      Segment s;
      s.id = fmt::format("bench_c{}_{:04}", c, i);
      s.subject_id = s.id;
      s.label = c;
      s.values.assign(spec.n_channels * len, 0.0);
      // centre at 30 or 70 with +-6 jitter, width sd 4, period-4 carrier when oscillating
      const double centre = (late ? 70.0 : 30.0) + (rng.uniform() - 0.5) * 12.0;
      for (std::size_t ch = 0; ch < spec.n_channels; ++ch) {
        const double amp = 0.8 + 0.4 * rng.uniform();
        for (std::size_t t = 0; t < len; ++t) {
          const double u = static_cast<double>(t) - centre;
          double v = amp * std::exp(-u * u / 32.0);
          if (oscillates) v *= std::cos(std::numbers::pi / 2.0 * u);
          s.values[ch * len + t] = v + spec.noise_std * rng.normal();
        }
      }
      out.push_back(std::move(s));
    }
  }
  return out;
}

}  // namespace incepto::data
