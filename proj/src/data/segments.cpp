#include <cmath>
#include <fstream>

#include <spdlog/spdlog.h>

#include "incepto/data.hpp"
#include "incepto/errors.hpp"
#include "incepto/serialize.hpp"

namespace incepto::data {

namespace {

std::size_t stride_for(std::size_t length, double overlap) {
  if (length == 0) throw ConfigError("segment length must be >= 1");
  if (!(overlap >= 0.0 && overlap < 1.0)) throw ConfigError("segment overlap must be in [0, 1)");
  const auto stride = static_cast<std::size_t>(std::llround(static_cast<double>(length) * (1.0 - overlap)));
  return std::max<std::size_t>(stride, 1);
}

}  // namespace

std::size_t segment_count(std::size_t n_timesteps, std::size_t length, double overlap) {
  const std::size_t stride = stride_for(length, overlap);
  return n_timesteps < length ? 0 : (n_timesteps - length) / stride + 1;
}

std::vector<Segment> segment(const SignalRecord& record, std::size_t length, double overlap) {
  const std::size_t stride = stride_for(length, overlap);
  const std::size_t n = segment_count(record.n_timesteps, length, overlap);
  if (n == 0) {
    spdlog::warn("{}: {} timesteps is shorter than one {}-step segment; skipped", record.source_file,
                 record.n_timesteps, length);
    return {};
  }
  const std::size_t channels = record.channels.size();
  const std::string stem = std::filesystem::path(record.source_file).stem().string();
  std::vector<Segment> out;
  out.reserve(n);
  for (std::size_t s = 0; s < n; ++s) {
    const std::size_t start = s * stride;
    Segment seg;
    seg.id = (stem.empty() ? record.subject_id : stem) + "@" + std::to_string(start);
    seg.label = record.label;
    seg.subject_id = record.subject_id;
    seg.values.resize(channels * length);
    for (std::size_t c = 0; c < channels; ++c) {
      std::copy_n(record.channels[c].begin() + static_cast<std::ptrdiff_t>(start), length,
                  seg.values.begin() + static_cast<std::ptrdiff_t>(c * length));
    }
    out.push_back(std::move(seg));
  }
  return out;
}

std::vector<Segment> segment_all(const std::vector<SignalRecord>& records, std::size_t length, double overlap) {
  std::vector<Segment> out;
  for (const SignalRecord& r : records) {
    auto segs = segment(r, length, overlap);
    out.insert(out.end(), std::make_move_iterator(segs.begin()), std::make_move_iterator(segs.end()));
  }
  return out;
}

Tensor to_batch(const std::vector<const Segment*>& segments, std::size_t channels) {
  if (segments.empty()) throw ContractError("to_batch: no segments");
  const std::size_t per = segments.front()->values.size();
  if (per % channels != 0) throw DimensionError("segment size is not a multiple of the channel count");
  std::vector<double> v;
  v.reserve(per * segments.size());
  for (const Segment* s : segments) {
    if (s->values.size() != per) throw DimensionError("segments in a batch differ in size");
    v.insert(v.end(), s->values.begin(), s->values.end());
  }
  return Tensor({segments.size(), channels, per / channels}, std::move(v));
}

std::vector<std::size_t> class_counts(const std::vector<Segment>& segments, int n_classes) {
  std::vector<std::size_t> counts(static_cast<std::size_t>(n_classes), 0);
  for (const Segment& s : segments) {
    if (s.label < 0 || s.label >= n_classes) throw LabelingError("segment " + s.id + " has label " + std::to_string(s.label));
    ++counts[static_cast<std::size_t>(s.label)];
  }
  return counts;
}

SplitUnit parse_split_unit(const std::string& name) {
  if (name == "segment") return SplitUnit::Segment;
  if (name == "subject") return SplitUnit::Subject;
  throw ConfigError("split unit must be 'segment' or 'subject', got '" + name + "'");
}

std::string split_unit_name(SplitUnit unit) { return unit == SplitUnit::Segment ? "segment" : "subject"; }

ChannelScaler ChannelScaler::fit(const std::vector<const Segment*>& segments, std::size_t channels) {
  ChannelScaler sc;
  sc.mean.assign(channels, 0.0);
  sc.stdev.assign(channels, 1.0);
  if (segments.empty()) return sc;
  const std::size_t len = segments.front()->values.size() / channels;
  std::vector<double> sum(channels, 0.0), sq(channels, 0.0);
  for (const Segment* s : segments)
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t t = 0; t < len; ++t) sum[c] += s->values[c * len + t];
  const double n = static_cast<double>(segments.size() * len);
  for (std::size_t c = 0; c < channels; ++c) sc.mean[c] = sum[c] / n;
  for (const Segment* s : segments)
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t t = 0; t < len; ++t) sq[c] += std::pow(s->values[c * len + t] - sc.mean[c], 2);
  for (std::size_t c = 0; c < channels; ++c) {
    const double sd = std::sqrt(sq[c] / n);
    sc.stdev[c] = sd > 1e-12 ? sd : 1.0;
  }
  return sc;
}

void ChannelScaler::apply(std::vector<double>& values) const {
  const std::size_t channels = mean.size();
  const std::size_t len = values.size() / channels;
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t t = 0; t < len; ++t) values[c * len + t] = (values[c * len + t] - mean[c]) / stdev[c];
}

// --- archive -------------------------------------------------------------------------

namespace {

constexpr char kArchiveMagic[8] = {'I', 'N', 'C', 'F', 'S', 'E', 'G', 'S'};
constexpr std::uint32_t kArchiveVersion = 1;

}  // namespace

void write_archive(const std::filesystem::path& path, const std::vector<Segment>& segments, std::size_t channels) {
  const std::size_t per = segments.empty() ? channels * kSegmentLength : segments.front().values.size();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(kArchiveMagic, sizeof kArchiveMagic);
  io::write_u32(out, kArchiveVersion);
  io::write_u32(out, static_cast<std::uint32_t>(channels));
  io::write_u32(out, static_cast<std::uint32_t>(per / channels));
  io::write_u64(out, segments.size());
  for (const Segment& s : segments) {
    if (s.values.size() != per) throw DimensionError("segment " + s.id + " differs in size from the first segment");
    io::write_string(out, s.id);
    io::write_string(out, s.subject_id);
    io::write_u32(out, static_cast<std::uint32_t>(s.label));
    out.put(s.origin == Origin::Synthetic ? 1 : 0);
    out.put(s.parents ? 1 : 0);
    if (s.parents) {
      io::write_string(out, s.parents->first);
      io::write_string(out, s.parents->second);
      io::write_f64(out, s.lambda);
    }
    for (double v : s.values) io::write_f64(out, v);
  }
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<Segment> read_archive(const std::filesystem::path& path, std::size_t* channels_out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char magic[8];
  in.read(magic, sizeof magic);
  if (in.gcount() != 8 || !std::equal(magic, magic + 8, kArchiveMagic)) {
    throw FormatError(path.string() + " is not a segment archive");
  }
  if (io::read_u32(in) != kArchiveVersion) throw FormatError(path.string() + ": unsupported archive version");
  const std::uint32_t channels = io::read_u32(in);
  const std::uint32_t length = io::read_u32(in);
  if (channels == 0 || length == 0) throw FormatError(path.string() + ": empty segment shape");
  const std::uint64_t count = io::read_u64(in);
  std::vector<Segment> out;
  for (std::uint64_t i = 0; i < count; ++i) {
    Segment s;
    s.id = io::read_string(in, 4096);
    s.subject_id = io::read_string(in, 4096);
    s.label = static_cast<int>(io::read_u32(in));
    const int origin = in.get();
    const int has_parents = in.get();
    if (!in || origin > 1 || has_parents > 1) throw FormatError(path.string() + ": corrupt segment header");
    s.origin = origin == 1 ? Origin::Synthetic : Origin::Real;
    if (has_parents == 1) {
      std::string a = io::read_string(in, 4096);
      std::string b = io::read_string(in, 4096);
      s.parents = std::make_pair(std::move(a), std::move(b));
      s.lambda = io::read_f64(in);
    }
    s.values.resize(static_cast<std::size_t>(channels) * length);
    for (double& v : s.values) v = io::read_f64(in);
    out.push_back(std::move(s));
  }
  if (channels_out) *channels_out = channels;
  return out;
}

}  // namespace incepto::data
