#include <algorithm>
#include <atomic>
#include <cctype>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <regex>
#include <sstream>
#include <thread>

#include <spdlog/spdlog.h>

#include "incepto/data.hpp"
#include "incepto/errors.hpp"

namespace incepto::data {

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

// Tabs and commas keep empty fields; plain whitespace collapses runs.
std::vector<std::string> split_fields(const std::string& line, char delim) {
  std::vector<std::string> out;
  if (delim == ' ') {
    std::istringstream ss(line);
    std::string f;
    while (ss >> f) out.push_back(f);
    return out;
  }
  std::string cur;
  for (char c : line) {
    if (c == delim) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

bool parse_double(const std::string& s, double& out) {
  const char* b = s.data();
  const char* e = b + s.size();
  if (b != e && *b == '+') ++b;
  const auto [ptr, ec] = std::from_chars(b, e, out);
  return ec == std::errc() && ptr == e;
}

int find_column(const std::vector<std::string>& header, std::initializer_list<const char*> names) {
  for (std::size_t i = 0; i < header.size(); ++i)
    for (const char* n : names)
      if (lower(header[i]) == n) return static_cast<int>(i);
  return -1;
}

}  // namespace

int severity_label(bool parkinsonian, double hy_stage) {
  if (!parkinsonian) return 0;
  if (hy_stage == 2.0) return 1;
  if (hy_stage == 2.5) return 2;
  if (hy_stage == 3.0) return 3;
  throw LabelingError("Hoehn & Yahr stage " + std::to_string(hy_stage) + " has no severity class (expected 2, 2.5 or 3)");
}

Demographics parse_demographics(std::istream& in) {
  std::string line;
  std::vector<std::string> header;
  char delim = ' ';
  while (header.empty() && std::getline(in, line)) {
    if (trim(line).empty()) continue;
    delim = line.find('\t') != std::string::npos ? '\t' : line.find(',') != std::string::npos ? ',' : ' ';
    header = split_fields(line, delim);
  }
  const int id_col = find_column(header, {"id", "subject", "subject_id"});
  const int group_col = find_column(header, {"group"});
  const int stage_col = find_column(header, {"hoehnyahr", "hoehn_yahr", "h&y", "hy", "hy_stage"});
  if (id_col < 0 || group_col < 0 || stage_col < 0) {
    throw FormatError("demographics header must name ID, Group and HoehnYahr columns");
  }
  Demographics out;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line, delim);
    const auto field = [&](int col) { return col < static_cast<int>(fields.size()) ? fields[col] : std::string(); };
    const std::string id = field(id_col);
    if (id.empty()) continue;
    const std::string group = lower(field(group_col));
    SubjectInfo info;
    if (group == "pd" || group == "1" || group == "parkinsonian") {
      info.parkinsonian = true;
    } else if (group == "co" || group == "2" || group == "control" || group == "healthy") {
      info.parkinsonian = false;
    } else {
      throw LabelingError("demographics row " + std::to_string(row) + ": unknown group '" + field(group_col) +
                          "' for subject " + id);
    }
    double stage = 0.0;
    const std::string stage_text = field(stage_col);
    if (!stage_text.empty() && lower(stage_text) != "nan" && !parse_double(stage_text, stage)) {
      throw FormatError("demographics row " + std::to_string(row) + ": stage '" + stage_text + "' is not numeric");
    }
    if (stage_text.empty() || lower(stage_text) == "nan") stage = info.parkinsonian ? std::nan("") : 0.0;
    info.hy_stage = stage;
    try {
      info.label = severity_label(info.parkinsonian, stage);
    } catch (const LabelingError&) {
      info.label = -1;
    }
    out[id] = info;
  }
  return out;
}

Demographics parse_demographics(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open demographics file " + path.string());
  return parse_demographics(in);
}

std::string subject_from_filename(const std::filesystem::path& file) {
  const std::string stem = file.stem().string();
  return stem.substr(0, stem.find('_'));
}

SignalRecord parse_vgrf(std::istream& in, const std::string& subject_id, const Demographics& demographics,
                        const std::string& source_name) {
  const auto it = demographics.find(subject_id);
  if (it == demographics.end()) {
    throw LabelingError(source_name + ": subject " + subject_id + " is missing from the demographics table");
  }
  if (it->second.label < 0) {
    throw LabelingError(source_name + ": subject " + subject_id + " has Hoehn & Yahr stage " +
                        std::to_string(it->second.hy_stage) + ", which maps to no severity class");
  }
  SignalRecord rec;
  rec.subject_id = subject_id;
  rec.parkinsonian = it->second.parkinsonian;
  rec.hy_stage = it->second.hy_stage;
  rec.label = it->second.label;
  rec.source_file = source_name;
  rec.channels.assign(kSignalChannels, {});

  std::string line;
  std::size_t line_no = 0, rejected = 0;
  std::vector<double> row(kSignalChannels + 1);
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ss(line);
    std::string tok;
    std::size_t n = 0;
    bool numeric = true;
    while (ss >> tok) {
      double v = 0.0;
      if (!parse_double(tok, v)) numeric = false;
      if (n < row.size()) row[n] = v;
      ++n;
    }
    if (n == 0) continue;
    if (!numeric) {
      ++rejected;
      continue;
    }
    if (n != kSignalChannels + 1) {
      throw FormatError(source_name + " line " + std::to_string(line_no) +
                        ": expected 19 columns (time + 18 signals), got " + std::to_string(n));
    }
    for (std::size_t c = 0; c < kSignalChannels; ++c) rec.channels[c].push_back(row[c + 1]);
  }
  if (rejected > 0) spdlog::warn("{}: rejected {} non-numeric row(s)", source_name, rejected);
  rec.n_timesteps = rec.channels[0].size();
  if (rec.n_timesteps == 0) throw FormatError(source_name + ": no numeric samples (empty file)");
  return rec;
}

SignalRecord parse_vgrf(const std::filesystem::path& file, const Demographics& demographics) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open " + file.string());
  return parse_vgrf(in, subject_from_filename(file), demographics, file.string());
}

std::vector<SignalRecord> load_directory(const std::filesystem::path& dir, const Demographics& demographics,
                                         std::size_t jobs, bool skip_unlabeled) {
  if (!std::filesystem::is_directory(dir)) throw IoError(dir.string() + " is not a directory");
  static const std::regex walk_name(R"([A-Za-z]+[0-9]+_[0-9]+\.txt)");
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && std::regex_match(entry.path().filename().string(), walk_name)) {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IoError("no walk files (<subject>_<n>.txt) in " + dir.string());

  std::vector<std::optional<SignalRecord>> parsed(files.size());
  std::vector<std::exception_ptr> errors(files.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < files.size(); i = next++) {
      try {
        parsed[i] = parse_vgrf(files[i], demographics);
      } catch (const LabelingError& e) {
        if (!skip_unlabeled) errors[i] = std::current_exception();
        else spdlog::warn("skipping {}: {}", files[i].filename().string(), e.what());
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t n_threads = std::clamp<std::size_t>(jobs, 1, files.size());
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::vector<SignalRecord> out;
  for (std::size_t i = 0; i < files.size(); ++i) {
    if (errors[i]) std::rethrow_exception(errors[i]);
    if (parsed[i]) out.push_back(std::move(*parsed[i]));
  }
  return out;
}

}  // namespace incepto::data
