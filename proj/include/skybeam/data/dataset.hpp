#pragma once

// Task datasets: train/test partitioning, min-max normalization, sliding-window
// sequence construction and the CSV file formats.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "skybeam/data/sample.hpp"
#include "skybeam/error.hpp"

namespace skybeam::data {

// ---------------------------------------------------------------------------
// Splitting

/// Number of test items for a train fraction: ceil((1 - ratio) * n), train takes the remainder.
inline std::size_t test_count(std::size_t n, double ratio) {
  const double raw = (1.0 - ratio) * static_cast<double>(n);
  return std::min(n, static_cast<std::size_t>(std::ceil(raw - 1e-9)));
}

/// Seeded shuffle, then the first n - test_count items go to training.
template <typename T>
std::pair<std::vector<T>, std::vector<T>> split_train_test(const std::vector<T>& items, double ratio,
                                                           std::uint64_t rng_seed) {
  if (items.empty()) throw InvalidInput("split_train_test: empty input");
  if (!(ratio > 0.0 && ratio < 1.0)) throw InvalidInput("split_train_test: ratio must be in (0, 1)");
  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(rng_seed);
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t n_train = items.size() - test_count(items.size(), ratio);
  std::pair<std::vector<T>, std::vector<T>> out;
  out.first.reserve(n_train);
  out.second.reserve(items.size() - n_train);
  for (std::size_t i = 0; i < order.size(); ++i) (i < n_train ? out.first : out.second).push_back(items[order[i]]);
  return out;
}

/// Flight-level split: whole flights go to one side so windows never share frames across the split.
inline std::pair<std::set<int>, std::set<int>> split_flights(const SampleTable& samples, double ratio,
                                                             std::uint64_t rng_seed) {
  std::set<int> ids;
  for (const auto& s : samples) ids.insert(s.flight_id);
  const auto [train, test] = split_train_test(std::vector<int>(ids.begin(), ids.end()), ratio, rng_seed);
  return {std::set<int>(train.begin(), train.end()), std::set<int>(test.begin(), test.end())};
}

// ---------------------------------------------------------------------------
// Normalization

/// Per-feature [min, max] learned from the training split.
struct NormalizationSpec {
  std::map<std::string, std::pair<double, double>> ranges;

  bool has(const std::string& feature) const { return ranges.count(feature) != 0; }
  const std::pair<double, double>& range(const std::string& feature) const {
    const auto it = ranges.find(feature);
    if (it == ranges.end()) throw InvalidInput("normalization spec has no feature '" + feature + "'");
    return it->second;
  }
  bool operator==(const NormalizationSpec&) const = default;
};

/// (x - min) / (max - min); not clamped. A degenerate range maps everything to 0.
inline double normalize_minmax(double value, double min, double max) {
  if (max == min) return 0.0;
  return (value - min) / (max - min);
}

inline double denormalize_minmax(double normalized, double min, double max) {
  return min + normalized * (max - min);
}

inline double normalize_minmax(double value, const NormalizationSpec& spec, const std::string& feature) {
  const auto& [lo, hi] = spec.range(feature);
  return normalize_minmax(value, lo, hi);
}

/// Names of the scalar features the predictors and trackers normalize.
inline const std::array<std::string, 5>& normalized_features() {
  static const std::array<std::string, 5> names{"gps_e", "gps_n", "height", "distance", "vis_size"};
  return names;
}

inline double feature_value(const SensingSample& s, const std::string& name) {
  if (name == "gps_e") return s.gps_e;
  if (name == "gps_n") return s.gps_n;
  if (name == "height") return s.height;
  if (name == "distance") return s.distance;
  if (name == "vis_size") return s.visual.apparent_size;
  if (name == "speed") return s.speed;
  throw InvalidInput("unknown feature '" + name + "'");
}

/// Min-max ranges over `train`. vis_size only considers visible samples.
inline NormalizationSpec fit_normalization(const SampleTable& train) {
  if (train.empty()) throw InvalidInput("fit_normalization: empty training set");
  NormalizationSpec spec;
  for (const auto& name : normalized_features()) {
    double lo = INFINITY, hi = -INFINITY;
    for (const auto& s : train) {
      if (name == "vis_size" && !s.visual.visible) continue;
      const double v = feature_value(s, name);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (lo > hi) lo = hi = 0.0;
    spec.ranges[name] = {lo, hi};
  }
  return spec;
}

// ---------------------------------------------------------------------------
// Sequences

/// r consecutive observations of one flight plus the labels of the r' steps that follow.
struct SequenceSample {
  int flight_id = 0;
  int t_start = 0;
  std::vector<SensingSample> window;
  std::vector<int> futures;

  bool operator==(const SequenceSample&) const = default;
};

/// Contiguous runs (same flight, consecutive t) in table order.
inline std::vector<std::vector<SensingSample>> contiguous_runs(const SampleTable& samples) {
  std::vector<std::vector<SensingSample>> runs;
  for (const auto& s : samples) {
    if (runs.empty() || runs.back().back().flight_id != s.flight_id || runs.back().back().t + 1 != s.t)
      runs.emplace_back();
    runs.back().push_back(s);
  }
  return runs;
}

/// Stride-1 sliding windows inside each contiguous run; a run of n samples yields max(0, n - r - r' + 1).
inline std::vector<SequenceSample> build_sequences(const SampleTable& samples, int r = 8, int r_prime = 3) {
  if (r < 1 || r_prime < 1) throw InvalidInput("build_sequences: r and r' must be >= 1");
  std::vector<SequenceSample> out;
  for (const auto& run : contiguous_runs(samples)) {
    const long n = static_cast<long>(run.size());
    for (long start = 0; start + r + r_prime <= n; ++start) {
      SequenceSample seq;
      seq.flight_id = run[start].flight_id;
      seq.t_start = run[start].t;
      seq.window.assign(run.begin() + start, run.begin() + start + r);
      for (int h = 0; h < r_prime; ++h) seq.futures.push_back(run[start + r + h].label);
      out.push_back(std::move(seq));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Histograms

inline std::array<long, kNumBeams> label_histogram(const SampleTable& samples) {
  std::array<long, kNumBeams> h{};
  for (const auto& s : samples) {
    if (s.label < 0 || s.label >= kNumBeams) throw InvalidInput("label out of range");
    ++h[s.label];
  }
  return h;
}

// ---------------------------------------------------------------------------
// CSV I/O

namespace csv {

inline std::string sample_header() {
  std::string h = "flight_id,t,gps_e,gps_n,height,distance,speed,pitch,roll,vis_u,vis_v,vis_size,visible";
  for (int i = 0; i < kNumBeams; ++i) h += ",p" + std::to_string(i);
  h += ",label";
  return h;
}

inline const std::string& sequence_header() {
  static const std::string h = "flight_id,t_start,label_t1,label_t2,label_t3";
  return h;
}

/// Shortest decimal text that round-trips the double exactly.
inline void append_double(std::string& out, double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, res.ptr);
}

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

inline double parse_double(std::string_view f, std::size_t line, const char* name) {
  double v = 0.0;
  const auto res = std::from_chars(f.data(), f.data() + f.size(), v);
  if (res.ec != std::errc() || res.ptr != f.data() + f.size())
    throw ParseError(line, std::string("field '") + name + "' is not a number: '" + std::string(f) + "'");
  return v;
}

inline int parse_int(std::string_view f, std::size_t line, const char* name) {
  int v = 0;
  const auto res = std::from_chars(f.data(), f.data() + f.size(), v);
  if (res.ec != std::errc() || res.ptr != f.data() + f.size())
    throw ParseError(line, std::string("field '") + name + "' is not an integer: '" + std::string(f) + "'");
  return v;
}

inline std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

}  // namespace csv

inline std::string format_sample_row(const SensingSample& s) {
  std::string row;
  row += std::to_string(s.flight_id) + ',' + std::to_string(s.t);
  for (double v : {s.gps_e, s.gps_n, s.height, s.distance, s.speed, s.pitch, s.roll, s.visual.center_u,
                   s.visual.center_v, s.visual.apparent_size}) {
    row += ',';
    csv::append_double(row, v);
  }
  row += s.visual.visible ? ",1" : ",0";
  for (double p : s.power32) {
    row += ',';
    csv::append_double(row, p);
  }
  row += ',' + std::to_string(s.label);
  return row;
}

inline void save_dataset(const SampleTable& samples, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open " + path + " for writing");
  os << csv::sample_header() << '\n';
  for (const auto& s : samples) os << format_sample_row(s) << '\n';
  if (!os) throw Error("write failed: " + path);
}

inline SampleTable parse_dataset(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw SchemaError("missing header row");
  if (csv::strip_cr(line) != csv::sample_header()) throw SchemaError("unexpected header: " + csv::strip_cr(line));
  constexpr std::size_t kFields = 13 + kNumBeams + 1;
  SampleTable out;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    line = csv::strip_cr(line);
    if (line.empty()) continue;
    const auto f = csv::split_fields(line);
    if (f.size() != kFields) {
      throw SchemaError("line " + std::to_string(lineno) + ": expected " + std::to_string(kFields) + " fields, got " +
                        std::to_string(f.size()));
    }
    SensingSample s;
    s.flight_id = csv::parse_int(f[0], lineno, "flight_id");
    s.t = csv::parse_int(f[1], lineno, "t");
    s.gps_e = csv::parse_double(f[2], lineno, "gps_e");
    s.gps_n = csv::parse_double(f[3], lineno, "gps_n");
    s.height = csv::parse_double(f[4], lineno, "height");
    s.distance = csv::parse_double(f[5], lineno, "distance");
    s.speed = csv::parse_double(f[6], lineno, "speed");
    s.pitch = csv::parse_double(f[7], lineno, "pitch");
    s.roll = csv::parse_double(f[8], lineno, "roll");
    s.visual.center_u = csv::parse_double(f[9], lineno, "vis_u");
    s.visual.center_v = csv::parse_double(f[10], lineno, "vis_v");
    s.visual.apparent_size = csv::parse_double(f[11], lineno, "vis_size");
    const int visible = csv::parse_int(f[12], lineno, "visible");
    if (visible != 0 && visible != 1) throw ParseError(lineno, "field 'visible' must be 0 or 1");
    s.visual.visible = visible == 1;
    for (int i = 0; i < kNumBeams; ++i) s.power32[i] = csv::parse_double(f[13 + i], lineno, "power");
    s.label = csv::parse_int(f[13 + kNumBeams], lineno, "label");
    if (s.label < 0 || s.label >= kNumBeams) throw ParseError(lineno, "label out of range");
    out.push_back(s);
  }
  return out;
}

inline SampleTable load_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path);
  return parse_dataset(is);
}

/// Sequence rows reference their window by (flight_id, t_start) in a sample file.
inline void save_sequences(const std::vector<SequenceSample>& seqs, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open " + path + " for writing");
  os << csv::sequence_header() << '\n';
  for (const auto& s : seqs) {
    if (s.futures.size() != 3) throw InvalidInput("sequence file format stores exactly 3 future labels");
    os << s.flight_id << ',' << s.t_start << ',' << s.futures[0] << ',' << s.futures[1] << ',' << s.futures[2] << '\n';
  }
}

struct SequenceRef {
  int flight_id = 0;
  int t_start = 0;
  std::array<int, 3> futures{};
};

inline std::vector<SequenceRef> load_sequence_refs(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path);
  std::string line;
  if (!std::getline(is, line) || csv::strip_cr(line) != csv::sequence_header())
    throw SchemaError("unexpected sequence header in " + path);
  std::vector<SequenceRef> out;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    line = csv::strip_cr(line);
    if (line.empty()) continue;
    const auto f = csv::split_fields(line);
    if (f.size() != 5) throw SchemaError("line " + std::to_string(lineno) + ": expected 5 fields");
    SequenceRef r;
    r.flight_id = csv::parse_int(f[0], lineno, "flight_id");
    r.t_start = csv::parse_int(f[1], lineno, "t_start");
    for (int h = 0; h < 3; ++h) r.futures[h] = csv::parse_int(f[2 + h], lineno, "label");
    out.push_back(r);
  }
  return out;
}

/// Rebuilds full sequences from references and the sample table they index.
inline std::vector<SequenceSample> resolve_sequences(const std::vector<SequenceRef>& refs, const SampleTable& samples,
                                                     int r = 8) {
  std::map<std::pair<int, int>, std::size_t> index;
  for (std::size_t i = 0; i < samples.size(); ++i) index[{samples[i].flight_id, samples[i].t}] = i;
  std::vector<SequenceSample> out;
  out.reserve(refs.size());
  for (const auto& ref : refs) {
    SequenceSample seq;
    seq.flight_id = ref.flight_id;
    seq.t_start = ref.t_start;
    for (int k = 0; k < r; ++k) {
      const auto it = index.find({ref.flight_id, ref.t_start + k});
      if (it == index.end())
        throw SchemaError("sequence (" + std::to_string(ref.flight_id) + ", " + std::to_string(ref.t_start) +
                          ") references a missing sample");
      seq.window.push_back(samples[it->second]);
    }
    seq.futures.assign(ref.futures.begin(), ref.futures.end());
    out.push_back(std::move(seq));
  }
  return out;
}

}  // namespace skybeam::data
