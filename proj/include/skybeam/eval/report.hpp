#pragma once

// Report serialization: JSON blocks for metrics, aligned text tables and CSV dumps.

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "skybeam/error.hpp"
#include "skybeam/eval/metrics.hpp"

namespace skybeam::eval {

using json = nlohmann::json;

/// Two-decimal text for an accuracy, "n/a" when absent, "undefined" for -inf.
inline std::string fmt2(double v) {
  if (!std::isfinite(v)) return "undefined";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string fmt2(const std::optional<double>& v) { return v ? fmt2(*v) : "n/a"; }

/// JSON number rounded to two decimals, or the string "undefined" for non-finite values.
inline json rounded(double v) { return std::isfinite(v) ? json(round2(v)) : json("undefined"); }

inline std::string k_key(int k) { return "top" + std::to_string(k); }

/// {"top1": .., "top3": ..} for each requested k.
inline json topk_json(std::span<const Ranking> rankings, std::span<const int> truths, const std::vector<int>& ks) {
  json out = json::object();
  for (int k : ks) out[k_key(k)] = rounded(topk_accuracy(rankings, truths, k));
  return out;
}

inline json strata_json(const StrataSpec& spec, const std::vector<StratumResult>& bins) {
  json rows = json::array();
  for (const auto& b : bins) {
    json row{{"bin", b.label}, {"count", b.count}};
    for (std::size_t k = 0; k < kReportedK.size(); ++k)
      row[k_key(kReportedK[k])] = b.topk[k] ? rounded(*b.topk[k]) : json("n/a");
    rows.push_back(row);
  }
  return {{"variable", spec.name}, {"bins", rows}};
}

inline json r2_json(const R2Score& r) { return {{"identity", rounded(r.identity)}, {"fitted", rounded(r.fitted)}}; }

/// Row sums of the matrix and per-band mass; the full matrix goes to CSV.
inline json confusion_json(const ConfusionMatrix& cm, const std::vector<int>& bands) {
  json rows = json::array();
  for (int t = 0; t < cm.classes; ++t) rows.push_back(cm.row_sum(t));
  json mass = json::object();
  for (int b : bands) mass[std::to_string(b)] = rounded(cm.band_mass(b));
  return {{"classes", cm.classes}, {"total", cm.total}, {"row_sums", rows}, {"band_mass", mass}};
}

inline std::string confusion_csv(const ConfusionMatrix& cm) {
  std::ostringstream os;
  os << "truth";
  for (int p = 0; p < cm.classes; ++p) os << ",pred_" << p;
  os << '\n';
  for (int t = 0; t < cm.classes; ++t) {
    os << t;
    for (int p = 0; p < cm.classes; ++p) os << ',' << cm.at(t, p);
    os << '\n';
  }
  return os.str();
}

/// Plain-text table with columns padded to their widest cell; numbers right-aligned.
class TextTable {
 public:
  explicit TextTable(std::vector<std::string> header) : header_(std::move(header)) {}

  void add(std::vector<std::string> row) {
    if (row.size() != header_.size()) throw InvalidInput("TextTable: row width does not match header");
    rows_.push_back(std::move(row));
  }

  std::string render() const {
    std::vector<std::size_t> w(header_.size());
    for (std::size_t c = 0; c < header_.size(); ++c) {
      w[c] = header_[c].size();
      for (const auto& r : rows_) w[c] = std::max(w[c], r[c].size());
    }
    std::ostringstream os;
    const auto line = [&](const std::vector<std::string>& r) {
      std::string out;
      for (std::size_t c = 0; c < r.size(); ++c) {
        if (c) out += "  ";
        const std::string pad(w[c] - r[c].size(), ' ');
        out += c == 0 ? r[c] + pad : pad + r[c];
      }
      out.erase(out.find_last_not_of(' ') + 1);
      os << out << '\n';
    };
    line(header_);
    std::size_t total = 0;
    for (auto x : w) total += x;
    os << std::string(total + 2 * (w.size() - 1), '-') << '\n';
    for (const auto& r : rows_) line(r);
    return os.str();
  }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

inline void write_text(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  os << content;
  if (!os) throw Error("write failed: " + path.string());
}

inline void write_json(const std::filesystem::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

/// Reads an upstream artifact; a missing file names the subcommand that produces it.
inline json read_json(const std::filesystem::path& path, const std::string& producer) {
  std::ifstream is(path);
  if (!is) throw DependencyError("missing " + path.string() + " (run `" + producer + "` first)");
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
}

/// Checks the accuracy range, R2 bound and confusion-mass invariants of a predictor report block.
/// Returns the list of violations (empty when consistent).
inline std::vector<std::string> predictor_block_violations(const json& block, const std::vector<long>& class_counts) {
  std::vector<std::string> bad;
  for (const auto& [k, v] : block.at("accuracy").items())
    if (!v.is_number() || v.get<double>() < 0.0 || v.get<double>() > 100.0) bad.push_back("accuracy." + k + " out of range");
  for (const char* key : {"identity", "fitted"}) {
    const auto& v = block.at("r2").at(key);
    if (v.is_number() && v.get<double>() > 1.0) bad.push_back(std::string("r2.") + key + " > 1");
  }
  const auto& rows = block.at("confusion").at("row_sums");
  if (rows.size() != class_counts.size()) {
    bad.push_back("confusion row count");
  } else {
    for (std::size_t c = 0; c < rows.size(); ++c)
      if (rows[c].get<long>() != class_counts[c]) bad.push_back("confusion row " + std::to_string(c));
  }
  return bad;
}

}  // namespace skybeam::eval
