#pragma once

// Accuracy metrics over ranked beam predictions.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "skybeam/error.hpp"
#include "skybeam/units.hpp"

namespace skybeam::eval {

using Ranking = std::vector<int>;

inline bool in_top_k(const Ranking& ranking, int truth, int k) {
  if (k < 1) throw InvalidInput("top-k: k must be >= 1");
  if (static_cast<std::size_t>(k) > ranking.size()) throw InvalidInput("top-k: ranking shorter than k");
  return std::find(ranking.begin(), ranking.begin() + k, truth) != ranking.begin() + k;
}

/// 100 * fraction of samples whose truth is within the first k entries of its ranking.
inline double topk_accuracy(std::span<const Ranking> rankings, std::span<const int> truths, int k) {
  if (rankings.empty()) throw InvalidInput("topk_accuracy: empty inputs");
  if (rankings.size() != truths.size()) throw InvalidInput("topk_accuracy: length mismatch");
  long hits = 0;
  for (std::size_t i = 0; i < rankings.size(); ++i) hits += in_top_k(rankings[i], truths[i], k);
  return 100.0 * static_cast<double>(hits) / static_cast<double>(rankings.size());
}

/// rankings[h][i], truths[h][i] for future step h. A sample counts only if every step < horizon hits.
inline double joint_topk_accuracy(const std::vector<std::vector<Ranking>>& rankings,
                                  const std::vector<std::vector<int>>& truths, int horizon, int k) {
  if (horizon < 1) throw InvalidInput("joint_topk_accuracy: horizon must be >= 1");
  if (static_cast<std::size_t>(horizon) > rankings.size() || static_cast<std::size_t>(horizon) > truths.size())
    throw InvalidInput("joint_topk_accuracy: horizon exceeds available futures");
  const std::size_t n = rankings[0].size();
  if (n == 0) throw InvalidInput("joint_topk_accuracy: empty inputs");
  for (int h = 0; h < horizon; ++h)
    if (rankings[h].size() != n || truths[h].size() != n) throw InvalidInput("joint_topk_accuracy: length mismatch");
  long hits = 0;
  for (std::size_t i = 0; i < n; ++i) {
    bool all = true;
    for (int h = 0; h < horizon && all; ++h) all = in_top_k(rankings[h][i], truths[h][i], k);
    hits += all;
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// R2 power score

struct R2Score {
  double identity = 0.0;  // 1 - SS_res/SS_tot against the y = x line; -inf when undefined
  double fitted = 0.0;    // R2 of the least-squares line through (optimal, predicted); -inf when undefined

  static bool defined(double v) { return std::isfinite(v); }
};

inline R2Score r2_power_score(std::span<const double> predicted, std::span<const double> optimal) {
  if (predicted.size() != optimal.size()) throw InvalidInput("r2_power_score: length mismatch");
  if (predicted.empty()) throw InvalidInput("r2_power_score: empty inputs");
  const double n = static_cast<double>(optimal.size());
  double my = 0.0, mx = 0.0;
  for (std::size_t i = 0; i < optimal.size(); ++i) {
    my += optimal[i];
    mx += predicted[i];
  }
  my /= n;
  mx /= n;
  double ss_res = 0.0, ss_tot = 0.0, sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < optimal.size(); ++i) {
    ss_res += (optimal[i] - predicted[i]) * (optimal[i] - predicted[i]);
    ss_tot += (optimal[i] - my) * (optimal[i] - my);
    sxx += (predicted[i] - mx) * (predicted[i] - mx);
    sxy += (predicted[i] - mx) * (optimal[i] - my);
  }
  constexpr double kUndefined = -std::numeric_limits<double>::infinity();
  R2Score out;
  if (ss_tot == 0.0) {
    out.identity = ss_res == 0.0 ? 1.0 : kUndefined;
    out.fitted = ss_res == 0.0 ? 1.0 : kUndefined;
    return out;
  }
  out.identity = 1.0 - ss_res / ss_tot;
  out.fitted = sxx == 0.0 ? 0.0 : (sxy * sxy) / (sxx * ss_tot);
  return out;
}

// ---------------------------------------------------------------------------
// Confusion matrix

struct ConfusionMatrix {
  int classes = 0;
  std::vector<long> counts;  // row-major [truth][pred]
  long total = 0;

  long at(int truth, int pred) const { return counts[static_cast<std::size_t>(truth) * classes + pred]; }

  long row_sum(int truth) const {
    long s = 0;
    for (int p = 0; p < classes; ++p) s += at(truth, p);
    return s;
  }

  /// Percentage of samples with |pred - truth| <= band.
  double band_mass(int band) const {
    if (total == 0) return 0.0;
    long hits = 0;
    for (int t = 0; t < classes; ++t)
      for (int p = 0; p < classes; ++p)
        if (std::abs(p - t) <= band) hits += at(t, p);
    return 100.0 * static_cast<double>(hits) / static_cast<double>(total);
  }
};

inline ConfusionMatrix confusion_matrix(std::span<const int> truths, std::span<const int> preds, int classes) {
  if (truths.size() != preds.size()) throw InvalidInput("confusion_matrix: length mismatch");
  if (classes < 1) throw InvalidInput("confusion_matrix: classes must be >= 1");
  ConfusionMatrix cm;
  cm.classes = classes;
  cm.counts.assign(static_cast<std::size_t>(classes) * classes, 0);
  for (std::size_t i = 0; i < truths.size(); ++i) {
    if (truths[i] < 0 || truths[i] >= classes || preds[i] < 0 || preds[i] >= classes)
      throw InvalidInput("confusion_matrix: index out of range");
    ++cm.counts[static_cast<std::size_t>(truths[i]) * classes + preds[i]];
    ++cm.total;
  }
  return cm;
}

// ---------------------------------------------------------------------------
// Stratification

struct Bin {
  std::string label;
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  bool lo_inclusive = true;
  bool hi_inclusive = false;

  bool contains(double v) const {
    const bool above = lo_inclusive ? v >= lo : v > lo;
    const bool below = hi_inclusive ? v <= hi : v < hi;
    return above && below;
  }
};

struct StrataSpec {
  std::string name;
  std::vector<Bin> bins;
  double scale = 1.0;  // values are multiplied by this before binning
};

/// Height bins: < 40 m, 40-80 m, > 80 m.
inline StrataSpec height_strata() {
  return {"height_m",
          {{"<40", -INFINITY, 40.0, true, false}, {"40-80", 40.0, 80.0, true, true}, {">80", 80.0, INFINITY, false, true}},
          1.0};
}

/// Speed bins in mph (<= 10, 10-20, > 20); inputs are m/s.
inline StrataSpec speed_strata() {
  return {"speed_mph",
          {{"<=10", -INFINITY, 10.0, true, true}, {"10-20", 10.0, 20.0, false, true}, {">20", 20.0, INFINITY, false, true}},
          1.0 / units::kMetersPerSecondPerMph};
}

struct StratumResult {
  std::string label;
  long count = 0;
  std::array<std::optional<double>, 4> topk;  // k = 1, 2, 3, 5; empty bins have no value
};

inline constexpr std::array<int, 4> kReportedK{1, 2, 3, 5};

inline std::vector<StratumResult> stratified_accuracy(std::span<const double> values, std::span<const Ranking> rankings,
                                                      std::span<const int> truths, const StrataSpec& spec) {
  if (values.size() != rankings.size() || values.size() != truths.size())
    throw InvalidInput("stratified_accuracy: length mismatch");
  std::vector<StratumResult> out;
  for (const auto& bin : spec.bins) {
    std::vector<Ranking> r;
    std::vector<int> t;
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (!bin.contains(values[i] * spec.scale)) continue;
      r.push_back(rankings[i]);
      t.push_back(truths[i]);
    }
    StratumResult s;
    s.label = bin.label;
    s.count = static_cast<long>(r.size());
    if (!r.empty())
      for (std::size_t k = 0; k < kReportedK.size(); ++k) s.topk[k] = topk_accuracy(r, t, kReportedK[k]);
    out.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Resource trade-off

struct TradeoffRow {
  std::string approach;
  double beam_training_percent = 0.0;
  double top1 = 0.0;
  double top3 = 0.0;
};

inline double beam_training_percent(long ground_truth_steps, long horizon = 50) {
  if (horizon < 1 || ground_truth_steps < 0 || ground_truth_steps > horizon)
    throw InvalidInput("beam_training_percent: steps out of range");
  return 100.0 * static_cast<double>(ground_truth_steps) / static_cast<double>(horizon);
}

/// Rounds to two decimals for reporting.
inline double round2(double v) { return std::round(v * 100.0) / 100.0; }

}  // namespace skybeam::eval
