#pragma once

// Current-beam classifiers: a 2x512 rectifier MLP over position, position + height +
// distance, or camera features.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "skybeam/data/dataset.hpp"
#include "skybeam/eval/metrics.hpp"
#include "skybeam/nn/core.hpp"
#include "skybeam/nn/dense.hpp"
#include "skybeam/nn/optim.hpp"
#include "skybeam/rng.hpp"

namespace skybeam::predict {

enum class Modality { kPosition, kPositionHd, kVision };

inline const char* to_string(Modality m) {
  switch (m) {
    case Modality::kPosition: return "position";
    case Modality::kPositionHd: return "position_hd";
    case Modality::kVision: return "vision";
  }
  return "?";
}

inline Modality parse_modality(const std::string& s) {
  if (s == "position") return Modality::kPosition;
  if (s == "position_hd") return Modality::kPositionHd;
  if (s == "vision") return Modality::kVision;
  throw InvalidInput("unknown predictor modality '" + s + "'");
}

inline int feature_arity(Modality m) {
  switch (m) {
    case Modality::kPosition: return 2;
    case Modality::kPositionHd: return 4;
    case Modality::kVision: return 3;
  }
  return 0;
}

inline std::vector<std::string> feature_names(Modality m) {
  switch (m) {
    case Modality::kPosition: return {"gps_e", "gps_n"};
    case Modality::kPositionHd: return {"gps_e", "gps_n", "height", "distance"};
    case Modality::kVision: return {"vis_u", "vis_v", "vis_size"};
  }
  return {};
}

struct PredictorConfig {
  Modality modality = Modality::kPosition;
  std::vector<int> hidden{512, 512};
  int classes = kNumBeams;
  int batch = 32;
  int epochs = 100;
  double lr = 1e-2;
  std::vector<int> decay_epochs{20, 40, 80};
  double decay_factor = 0.1;
  std::uint64_t seed = 1;
  double train_fraction = 1.0;

  void validate() const {
    if (hidden.empty()) throw InvalidInput("PredictorConfig: need at least one hidden layer");
    for (int h : hidden)
      if (h < 1) throw InvalidInput("PredictorConfig: hidden widths must be >= 1");
    if (classes < 2) throw InvalidInput("PredictorConfig: classes must be >= 2");
    if (batch < 1) throw InvalidInput("PredictorConfig: batch must be >= 1");
    if (epochs < 0) throw InvalidInput("PredictorConfig: epochs must be >= 0");
    if (!(lr > 0.0)) throw InvalidInput("PredictorConfig: lr must be > 0");
    if (!(train_fraction > 0.0 && train_fraction <= 1.0)) throw InvalidInput("PredictorConfig: train_fraction must be in (0, 1]");
  }

  std::vector<int> widths() const {
    std::vector<int> w{feature_arity(modality)};
    w.insert(w.end(), hidden.begin(), hidden.end());
    w.push_back(classes);
    return w;
  }
};

/// Normalized model input for one sample; empty when the modality cannot use the sample
/// (vision on an invisible frame).
inline std::optional<nn::Vec<double>> assemble_features(const SensingSample& s, Modality m,
                                                         const data::NormalizationSpec& norm) {
  using data::normalize_minmax;
  nn::Vec<double> x(feature_arity(m));
  switch (m) {
    case Modality::kPosition:
      x << normalize_minmax(s.gps_e, norm, "gps_e"), normalize_minmax(s.gps_n, norm, "gps_n");
      break;
    case Modality::kPositionHd:
      x << normalize_minmax(s.gps_e, norm, "gps_e"), normalize_minmax(s.gps_n, norm, "gps_n"),
          normalize_minmax(s.height, norm, "height"), normalize_minmax(s.distance, norm, "distance");
      break;
    case Modality::kVision:
      if (!s.visual.visible) return std::nullopt;
      x << s.visual.center_u, s.visual.center_v, normalize_minmax(s.visual.apparent_size, norm, "vis_size");
      break;
  }
  return x;
}

/// Columns of usable samples plus their labels and source indices.
struct FeatureMatrix {
  nn::Mat<float> x;
  std::vector<int> labels;
  std::vector<std::size_t> source;
};

inline FeatureMatrix assemble_matrix(const SampleTable& samples, Modality m, const data::NormalizationSpec& norm) {
  std::vector<nn::Vec<double>> cols;
  FeatureMatrix out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    auto f = assemble_features(samples[i], m, norm);
    if (!f) continue;
    cols.push_back(std::move(*f));
    out.labels.push_back(samples[i].label);
    out.source.push_back(i);
  }
  out.x.resize(feature_arity(m), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) out.x.col(static_cast<Eigen::Index>(j)) = cols[j].cast<float>();
  return out;
}

struct EpochLog {
  int epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
  double train_top1 = 0.0;  // running accuracy during the epoch, percent
};

struct TrainingLog {
  std::vector<EpochLog> epochs;
  std::vector<std::string> warnings;
  long samples = 0;
};

struct BeamPredictor {
  PredictorConfig config;
  data::NormalizationSpec norm;
  nn::DenseNet<float> net;

  /// Probabilities over beams (sum to 1).
  nn::Vec<double> predict_proba(const nn::Vec<double>& features) const {
    const nn::Mat<float> logits = net.forward(features.cast<float>());
    return nn::softmax<double>(logits.col(0).cast<double>());
  }

  std::optional<nn::Vec<double>> predict_proba(const SensingSample& s) const {
    const auto f = assemble_features(s, config.modality, norm);
    if (!f) return std::nullopt;
    return predict_proba(*f);
  }

  /// Rankings for every column of x (batched forward pass).
  std::vector<eval::Ranking> rank_all(const nn::Mat<float>& x, int k) const {
    std::vector<eval::Ranking> out;
    out.reserve(static_cast<std::size_t>(x.cols()));
    const Eigen::Index chunk = 1024;
    for (Eigen::Index start = 0; start < x.cols(); start += chunk) {
      const Eigen::Index n = std::min(chunk, x.cols() - start);
      const nn::Mat<float> logits = net.forward(x.middleCols(start, n));
      for (Eigen::Index j = 0; j < n; ++j) out.push_back(nn::top_k(nn::Vec<float>(logits.col(j)), k));
    }
    return out;
  }
};

/// The k most probable beams, descending, ties to the lower index.
inline std::vector<int> predict_topk(const BeamPredictor& model, const nn::Vec<double>& features, int k) {
  return nn::top_k(model.predict_proba(features), k);
}

inline std::size_t distinct_labels(const std::vector<int>& labels) {
  return std::set<int>(labels.begin(), labels.end()).size();
}

/// Mini-batch Adam on mean cross-entropy. Batches follow a per-epoch seeded shuffle; the final short
/// batch is kept. `norm` should come from the full training split.
inline BeamPredictor train_predictor(const SampleTable& train, const PredictorConfig& config,
                                     const data::NormalizationSpec& norm, TrainingLog* log = nullptr) {
  config.validate();
  const nn::DenormalGuard ftz;
  const FeatureMatrix fm = assemble_matrix(train, config.modality, norm);
  if (fm.labels.empty()) throw InvalidInput("train_predictor: no usable training samples");
  for (int l : fm.labels)
    if (l < 0 || l >= config.classes) throw InvalidInput("train_predictor: label out of range");

  BeamPredictor model{config, norm, nn::DenseNet<float>(config.widths(), mix_seed(config.seed, 1))};
  TrainingLog local;
  TrainingLog& lg = log ? *log : local;
  lg = {};
  lg.samples = static_cast<long>(fm.labels.size());
  if (distinct_labels(fm.labels) == 1) lg.warnings.push_back("degenerate labels: every training sample has the same beam");

  nn::Adam<float> opt(model.net.params().size());
  const nn::StepDecay schedule{config.lr, config.decay_epochs, config.decay_factor};
  std::mt19937_64 rng(mix_seed(config.seed, 2));
  const Eigen::Index n = fm.x.cols();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});

  nn::DenseNet<float>::Cache cache;
  nn::Mat<float> xb, dlogits;
  nn::Vec<float> grad;
  std::vector<int> yb;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    const double lr = schedule.lr_at(epoch);
    double loss_sum = 0.0;
    long correct = 0;
    for (Eigen::Index start = 0; start < n; start += config.batch) {
      const Eigen::Index b = std::min<Eigen::Index>(config.batch, n - start);
      xb.resize(fm.x.rows(), b);
      yb.resize(static_cast<std::size_t>(b));
      for (Eigen::Index j = 0; j < b; ++j) {
        xb.col(j) = fm.x.col(order[start + j]);
        yb[j] = fm.labels[order[start + j]];
      }
      const nn::Mat<float> logits = model.net.forward(xb, &cache);
      loss_sum += static_cast<double>(nn::batch_cross_entropy<float>(logits, yb, &dlogits)) * static_cast<double>(b);
      for (Eigen::Index j = 0; j < b; ++j) {
        Eigen::Index arg = 0;
        logits.col(j).maxCoeff(&arg);
        correct += arg == yb[j];
      }
      model.net.backward(cache, dlogits, grad);
      opt.update(model.net.params(), grad, lr);
    }
    lg.epochs.push_back({epoch, lr, loss_sum / static_cast<double>(n), 100.0 * correct / static_cast<double>(n)});
  }
  return model;
}

/// Top-k accuracies (k = 1, 2, 3, 5) of a model on a sample table, plus the rankings used.
struct PredictorEval {
  std::vector<eval::Ranking> rankings;
  std::vector<int> truths;
  std::vector<std::size_t> source;  // index into the evaluated table
  std::array<double, 4> topk{};
};

inline PredictorEval evaluate_predictor(const BeamPredictor& model, const SampleTable& test) {
  const FeatureMatrix fm = assemble_matrix(test, model.config.modality, model.norm);
  if (fm.labels.empty()) throw InvalidInput("evaluate_predictor: no usable test samples");
  PredictorEval out;
  out.rankings = model.rank_all(fm.x, model.config.classes);
  out.truths = fm.labels;
  out.source = fm.source;
  for (std::size_t k = 0; k < eval::kReportedK.size(); ++k)
    out.topk[k] = eval::topk_accuracy(out.rankings, out.truths, eval::kReportedK[k]);
  return out;
}

/// Seeded subset of ceil(fraction * n) samples, kept in original order.
inline SampleTable training_subset(const SampleTable& train, double fraction, std::uint64_t seed) {
  const std::size_t n = train.size();
  const std::size_t keep = std::min(n, static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9)));
  if (keep == n) return train;
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(keep);
  std::sort(idx.begin(), idx.end());
  SampleTable out;
  out.reserve(keep);
  for (std::size_t i : idx) out.push_back(train[i]);
  return out;
}

struct SweepRow {
  double fraction = 0.0;
  long train_samples = 0;
  std::array<double, 4> topk{};
  std::string note;  // set when the point was skipped
};

/// Trains one model per fraction on a seeded subset and evaluates on the fixed test set.
/// Normalization constants always come from the full training split.
inline std::vector<SweepRow> training_fraction_sweep(const SampleTable& train, const SampleTable& test,
                                                     const std::vector<double>& fractions, const PredictorConfig& config,
                                                     const data::NormalizationSpec& norm,
                                                     const std::function<void(const SweepRow&)>& progress = {}) {
  std::vector<SweepRow> rows;
  for (double f : fractions) {
    if (!(f > 0.0 && f <= 1.0)) throw InvalidInput("training_fraction_sweep: fractions must be in (0, 1]");
    SweepRow row;
    row.fraction = f;
    const auto subset = training_subset(train, f, mix_seed(config.seed, 3));
    const auto usable = assemble_matrix(subset, config.modality, norm).labels.size();
    if (usable < 1) {
      row.note = "skipped: fraction yields no usable samples";
      rows.push_back(row);
      continue;
    }
    row.train_samples = static_cast<long>(usable);
    const auto model = train_predictor(subset, config, norm);
    row.topk = evaluate_predictor(model, test).topk;
    if (progress) progress(row);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace skybeam::predict
