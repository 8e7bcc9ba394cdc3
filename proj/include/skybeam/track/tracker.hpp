#pragma once

// Future-beam trackers: a 2-layer GRU over an 8-step observation window with one
// softmax head per future step, plus the recursive 50-step rollout.

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "skybeam/data/dataset.hpp"
#include "skybeam/eval/metrics.hpp"
#include "skybeam/nn/core.hpp"
#include "skybeam/nn/embedding.hpp"
#include "skybeam/nn/gru.hpp"
#include "skybeam/nn/optim.hpp"
#include "skybeam/rng.hpp"

namespace skybeam::track {

enum class Modality { kBeamOnly, kPosition, kVision };

inline const char* to_string(Modality m) {
  switch (m) {
    case Modality::kBeamOnly: return "beam_only";
    case Modality::kPosition: return "position";
    case Modality::kVision: return "vision";
  }
  return "?";
}

inline Modality parse_modality(const std::string& s) {
  if (s == "beam_only") return Modality::kBeamOnly;
  if (s == "position") return Modality::kPosition;
  if (s == "vision") return Modality::kVision;
  throw InvalidInput("unknown tracker modality '" + s + "'");
}

struct TrackerConfig {
  Modality modality = Modality::kBeamOnly;
  int window = 8;
  int input_dim = 20;
  int hidden = 128;
  int layers = 2;
  int classes = kNumBeams;
  int horizon = 3;
  double dropout = 0.5;
  double lr = 1e-3;
  std::vector<int> decay_epochs{40, 120};
  double decay_factor = 0.1;
  int batch = 512;
  int epochs = 200;
  std::uint64_t seed = 1;
  std::uint64_t embedding_seed = 1;

  /// Default hyper-parameters for a modality.
  static TrackerConfig defaults(Modality m) {
    TrackerConfig c;
    c.modality = m;
    c.input_dim = m == Modality::kBeamOnly ? 20 : 2;
    c.lr = m == Modality::kBeamOnly ? 1e-3 : 1e-2;
    return c;
  }

  void validate() const {
    if (window < 1 || horizon < 1) throw InvalidInput("TrackerConfig: window and horizon must be >= 1");
    if (modality != Modality::kBeamOnly && input_dim != 2)
      throw InvalidInput("TrackerConfig: position/vision trackers take 2-dimensional inputs");
    if (input_dim < 1 || hidden < 1 || layers < 1 || classes < 2 || batch < 1 || epochs < 0)
      throw InvalidInput("TrackerConfig: dimensions must be positive");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw InvalidInput("TrackerConfig: dropout must be in [0, 1)");
    if (!(lr > 0.0)) throw InvalidInput("TrackerConfig: lr must be > 0");
  }

  nn::GruShape shape() const { return {input_dim, hidden, layers, horizon, classes}; }
};

using InputWindow = std::vector<nn::Vec<double>>;

/// Per-frame input vector for the sensed modalities; empty when unusable.
inline std::optional<nn::Vec<double>> frame_input(const SensingSample& s, Modality m,
                                                  const data::NormalizationSpec& norm) {
  nn::Vec<double> x(2);
  if (m == Modality::kPosition) {
    x << data::normalize_minmax(s.gps_e, norm, "gps_e"), data::normalize_minmax(s.gps_n, norm, "gps_n");
  } else if (m == Modality::kVision) {
    if (!s.visual.visible) return std::nullopt;
    x << s.visual.center_u, s.visual.center_v;
  } else {
    throw InvalidInput("frame_input: beam-only inputs come from the embedding table");
  }
  return x;
}

inline InputWindow embed_labels(std::span<const int> labels, const nn::EmbeddingTable& table) {
  InputWindow out;
  out.reserve(labels.size());
  for (int l : labels) out.push_back(table.row(l));
  return out;
}

/// The window's input vectors; empty when a vision window contains an invisible frame.
inline std::optional<InputWindow> assemble_sequence_inputs(const std::vector<SensingSample>& window, Modality m,
                                                           const nn::EmbeddingTable& table,
                                                           const data::NormalizationSpec& norm) {
  if (m == Modality::kBeamOnly) {
    std::vector<int> labels;
    for (const auto& s : window) labels.push_back(s.label);
    return embed_labels(labels, table);
  }
  InputWindow out;
  for (const auto& s : window) {
    auto x = frame_input(s, m, norm);
    if (!x) return std::nullopt;
    out.push_back(std::move(*x));
  }
  return out;
}

/// Windows stored step-major for batching: steps[t] is (input_dim x N).
struct SequenceTensor {
  std::vector<nn::Mat<float>> steps;
  std::vector<std::vector<int>> futures;  // [h][n]
  std::vector<std::size_t> source;

  Eigen::Index size() const { return steps.empty() ? 0 : steps.front().cols(); }
};

inline SequenceTensor stack_windows(const std::vector<InputWindow>& windows, const std::vector<std::vector<int>>& futures,
                                    int window, int input_dim, int horizon) {
  SequenceTensor out;
  const auto n = static_cast<Eigen::Index>(windows.size());
  out.steps.assign(window, nn::Mat<float>(input_dim, n));
  out.futures.assign(horizon, std::vector<int>(windows.size()));
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto& w = windows[j];
    if (static_cast<int>(w.size()) != window) throw InvalidInput("tracker: sequence length must equal the window size");
    for (int t = 0; t < window; ++t) {
      if (w[t].size() != input_dim) throw InvalidInput("tracker: input width mismatch");
      out.steps[t].col(j) = w[t].cast<float>();
    }
    if (!futures.empty()) {
      if (static_cast<int>(futures[j].size()) < horizon) throw InvalidInput("tracker: sequence has too few future labels");
      for (int h = 0; h < horizon; ++h) out.futures[h][j] = futures[j][h];
    }
  }
  return out;
}

struct BeamTracker {
  TrackerConfig config;
  data::NormalizationSpec norm;
  nn::EmbeddingTable embedding;
  nn::GruNet<float> net;

  SequenceTensor tensor(const std::vector<data::SequenceSample>& seqs) const {
    std::vector<InputWindow> windows;
    std::vector<std::vector<int>> futures;
    std::vector<std::size_t> source;
    for (std::size_t i = 0; i < seqs.size(); ++i) {
      if (static_cast<int>(seqs[i].window.size()) != config.window)
        throw InvalidInput("tracker: sequence length " + std::to_string(seqs[i].window.size()) + " != " +
                           std::to_string(config.window));
      auto w = assemble_sequence_inputs(seqs[i].window, config.modality, embedding, norm);
      if (!w) continue;
      windows.push_back(std::move(*w));
      futures.push_back(seqs[i].futures);
      source.push_back(i);
    }
    auto t = stack_windows(windows, futures, config.window, config.input_dim, config.horizon);
    t.source = std::move(source);
    return t;
  }

  /// Logits for a batch; head h in rows [h*classes, (h+1)*classes).
  nn::Mat<float> logits(const std::vector<nn::Mat<float>>& steps) const { return net.forward(steps); }

  /// rankings[h][n] over all columns, in chunks.
  std::vector<std::vector<eval::Ranking>> rank_all(const SequenceTensor& t, int k) const {
    std::vector<std::vector<eval::Ranking>> out(config.horizon);
    const Eigen::Index chunk = 2048;
    for (Eigen::Index start = 0; start < t.size(); start += chunk) {
      const Eigen::Index n = std::min(chunk, t.size() - start);
      std::vector<nn::Mat<float>> steps;
      for (const auto& s : t.steps) steps.push_back(s.middleCols(start, n));
      const nn::Mat<float> lg = logits(steps);
      for (int h = 0; h < config.horizon; ++h)
        for (Eigen::Index j = 0; j < n; ++j)
          out[h].push_back(nn::top_k(nn::Vec<float>(lg.block(h * config.classes, j, config.classes, 1)), k));
    }
    return out;
  }
};

/// One ranked list per future step for a single window.
inline std::vector<eval::Ranking> predict_future(const BeamTracker& model, const InputWindow& inputs, int k) {
  if (static_cast<int>(inputs.size()) != model.config.window)
    throw InvalidInput("predict_future: expected " + std::to_string(model.config.window) + " inputs");
  if (k < 1 || k > model.config.classes) throw InvalidInput("predict_future: k out of range");
  const auto t = stack_windows({inputs}, {}, model.config.window, model.config.input_dim, model.config.horizon);
  const auto r = model.rank_all(t, k);
  std::vector<eval::Ranking> out;
  for (const auto& h : r) out.push_back(h.front());
  return out;
}

/// Head probabilities for a single window (horizon x classes).
inline std::vector<nn::Vec<double>> predict_proba(const BeamTracker& model, const InputWindow& inputs) {
  const auto t = stack_windows({inputs}, {}, model.config.window, model.config.input_dim, model.config.horizon);
  const nn::Mat<float> lg = model.logits(t.steps);
  std::vector<nn::Vec<double>> out;
  for (int h = 0; h < model.config.horizon; ++h)
    out.push_back(nn::softmax<double>(lg.block(h * model.config.classes, 0, model.config.classes, 1).cast<double>()));
  return out;
}

struct TrackerEpochLog {
  int epoch = 0;
  double lr = 0.0;
  double loss = 0.0;  // summed over heads, averaged over sequences
};

struct TrackerLog {
  std::vector<TrackerEpochLog> epochs;
  long sequences = 0;
};

inline BeamTracker make_tracker(const TrackerConfig& config, const data::NormalizationSpec& norm) {
  config.validate();
  return {config, norm, nn::EmbeddingTable::build(config.classes, config.input_dim, config.embedding_seed),
          nn::GruNet<float>(config.shape(), config.dropout, mix_seed(config.seed, 1))};
}

/// Sum of per-head cross-entropies, Adam, step-decay LR, dropout during training only.
inline BeamTracker train_tracker(const std::vector<data::SequenceSample>& train, const TrackerConfig& config,
                                 const data::NormalizationSpec& norm, TrackerLog* log = nullptr) {
  if (train.empty()) throw InvalidInput("train_tracker: empty training set");
  const nn::DenormalGuard ftz;
  BeamTracker model = make_tracker(config, norm);
  if (config.modality == Modality::kBeamOnly && config.input_dim != model.embedding.dim())
    throw InvalidInput("train_tracker: embedding width mismatch");
  const SequenceTensor data = model.tensor(train);
  const Eigen::Index n = data.size();
  if (n == 0) throw InvalidInput("train_tracker: no usable training sequences");

  TrackerLog local;
  TrackerLog& lg = log ? *log : local;
  lg = {};
  lg.sequences = static_cast<long>(n);

  nn::Adam<float> opt(model.net.params().size());
  const nn::StepDecay schedule{config.lr, config.decay_epochs, config.decay_factor};
  std::mt19937_64 order_rng(mix_seed(config.seed, 2));
  std::mt19937_64 dropout_rng(mix_seed(config.seed, 3));
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});

  typename nn::GruNet<float>::Cache cache;
  std::vector<nn::Mat<float>> xb(config.window);
  std::vector<std::vector<int>> yb(config.horizon);
  nn::Mat<float> dlogits;
  nn::Vec<float> grad;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), order_rng);
    const double lr = schedule.lr_at(epoch);
    double loss_sum = 0.0;
    for (Eigen::Index start = 0; start < n; start += config.batch) {
      const Eigen::Index b = std::min<Eigen::Index>(config.batch, n - start);
      for (int t = 0; t < config.window; ++t) {
        xb[t].resize(config.input_dim, b);
        for (Eigen::Index j = 0; j < b; ++j) xb[t].col(j) = data.steps[t].col(order[start + j]);
      }
      for (int h = 0; h < config.horizon; ++h) {
        yb[h].resize(static_cast<std::size_t>(b));
        for (Eigen::Index j = 0; j < b; ++j) yb[h][j] = data.futures[h][order[start + j]];
      }
      const nn::Mat<float> logits = model.net.forward(xb, &cache, &dropout_rng);
      loss_sum += static_cast<double>(nn::multi_head_cross_entropy<float>(logits, yb, config.classes, &dlogits)) *
                  static_cast<double>(b);
      model.net.backward(cache, dlogits, grad);
      opt.update(model.net.params(), grad, lr);
    }
    lg.epochs.push_back({epoch, lr, loss_sum / static_cast<double>(n)});
  }
  return model;
}

struct TrackerEval {
  std::vector<std::vector<eval::Ranking>> rankings;  // [h][n]
  std::vector<std::vector<int>> truths;              // [h][n]
  std::vector<std::array<double, 4>> marginal;       // [h] top-1/2/3/5 per future step
  std::vector<std::array<double, 4>> joint;          // [h] joint top-k over steps 1..h+1
  long sequences = 0;
};

inline TrackerEval evaluate_tracker(const BeamTracker& model, const std::vector<data::SequenceSample>& test) {
  const SequenceTensor t = model.tensor(test);
  if (t.size() == 0) throw InvalidInput("evaluate_tracker: no usable test sequences");
  TrackerEval out;
  out.sequences = static_cast<long>(t.size());
  out.rankings = model.rank_all(t, model.config.classes);
  out.truths = t.futures;
  for (int h = 0; h < model.config.horizon; ++h) {
    std::array<double, 4> m{}, j{};
    for (std::size_t k = 0; k < eval::kReportedK.size(); ++k) {
      m[k] = eval::topk_accuracy(out.rankings[h], out.truths[h], eval::kReportedK[k]);
      j[k] = eval::joint_topk_accuracy(out.rankings, out.truths, h + 1, eval::kReportedK[k]);
    }
    out.marginal.push_back(m);
    out.joint.push_back(j);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Recursive rollout

inline constexpr int kRolloutHorizon = 50;

/// Steps (1-based) at which beam training supplies the ground-truth label.
struct RolloutSchedule {
  int horizon = kRolloutHorizon;
  std::set<int> ground_truth;

  double training_percent() const { return eval::beam_training_percent(static_cast<long>(ground_truth.size()), horizon); }
  bool is_ground_truth(int step) const { return step <= 0 || ground_truth.count(step) != 0; }
};

/// Parses inclusive ranges such as {"1-8", "13-20", "33-40"} (single steps like "5" are allowed).
inline RolloutSchedule parse_schedule(const std::vector<std::string>& ranges, int horizon = kRolloutHorizon,
                                      int window = 8) {
  RolloutSchedule s;
  s.horizon = horizon;
  const auto parse_int = [](std::string_view t, const std::string& whole) {
    int v = 0;
    const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || res.ec != std::errc() || res.ptr != t.data() + t.size())
      throw InvalidInput("schedule range '" + whole + "' is not of the form a-b");
    return v;
  };
  for (const auto& r : ranges) {
    const auto dash = r.find('-');
    const int lo = parse_int(std::string_view(r).substr(0, dash), r);
    const int hi = dash == std::string::npos ? lo : parse_int(std::string_view(r).substr(dash + 1), r);
    if (lo < 1 || hi > horizon || lo > hi) throw InvalidInput("schedule range '" + r + "' is outside [1, horizon]");
    for (int t = lo; t <= hi; ++t) s.ground_truth.insert(t);
  }
  for (int t = 1; t <= std::min(window, horizon); ++t)
    if (!s.ground_truth.count(t)) throw InvalidInput("schedule must cover the first " + std::to_string(window) + " steps");
  return s;
}

inline RolloutSchedule full_schedule(int horizon = kRolloutHorizon) {
  RolloutSchedule s;
  s.horizon = horizon;
  for (int t = 1; t <= horizon; ++t) s.ground_truth.insert(t);
  return s;
}

/// Samples a rollout needs: (window - 1) pre-roll frames, `horizon` steps and one target.
inline int rollout_segment_length(int window = 8, int horizon = kRolloutHorizon) { return window - 1 + horizon + 1; }

struct RolloutStep {
  int step = 0;
  int true_beam = 0;
  std::array<int, 3> top3{};
  std::string provenance;  // one char per window entry: G ground truth, P predicted, S sensed
};

/// Window entry j (j = 2 - window .. horizon + 1) is segment[j + window - 2]. Step t (1..horizon) observes
/// entries t-window+1..t and predicts entry t+1. For beam-only trackers, entry j is the ground-truth label
/// when j <= 0 or j is scheduled, otherwise the top-1 prediction made for it at step j-1.
/// Sensed modalities observe true inputs at every step.
inline std::vector<RolloutStep> recursive_rollout(const BeamTracker& model, const std::vector<SensingSample>& segment,
                                                  const RolloutSchedule& schedule) {
  const int r = model.config.window;
  const int horizon = schedule.horizon;
  if (static_cast<int>(segment.size()) < rollout_segment_length(r, horizon))
    throw InvalidInput("recursive_rollout: segment needs " + std::to_string(rollout_segment_length(r, horizon)) +
                       " samples");
  const auto idx = [&](int entry) { return static_cast<std::size_t>(entry + r - 2); };
  const bool beam_only = model.config.modality == Modality::kBeamOnly;

  // entry label used as input, indexed by idx(entry)
  std::vector<int> used(segment.size(), -1);
  std::vector<RolloutStep> out;
  for (int t = 1; t <= horizon; ++t) {
    InputWindow inputs;
    std::string prov;
    for (int e = t - r + 1; e <= t; ++e) {
      if (beam_only) {
        if (schedule.is_ground_truth(e)) {
          used[idx(e)] = segment[idx(e)].label;
          prov += 'G';
        } else {
          prov += 'P';
        }
        inputs.push_back(model.embedding.row(used[idx(e)]));
      } else {
        auto x = frame_input(segment[idx(e)], model.config.modality, model.norm);
        if (!x) throw InvalidInput("recursive_rollout: vision segment contains an invisible frame");
        inputs.push_back(std::move(*x));
        prov += 'S';
      }
    }
    const auto ranked = predict_future(model, inputs, 3);
    RolloutStep st;
    st.step = t;
    st.true_beam = segment[idx(t + 1)].label;
    std::copy(ranked[0].begin(), ranked[0].end(), st.top3.begin());
    st.provenance = std::move(prov);
    if (beam_only && !schedule.is_ground_truth(t + 1)) used[idx(t + 1)] = st.top3[0];
    out.push_back(std::move(st));
  }
  return out;
}

/// Teacher-forced future-1 predictions over the same segment (every window entry is ground truth).
inline std::vector<RolloutStep> teacher_forced(const BeamTracker& model, const std::vector<SensingSample>& segment,
                                               int horizon = kRolloutHorizon) {
  return recursive_rollout(model, segment, full_schedule(horizon));
}

/// Contiguous `length`-sample runs inside flights, advancing `stride` samples between starts.
inline std::vector<std::vector<SensingSample>> rollout_segments(const SampleTable& samples, int length, int stride,
                                                                bool require_visible) {
  if (length < 1 || stride < 1) throw InvalidInput("rollout_segments: length and stride must be >= 1");
  std::vector<std::vector<SensingSample>> out;
  for (const auto& run : data::contiguous_runs(samples)) {
    for (std::size_t start = 0; start + length <= run.size(); start += stride) {
      std::vector<SensingSample> seg(run.begin() + start, run.begin() + start + length);
      if (require_visible &&
          std::any_of(seg.begin(), seg.end(), [](const SensingSample& s) { return !s.visual.visible; }))
        continue;
      out.push_back(std::move(seg));
    }
  }
  return out;
}

/// Per-step top-k accuracy (percent) over many rollouts; result[t-1] is step t.
inline std::vector<double> per_step_topk(const std::vector<std::vector<RolloutStep>>& rollouts, int k) {
  if (rollouts.empty()) throw InvalidInput("per_step_topk: no rollouts");
  if (k < 1 || k > 3) throw InvalidInput("per_step_topk: k must be in [1, 3]");
  const std::size_t steps = rollouts.front().size();
  std::vector<double> acc(steps, 0.0);
  for (const auto& ro : rollouts)
    for (std::size_t t = 0; t < steps; ++t)
      acc[t] += std::find(ro[t].top3.begin(), ro[t].top3.begin() + k, ro[t].true_beam) != ro[t].top3.begin() + k;
  for (auto& a : acc) a *= 100.0 / static_cast<double>(rollouts.size());
  return acc;
}

/// Mean of per-step accuracies over steps lo..hi (1-based, inclusive).
inline double mean_over_steps(const std::vector<double>& per_step, int lo, int hi) {
  if (lo < 1 || hi > static_cast<int>(per_step.size()) || lo > hi) throw InvalidInput("mean_over_steps: bad range");
  double s = 0.0;
  for (int t = lo; t <= hi; ++t) s += per_step[t - 1];
  return s / (hi - lo + 1);
}

}  // namespace skybeam::track
