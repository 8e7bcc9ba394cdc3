#pragma once

// The end-to-end experiment driven by one JSON config: generate -> train -> evaluate -> rollout -> report.
// Every artifact records the config hash; downstream stages refuse artifacts from another config.

#include <json.hpp>

#include <array>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "skybeam/config_json.hpp"
#include "skybeam/data/dataset.hpp"
#include "skybeam/eval/metrics.hpp"
#include "skybeam/eval/report.hpp"
#include "skybeam/nn/checkpoint.hpp"
#include "skybeam/predict/predictor.hpp"
#include "skybeam/rng.hpp"
#include "skybeam/sim/scenario.hpp"
#include "skybeam/track/tracker.hpp"

namespace skybeam::pipeline {

using json = nlohmann::json;
namespace fs = std::filesystem;

inline constexpr std::array<predict::Modality, 3> kPredictorModalities{
    predict::Modality::kPosition, predict::Modality::kPositionHd, predict::Modality::kVision};
inline constexpr std::array<track::Modality, 3> kTrackerModalities{track::Modality::kBeamOnly, track::Modality::kPosition,
                                                                   track::Modality::kVision};

inline std::string predictor_name(predict::Modality m) { return std::string("predictor_") + predict::to_string(m); }
inline std::string tracker_name(track::Modality m) { return std::string("tracker_") + track::to_string(m); }

struct NamedSchedule {
  std::string name;
  std::vector<std::string> gt_steps;
};

struct ExperimentConfig {
  sim::ScenarioConfig scenario;
  double split_ratio = 0.7;
  std::uint64_t split_seed = 11;
  int r = 8;
  int r_prime = 3;
  std::array<predict::PredictorConfig, 3> predictors;  // in kPredictorModalities order
  // ResNet settings for an image model, kept for reference only; the vision predictor is a feature MLP.
  double resnet_lr = 1e-4;
  int resnet_epochs = 20;
  std::vector<int> resnet_decay_epochs{4, 8, 12};
  std::array<track::TrackerConfig, 3> trackers;  // in kTrackerModalities order
  std::vector<int> ks{1, 2, 3, 5};
  std::vector<int> bands{1, 2, 3};
  bool height_strata = true;
  bool speed_strata = true;
  bool sweep_enabled = false;
  predict::Modality sweep_modality = predict::Modality::kVision;
  std::vector<double> sweep_fractions{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  int rollout_stride = 10;
  std::vector<NamedSchedule> schedules{
      {"per_step", {"1-50"}}, {"intermittent", {"1-8", "13-20", "33-40"}}, {"initial_only", {"1-8"}}};
  std::string output_dir = "runs/default";

  ExperimentConfig() {
    for (std::size_t i = 0; i < 3; ++i) {
      predictors[i].modality = kPredictorModalities[i];
      trackers[i] = track::TrackerConfig::defaults(kTrackerModalities[i]);
    }
  }

  static ExperimentConfig from_json(const json& j);
  json to_json() const;
  /// FNV-1a of the canonical config JSON without the output directory.
  std::string hash() const;
  json seeds() const;
  /// Replaces every seed field with `seed`.
  void override_seeds(std::uint64_t seed);
  void validate() const;
};

namespace detail {

inline json predictor_json(const predict::PredictorConfig& p) {
  return {{"hidden", p.hidden},   {"batch", p.batch},         {"epochs", p.epochs},
          {"lr", p.lr},           {"decay_epochs", p.decay_epochs}, {"decay_factor", p.decay_factor},
          {"seed", p.seed},       {"train_fraction", p.train_fraction}};
}

inline void read_predictor(const json& j, const std::string& path, predict::PredictorConfig& p) {
  using namespace cfg;
  allow_keys(j, {"hidden", "batch", "epochs", "lr", "decay_epochs", "decay_factor", "seed", "train_fraction",
                 "resnet_reference"},
             path);
  p.hidden = integers(j, "hidden", p.hidden, path);
  p.batch = static_cast<int>(integer(j, "batch", p.batch, path));
  p.epochs = static_cast<int>(integer(j, "epochs", p.epochs, path));
  p.lr = number(j, "lr", p.lr, path);
  p.decay_epochs = integers(j, "decay_epochs", p.decay_epochs, path);
  p.decay_factor = number(j, "decay_factor", p.decay_factor, path);
  p.seed = cfg::seed(j, "seed", p.seed, path);
  p.train_fraction = number(j, "train_fraction", p.train_fraction, path);
  try {
    p.validate();
  } catch (const InvalidInput& e) {
    throw ConfigError(path, e.what());
  }
}

inline json tracker_json(const track::TrackerConfig& t) {
  return {{"input_dim", t.input_dim}, {"hidden", t.hidden},
          {"layers", t.layers},       {"dropout", t.dropout},
          {"lr", t.lr},               {"decay_epochs", t.decay_epochs},
          {"decay_factor", t.decay_factor}, {"batch", t.batch},
          {"epochs", t.epochs},       {"seed", t.seed},
          {"embedding_seed", t.embedding_seed}};
}

inline void read_tracker(const json& j, const std::string& path, track::TrackerConfig& t) {
  using namespace cfg;
  allow_keys(j, {"input_dim", "hidden", "layers", "dropout", "lr", "decay_epochs", "decay_factor", "batch", "epochs",
                 "seed", "embedding_seed"},
             path);
  t.input_dim = static_cast<int>(integer(j, "input_dim", t.input_dim, path));
  t.hidden = static_cast<int>(integer(j, "hidden", t.hidden, path));
  t.layers = static_cast<int>(integer(j, "layers", t.layers, path));
  t.dropout = number(j, "dropout", t.dropout, path);
  t.lr = number(j, "lr", t.lr, path);
  t.decay_epochs = integers(j, "decay_epochs", t.decay_epochs, path);
  t.decay_factor = number(j, "decay_factor", t.decay_factor, path);
  t.batch = static_cast<int>(integer(j, "batch", t.batch, path));
  t.epochs = static_cast<int>(integer(j, "epochs", t.epochs, path));
  t.seed = cfg::seed(j, "seed", t.seed, path);
  t.embedding_seed = cfg::seed(j, "embedding_seed", t.embedding_seed, path);
}

inline std::vector<std::string> strings(const json& j, const std::string& key, const std::string& path) {
  const json& v = j.at(key);
  if (!v.is_array()) throw ConfigError(cfg::join(path, key), "expected an array of strings");
  std::vector<std::string> out;
  for (const auto& e : v) {
    if (!e.is_string()) throw ConfigError(cfg::join(path, key), "expected an array of strings");
    out.push_back(e.get<std::string>());
  }
  return out;
}

}  // namespace detail

inline ExperimentConfig ExperimentConfig::from_json(const json& j) {
  using namespace cfg;
  if (!j.is_object()) throw ConfigError("config", "expected a JSON object");
  allow_keys(j, {"output_dir", "scenario", "dataset", "predictors", "trackers", "eval"}, "");
  ExperimentConfig c;
  c.output_dir = string(j, "output_dir", c.output_dir, "");
  c.scenario = sim::ScenarioConfig::from_json(object_at(j, "scenario", ""), "scenario");

  const json& d = object_at(j, "dataset", "");
  allow_keys(d, {"split_ratio", "split_seed", "r", "r_prime"}, "dataset");
  c.split_ratio = number(d, "split_ratio", c.split_ratio, "dataset");
  c.split_seed = cfg::seed(d, "split_seed", c.split_seed, "dataset");
  c.r = static_cast<int>(integer(d, "r", c.r, "dataset"));
  c.r_prime = static_cast<int>(integer(d, "r_prime", c.r_prime, "dataset"));

  const json& p = object_at(j, "predictors", "");
  allow_keys(p, {"position", "position_hd", "vision"}, "predictors");
  for (std::size_t i = 0; i < 3; ++i) {
    const std::string key = predict::to_string(kPredictorModalities[i]);
    detail::read_predictor(object_at(p, key, "predictors"), "predictors." + key, c.predictors[i]);
  }
  const json& rn = object_at(object_at(p, "vision", "predictors"), "resnet_reference", "predictors.vision");
  allow_keys(rn, {"lr", "epochs", "decay_epochs"}, "predictors.vision.resnet_reference");
  c.resnet_decay_epochs = integers(rn, "decay_epochs", c.resnet_decay_epochs, "predictors.vision.resnet_reference");
  c.resnet_lr = number(rn, "lr", c.resnet_lr, "predictors.vision.resnet_reference");
  c.resnet_epochs = static_cast<int>(integer(rn, "epochs", c.resnet_epochs, "predictors.vision.resnet_reference"));

  const json& t = object_at(j, "trackers", "");
  allow_keys(t, {"beam_only", "position", "vision"}, "trackers");
  for (std::size_t i = 0; i < 3; ++i) {
    const std::string key = track::to_string(kTrackerModalities[i]);
    detail::read_tracker(object_at(t, key, "trackers"), "trackers." + key, c.trackers[i]);
  }

  const json& e = object_at(j, "eval", "");
  allow_keys(e, {"k", "bands", "strata", "fraction_sweep", "rollout"}, "eval");
  c.ks = integers(e, "k", c.ks, "eval");
  c.bands = integers(e, "bands", c.bands, "eval");
  if (e.contains("strata")) {
    const auto s = detail::strings(e, "strata", "eval");
    c.height_strata = std::find(s.begin(), s.end(), "height") != s.end();
    c.speed_strata = std::find(s.begin(), s.end(), "speed") != s.end();
    for (const auto& name : s) check(name == "height" || name == "speed", "eval.strata", "unknown stratum '" + name + "'");
  }
  const json& sw = object_at(e, "fraction_sweep", "eval");
  allow_keys(sw, {"enabled", "modality", "fractions"}, "eval.fraction_sweep");
  c.sweep_enabled = boolean(sw, "enabled", c.sweep_enabled, "eval.fraction_sweep");
  try {
    c.sweep_modality = predict::parse_modality(string(sw, "modality", predict::to_string(c.sweep_modality), "eval.fraction_sweep"));
  } catch (const InvalidInput& ex) {
    throw ConfigError("eval.fraction_sweep.modality", ex.what());
  }
  c.sweep_fractions = numbers(sw, "fractions", c.sweep_fractions, "eval.fraction_sweep");
  const json& ro = object_at(e, "rollout", "eval");
  allow_keys(ro, {"segment_stride", "schedules"}, "eval.rollout");
  c.rollout_stride = static_cast<int>(integer(ro, "segment_stride", c.rollout_stride, "eval.rollout"));
  if (ro.contains("schedules")) {
    const json& sj = ro.at("schedules");
    check(sj.is_array(), "eval.rollout.schedules", "expected an array of {name, gt_steps}");
    c.schedules.clear();
    for (std::size_t i = 0; i < sj.size(); ++i) {
      const std::string ps = "eval.rollout.schedules[" + std::to_string(i) + "]";
      check(sj[i].is_object() && sj[i].contains("name") && sj[i].contains("gt_steps"), ps,
            "expected {\"name\": ..., \"gt_steps\": [...]}");
      allow_keys(sj[i], {"name", "gt_steps"}, ps);
      c.schedules.push_back({string(sj[i], "name", "", ps), detail::strings(sj[i], "gt_steps", ps)});
    }
  }
  c.validate();
  return c;
}

inline json ExperimentConfig::to_json() const {
  json j;
  j["output_dir"] = output_dir;
  j["scenario"] = scenario.to_json();
  j["dataset"] = {{"split_ratio", split_ratio}, {"split_seed", split_seed}, {"r", r}, {"r_prime", r_prime}};
  for (std::size_t i = 0; i < 3; ++i)
    j["predictors"][predict::to_string(kPredictorModalities[i])] = detail::predictor_json(predictors[i]);
  j["predictors"]["vision"]["resnet_reference"] = {{"lr", resnet_lr}, {"epochs", resnet_epochs}, {"decay_epochs", resnet_decay_epochs}};
  for (std::size_t i = 0; i < 3; ++i)
    j["trackers"][track::to_string(kTrackerModalities[i])] = detail::tracker_json(trackers[i]);
  json strata = json::array();
  if (height_strata) strata.push_back("height");
  if (speed_strata) strata.push_back("speed");
  json sched = json::array();
  for (const auto& s : schedules) sched.push_back({{"name", s.name}, {"gt_steps", s.gt_steps}});
  j["eval"] = {{"k", ks},
               {"bands", bands},
               {"strata", strata},
               {"fraction_sweep",
                {{"enabled", sweep_enabled}, {"modality", predict::to_string(sweep_modality)}, {"fractions", sweep_fractions}}},
               {"rollout", {{"segment_stride", rollout_stride}, {"schedules", sched}}}};
  return j;
}

inline std::string ExperimentConfig::hash() const {
  json j = to_json();
  j.erase("output_dir");
  return nn::hex64(fnv1a(j.dump()));
}

inline json ExperimentConfig::seeds() const {
  json j{{"scenario", scenario.seed}, {"gps", scenario.gps.seed}, {"split", split_seed}};
  for (std::size_t i = 0; i < 3; ++i) j[predictor_name(kPredictorModalities[i])] = predictors[i].seed;
  for (std::size_t i = 0; i < 3; ++i)
    j[tracker_name(kTrackerModalities[i])] = {{"seed", trackers[i].seed}, {"embedding_seed", trackers[i].embedding_seed}};
  return j;
}

inline void ExperimentConfig::override_seeds(std::uint64_t seed) {
  scenario.seed = seed;
  scenario.gps.seed = seed;
  split_seed = seed;
  for (auto& p : predictors) p.seed = seed;
  for (auto& t : trackers) {
    t.seed = seed;
    t.embedding_seed = seed;
  }
}

inline void ExperimentConfig::validate() const {
  using cfg::check;
  scenario.validate();
  check(split_ratio > 0.0 && split_ratio < 1.0, "dataset.split_ratio", "must be in (0, 1)");
  check(r >= 1, "dataset.r", "must be >= 1");
  check(r_prime == 3, "dataset.r_prime", "the sequence file format stores exactly 3 future labels");
  for (std::size_t i = 0; i < 3; ++i) {
    const std::string path = "trackers." + std::string(track::to_string(kTrackerModalities[i]));
    auto t = trackers[i];
    t.window = r;
    t.horizon = r_prime;
    try {
      t.validate();
    } catch (const InvalidInput& e) {
      throw ConfigError(path, e.what());
    }
  }
  check(!ks.empty(), "eval.k", "must not be empty");
  for (int k : ks) check(k >= 1 && k <= kNumBeams, "eval.k", "entries must be in [1, 32]");
  for (int b : bands) check(b >= 0 && b < kNumBeams, "eval.bands", "entries must be in [0, 31]");
  for (double f : sweep_fractions) check(f > 0.0 && f <= 1.0, "eval.fraction_sweep.fractions", "entries must be in (0, 1]");
  check(rollout_stride >= 1, "eval.rollout.segment_stride", "must be >= 1");
  std::set<std::string> names;
  for (std::size_t i = 0; i < schedules.size(); ++i) {
    const std::string path = "eval.rollout.schedules[" + std::to_string(i) + "]";
    check(!schedules[i].name.empty(), path + ".name", "must not be empty");
    check(names.insert(schedules[i].name).second, path + ".name", "duplicate schedule name");
    try {
      track::parse_schedule(schedules[i].gt_steps, track::kRolloutHorizon, r);
    } catch (const InvalidInput& e) {
      throw ConfigError(path + ".gt_steps", e.what());
    }
  }
}

inline ExperimentConfig load_config(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("--config", "cannot open " + path.string());
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw ConfigError("--config", path.string() + " is not valid JSON: " + e.what());
  }
  return ExperimentConfig::from_json(j);
}

/// Tracker config as trained: the window and horizon come from the dataset block.
inline track::TrackerConfig resolved_tracker(const ExperimentConfig& c, std::size_t i) {
  auto t = c.trackers[i];
  t.modality = kTrackerModalities[i];
  t.window = c.r;
  t.horizon = c.r_prime;
  return t;
}

// ---------------------------------------------------------------------------
// Artifact layout

struct RunPaths {
  fs::path root;

  fs::path data_dir() const { return root / "data"; }
  fs::path samples_csv() const { return data_dir() / "samples.csv"; }
  fs::path sequences_csv() const { return data_dir() / "sequences.csv"; }
  fs::path data_manifest() const { return data_dir() / "manifest.json"; }
  fs::path checkpoint(const std::string& name) const { return root / "checkpoints" / name; }
  fs::path train_log(const std::string& name) const { return root / "logs" / (name + ".json"); }
  fs::path reports() const { return root / "reports"; }
  fs::path eval_json() const { return reports() / "eval.json"; }
  fs::path rollout_json() const { return reports() / "rollout.json"; }
  fs::path summary_json() const { return reports() / "summary.json"; }
};

/// Progress messages go to stderr unless quiet; artifacts never contain timings.
struct Logger {
  bool quiet = false;
  void operator()(const std::string& msg) const {
    if (!quiet) std::cerr << "[skybeam] " << msg << '\n';
  }
};

inline void require_hash(const json& artifact, const std::string& expected, const fs::path& path,
                         const std::string& producer) {
  const std::string got = artifact.value("config_hash", std::string());
  if (got != expected)
    throw DependencyError(path.string() + " was produced by config " + (got.empty() ? "<none>" : got) +
                          ", current config is " + expected + " (rerun `" + producer + "`)");
}

inline json norm_json(const data::NormalizationSpec& n) {
  json j = json::object();
  for (const auto& [k, v] : n.ranges) j[k] = {v.first, v.second};
  return j;
}

inline data::NormalizationSpec norm_from_json(const json& j) {
  data::NormalizationSpec n;
  for (const auto& [k, v] : j.items()) n.ranges[k] = {v.at(0).get<double>(), v.at(1).get<double>()};
  return n;
}

inline std::string file_hash(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw DependencyError("missing " + p.string() + " (run `generate` first)");
  const std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return nn::hex64(fnv1a(bytes));
}

// ---------------------------------------------------------------------------
// generate

inline json run_generate(const ExperimentConfig& c, const RunPaths& out, const Logger& log) {
  log("generate: synthesizing " + std::to_string(c.scenario.num_flights) + " flights");
  const auto raw = sim::synthesize_dataset(c.scenario, c.scenario.seed);
  const SampleTable samples = raw.sample_table();
  if (samples.empty()) throw Error("generate: the scenario produced no visible samples");
  const auto seqs = data::build_sequences(samples, c.r, c.r_prime);
  fs::create_directories(out.data_dir());
  data::save_dataset(samples, out.samples_csv().string());
  data::save_sequences(seqs, out.sequences_csv().string());

  const auto [pred_train, pred_test] = data::split_train_test(samples, c.split_ratio, c.split_seed);
  const auto [train_flights, test_flights] = data::split_flights(samples, c.split_ratio, c.split_seed);
  std::set<int> flights;
  for (const auto& s : samples) flights.insert(s.flight_id);
  json m{{"artifact", "dataset"},
         {"config_hash", c.hash()},
         {"seeds", c.seeds()},
         {"dataset_hash", file_hash(out.samples_csv())},
         {"sequences_hash", file_hash(out.sequences_csv())},
         {"counts",
          {{"generated", raw.generated},
           {"dropped_invisible", raw.dropped_invisible},
           {"samples", samples.size()},
           {"flights", flights.size()},
           {"sequences", seqs.size()}}},
         {"split",
          {{"prediction", {{"train", pred_train.size()}, {"test", pred_test.size()}}},
           {"tracking", {{"train_flights", train_flights}, {"test_flights", test_flights}}}}}};
  eval::write_json(out.data_manifest(), m);
  log("generate: " + std::to_string(samples.size()) + " samples, " + std::to_string(seqs.size()) + " sequences");
  return m;
}

/// Dataset and both splits, as every downstream stage sees them.
struct PreparedData {
  json manifest;
  SampleTable samples;
  SampleTable pred_train, pred_test;
  data::NormalizationSpec pred_norm;
  SampleTable track_train, track_test;
  std::vector<data::SequenceSample> seq_train, seq_test;
  data::NormalizationSpec track_norm;
};

inline PreparedData prepare_data(const ExperimentConfig& c, const RunPaths& out) {
  PreparedData d;
  d.manifest = eval::read_json(out.data_manifest(), "generate");
  require_hash(d.manifest, c.hash(), out.data_manifest(), "generate");
  if (file_hash(out.samples_csv()) != d.manifest.value("dataset_hash", std::string()))
    throw DependencyError(out.samples_csv().string() + " does not match its manifest (rerun `generate`)");
  if (file_hash(out.sequences_csv()) != d.manifest.value("sequences_hash", std::string()))
    throw DependencyError(out.sequences_csv().string() + " does not match its manifest (rerun `generate`)");
  d.samples = data::load_dataset(out.samples_csv().string());
  std::tie(d.pred_train, d.pred_test) = data::split_train_test(d.samples, c.split_ratio, c.split_seed);
  d.pred_norm = data::fit_normalization(d.pred_train);

  const auto [train_flights, test_flights] = data::split_flights(d.samples, c.split_ratio, c.split_seed);
  for (const auto& s : d.samples) (train_flights.count(s.flight_id) ? d.track_train : d.track_test).push_back(s);
  const auto refs = data::load_sequence_refs(out.sequences_csv().string());
  for (auto& seq : data::resolve_sequences(refs, d.samples, c.r))
    (train_flights.count(seq.flight_id) ? d.seq_train : d.seq_test).push_back(std::move(seq));
  if (d.track_train.empty() || d.seq_train.empty() || d.seq_test.empty())
    throw Error("tracking split needs sequences on both sides; add flights or change dataset.split_seed");
  d.track_norm = data::fit_normalization(d.track_train);
  return d;
}

// ---------------------------------------------------------------------------
// train

inline json predictor_log_json(const predict::TrainingLog& lg) {
  json epochs = json::array();
  for (const auto& e : lg.epochs)
    epochs.push_back({{"epoch", e.epoch}, {"lr", e.lr}, {"loss", e.loss}, {"train_top1", e.train_top1}});
  return {{"samples", lg.samples}, {"warnings", lg.warnings}, {"epochs", epochs}};
}

inline json tracker_log_json(const track::TrackerLog& lg) {
  json epochs = json::array();
  for (const auto& e : lg.epochs) epochs.push_back({{"epoch", e.epoch}, {"lr", e.lr}, {"loss", e.loss}});
  return {{"sequences", lg.sequences}, {"epochs", epochs}};
}

inline void run_train(const ExperimentConfig& c, const RunPaths& out, const Logger& log) {
  const PreparedData d = prepare_data(c, out);
  const std::string hash = c.hash();
  fs::create_directories(out.checkpoint("x").parent_path());
  for (std::size_t i = 0; i < 3; ++i) {
    const auto m = kPredictorModalities[i];
    const std::string name = predictor_name(m);
    auto pc = c.predictors[i];
    pc.modality = m;
    const SampleTable train =
        pc.train_fraction < 1.0 ? predict::training_subset(d.pred_train, pc.train_fraction, mix_seed(pc.seed, 3)) : d.pred_train;
    log("train: " + name + " (" + std::to_string(pc.epochs) + " epochs)");
    predict::TrainingLog lg;
    const auto model = predict::train_predictor(train, pc, d.pred_norm, &lg);
    for (const auto& w : lg.warnings) log("train: " + name + ": " + w);
    const json lj = predictor_log_json(lg);
    json manifest{{"artifact", "checkpoint"},
                  {"kind", "predictor"},
                  {"modality", predict::to_string(m)},
                  {"config_hash", hash},
                  {"seed", pc.seed},
                  {"config", detail::predictor_json(pc)},
                  {"widths", pc.widths()},
                  {"normalization", norm_json(d.pred_norm)},
                  {"final_loss", lg.epochs.empty() ? 0.0 : lg.epochs.back().loss},
                  {"train_samples", lg.samples}};
    nn::save_checkpoint(out.checkpoint(name), manifest, model.net.params(), model.net.layout());
    eval::write_json(out.train_log(name), {{"artifact", "train_log"}, {"config_hash", hash}, {"model", name}, {"log", lj}});
  }
  for (std::size_t i = 0; i < 3; ++i) {
    const auto tc = resolved_tracker(c, i);
    const std::string name = tracker_name(tc.modality);
    log("train: " + name + " (" + std::to_string(tc.epochs) + " epochs)");
    track::TrackerLog lg;
    const auto model = track::train_tracker(d.seq_train, tc, d.track_norm, &lg);
    json manifest{{"artifact", "checkpoint"},
                  {"kind", "tracker"},
                  {"modality", track::to_string(tc.modality)},
                  {"config_hash", hash},
                  {"seed", tc.seed},
                  {"config", detail::tracker_json(tc)},
                  {"window", tc.window},
                  {"horizon", tc.horizon},
                  {"embedding", {{"num_beams", tc.classes}, {"dim", tc.input_dim}, {"seed", tc.embedding_seed}}},
                  {"normalization", norm_json(d.track_norm)},
                  {"final_loss", lg.epochs.empty() ? 0.0 : lg.epochs.back().loss},
                  {"train_sequences", lg.sequences}};
    nn::save_checkpoint(out.checkpoint(name), manifest, model.net.params(), model.net.layout());
    eval::write_json(out.train_log(name),
                     {{"artifact", "train_log"}, {"config_hash", hash}, {"model", name}, {"log", tracker_log_json(lg)}});
  }
}

inline nn::LoadedCheckpoint read_checkpoint(const fs::path& stem) {
  const fs::path manifest = stem.string() + ".json", blob = stem.string() + ".bin";
  for (const auto& p : {manifest, blob})
    if (!fs::exists(p)) throw DependencyError("missing " + p.string() + " (run `train` first)");
  return nn::load_checkpoint(manifest);
}

inline predict::BeamPredictor load_predictor(const ExperimentConfig& c, const RunPaths& out, std::size_t i) {
  const auto m = kPredictorModalities[i];
  const fs::path path = out.checkpoint(predictor_name(m));
  const auto ck = read_checkpoint(path);
  require_hash(ck.manifest, c.hash(), path.string() + ".json", "train");
  auto pc = c.predictors[i];
  pc.modality = m;
  predict::BeamPredictor model{pc, norm_from_json(ck.manifest.at("normalization")), nn::DenseNet<float>(pc.widths(), 0)};
  if (ck.manifest.at("params").at("layout") != nn::layout_json(model.net.layout()))
    throw SchemaError(path.string() + ": parameter layout does not match the configured network");
  model.net.params() = ck.params;
  return model;
}

inline track::BeamTracker load_tracker(const ExperimentConfig& c, const RunPaths& out, std::size_t i) {
  const auto tc = resolved_tracker(c, i);
  const fs::path path = out.checkpoint(tracker_name(tc.modality));
  const auto ck = read_checkpoint(path);
  require_hash(ck.manifest, c.hash(), path.string() + ".json", "train");
  auto model = track::make_tracker(tc, norm_from_json(ck.manifest.at("normalization")));
  if (ck.manifest.at("params").at("layout") != nn::layout_json(model.net.layout()))
    throw SchemaError(path.string() + ": parameter layout does not match the configured network");
  model.net.params() = ck.params;
  return model;
}

// ---------------------------------------------------------------------------
// evaluate

inline json histogram_json(const SampleTable& t) {
  const auto h = data::label_histogram(t);
  return json(std::vector<long>(h.begin(), h.end()));
}

inline json run_evaluate(const ExperimentConfig& c, const RunPaths& out, const Logger& log) {
  const PreparedData d = prepare_data(c, out);
  json report{{"artifact", "eval"},
              {"config_hash", c.hash()},
              {"seeds", c.seeds()},
              {"dataset_hash", d.manifest.at("dataset_hash")},
              {"dataset",
               {{"samples", d.samples.size()},
                {"prediction_train", d.pred_train.size()},
                {"prediction_test", d.pred_test.size()},
                {"tracking_train_sequences", d.seq_train.size()},
                {"tracking_test_sequences", d.seq_test.size()}}},
              {"histograms", {{"train", histogram_json(d.pred_train)}, {"test", histogram_json(d.pred_test)}}}};
  std::ostringstream text;
  eval::TextTable ptable([&] {
    std::vector<std::string> h{"predictor", "test"};
    for (int k : c.ks) h.push_back(eval::k_key(k));
    h.push_back("R2(identity)");
    h.push_back("R2(fitted)");
    return h;
  }());

  for (std::size_t i = 0; i < 3; ++i) {
    const auto model = load_predictor(c, out, i);
    const std::string name = predictor_name(model.config.modality);
    log("evaluate: " + name);
    const auto ev = predict::evaluate_predictor(model, d.pred_test);
    std::vector<double> pred_power, opt_power, heights, speeds;
    std::vector<int> top1;
    std::vector<long> class_counts(kNumBeams, 0);
    for (std::size_t j = 0; j < ev.source.size(); ++j) {
      const auto& s = d.pred_test[ev.source[j]];
      pred_power.push_back(s.power32[ev.rankings[j][0]]);
      opt_power.push_back(s.power32[s.label]);
      heights.push_back(s.height);
      speeds.push_back(s.speed);
      top1.push_back(ev.rankings[j][0]);
      ++class_counts[s.label];
    }
    const auto r2 = eval::r2_power_score(pred_power, opt_power);
    const auto cm = eval::confusion_matrix(ev.truths, top1, kNumBeams);
    eval::write_text(out.reports() / ("confusion_" + name + ".csv"), eval::confusion_csv(cm));
    json strata = json::array();
    if (c.height_strata) {
      const auto spec = eval::height_strata();
      strata.push_back(eval::strata_json(spec, eval::stratified_accuracy(heights, ev.rankings, ev.truths, spec)));
    }
    if (c.speed_strata) {
      const auto spec = eval::speed_strata();
      strata.push_back(eval::strata_json(spec, eval::stratified_accuracy(speeds, ev.rankings, ev.truths, spec)));
    }
    const json acc = eval::topk_json(ev.rankings, ev.truths, c.ks);
    report["predictors"][name] = {{"modality", predict::to_string(model.config.modality)},
                                  {"test_samples", ev.truths.size()},
                                  {"test_class_counts", class_counts},
                                  {"accuracy", acc},
                                  {"r2", eval::r2_json(r2)},
                                  {"confusion", eval::confusion_json(cm, c.bands)},
                                  {"strata", strata}};
    std::vector<std::string> row{name, std::to_string(ev.truths.size())};
    for (int k : c.ks) row.push_back(eval::fmt2(acc[eval::k_key(k)].get<double>()));
    row.push_back(eval::fmt2(r2.identity));
    row.push_back(eval::fmt2(r2.fitted));
    ptable.add(row);
  }
  text << "Beam prediction (test split, %)\n" << ptable.render() << '\n';

  std::vector<std::string> th{"tracker", "future", "sequences"};
  for (int k : c.ks) th.push_back("marginal_" + eval::k_key(k));
  for (int k : c.ks) th.push_back("joint_" + eval::k_key(k));
  eval::TextTable ttable(th);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto model = load_tracker(c, out, i);
    const std::string name = tracker_name(model.config.modality);
    log("evaluate: " + name);
    const auto ev = track::evaluate_tracker(model, d.seq_test);
    json marginal = json::array(), joint = json::array();
    for (int h = 0; h < model.config.horizon; ++h) {
      json m = eval::topk_json(ev.rankings[h], ev.truths[h], c.ks), jn = json::object();
      for (int k : c.ks) jn[eval::k_key(k)] = eval::rounded(eval::joint_topk_accuracy(ev.rankings, ev.truths, h + 1, k));
      std::vector<std::string> row{name, std::to_string(h + 1), std::to_string(ev.sequences)};
      for (int k : c.ks) row.push_back(eval::fmt2(m[eval::k_key(k)].get<double>()));
      for (int k : c.ks) row.push_back(eval::fmt2(jn[eval::k_key(k)].get<double>()));
      ttable.add(row);
      marginal.push_back(m);
      joint.push_back(jn);
    }
    report["trackers"][name] = {{"modality", track::to_string(model.config.modality)},
                                {"test_sequences", ev.sequences},
                                {"marginal", marginal},
                                {"joint", joint}};
  }
  text << "Beam tracking (test flights, %; joint = every future step up to this one)\n" << ttable.render() << '\n';

  if (c.sweep_enabled) {
    const std::size_t idx = static_cast<std::size_t>(
        std::find(kPredictorModalities.begin(), kPredictorModalities.end(), c.sweep_modality) - kPredictorModalities.begin());
    auto pc = c.predictors[idx];
    pc.modality = c.sweep_modality;
    log("evaluate: training-fraction sweep on " + std::string(predict::to_string(pc.modality)));
    const auto rows = predict::training_fraction_sweep(
        d.pred_train, d.pred_test, c.sweep_fractions, pc, d.pred_norm, [&](const predict::SweepRow& r) {
          log("evaluate: sweep fraction " + eval::fmt2(r.fraction) + " top1 " + eval::fmt2(r.topk[0]));
        });
    json jrows = json::array();
    eval::TextTable stable({"fraction", "train_samples", "top1", "top2", "top3", "top5", "note"});
    for (const auto& r : rows) {
      json row{{"fraction", r.fraction}, {"train_samples", r.train_samples}};
      std::vector<std::string> trow{eval::fmt2(r.fraction), std::to_string(r.train_samples)};
      for (std::size_t k = 0; k < eval::kReportedK.size(); ++k) {
        row[eval::k_key(eval::kReportedK[k])] = r.note.empty() ? eval::rounded(r.topk[k]) : json("n/a");
        trow.push_back(r.note.empty() ? eval::fmt2(r.topk[k]) : "n/a");
      }
      if (!r.note.empty()) row["note"] = r.note;
      trow.push_back(r.note);
      jrows.push_back(row);
      stable.add(trow);
    }
    report["fraction_sweep"] = {{"modality", predict::to_string(pc.modality)}, {"rows", jrows}};
    text << "Training-fraction sweep (" << predict::to_string(pc.modality) << ", test split, %)\n" << stable.render() << '\n';
  }

  eval::write_json(out.eval_json(), report);
  eval::write_text(out.reports() / "eval.txt", text.str());
  return report;
}

// ---------------------------------------------------------------------------
// rollout

struct RolloutCurve {
  std::string name;  // e.g. beam_only_intermittent, vision
  std::string tracker;
  std::string schedule;
  track::RolloutSchedule steps;
  bool beam_training = true;  // false for sensed modalities, which never consume beam labels
  std::vector<double> top1, top3;
};

/// Maximal runs of steps sharing the same ground-truth status, e.g. 1-8 (G), 9-12 (P), ...
inline std::vector<std::pair<int, int>> schedule_windows(const track::RolloutSchedule& s, bool beam_training) {
  std::vector<std::pair<int, int>> out;
  if (!beam_training) return {{1, s.horizon}};
  int lo = 1;
  for (int t = 2; t <= s.horizon + 1; ++t)
    if (t > s.horizon || s.is_ground_truth(t) != s.is_ground_truth(lo)) {
      out.emplace_back(lo, t - 1);
      lo = t;
    }
  return out;
}

inline std::string rollout_csv(const std::vector<std::vector<track::RolloutStep>>& rollouts) {
  std::ostringstream os;
  os << "step,true_beam,pred_top1,pred_top2,pred_top3,input_provenance\n";
  for (const auto& ro : rollouts)
    for (const auto& st : ro)
      os << st.step << ',' << st.true_beam << ',' << st.top3[0] << ',' << st.top3[1] << ',' << st.top3[2] << ','
         << st.provenance << '\n';
  return os.str();
}

inline json run_rollout(const ExperimentConfig& c, const RunPaths& out, const Logger& log) {
  const PreparedData d = prepare_data(c, out);
  const int length = track::rollout_segment_length(c.r, track::kRolloutHorizon);
  // every tracker sees the same segments, so vision frames must all be visible
  const auto segments = track::rollout_segments(d.track_test, length, c.rollout_stride, true);
  if (segments.empty()) throw Error("rollout: no " + std::to_string(length) + "-sample segments in the test flights");
  log("rollout: " + std::to_string(segments.size()) + " segments of " + std::to_string(length) + " samples");

  std::vector<RolloutCurve> curves;
  for (std::size_t i = 0; i < 3; ++i) {
    const auto model = load_tracker(c, out, i);
    const std::string tname = track::to_string(model.config.modality);
    std::vector<std::pair<std::string, track::RolloutSchedule>> runs;
    if (model.config.modality == track::Modality::kBeamOnly) {
      for (const auto& ns : c.schedules)
        runs.emplace_back(ns.name, track::parse_schedule(ns.gt_steps, track::kRolloutHorizon, c.r));
    } else {
      runs.emplace_back("sensed", track::full_schedule());
    }
    for (const auto& [sname, sched] : runs) {
      RolloutCurve cv;
      cv.tracker = tname;
      cv.schedule = sname;
      cv.name = model.config.modality == track::Modality::kBeamOnly ? tname + "_" + sname : tname;
      cv.steps = sched;
      cv.beam_training = model.config.modality == track::Modality::kBeamOnly;
      log("rollout: " + cv.name);
      std::vector<std::vector<track::RolloutStep>> rollouts;
      rollouts.reserve(segments.size());
      for (const auto& seg : segments) rollouts.push_back(track::recursive_rollout(model, seg, sched));
      cv.top1 = track::per_step_topk(rollouts, 1);
      cv.top3 = track::per_step_topk(rollouts, 3);
      eval::write_text(out.reports() / ("rollout_" + cv.name + ".csv"), rollout_csv(rollouts));
      curves.push_back(std::move(cv));
    }
  }

  json jcurves = json::object();
  std::ostringstream text;
  eval::TextTable wtable({"curve", "steps", "beam_training", "top1", "top3"});
  for (const auto& cv : curves) {
    json windows = json::array();
    for (const auto& [lo, hi] : schedule_windows(cv.steps, cv.beam_training)) {
      const double m1 = track::mean_over_steps(cv.top1, lo, hi), m3 = track::mean_over_steps(cv.top3, lo, hi);
      const bool gt = cv.beam_training && cv.steps.is_ground_truth(lo);
      windows.push_back({{"from", lo}, {"to", hi}, {"ground_truth", gt}, {"top1", eval::rounded(m1)}, {"top3", eval::rounded(m3)}});
      wtable.add({cv.name, std::to_string(lo) + "-" + std::to_string(hi), gt ? "yes" : "no", eval::fmt2(m1), eval::fmt2(m3)});
    }
    json t1 = json::array(), t3 = json::array();
    for (double v : cv.top1) t1.push_back(eval::rounded(v));
    for (double v : cv.top3) t3.push_back(eval::rounded(v));
    jcurves[cv.name] = {{"tracker", cv.tracker}, {"schedule", cv.schedule},
                        {"beam_training_percent", cv.beam_training ? cv.steps.training_percent() : 0.0},
                        {"ground_truth_steps", cv.beam_training ? json(cv.steps.ground_truth) : json::array()},
                        {"top1", t1},     {"top3", t3},
                        {"windows", windows}};
  }

  // trade-off: beam-only under every schedule, plus the vision tracker that needs no beam training
  json tradeoff = json::array();
  eval::TextTable ttable({"approach", "beam_training_%", "top1", "top3"});
  for (const auto& cv : curves) {
    if (cv.beam_training || cv.tracker == "vision") {
      eval::TradeoffRow row{cv.name, cv.beam_training ? cv.steps.training_percent() : 0.0,
                            track::mean_over_steps(cv.top1, 1, cv.steps.horizon),
                            track::mean_over_steps(cv.top3, 1, cv.steps.horizon)};
      tradeoff.push_back({{"approach", row.approach},
                          {"beam_training_percent", eval::rounded(row.beam_training_percent)},
                          {"top1", eval::rounded(row.top1)},
                          {"top3", eval::rounded(row.top3)}});
      ttable.add({row.approach, eval::fmt2(row.beam_training_percent), eval::fmt2(row.top1), eval::fmt2(row.top3)});
    }
  }

  std::ostringstream csv;
  csv << "step";
  for (const auto& cv : curves) csv << ',' << cv.name << "_top1," << cv.name << "_top3";
  csv << '\n';
  for (int t = 1; t <= track::kRolloutHorizon; ++t) {
    csv << t;
    for (const auto& cv : curves) csv << ',' << eval::fmt2(cv.top1[t - 1]) << ',' << eval::fmt2(cv.top3[t - 1]);
    csv << '\n';
  }
  eval::write_text(out.reports() / "rollout_curves.csv", csv.str());

  text << "Recursive rollout, " << segments.size() << " segments x " << track::kRolloutHorizon << " steps (%)\n"
       << wtable.render() << "\nResource trade-off (mean over steps 1-" << track::kRolloutHorizon << ", %)\n"
       << ttable.render();
  eval::write_text(out.reports() / "rollout.txt", text.str());

  json report{{"artifact", "rollout"},
              {"config_hash", c.hash()},
              {"seeds", c.seeds()},
              {"horizon", track::kRolloutHorizon},
              {"segment_length", length},
              {"segment_stride", c.rollout_stride},
              {"segments", segments.size()},
              {"curves", jcurves},
              {"tradeoff", tradeoff}};
  eval::write_json(out.rollout_json(), report);
  return report;
}

// ---------------------------------------------------------------------------
// report

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline std::string read_text(const fs::path& p, const std::string& producer) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw DependencyError("missing " + p.string() + " (run `" + producer + "` first)");
  return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
}

/// Merges every upstream artifact into reports/summary.json and summary.txt. Refuses artifacts whose
/// config hash differs from the current config.
inline json run_report(const ExperimentConfig& c, const RunPaths& out, const Logger& log) {
  const std::string hash = c.hash();
  const json data = eval::read_json(out.data_manifest(), "generate");
  require_hash(data, hash, out.data_manifest(), "generate");

  json checkpoints = json::object();
  const auto add_checkpoint = [&](const std::string& name) {
    const fs::path mpath = out.checkpoint(name).string() + ".json";
    const json m = eval::read_json(mpath, "train");
    require_hash(m, hash, mpath, "train");
    const json lg = eval::read_json(out.train_log(name), "train");
    require_hash(lg, hash, out.train_log(name), "train");
    checkpoints[name] = {{"kind", m.at("kind")},
                         {"modality", m.at("modality")},
                         {"seed", m.at("seed")},
                         {"final_loss", m.at("final_loss")},
                         {"params", m.at("params").at("count")},
                         {"params_fnv1a", m.at("params").at("fnv1a")}};
  };
  for (auto m : kPredictorModalities) add_checkpoint(predictor_name(m));
  for (auto m : kTrackerModalities) add_checkpoint(tracker_name(m));

  json ev = eval::read_json(out.eval_json(), "evaluate");
  require_hash(ev, hash, out.eval_json(), "evaluate");
  json ro = eval::read_json(out.rollout_json(), "rollout");
  require_hash(ro, hash, out.rollout_json(), "rollout");

  json consistency = json::array();
  for (const auto& [name, block] : ev.at("predictors").items())
    for (const auto& v : eval::predictor_block_violations(block, block.at("test_class_counts").get<std::vector<long>>()))
      consistency.push_back(name + ": " + v);
  if (!consistency.empty()) log("report: " + std::to_string(consistency.size()) + " consistency violations");

  json cfg = c.to_json();
  cfg.erase("output_dir");
  for (const char* k : {"artifact", "config_hash", "seeds"}) {
    ev.erase(k);
    ro.erase(k);
  }
  const json tradeoff = ro.at("tradeoff");
  ro.erase("tradeoff");
  json summary{{"generated_at", utc_timestamp()},
               {"config_hash", hash},
               {"config", cfg},
               {"seeds", c.seeds()},
               {"dataset",
                {{"dataset_hash", data.at("dataset_hash")},
                 {"sequences_hash", data.at("sequences_hash")},
                 {"counts", data.at("counts")},
                 {"split", data.at("split")}}},
               {"checkpoints", checkpoints},
               {"evaluation", ev},
               {"rollout", ro},
               {"tradeoff", tradeoff},
               {"consistency_violations", consistency}};
  eval::write_json(out.summary_json(), summary);

  const auto& counts = data.at("counts");
  const auto& split = data.at("split").at("prediction");
  std::ostringstream text;
  text << "config " << hash << "\n"
       << "dataset " << data.at("dataset_hash").get<std::string>() << ": " << counts.at("samples") << " samples in "
       << counts.at("flights") << " flights (" << counts.at("dropped_invisible") << " out-of-view dropped), "
       << counts.at("sequences") << " sequences\n"
       << "prediction split " << split.at("train") << "/" << split.at("test") << "\n\n"
       << read_text(out.reports() / "eval.txt", "evaluate") << read_text(out.reports() / "rollout.txt", "rollout");
  eval::write_text(out.reports() / "summary.txt", text.str());
  log("report: wrote " + out.summary_json().string());
  return summary;
}

// ---------------------------------------------------------------------------

inline void run_all(const ExperimentConfig& c, const RunPaths& out, const Logger& log) {
  run_generate(c, out, log);
  run_train(c, out, log);
  run_evaluate(c, out, log);
  run_rollout(c, out, log);
  run_report(c, out, log);
}

/// Dispatches a subcommand name; throws InvalidInput for an unknown one.
inline void run_stage(const std::string& stage, const ExperimentConfig& c, const RunPaths& out, const Logger& log) {
  if (stage == "generate") run_generate(c, out, log);
  else if (stage == "train") run_train(c, out, log);
  else if (stage == "evaluate") run_evaluate(c, out, log);
  else if (stage == "rollout") run_rollout(c, out, log);
  else if (stage == "report") run_report(c, out, log);
  else if (stage == "all") run_all(c, out, log);
  else throw InvalidInput("unknown subcommand '" + stage + "'");
}

}  // namespace skybeam::pipeline
