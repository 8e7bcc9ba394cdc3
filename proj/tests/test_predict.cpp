#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

#include "skybeam/data/dataset.hpp"
#include "skybeam/predict/predictor.hpp"
#include "skybeam/sim/scenario.hpp"

using namespace skybeam;
using namespace skybeam::predict;

namespace {

SensingSample at(double e, double n, int label) {
  SensingSample s;
  s.gps_e = e;
  s.gps_n = n;
  s.height = 50.0;
  s.distance = std::hypot(e, n, 50.0);
  s.label = label;
  s.visual = {0.5, 0.5, 0.1, true};
  return s;
}

/// Four well separated clusters, one beam per quadrant.
SampleTable four_clusters(int per_class, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> jitter(0.0, 4.0);
  const double cx[4] = {-60, 60, -60, 60}, cy[4] = {-60, -60, 60, 60};
  SampleTable out;
  for (int c = 0; c < 4; ++c)
    for (int i = 0; i < per_class; ++i) out.push_back(at(cx[c] + jitter(rng), cy[c] + jitter(rng), 3 + 5 * c));
  return out;
}

PredictorConfig small_config(Modality m, int epochs) {
  PredictorConfig c;
  c.modality = m;
  c.hidden = {64, 64};
  c.epochs = epochs;
  return c;
}

const SampleTable& corpus() {
  static const SampleTable table = [] {
    sim::ScenarioConfig c;
    c.num_flights = 6;
    return sim::synthesize_dataset(c, c.seed).sample_table();
  }();
  return table;
}

}  // namespace

TEST(PredictorConfig, DefaultsAndArity) {
  const PredictorConfig c;
  EXPECT_EQ(c.hidden, (std::vector<int>{512, 512}));
  EXPECT_EQ(c.batch, 32);
  EXPECT_EQ(c.epochs, 100);
  EXPECT_DOUBLE_EQ(c.lr, 1e-2);
  EXPECT_EQ(c.decay_epochs, (std::vector<int>{20, 40, 80}));
  EXPECT_EQ(feature_arity(Modality::kPosition), 2);
  EXPECT_EQ(feature_arity(Modality::kPositionHd), 4);
  EXPECT_EQ(feature_arity(Modality::kVision), 3);
  PredictorConfig v;
  v.modality = Modality::kVision;
  EXPECT_EQ(v.widths(), (std::vector<int>{3, 512, 512, 32}));
  for (auto m : {Modality::kPosition, Modality::kPositionHd, Modality::kVision}) EXPECT_EQ(parse_modality(to_string(m)), m);
  EXPECT_THROW(parse_modality("lidar"), InvalidInput);
  PredictorConfig bad;
  bad.train_fraction = 0.0;
  EXPECT_THROW(bad.validate(), InvalidInput);
  bad = {};
  bad.batch = 0;
  EXPECT_THROW(bad.validate(), InvalidInput);
}

TEST(AssembleFeatures, TrainingMinimumMapsToZero) {
  const SampleTable train{at(-100, 20, 0), at(40, 180, 1), at(10, 50, 2)};
  const auto norm = data::fit_normalization(train);
  const auto x = assemble_features(train[0], Modality::kPosition, norm);
  ASSERT_TRUE(x);
  ASSERT_EQ(x->size(), 2);
  EXPECT_DOUBLE_EQ((*x)(0), 0.0);
  EXPECT_DOUBLE_EQ((*x)(1), 0.0);
  const auto hd = assemble_features(train[1], Modality::kPositionHd, norm);
  ASSERT_TRUE(hd);
  EXPECT_EQ(hd->size(), 4);
  EXPECT_DOUBLE_EQ((*hd)(0), 1.0);
  EXPECT_DOUBLE_EQ((*hd)(1), 1.0);
}

TEST(AssembleFeatures, OnAxisDroneIsImageCenter) {
  const sim::CameraModel cam;
  sim::DroneState st;
  st.position = cam.forward() * 60.0;
  SensingSample s = at(st.position.x(), st.position.y(), 4);
  s.visual = sim::project_camera(st, cam);
  const auto norm = data::fit_normalization(SampleTable{s, at(10, 10, 1)});
  const auto x = assemble_features(s, Modality::kVision, norm);
  ASSERT_TRUE(x);
  ASSERT_EQ(x->size(), 3);
  EXPECT_NEAR((*x)(0), 0.5, 1e-12);
  EXPECT_NEAR((*x)(1), 0.5, 1e-12);

  s.visual.visible = false;
  EXPECT_FALSE(assemble_features(s, Modality::kVision, norm));
  EXPECT_TRUE(assemble_features(s, Modality::kPosition, norm));
}

TEST(TrainPredictor, SeparableClustersReachFullAccuracy) {
  const auto train = four_clusters(50, 3);
  const auto norm = data::fit_normalization(train);
  TrainingLog log;
  const auto model = train_predictor(train, small_config(Modality::kPosition, 100), norm, &log);
  EXPECT_EQ(log.epochs.size(), 100u);
  EXPECT_LT(log.epochs.back().loss, log.epochs.front().loss);
  EXPECT_DOUBLE_EQ(evaluate_predictor(model, train).topk[0], 100.0);
  EXPECT_DOUBLE_EQ(evaluate_predictor(model, four_clusters(20, 99)).topk[0], 100.0);
}

TEST(TrainPredictor, MemorizesFiftySamples) {
  SampleTable subset;
  for (std::size_t i = 0; i < corpus().size() && subset.size() < 50; i += 7) subset.push_back(corpus()[i]);
  ASSERT_EQ(subset.size(), 50u);
  const auto norm = data::fit_normalization(subset);
  PredictorConfig c;
  c.modality = Modality::kPositionHd;
  c.decay_epochs = {};
  c.lr = 1e-3;
  c.epochs = 1000;
  const auto model = train_predictor(subset, c, norm);
  EXPECT_DOUBLE_EQ(evaluate_predictor(model, subset).topk[0], 100.0);
}

TEST(TrainPredictor, SameSeedIsBitIdentical) {
  const auto train = four_clusters(30, 5);
  const auto norm = data::fit_normalization(train);
  TrainingLog a_log, b_log;
  const auto a = train_predictor(train, small_config(Modality::kPositionHd, 5), norm, &a_log);
  const auto b = train_predictor(train, small_config(Modality::kPositionHd, 5), norm, &b_log);
  EXPECT_EQ(a_log.epochs.back().loss, b_log.epochs.back().loss);
  EXPECT_TRUE((a.net.params().array() == b.net.params().array()).all());
  auto other = small_config(Modality::kPositionHd, 5);
  other.seed = 2;
  const auto c = train_predictor(train, other, norm);
  EXPECT_FALSE((a.net.params().array() == c.net.params().array()).all());
}

TEST(TrainPredictor, SingleClassWarnsButTrains) {
  SampleTable train;
  for (int i = 0; i < 20; ++i) train.push_back(at(i, -i, 9));
  TrainingLog log;
  const auto model = train_predictor(train, small_config(Modality::kPosition, 3), data::fit_normalization(train), &log);
  ASSERT_EQ(log.warnings.size(), 1u);
  EXPECT_NE(log.warnings[0].find("degenerate"), std::string::npos);
  EXPECT_EQ(predict_topk(model, nn::Vec<double>::Zero(2), 1)[0], 9);
}

TEST(TrainPredictor, RejectsUnusableInput) {
  const auto norm = data::fit_normalization(four_clusters(2, 1));
  EXPECT_THROW(train_predictor({}, small_config(Modality::kPosition, 1), norm), InvalidInput);
  SampleTable hidden = four_clusters(2, 1);
  for (auto& s : hidden) s.visual.visible = false;
  EXPECT_THROW(train_predictor(hidden, small_config(Modality::kVision, 1), norm), InvalidInput);
}

TEST(PredictTopk, ProbabilitiesFormASimplex) {
  const auto train = four_clusters(10, 2);
  const auto model = train_predictor(train, small_config(Modality::kPosition, 2), data::fit_normalization(train));
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-0.5, 1.5);
  for (int i = 0; i < 200; ++i) {
    const nn::Vec<double> x = nn::Vec<double>::NullaryExpr(2, [&] { return u(rng); });
    const auto p = model.predict_proba(x);
    EXPECT_NEAR(p.sum(), 1.0, 1e-9);
    EXPECT_GE(p.minCoeff(), 0.0);
  }
}

TEST(PredictTopk, FullRankingIsPermutationAndMatchesSortOracle) {
  const auto train = four_clusters(10, 2);
  const auto model = train_predictor(train, small_config(Modality::kPosition, 2), data::fit_normalization(train));
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 100; ++i) {
    const nn::Vec<double> x = nn::Vec<double>::NullaryExpr(2, [&] { return u(rng); });
    const auto ranked = predict_topk(model, x, kNumBeams);
    std::vector<int> sorted = ranked;
    std::sort(sorted.begin(), sorted.end());
    std::vector<int> all(kNumBeams);
    std::iota(all.begin(), all.end(), 0);
    EXPECT_EQ(sorted, all);

    const auto p = model.predict_proba(x);
    std::vector<int> oracle = all;
    std::stable_sort(oracle.begin(), oracle.end(), [&](int a, int b) { return p(a) > p(b); });
    EXPECT_EQ(predict_topk(model, x, 5), std::vector<int>(oracle.begin(), oracle.begin() + 5));
  }
}

TEST(PredictTopk, OneHotOutputBreaksTiesByIndex) {
  BeamPredictor model{small_config(Modality::kPosition, 0), {}, nn::DenseNet<float>({2, 8, 8, 32}, 1)};
  model.net.params().setZero();
  model.net.bias(2)(7) = 50.0f;
  EXPECT_EQ(predict_topk(model, nn::Vec<double>::Zero(2), 3), (std::vector<int>{7, 0, 1}));
  EXPECT_THROW(predict_topk(model, nn::Vec<double>::Zero(2), 0), InvalidInput);
  EXPECT_THROW(predict_topk(model, nn::Vec<double>::Zero(2), 33), InvalidInput);
}

TEST(TrainingSubset, SizeOrderAndSeed) {
  SampleTable train;
  for (int i = 0; i < 101; ++i) train.push_back(at(i, 0, i % 32));
  const auto sub = training_subset(train, 0.4, 5);
  EXPECT_EQ(sub.size(), 41u);
  EXPECT_TRUE(std::is_sorted(sub.begin(), sub.end(), [](const auto& a, const auto& b) { return a.gps_e < b.gps_e; }));
  EXPECT_EQ(sub, training_subset(train, 0.4, 5));
  EXPECT_NE(sub, training_subset(train, 0.4, 6));
  EXPECT_EQ(training_subset(train, 1.0, 5), train);
  EXPECT_EQ(training_subset(train, 1e-6, 5).size(), 1u);
}

TEST(TrainingFractionSweep, FullFractionMatchesBaseline) {
  const auto train = four_clusters(15, 6);
  const auto test = four_clusters(5, 7);
  const auto norm = data::fit_normalization(train);
  const auto cfg = small_config(Modality::kPosition, 3);
  const auto rows = training_fraction_sweep(train, test, {1.0}, cfg, norm);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].topk, evaluate_predictor(train_predictor(train, cfg, norm), test).topk);
  EXPECT_EQ(rows[0].train_samples, 60);
}

TEST(TrainingFractionSweep, TenFractionsGiveTenRows) {
  const auto train = four_clusters(10, 6);
  const auto test = four_clusters(3, 7);
  const auto norm = data::fit_normalization(train);
  std::vector<double> fractions;
  for (int i = 1; i <= 10; ++i) fractions.push_back(i / 10.0);
  int calls = 0;
  const auto rows =
      training_fraction_sweep(train, test, fractions, small_config(Modality::kPosition, 1), norm, [&](const SweepRow&) { ++calls; });
  ASSERT_EQ(rows.size(), 10u);
  EXPECT_EQ(calls, 10);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_DOUBLE_EQ(rows[i].fraction, fractions[i]);
    EXPECT_EQ(rows[i].train_samples, static_cast<long>(std::ceil(fractions[i] * 40 - 1e-9)));
    EXPECT_TRUE(rows[i].note.empty());
  }
  EXPECT_THROW(training_fraction_sweep(train, test, {0.0}, small_config(Modality::kPosition, 1), norm), InvalidInput);
}

TEST(TrainingFractionSweep, UnusableSubsetIsSkippedWithNote) {
  auto train = four_clusters(5, 1);
  for (auto& s : train) s.visual.visible = false;
  train[0].visual.visible = true;
  const auto norm = data::fit_normalization(four_clusters(5, 1));
  const auto test = four_clusters(2, 2);
  const auto rows = training_fraction_sweep(train, test, {0.05, 1.0}, small_config(Modality::kVision, 1), norm);
  ASSERT_EQ(rows.size(), 2u);
  // 0.05 of 20 keeps one sample; it is visible only if it happens to be train[0].
  if (rows[0].train_samples == 0) EXPECT_FALSE(rows[0].note.empty());
  EXPECT_EQ(rows[1].train_samples, 1);
  EXPECT_TRUE(rows[1].note.empty());

  SampleTable hidden = four_clusters(5, 1);
  for (auto& s : hidden) s.visual.visible = false;
  const auto skipped = training_fraction_sweep(hidden, test, {0.5}, small_config(Modality::kVision, 1), norm);
  ASSERT_EQ(skipped.size(), 1u);
  EXPECT_EQ(skipped[0].train_samples, 0);
  EXPECT_FALSE(skipped[0].note.empty());
}

TEST(Strata, LowAltitudeBinIsWeakestWithGroundBounce) {
  sim::ScenarioConfig c;
  c.channel.ground.enabled = true;
  const auto table = sim::synthesize_dataset(c, c.seed).sample_table();
  const auto [train, test] = data::split_train_test(table, 0.7, 11);
  const auto norm = data::fit_normalization(train);
  PredictorConfig pc;
  pc.modality = Modality::kVision;
  pc.epochs = 30;
  pc.decay_epochs = {10, 20};
  const auto ev = evaluate_predictor(train_predictor(train, pc, norm), test);
  std::vector<double> heights;
  for (auto i : ev.source) heights.push_back(test[i].height);
  const auto bins = eval::stratified_accuracy(heights, ev.rankings, ev.truths, eval::height_strata());
  ASSERT_EQ(bins.size(), 3u);
  long total = 0;
  for (const auto& b : bins) {
    total += b.count;
    ASSERT_TRUE(b.topk[0]);
  }
  EXPECT_EQ(total, static_cast<long>(ev.truths.size()));
  EXPECT_LT(*bins[0].topk[0], *bins[1].topk[0]);
  EXPECT_LT(*bins[0].topk[0], *bins[2].topk[0]);
}
