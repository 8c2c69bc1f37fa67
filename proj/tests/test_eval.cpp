#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "nugr/eval.hpp"
#include "oracles/eval_oracle.hpp"

namespace {

using nugr::GtBox;
using nugr::PredictedBox;
using nugr::PromptEval;

GtBox gt_at(double x, double y) {
  GtBox g;
  g.instance_id = "g";
  g.center = {x, y, 0.0};
  return g;
}

PredictedBox pred_at(double x, double y, double score) {
  PredictedBox p;
  p.center = {x, y, 0.0};
  p.score = score;
  return p;
}

PredictedBox copy_of(const GtBox& g) {
  PredictedBox p;
  p.center = g.center;
  p.size_wlh = g.size_wlh;
  p.yaw = g.yaw;
  p.velocity_xy = g.velocity_xy;
  p.movement = nugr::movement_from_velocity(g.velocity_xy);
  p.score = 1.0;
  return p;
}

std::vector<PromptEval> perfect_set() {
  nugr::SplitMix64 rng(3);
  auto prompts = oracle::random_prompt_set(rng);
  for (auto& p : prompts) {
    p.preds.clear();
    for (const auto& g : p.gt) p.preds.push_back(copy_of(g));
  }
  return prompts;
}

TEST(Match, DistanceBoundary) {
  const std::vector<GtBox> gt = {gt_at(0, 0)};
  const std::vector<PredictedBox> near = {pred_at(1.9, 0, 0.9)};
  const std::vector<PredictedBox> far = {pred_at(2.1, 0, 0.9)};
  EXPECT_EQ(nugr::match(near, gt, 2.0).pairs.size(), 1u);
  const auto m = nugr::match(far, gt, 2.0);
  EXPECT_TRUE(m.pairs.empty());
  EXPECT_EQ(m.unmatched_preds, std::vector<std::size_t>{0});
  EXPECT_EQ(m.unmatched_gt, std::vector<std::size_t>{0});
}

TEST(Match, HigherScoreWins) {
  const std::vector<GtBox> gt = {gt_at(0, 0)};
  const std::vector<PredictedBox> preds = {pred_at(0.5, 0, 0.8), pred_at(1.0, 0, 0.9)};
  const auto m = nugr::match(preds, gt, 2.0);
  ASSERT_EQ(m.pairs.size(), 1u);
  EXPECT_EQ(m.pairs[0].pred, 1u);
  EXPECT_DOUBLE_EQ(m.pairs[0].distance, 1.0);
}

TEST(Match, RandomInvariants) {
  nugr::SplitMix64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    for (const auto& p : oracle::random_prompt_set(rng)) {
      const auto m = nugr::match(p.preds, p.gt, 2.0);
      std::set<std::size_t> ps, gs;
      for (const auto& pair : m.pairs) {
        EXPECT_TRUE(ps.insert(pair.pred).second);
        EXPECT_TRUE(gs.insert(pair.gt).second);
        EXPECT_LE(pair.distance, 2.0);
      }
      EXPECT_EQ(ps.size() + m.unmatched_preds.size(), p.preds.size());
      EXPECT_EQ(gs.size() + m.unmatched_gt.size(), p.gt.size());
    }
  }
}

TEST(PrecisionRecall, Examples) {
  PromptEval p;
  p.gt = {gt_at(0, 0), gt_at(10, 0)};
  p.preds = {pred_at(0.1, 0, 0.9), pred_at(50, 0, 0.9)};
  const std::vector<PromptEval> v = {p};
  const auto pr = nugr::precision_recall(v, 0.25, 2.0);
  EXPECT_DOUBLE_EQ(pr.precision, 0.5);
  EXPECT_DOUBLE_EQ(pr.recall, 0.5);
}

TEST(PrecisionRecall, ConfidenceFilterAndEmptyConventions) {
  PromptEval p;
  p.gt = {gt_at(0, 0)};
  p.preds = {pred_at(0, 0, 0.2)};
  std::vector<PromptEval> v = {p};
  auto pr = nugr::precision_recall(v, 0.25, 2.0);
  EXPECT_EQ(pr.precision, 0.0);
  EXPECT_EQ(pr.recall, 0.0);
  v[0].gt.clear();
  pr = nugr::precision_recall(v, 0.25, 2.0);
  EXPECT_EQ(pr.precision, 1.0);
  EXPECT_EQ(pr.recall, 1.0);
}

TEST(AveragePrecision, PerfectAndEmpty) {
  const auto prompts = perfect_set();
  EXPECT_NEAR(nugr::average_precision(prompts, 0.5), 1.0, 1e-12);
  auto empty = prompts;
  for (auto& p : empty) p.preds.clear();
  EXPECT_EQ(nugr::average_precision(empty, 2.0), 0.0);
}

// TP, FP, TP by descending score over two gt boxes: precision 1 up to
// recall 0.5, then 2/3 up to recall 1. Integrated by hand this is
// (40 * 1 + 50 * (2/3 - 0.1) / 0.9) / 90 = 193/243.
TEST(AveragePrecision, ThreePredictionCase) {
  PromptEval p;
  p.gt = {gt_at(0, 0), gt_at(10, 0)};
  p.preds = {pred_at(0, 0, 0.9), pred_at(50, 0, 0.8), pred_at(10, 0, 0.7)};
  const std::vector<PromptEval> v = {p};
  EXPECT_NEAR(nugr::average_precision(v, 2.0), 193.0 / 243.0, 1e-12);
}

TEST(TpErrors, Examples) {
  GtBox g = gt_at(0, 0);
  g.size_wlh = {1, 4, 2};
  PredictedBox p = copy_of(g);
  std::vector<nugr::BoxPair> pairs = {{&p, &g}};
  auto e = nugr::tp_errors(std::span<const nugr::BoxPair>(pairs));
  EXPECT_EQ(e.ate, 0.0);
  EXPECT_EQ(e.ase, 0.0);
  EXPECT_EQ(e.aoe, 0.0);
  EXPECT_EQ(e.ave, 0.0);
  EXPECT_EQ(e.aae, 0.0);

  p.size_wlh = {2, 4, 2};
  EXPECT_DOUBLE_EQ(nugr::tp_errors(std::span<const nugr::BoxPair>(pairs)).ase, 0.5);
  p.size_wlh = g.size_wlh;
  p.yaw = std::numbers::pi / 2;
  EXPECT_DOUBLE_EQ(nugr::tp_errors(std::span<const nugr::BoxPair>(pairs)).aoe, std::numbers::pi / 2);

  const auto none = nugr::tp_errors(std::span<const nugr::BoxPair>());
  EXPECT_EQ(none.ate, 1.0);
  EXPECT_EQ(none.aae, 1.0);
}

TEST(Evaluate, PerfectPredictions) {
  const auto r = nugr::evaluate(perfect_set());
  EXPECT_NEAR(r.precision, 1.0, 1e-9);
  EXPECT_NEAR(r.recall, 1.0, 1e-9);
  EXPECT_NEAR(r.map, 1.0, 1e-9);
  EXPECT_NEAR(r.nds, 1.0, 1e-9);
  EXPECT_EQ(r.tp.ate, 0.0);
}

TEST(Evaluate, EmptyPredictions) {
  auto prompts = perfect_set();
  for (auto& p : prompts) p.preds.clear();
  const auto r = nugr::evaluate(prompts);
  EXPECT_EQ(r.precision, 0.0);
  EXPECT_EQ(r.recall, 0.0);
  EXPECT_EQ(r.map, 0.0);
  EXPECT_EQ(r.nds, 0.0);
}

TEST(Evaluate, MatchesOracleOnRandomSets) {
  nugr::SplitMix64 rng(2024);
  for (int trial = 0; trial < 50; ++trial) {
    const auto prompts = oracle::random_prompt_set(rng);
    const auto got = nugr::evaluate(prompts);
    EXPECT_LE(oracle::max_diff(got, oracle::report(prompts)), 1e-9) << "trial " << trial;
  }
}

TEST(Evaluate, ReportInvariants) {
  nugr::SplitMix64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const auto r = nugr::evaluate(oracle::random_prompt_set(rng));
    for (const double v : {r.precision, r.recall, r.map, r.nds, r.tp.ase, r.tp.aae}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
    EXPECT_GE(r.tp.ate, 0.0);
    EXPECT_LE(r.tp.aoe, std::numbers::pi);
    EXPECT_GE(r.tp.ave, 0.0);
    EXPECT_DOUBLE_EQ(r.nds, nugr::nd_score(r.map, r.tp));
    EXPECT_GE(r.ap_per_threshold.at(4.0), r.ap_per_threshold.at(0.5));
  }
}

TEST(Evaluate, OrderIndependent) {
  nugr::SplitMix64 rng(8);
  auto prompts = oracle::random_prompt_set(rng);
  const auto a = nugr::evaluate(prompts);
  std::reverse(prompts.begin(), prompts.end());
  const auto b = nugr::evaluate(prompts);
  EXPECT_EQ(oracle::max_diff(a, b), 0.0);
}

TEST(Evaluate, FalsePositiveNeverRaisesPrecision) {
  nugr::SplitMix64 rng(9);
  for (int trial = 0; trial < 30; ++trial) {
    auto prompts = oracle::random_prompt_set(rng);
    const double before = nugr::precision_recall(prompts, 0.25, 2.0).precision;
    prompts[0].preds.push_back(pred_at(1000, 1000, 0.99));
    EXPECT_LE(nugr::precision_recall(prompts, 0.25, 2.0).precision, before);
  }
}

TEST(Evaluate, TruePositiveNeverLowersRecall) {
  nugr::SplitMix64 rng(10);
  for (int trial = 0; trial < 30; ++trial) {
    auto prompts = oracle::random_prompt_set(rng);
    const double before = nugr::precision_recall(prompts, 0.25, 2.0).recall;
    prompts[0].preds.push_back(copy_of(prompts[0].gt[0]));
    EXPECT_GE(nugr::precision_recall(prompts, 0.25, 2.0).recall, before);
  }
}

TEST(Evaluate, RigidMotionInvariance) {
  nugr::SplitMix64 rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    auto prompts = oracle::random_prompt_set(rng);
    const double th = rng.uniform(-3, 3), tx = rng.uniform(-100, 100), ty = rng.uniform(-100, 100);
    const double c = std::cos(th), s = std::sin(th);
    auto move = [&](auto& box) {
      const double x = box.center[0], y = box.center[1];
      box.center[0] = c * x - s * y + tx;
      box.center[1] = s * x + c * y + ty;
      const double vx = box.velocity_xy[0], vy = box.velocity_xy[1];
      box.velocity_xy = {c * vx - s * vy, s * vx + c * vy};
      box.yaw = nugr::normalize_angle(box.yaw + th);
    };
    const auto before = nugr::evaluate(prompts);
    for (auto& p : prompts) {
      for (auto& g : p.gt) move(g);
      for (auto& b : p.preds) move(b);
    }
    EXPECT_LE(oracle::max_diff(before, nugr::evaluate(prompts)), 1e-9);
  }
}

TEST(Files, UnknownPromptIdRejected) {
  std::vector<nugr::PromptRecord> gt(1);
  gt[0].prompt_id = "a";
  std::map<std::string, std::vector<PredictedBox>> preds;
  preds["b"] = {};
  EXPECT_THROW(nugr::join_predictions(gt, preds), nugr::UnknownPromptId);
}

TEST(Files, PredictionLineRoundTrip) {
  PredictedBox b = pred_at(1.5, -2.25, 0.75);
  b.movement = nugr::MovementState::Moving;
  std::istringstream in(nugr::prediction_line("x", std::vector<PredictedBox>{b}));
  const auto parsed = nugr::read_predictions(in, "mem");
  ASSERT_EQ(parsed.at("x").size(), 1u);
  EXPECT_EQ(parsed.at("x")[0], b);
}

TEST(Files, ScoreOutOfRangeRejected) {
  std::istringstream in(
      R"({"prompt_id":"x","boxes":[{"center":[0,0,0],"size_wlh":[1,1,1],"yaw_rad":0,)"
      R"("velocity_xy":[0,0],"movement":"moving","score":1.5}]})");
  EXPECT_THROW(nugr::read_predictions(in, "mem"), nugr::ValidationError);
}

}  // namespace
