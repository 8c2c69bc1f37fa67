#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nugr/attributes.hpp"
#include "nugr/error.hpp"
#include "nugr/geometry.hpp"
#include "nugr/hog.hpp"

namespace nugr {

inline constexpr std::array<double, 4> kApDistanceThresholds = {0.5, 1.0, 2.0, 4.0};
inline constexpr double kTpDistanceThreshold = 2.0;
inline constexpr double kMinRecall = 0.1;
inline constexpr double kMinPrecision = 0.1;

struct PredictedBox {
  Vec3 center{0.0, 0.0, 0.0};
  Vec3 size_wlh{1.0, 1.0, 1.0};
  double yaw = 0.0;
  Vec2 velocity_xy{0.0, 0.0};
  MovementState movement = MovementState::Stopped;
  double score = 0.0;

  bool operator==(const PredictedBox&) const = default;
};

struct MatchPair {
  std::size_t pred = 0;
  std::size_t gt = 0;
  double distance = 0.0;
};

struct MatchResult {
  std::vector<MatchPair> pairs;
  std::vector<std::size_t> unmatched_preds;
  std::vector<std::size_t> unmatched_gt;
};

// Prediction indices by descending score; ties keep input order.
inline std::vector<std::size_t> score_order(std::span<const PredictedBox> preds) {
  std::vector<std::size_t> order(preds.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return preds[a].score > preds[b].score;
  });
  return order;
}

// Greedy matching: predictions in descending score order each take the
// nearest still-unmatched gt box (BEV center distance) within the threshold.
inline MatchResult match(std::span<const PredictedBox> preds, std::span<const GtBox> gt,
                         double dist_threshold) {
  MatchResult result;
  std::vector<bool> taken(gt.size(), false);
  std::vector<bool> pred_matched(preds.size(), false);
  for (const std::size_t p : score_order(preds)) {
    std::size_t best = gt.size();
    double best_dist = std::numeric_limits<double>::infinity();
    for (std::size_t g = 0; g < gt.size(); ++g) {
      if (taken[g]) continue;
      const double d = bev_distance(preds[p].center, gt[g].center);
      if (d < best_dist) {
        best_dist = d;
        best = g;
      }
    }
    if (best < gt.size() && best_dist <= dist_threshold) {
      taken[best] = true;
      pred_matched[p] = true;
      result.pairs.push_back({p, best, best_dist});
    }
  }
  for (std::size_t p = 0; p < preds.size(); ++p) {
    if (!pred_matched[p]) result.unmatched_preds.push_back(p);
  }
  for (std::size_t g = 0; g < gt.size(); ++g) {
    if (!taken[g]) result.unmatched_gt.push_back(g);
  }
  return result;
}

// Ground truth and predictions for one prompt.
struct PromptEval {
  std::string prompt_id;
  int level = 1;
  std::vector<GtBox> gt;
  std::vector<PredictedBox> preds;
};

struct PrecisionRecall {
  double precision = 0.0;
  double recall = 0.0;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
};

// Micro-averaged (pooled counts) precision and recall after dropping
// predictions scored below conf_threshold.
inline PrecisionRecall precision_recall(std::span<const PromptEval> prompts,
                                        double conf_threshold = 0.25,
                                        double dist_threshold = 2.0) {
  PrecisionRecall pr;
  for (const PromptEval& p : prompts) {
    std::vector<PredictedBox> kept;
    for (const auto& b : p.preds) {
      if (b.score >= conf_threshold) kept.push_back(b);
    }
    const MatchResult m = match(kept, p.gt, dist_threshold);
    pr.tp += m.pairs.size();
    pr.fp += m.unmatched_preds.size();
    pr.fn += m.unmatched_gt.size();
  }
  const std::size_t n_pred = pr.tp + pr.fp;
  const std::size_t n_gt = pr.tp + pr.fn;
  if (n_pred == 0) {
    pr.precision = n_gt == 0 ? 1.0 : 0.0;
  } else {
    pr.precision = static_cast<double>(pr.tp) / static_cast<double>(n_pred);
  }
  pr.recall = n_gt == 0 ? 1.0 : static_cast<double>(pr.tp) / static_cast<double>(n_gt);
  return pr;
}

// Area under the interpolated precision-recall curve, sampled at 101 recall
// points, clipped below recall 0.1 and precision 0.1 and renormalized.
inline double average_precision(std::span<const PromptEval> prompts, double dist_threshold) {
  struct Scored {
    double score;
    bool tp;
  };
  std::vector<Scored> pooled;
  std::size_t n_gt = 0;
  for (const PromptEval& p : prompts) {
    n_gt += p.gt.size();
    const MatchResult m = match(p.preds, p.gt, dist_threshold);
    std::vector<bool> is_tp(p.preds.size(), false);
    for (const auto& pair : m.pairs) is_tp[pair.pred] = true;
    for (std::size_t i = 0; i < p.preds.size(); ++i) {
      pooled.push_back({p.preds[i].score, is_tp[i]});
    }
  }
  if (n_gt == 0 || pooled.empty()) return 0.0;
  std::stable_sort(pooled.begin(), pooled.end(),
                   [](const Scored& a, const Scored& b) { return a.score > b.score; });

  std::vector<double> precision(pooled.size());
  std::vector<double> recall(pooled.size());
  std::size_t tp = 0;
  for (std::size_t i = 0; i < pooled.size(); ++i) {
    if (pooled[i].tp) ++tp;
    precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
    recall[i] = static_cast<double>(tp) / static_cast<double>(n_gt);
  }
  // Suffix maximum turns raw precision into max precision at recall >= r.
  for (std::size_t i = pooled.size() - 1; i-- > 0;) {
    precision[i] = std::max(precision[i], precision[i + 1]);
  }
  const int first = static_cast<int>(std::lround(100.0 * kMinRecall)) + 1;
  double sum = 0.0;
  std::size_t cursor = 0;
  for (int s = 0; s <= 100; ++s) {
    const double r = static_cast<double>(s) / 100.0;
    while (cursor < recall.size() && recall[cursor] < r) ++cursor;
    const double p = cursor < recall.size() ? precision[cursor] : 0.0;
    if (s >= first) sum += std::max(0.0, p - kMinPrecision);
  }
  return sum / static_cast<double>(101 - first) / (1.0 - kMinPrecision);
}

struct TpErrors {
  double ate = 1.0;
  double ase = 1.0;
  double aoe = 1.0;
  double ave = 1.0;
  double aae = 1.0;
};

inline MovementState movement_from_velocity(const Vec2& v) {
  return classify_movement(norm(v));
}

// 1 - IoU of two boxes sharing center and heading.
inline double scale_error(const Vec3& a, const Vec3& b) {
  const double inter = std::min(a[0], b[0]) * std::min(a[1], b[1]) * std::min(a[2], b[2]);
  const double va = a[0] * a[1] * a[2];
  const double vb = b[0] * b[1] * b[2];
  return 1.0 - inter / (va + vb - inter);
}

struct BoxPair {
  const PredictedBox* pred;
  const GtBox* gt;
};

// Means over matched pairs; every error is 1.0 when there are no pairs.
inline TpErrors tp_errors(std::span<const BoxPair> pairs) {
  TpErrors e;
  if (pairs.empty()) return e;
  double ate = 0, ase = 0, aoe = 0, ave = 0, wrong = 0;
  for (const auto& [pred, gt] : pairs) {
    ate += bev_distance(pred->center, gt->center);
    ase += scale_error(pred->size_wlh, gt->size_wlh);
    aoe += yaw_difference(pred->yaw, gt->yaw);
    ave += std::hypot(pred->velocity_xy[0] - gt->velocity_xy[0],
                      pred->velocity_xy[1] - gt->velocity_xy[1]);
    if (pred->movement != movement_from_velocity(gt->velocity_xy)) wrong += 1.0;
  }
  const auto n = static_cast<double>(pairs.size());
  e.ate = ate / n;
  e.ase = ase / n;
  e.aoe = aoe / n;
  e.ave = ave / n;
  e.aae = wrong / n;
  return e;
}

// TP errors over all predictions matched at the given distance.
inline TpErrors tp_errors(std::span<const PromptEval> prompts,
                          double dist_threshold = kTpDistanceThreshold) {
  std::vector<BoxPair> pairs;
  for (const PromptEval& p : prompts) {
    for (const auto& m : match(p.preds, p.gt, dist_threshold).pairs) {
      pairs.push_back({&p.preds[m.pred], &p.gt[m.gt]});
    }
  }
  return tp_errors(std::span<const BoxPair>(pairs));
}

inline double nd_score(double map, const TpErrors& e) {
  double sum = 5.0 * map;
  for (const double err : {e.ate, e.ase, e.aoe, e.ave, e.aae}) {
    sum += 1.0 - std::min(1.0, err);
  }
  return sum / 10.0;
}

struct EvalConfig {
  double conf_threshold = 0.25;
  double dist_threshold = 2.0;
};

struct MetricsSummary {
  double precision = 0.0;
  double recall = 0.0;
  double map = 0.0;
  std::map<double, double> ap_per_threshold;
  TpErrors tp;
  double nds = 0.0;
};

struct MetricsReport : MetricsSummary {
  std::map<int, MetricsSummary> per_level;
};

inline MetricsSummary summarize(std::span<const PromptEval> prompts, const EvalConfig& cfg) {
  MetricsSummary s;
  const auto pr = precision_recall(prompts, cfg.conf_threshold, cfg.dist_threshold);
  s.precision = pr.precision;
  s.recall = pr.recall;
  double sum = 0.0;
  for (const double t : kApDistanceThresholds) {
    const double ap = average_precision(prompts, t);
    s.ap_per_threshold[t] = ap;
    sum += ap;
  }
  s.map = sum / static_cast<double>(kApDistanceThresholds.size());
  s.tp = tp_errors(prompts);
  s.nds = nd_score(s.map, s.tp);
  return s;
}

// Prompts are reduced in prompt_id order, so the report does not depend on
// input order.
inline MetricsReport evaluate(std::vector<PromptEval> prompts, const EvalConfig& cfg = {}) {
  std::sort(prompts.begin(), prompts.end(),
            [](const PromptEval& a, const PromptEval& b) { return a.prompt_id < b.prompt_id; });
  MetricsReport report;
  static_cast<MetricsSummary&>(report) = summarize(prompts, cfg);
  std::set<int> levels;
  for (const auto& p : prompts) levels.insert(p.level);
  for (const int level : levels) {
    std::vector<PromptEval> subset;
    for (const auto& p : prompts) {
      if (p.level == level) subset.push_back(p);
    }
    report.per_level[level] = summarize(subset, cfg);
  }
  return report;
}

// ---------------------------------------------------------------------------
// I/O

inline std::string threshold_key(double t) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", t);
  return buf;
}

inline Json to_json(const MetricsSummary& s) {
  Json ap = Json::object();
  for (const auto& [t, v] : s.ap_per_threshold) ap[threshold_key(t)] = v;
  return Json{{"precision", s.precision},
              {"recall", s.recall},
              {"mAP", s.map},
              {"ap_per_threshold", std::move(ap)},
              {"tp_errors",
               Json{{"ATE", s.tp.ate}, {"ASE", s.tp.ase}, {"AOE", s.tp.aoe},
                    {"AVE", s.tp.ave}, {"AAE", s.tp.aae}}},
              {"NDS", s.nds}};
}

inline Json to_json(const MetricsReport& r) {
  Json j = to_json(static_cast<const MetricsSummary&>(r));
  Json levels = Json::object();
  for (const auto& [level, s] : r.per_level) levels[std::to_string(level)] = to_json(s);
  j["per_level"] = std::move(levels);
  return j;
}

inline Json to_json(const PredictedBox& b) {
  return Json{{"center", b.center},
              {"size_wlh", b.size_wlh},
              {"yaw_rad", b.yaw},
              {"velocity_xy", b.velocity_xy},
              {"movement", std::string(to_string(b.movement))},
              {"score", b.score}};
}

inline PredictedBox predicted_box_from_json(const Json& j, const std::string& where) {
  using namespace detail;
  PredictedBox b;
  b.center = get_vec<3>(j, "center", where);
  b.size_wlh = get_vec<3>(j, "size_wlh", where);
  b.yaw = get_number(j, "yaw_rad", where);
  b.velocity_xy = get_vec<2>(j, "velocity_xy", where);
  const std::string mv = get_string(j, "movement", where);
  if (mv == "moving") {
    b.movement = MovementState::Moving;
  } else if (mv == "stopped") {
    b.movement = MovementState::Stopped;
  } else {
    throw ParseError("movement must be \"moving\" or \"stopped\"", where + ".movement");
  }
  b.score = get_number(j, "score", where);
  if (!(b.score >= 0.0 && b.score <= 1.0)) {
    throw ValidationError("score outside [0, 1]", where + ".score");
  }
  for (const double s : b.size_wlh) {
    if (!(s > 0.0)) throw ValidationError("size components must be positive", where + ".size_wlh");
  }
  return b;
}

// prompt_id -> boxes. Duplicate prompt_ids are rejected.
inline std::map<std::string, std::vector<PredictedBox>> read_predictions(
    std::istream& in, const std::string& source) {
  std::map<std::string, std::vector<PredictedBox>> out;
  for_each_jsonl(in, source, [&](const Json& j, const std::string& where) {
    const std::string id = detail::get_string(j, "prompt_id", where);
    const Json& boxes = detail::get_array(j, "boxes", where);
    std::vector<PredictedBox> parsed;
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      parsed.push_back(predicted_box_from_json(boxes[i], where + ".boxes[" + std::to_string(i) + "]"));
    }
    if (!out.emplace(id, std::move(parsed)).second) {
      throw ParseError("duplicate prompt_id '" + id + "'", where);
    }
  });
  return out;
}

inline std::string prediction_line(const std::string& prompt_id,
                                   std::span<const PredictedBox> boxes) {
  Json arr = Json::array();
  for (const auto& b : boxes) arr.push_back(to_json(b));
  return Json{{"prompt_id", prompt_id}, {"boxes", std::move(arr)}}.dump() + "\n";
}

// Joins gt records with predictions. Prompts with no prediction line get no
// predictions; a prediction for an unknown prompt_id is an error.
inline std::vector<PromptEval> join_predictions(
    const std::vector<PromptRecord>& gt,
    std::map<std::string, std::vector<PredictedBox>> preds) {
  std::vector<PromptEval> out;
  std::set<std::string> known;
  for (const auto& rec : gt) {
    if (!known.insert(rec.prompt_id).second) {
      throw ParseError("duplicate prompt_id '" + rec.prompt_id + "' in ground truth");
    }
  }
  for (const auto& [id, boxes] : preds) {
    if (!known.contains(id)) throw UnknownPromptId("unknown prompt_id '" + id + "'");
  }
  for (const auto& rec : gt) {
    PromptEval p;
    p.prompt_id = rec.prompt_id;
    p.level = rec.level;
    p.gt = rec.gt;
    if (auto it = preds.find(rec.prompt_id); it != preds.end()) p.preds = std::move(it->second);
    out.push_back(std::move(p));
  }
  return out;
}

inline MetricsReport evaluate_files(const std::filesystem::path& gt_path,
                                    const std::filesystem::path& pred_path,
                                    const EvalConfig& cfg = {}) {
  std::ifstream gin(gt_path);
  if (!gin) throw IoError("cannot open ground truth file", gt_path.string());
  std::ifstream pin(pred_path);
  if (!pin) throw IoError("cannot open prediction file", pred_path.string());
  const auto gt = read_prompt_records(gin, gt_path.string());
  auto preds = read_predictions(pin, pred_path.string());
  return evaluate(join_predictions(gt, std::move(preds)), cfg);
}

}  // namespace nugr
