#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "nugr/error.hpp"
#include "nugr/eval.hpp"
#include "nugr/fusion_decoder.hpp"
#include "nugr/linalg.hpp"
#include "nugr/token_protocol.hpp"

namespace nugr {

inline constexpr double kProbabilityClamp = 1e-7;
inline constexpr double kContrastiveTemperature = 0.07;
inline constexpr double kContrastiveRadius = 2.0;

struct LossConfig {
  double w_txt = 1.0;
  double w_det = 1.0;
  double w_c = 1.0;
  double gamma = 2.0;
  double alpha = 0.25;

  void validate() const {
    if (w_txt < 0 || w_det < 0 || w_c < 0) throw ValidationError("loss weights must be >= 0");
  }
};

struct DetLoss {
  double cls = 0.0;  // mean focal over all scores
  double l1 = 0.0;   // mean per-pair L1 over the 9 box parameters
  double total() const { return cls + l1; }
};

struct LossReport {
  double l_txt = 0.0;
  DetLoss det;
  double l_det = 0.0;
  double l_c = 0.0;
  double total = 0.0;
};

// Mean over unmasked positions of -log softmax(logits)[target].
inline double text_ce(const Matrix& logits, std::span<const TokenId> targets,
                      const std::vector<bool>& mask) {
  if (static_cast<std::size_t>(logits.rows()) != targets.size() || mask.size() != targets.size()) {
    throw DimensionMismatch("logits, targets and mask lengths differ");
  }
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    if (!mask[t]) continue;
    const auto row = logits.row(static_cast<Eigen::Index>(t));
    if (targets[t] < 0 || targets[t] >= row.cols()) throw DimensionMismatch("target id out of range");
    const double mx = row.maxCoeff();
    const double lse = mx + std::log((row.array() - mx).exp().sum());
    sum += lse - row(targets[t]);
    ++n;
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

inline double focal(double p, int target, double gamma, double alpha) {
  p = std::clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp);
  if (target == 1) return -alpha * std::pow(1.0 - p, gamma) * std::log(p);
  return -(1.0 - alpha) * std::pow(p, gamma) * std::log(1.0 - p);
}

inline std::array<double, 9> box_vector(const Vec3& c, const Vec3& s, double yaw, const Vec2& v) {
  return {c[0], c[1], c[2], s[0], s[1], s[2], yaw, v[0], v[1]};
}

// Focal over every score (matched -> 1, unmatched -> 0) plus L1 over matched
// pairs. Matching is the evaluation matcher at 2 m.
inline DetLoss det_loss(std::span<const PredictedBox> preds, std::span<const GtBox> gt,
                        double gamma = 2.0, double alpha = 0.25) {
  DetLoss loss;
  if (preds.empty()) return loss;
  const MatchResult m = match(preds, gt, kTpDistanceThreshold);
  std::vector<int> target(preds.size(), 0);
  for (const auto& pair : m.pairs) target[pair.pred] = 1;
  for (std::size_t i = 0; i < preds.size(); ++i) loss.cls += focal(preds[i].score, target[i], gamma, alpha);
  loss.cls /= static_cast<double>(preds.size());
  if (!m.pairs.empty()) {
    for (const auto& pair : m.pairs) {
      const PredictedBox& p = preds[pair.pred];
      const GtBox& g = gt[pair.gt];
      const auto a = box_vector(p.center, p.size_wlh, p.yaw, p.velocity_xy);
      const auto b = box_vector(g.center, g.size_wlh, g.yaw, g.velocity_xy);
      double l1 = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) l1 += std::abs(a[i] - b[i]);
      loss.l1 += l1 / static_cast<double>(a.size());
    }
    loss.l1 /= static_cast<double>(m.pairs.size());
  }
  return loss;
}

// Focal on logistic(similarity / tau), averaged over rows.
inline double contrastive_loss(const Eigen::VectorXd& sims, std::span<const int> targets,
                               double gamma = 2.0, double alpha = 0.25) {
  if (static_cast<std::size_t>(sims.size()) != targets.size()) {
    throw DimensionMismatch("one target per similarity row required");
  }
  if (targets.empty()) return 0.0;
  double sum = 0.0;
  for (Eigen::Index i = 0; i < sims.size(); ++i) {
    sum += focal(logistic(sims(i) / kContrastiveTemperature), targets[static_cast<std::size_t>(i)],
                 gamma, alpha);
  }
  return sum / static_cast<double>(targets.size());
}

// 1 for queries whose decoded center lies within 2 m (BEV) of any referred
// gt box.
inline std::vector<int> contrastive_targets(std::span<const Vec3> query_centers,
                                            std::span<const GtBox> gt) {
  std::vector<int> out;
  for (const Vec3& c : query_centers) {
    int hit = 0;
    for (const GtBox& g : gt) {
      if (bev_distance(c, g.center) <= kContrastiveRadius) {
        hit = 1;
        break;
      }
    }
    out.push_back(hit);
  }
  return out;
}

inline LossReport total_loss(double l_txt, const DetLoss& det, double l_c, const LossConfig& cfg) {
  cfg.validate();
  LossReport r;
  r.l_txt = l_txt;
  r.det = det;
  r.l_det = det.total();
  r.l_c = l_c;
  r.total = cfg.w_txt * r.l_txt + cfg.w_det * r.l_det + cfg.w_c * r.l_c;
  return r;
}

inline LossReport total_loss(double l_txt, double l_det, double l_c, const LossConfig& cfg) {
  return total_loss(l_txt, DetLoss{l_det, 0.0}, l_c, cfg);
}

inline Json to_json(const LossReport& r) {
  return Json{{"l_txt", r.l_txt}, {"l_det", r.l_det}, {"l_c", r.l_c}, {"total", r.total}};
}

}  // namespace nugr
