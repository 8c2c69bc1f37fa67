#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nugr/attributes.hpp"
#include "nugr/eval.hpp"
#include "nugr/fusion_decoder.hpp"
#include "nugr/hog.hpp"
#include "nugr/linalg.hpp"
#include "nugr/losses.hpp"
#include "nugr/parallel.hpp"
#include "nugr/rng.hpp"
#include "nugr/scene.hpp"
#include "nugr/token_protocol.hpp"

namespace nugr {

// Toy-scale sizes for the seeded end-to-end pipeline.
struct DemoConfig {
  std::uint64_t seed = 0;
  int num_queries = 32;   // N_obj
  int query_dim = 16;     // C_B
  int hidden_dim = 32;    // C_L
  int max_steps = 64;
  FuserConfig fuser{8, 2, 1, 16, 0};
  LossConfig loss;
};

// Object queries for one frame plus the box each query encodes.
struct DetectorOutput {
  Matrix queries;
  std::vector<PredictedBox> boxes;
};

inline constexpr Eigen::Index kBoxFeatures = 10;

// Fixed (seed-independent) map from a box to a query vector: ten normalized
// box features followed by sinusoids of fixed projections of them.
inline RowVector embed_box(const PredictedBox& b, Eigen::Index query_dim) {
  if (query_dim < kBoxFeatures) throw DimensionMismatch("query width must be at least 10");
  RowVector f(kBoxFeatures);
  f << b.center[0] / 50.0, b.center[1] / 50.0, b.center[2] / 5.0, std::log(b.size_wlh[0]),
      std::log(b.size_wlh[1]), std::log(b.size_wlh[2]), std::sin(b.yaw), std::cos(b.yaw),
      b.velocity_xy[0] / 10.0, b.velocity_xy[1] / 10.0;
  SplitMix64 rng(hash_tag("box_embedding"));
  const Matrix projection = seeded_uniform(kBoxFeatures, query_dim - kBoxFeatures, rng, 3.0);
  RowVector q(query_dim);
  q.head(kBoxFeatures) = f;
  for (Eigen::Index j = kBoxFeatures; j < query_dim; ++j) {
    q(j) = std::sin(f.dot(projection.col(j - kBoxFeatures)));
  }
  return q;
}

// Detector stand-in: every annotated instance with seeded noise, padded with
// random distractor boxes around the ego, in a seeded shuffled order.
inline DetectorOutput toy_detector(const Scene& scene, std::size_t frame_index,
                                   const std::map<std::string, AttributeSet>& attrs,
                                   const DemoConfig& cfg) {
  const SceneFrame& frame = scene.frames.at(frame_index);
  SplitMix64 rng(derive_seed(cfg.seed, "detector/" + scene.scene_id + "/" + frame.frame_id));
  std::vector<PredictedBox> boxes;
  for (const auto& inst : frame.instances) {
    if (static_cast<int>(boxes.size()) == cfg.num_queries) break;
    PredictedBox b;
    b.center = {inst.center[0] + 0.5 * rng.normal(), inst.center[1] + 0.5 * rng.normal(),
                inst.center[2] + 0.1 * rng.normal()};
    for (int i = 0; i < 3; ++i) b.size_wlh[i] = inst.size_wlh[i] * std::exp(0.05 * rng.normal());
    b.yaw = normalize_angle(inst.yaw + 0.05 * rng.normal());
    const Vec2 v = attrs.at(inst.instance_id).velocity_xy;
    b.velocity_xy = {v[0] + 0.2 * rng.normal(), v[1] + 0.2 * rng.normal()};
    boxes.push_back(b);
  }
  while (static_cast<int>(boxes.size()) < cfg.num_queries) {
    PredictedBox b;
    const Vec3& t = frame.ego_pose.translation;
    b.center = {t[0] + rng.uniform(-50.0, 50.0), t[1] + rng.uniform(-50.0, 50.0), t[2] + rng.uniform(0.0, 2.0)};
    b.size_wlh = {rng.uniform(0.5, 3.0), rng.uniform(0.5, 10.0), rng.uniform(0.5, 4.0)};
    b.yaw = rng.uniform(-3.14159, 3.14159);
    b.velocity_xy = {rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)};
    boxes.push_back(b);
  }
  for (std::size_t i = boxes.size(); i > 1; --i) {
    std::swap(boxes[i - 1], boxes[rng.below(i)]);
  }
  DetectorOutput out;
  out.queries.resize(cfg.num_queries, cfg.query_dim);
  for (int i = 0; i < cfg.num_queries; ++i) {
    boxes[static_cast<std::size_t>(i)].movement = classify_movement(norm(boxes[static_cast<std::size_t>(i)].velocity_xy));
    out.queries.row(i) = embed_box(boxes[static_cast<std::size_t>(i)], cfg.query_dim);
  }
  out.boxes = std::move(boxes);
  return out;
}

struct PromptRun {
  AggregationTrace trace;
  std::vector<PredictedBox> predictions;
  LossReport loss;
};

struct DemoResult {
  std::vector<PromptRecord> prompts;
  std::vector<PromptRun> runs;
  MetricsReport metrics;
  LossReport mean_loss;
};

// Per-prompt pipeline: aggregation with the toy LM, query selection and
// fusion, box decoding, losses. Then grounding evaluation over all prompts.
class DemoPipeline {
 public:
  explicit DemoPipeline(const DemoConfig& cfg)
      : cfg_(cfg),
        vocab_(default_vocabulary()),
        adapter_(Adapter::seeded(cfg.query_dim, cfg.hidden_dim, cfg.seed)),
        context_query_(seeded_context_query(cfg.seed, cfg.hidden_dim)),
        projection_(ProjectionPair::seeded(cfg.query_dim, cfg.hidden_dim, cfg.fuser.d, cfg.seed)),
        fuser_(with_seed(cfg.fuser, cfg.seed), cfg.query_dim, cfg.hidden_dim),
        head_(BoxHead::seeded(cfg.query_dim, cfg.seed)) {}

  const Vocabulary& vocabulary() const { return vocab_; }

  PromptRun run_prompt(const PromptRecord& prompt, const DetectorOutput& det) const {
    PromptRun run;
    const std::vector<TokenId> text = vocab_.encode(prompt.text);
    std::vector<TokenId> response =
        vocab_.encode(render_thinking_response(prompt.attribute_values, static_cast<int>(prompt.gt.size())));
    response.push_back(vocab_.eos_id());
    const ToyLM lm(cfg_.seed, cfg_.hidden_dim, vocab_.size(),
                   det.queries.rows() + static_cast<Eigen::Index>(text.size()), response, vocab_.eos_id());
    Matrix text_embeddings(static_cast<Eigen::Index>(text.size()), cfg_.hidden_dim);
    for (std::size_t i = 0; i < text.size(); ++i) text_embeddings.row(static_cast<Eigen::Index>(i)) = lm.embed(text[i]);

    const Matrix multimodal = build_multimodal_input(det.queries, adapter_, text_embeddings);
    run.trace = run_aggregation(lm, vocab_, multimodal, context_query_, cfg_.max_steps);
    const double l_txt = text_ce(run.trace.logits, run.trace.tokens, run.trace.loss_mask);

    const Eigen::VectorXd sims = similarity(det.queries, run.trace.aggregated_context, projection_);
    const SelectedQueries selected = select_top_k(det.queries, sims, cfg_.fuser.k);
    const Matrix fused = fuser_(selected, det.queries, run.trace.aggregated_context);
    std::vector<PredictedBox> references;
    for (const auto idx : selected.indices) references.push_back(det.boxes[static_cast<std::size_t>(idx)]);
    run.predictions = decode_boxes(fused, head_, references);

    const DetLoss l_det = det_loss(run.predictions, prompt.gt, cfg_.loss.gamma, cfg_.loss.alpha);
    std::vector<Vec3> centers;
    for (const auto& b : det.boxes) centers.push_back(b.center);
    const auto targets = contrastive_targets(centers, prompt.gt);
    const double l_c = contrastive_loss(sims, targets, cfg_.loss.gamma, cfg_.loss.alpha);
    run.loss = total_loss(l_txt, l_det, l_c, cfg_.loss);
    return run;
  }

  DemoResult run(const std::vector<Scene>& scenes) const {
    DemoResult result;
    result.prompts = generate_records(scenes, all_levels());

    // One detector pass per frame, shared by that frame's prompts.
    std::map<std::pair<std::string, std::string>, DetectorOutput> detections;
    for (const Scene& scene : scenes) {
      for (std::size_t f = 0; f < scene.frames.size(); ++f) {
        detections.emplace(std::make_pair(scene.scene_id, scene.frames[f].frame_id),
                           toy_detector(scene, f, annotate_frame(scene, f), cfg_));
      }
    }
    result.runs.resize(result.prompts.size());
    parallel_for(result.prompts.size(), [&](std::size_t i) {
      const PromptRecord& p = result.prompts[i];
      result.runs[i] = run_prompt(p, detections.at({p.scene_id, p.frame_id}));
    });

    std::vector<PromptEval> evals;
    for (std::size_t i = 0; i < result.prompts.size(); ++i) {
      evals.push_back({result.prompts[i].prompt_id, result.prompts[i].level, result.prompts[i].gt,
                       result.runs[i].predictions});
    }
    result.metrics = evaluate(std::move(evals));
    if (!result.runs.empty()) {
      double t = 0, c = 0, cls = 0, l1 = 0;
      for (const auto& r : result.runs) {
        t += r.loss.l_txt;
        c += r.loss.l_c;
        cls += r.loss.det.cls;
        l1 += r.loss.det.l1;
      }
      const auto n = static_cast<double>(result.runs.size());
      result.mean_loss = total_loss(t / n, DetLoss{cls / n, l1 / n}, c / n, cfg_.loss);
    }
    return result;
  }

 private:
  static FuserConfig with_seed(FuserConfig f, std::uint64_t seed) {
    f.seed = seed;
    return f;
  }

  DemoConfig cfg_;
  Vocabulary vocab_;
  Adapter adapter_;
  RowVector context_query_;
  ProjectionPair projection_;
  QueryFuser fuser_;
  BoxHead head_;
};

}  // namespace nugr
