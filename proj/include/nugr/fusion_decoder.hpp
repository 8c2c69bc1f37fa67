#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nugr/attributes.hpp"
#include "nugr/error.hpp"
#include "nugr/eval.hpp"
#include "nugr/linalg.hpp"
#include "nugr/rng.hpp"

namespace nugr {

inline constexpr double kZeroNorm = 1e-12;
inline constexpr double kLayerNormEps = 1e-5;

struct FuserConfig {
  int k = 256;
  int heads = 4;
  int blocks = 1;
  int d = 256;
  std::uint64_t seed = 0;

  void validate() const {
    if (k < 1 || heads < 1 || blocks < 1 || d < 1) {
      throw ValidationError("fuser k, heads, blocks and d must be positive");
    }
    if (d % heads != 0) throw ValidationError("d must be divisible by heads");
  }
};

inline Json to_json(const FuserConfig& cfg) {
  return Json{{"seed", cfg.seed}, {"d", cfg.d}, {"heads", cfg.heads}, {"blocks", cfg.blocks}, {"k", cfg.k}};
}

inline FuserConfig fuser_config_from_json(const Json& j) {
  FuserConfig cfg;
  cfg.seed = detail::require(j, "seed", "$").get<std::uint64_t>();
  cfg.d = detail::require(j, "d", "$").get<int>();
  cfg.heads = detail::require(j, "heads", "$").get<int>();
  cfg.blocks = detail::require(j, "blocks", "$").get<int>();
  cfg.k = detail::require(j, "k", "$").get<int>();
  cfg.validate();
  return cfg;
}

// MLP_1 (object queries, C_B -> d) and MLP_2 (context, C_L -> d).
struct ProjectionPair {
  Mlp object_mlp;
  Mlp context_mlp;

  static ProjectionPair seeded(Eigen::Index query_dim, Eigen::Index context_dim, Eigen::Index d,
                               std::uint64_t seed) {
    SplitMix64 rng(derive_seed(seed, "selector"));
    ProjectionPair p;
    p.object_mlp = Mlp::seeded(query_dim, d, d, rng);
    p.context_mlp = Mlp::seeded(context_dim, d, d, rng);
    return p;
  }
};

// Row-wise cosine similarity of already-projected queries against one vector.
inline Eigen::VectorXd cosine_similarity(const Matrix& projected_queries,
                                         const RowVector& projected_context) {
  require_cols(projected_queries, projected_context.cols(), "cosine similarity");
  const double cnorm = projected_context.norm();
  if (cnorm < kZeroNorm) throw ZeroVector("projected context query has zero norm");
  Eigen::VectorXd sims(projected_queries.rows());
  for (Eigen::Index i = 0; i < projected_queries.rows(); ++i) {
    const double qnorm = projected_queries.row(i).norm();
    if (qnorm < kZeroNorm) {
      throw ZeroVector("projected object query has zero norm", "row " + std::to_string(i));
    }
    const double s = projected_queries.row(i).dot(projected_context) / (qnorm * cnorm);
    sims(i) = std::clamp(s, -1.0, 1.0);
  }
  return sims;
}

inline Eigen::VectorXd similarity(const Matrix& object_queries, const RowVector& context,
                                  const ProjectionPair& proj) {
  require_cols(object_queries, proj.object_mlp.in_dim(), "object queries");
  if (context.cols() != proj.context_mlp.in_dim()) {
    throw DimensionMismatch("context query dimension differs from MLP_2 input");
  }
  const Matrix ctx = proj.context_mlp(Matrix(context));
  return cosine_similarity(proj.object_mlp(object_queries), ctx.row(0));
}

struct SelectedQueries {
  std::vector<Eigen::Index> indices;  // descending similarity
  Matrix rows;
};

// Top-k rows by similarity; ties go to the lower row index.
inline SelectedQueries select_top_k(const Matrix& object_queries, const Eigen::VectorXd& sims,
                                    int k) {
  if (k < 1) throw ValidationError("k must be at least 1");
  if (sims.size() != object_queries.rows()) {
    throw DimensionMismatch("similarity count differs from query count");
  }
  std::vector<Eigen::Index> order(static_cast<std::size_t>(sims.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  const auto take = std::min<std::size_t>(static_cast<std::size_t>(k), order.size());
  const auto by_sim = [&](Eigen::Index a, Eigen::Index b) {
    if (sims(a) != sims(b)) return sims(a) > sims(b);
    return a < b;
  };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(), by_sim);
  order.resize(take);
  SelectedQueries sel;
  sel.rows.resize(static_cast<Eigen::Index>(take), object_queries.cols());
  for (std::size_t i = 0; i < take; ++i) sel.rows.row(static_cast<Eigen::Index>(i)) = object_queries.row(order[i]);
  sel.indices = std::move(order);
  return sel;
}

inline Matrix softmax_rows(Matrix x) {
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mx = x.row(r).maxCoeff();
    x.row(r) = (x.row(r).array() - mx).exp();
    x.row(r) /= x.row(r).sum();
  }
  return x;
}

// Per-row normalization to zero mean and unit variance (no affine terms).
inline Matrix layer_norm(const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mean = x.row(r).mean();
    const double var = (x.row(r).array() - mean).square().mean();
    out.row(r) = (x.row(r).array() - mean) / std::sqrt(var + kLayerNormEps);
  }
  return out;
}

// Scaled dot-product multi-head attention. Queries have model width; the
// key/value source may have any width.
struct MultiHeadAttention {
  Linear query;
  Linear key;
  Linear value;
  Linear output;
  int heads = 1;

  static MultiHeadAttention seeded(Eigen::Index model_dim, Eigen::Index source_dim, int heads,
                                   SplitMix64& rng) {
    MultiHeadAttention a;
    a.query = Linear::seeded(model_dim, model_dim, rng);
    a.key = Linear::seeded(source_dim, model_dim, rng);
    a.value = Linear::seeded(source_dim, model_dim, rng);
    a.output = Linear::seeded(model_dim, model_dim, rng);
    a.heads = heads;
    return a;
  }

  // weights, when given, receives one (queries x keys) matrix per head.
  Matrix operator()(const Matrix& queries, const Matrix& source,
                    std::vector<Matrix>* weights = nullptr) const {
    const Eigen::Index model = query.out_dim();
    if (model % heads != 0) throw DimensionMismatch("model width not divisible by heads");
    const Eigen::Index dh = model / heads;
    const Matrix q = query(queries);
    const Matrix k = key(source);
    const Matrix v = value(source);
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    Matrix concat(queries.rows(), model);
    for (int h = 0; h < heads; ++h) {
      const auto c0 = h * dh;
      const Matrix w = softmax_rows((q.middleCols(c0, dh) * k.middleCols(c0, dh).transpose()) * scale);
      concat.middleCols(c0, dh) = w * v.middleCols(c0, dh);
      if (weights != nullptr) weights->push_back(w);
    }
    return output(concat);
  }
};

// Rows of x in lexicographic order. Attention is invariant to the order of
// its keys; feeding them in a canonical order also makes the floating-point
// reduction order, and so the output bits, independent of input order.
inline Matrix canonical_row_order(const Matrix& x) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(x.rows()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      if (x(a, c) != x(b, c)) return x(a, c) < x(b, c);
    }
    return false;
  });
  Matrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < order.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(order[i]);
  return out;
}

struct FuserBlock {
  MultiHeadAttention self_attention;
  MultiHeadAttention object_attention;
  MultiHeadAttention semantic_attention;
};

struct FuseTrace {
  // Per block: self, object, semantic attention weights, one matrix per head.
  std::vector<std::vector<Matrix>> attention_weights;
};

// Self-attention over the selected queries, cross-attention to the full
// query set, cross-attention to the projected aggregated context; each
// sub-layer is residual + layer norm. No positional encodings.
class QueryFuser {
 public:
  QueryFuser(const FuserConfig& cfg, Eigen::Index query_dim, Eigen::Index context_dim)
      : cfg_(cfg), query_dim_(query_dim) {
    cfg.validate();
    if (query_dim % cfg.heads != 0) {
      throw DimensionMismatch("query width must be divisible by heads");
    }
    SplitMix64 rng(derive_seed(cfg.seed, "fuser"));
    context_projection_ = Linear::seeded(context_dim, cfg.d, rng);
    for (int b = 0; b < cfg.blocks; ++b) {
      FuserBlock blk;
      blk.self_attention = MultiHeadAttention::seeded(query_dim, query_dim, cfg.heads, rng);
      blk.object_attention = MultiHeadAttention::seeded(query_dim, query_dim, cfg.heads, rng);
      blk.semantic_attention = MultiHeadAttention::seeded(query_dim, cfg.d, cfg.heads, rng);
      blocks_.push_back(std::move(blk));
    }
  }

  const FuserConfig& config() const { return cfg_; }
  const Linear& context_projection() const { return context_projection_; }
  const std::vector<FuserBlock>& blocks() const { return blocks_; }
  std::vector<FuserBlock>& mutable_blocks() { return blocks_; }

  Matrix operator()(const SelectedQueries& selected, const Matrix& all_queries,
                    const RowVector& aggregated_context, FuseTrace* trace = nullptr) const {
    require_cols(selected.rows, query_dim_, "selected queries");
    require_cols(all_queries, query_dim_, "object queries");
    if (aggregated_context.cols() != context_projection_.in_dim()) {
      throw DimensionMismatch("aggregated context dimension differs from fuser context width");
    }
    const Matrix semantic = context_projection_(Matrix(aggregated_context));
    Matrix x = selected.rows;
    for (const FuserBlock& blk : blocks_) {
      std::vector<Matrix> w_self, w_obj, w_sem;
      const bool record = trace != nullptr;
      x = layer_norm(x + blk.self_attention(x, canonical_row_order(x), record ? &w_self : nullptr));
      x = layer_norm(x + blk.object_attention(x, all_queries, record ? &w_obj : nullptr));
      x = layer_norm(x + blk.semantic_attention(x, semantic, record ? &w_sem : nullptr));
      if (record) {
        trace->attention_weights.push_back(std::move(w_self));
        trace->attention_weights.push_back(std::move(w_obj));
        trace->attention_weights.push_back(std::move(w_sem));
      }
    }
    return x;
  }

 private:
  FuserConfig cfg_;
  Eigen::Index query_dim_;
  Linear context_projection_;
  std::vector<FuserBlock> blocks_;
};

inline Matrix fuse(const SelectedQueries& selected, const Matrix& all_queries,
                   const RowVector& aggregated_context, const FuserConfig& cfg,
                   FuseTrace* trace = nullptr) {
  const QueryFuser fuser(cfg, all_queries.cols(), aggregated_context.cols());
  return fuser(selected, all_queries, aggregated_context, trace);
}

inline constexpr Eigen::Index kBoxParams = 10;  // x y z w l h yaw vx vy logit

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct BoxHead {
  Linear linear;  // C_B -> 10

  static BoxHead seeded(Eigen::Index query_dim, std::uint64_t seed) {
    SplitMix64 rng(derive_seed(seed, "box_head"));
    return BoxHead{Linear::seeded(query_dim, kBoxParams, rng)};
  }
};

inline PredictedBox box_from_params(const Eigen::Ref<const RowVector>& o) {
  PredictedBox b;
  b.center = {o(0), o(1), o(2)};
  b.size_wlh = {std::exp(o(3)), std::exp(o(4)), std::exp(o(5))};
  b.yaw = o(6);
  b.velocity_xy = {o(7), o(8)};
  b.movement = classify_movement(norm(b.velocity_xy));
  b.score = logistic(o(9));
  return b;
}

// One box per fused row; sizes through exp, score through the logistic.
inline std::vector<PredictedBox> decode_boxes(const Matrix& fused, const BoxHead& head) {
  if (head.linear.out_dim() != kBoxParams) throw DimensionMismatch("box head must output 10 values");
  const Matrix out = head.linear(fused);
  std::vector<PredictedBox> boxes;
  for (Eigen::Index r = 0; r < out.rows(); ++r) boxes.push_back(box_from_params(out.row(r)));
  return boxes;
}

// Same head read as residuals on reference boxes: center, yaw and velocity
// offsets, log-size deltas.
inline std::vector<PredictedBox> decode_boxes(const Matrix& fused, const BoxHead& head,
                                              const std::vector<PredictedBox>& references) {
  if (static_cast<std::size_t>(fused.rows()) != references.size()) {
    throw DimensionMismatch("one reference box per fused query required");
  }
  if (head.linear.out_dim() != kBoxParams) throw DimensionMismatch("box head must output 10 values");
  const Matrix out = head.linear(fused);
  std::vector<PredictedBox> boxes;
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const PredictedBox& ref = references[static_cast<std::size_t>(r)];
    RowVector o = out.row(r);
    for (int i = 0; i < 3; ++i) {
      o(i) += ref.center[static_cast<std::size_t>(i)];
      o(3 + i) += std::log(ref.size_wlh[static_cast<std::size_t>(i)]);
    }
    o(6) = normalize_angle(o(6) + ref.yaw);
    o(7) += ref.velocity_xy[0];
    o(8) += ref.velocity_xy[1];
    boxes.push_back(box_from_params(o));
  }
  return boxes;
}

}  // namespace nugr
