#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <gtest/gtest.h>

#include "nugr/fusion_decoder.hpp"

namespace {

using nugr::Matrix;
using nugr::RowVector;

Matrix random_matrix(std::uint64_t seed, Eigen::Index rows, Eigen::Index cols) {
  nugr::SplitMix64 rng(seed);
  return nugr::seeded_uniform(rows, cols, rng, 1.0);
}

RowVector row(std::initializer_list<double> v) {
  RowVector r(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (const double x : v) r(i++) = x;
  return r;
}

TEST(Similarity, CosineExamples) {
  const Matrix q = (Matrix(3, 2) << 2, 0, 0, 3, -1, 0).finished();
  const auto s = nugr::cosine_similarity(q, row({1, 0}));
  EXPECT_DOUBLE_EQ(s(0), 1.0);
  EXPECT_DOUBLE_EQ(s(1), 0.0);
  EXPECT_DOUBLE_EQ(s(2), -1.0);
  EXPECT_THROW(nugr::cosine_similarity(Matrix::Zero(1, 2), row({1, 0})), nugr::ZeroVector);
  EXPECT_THROW(nugr::cosine_similarity(q, row({0, 0})), nugr::ZeroVector);
}

TEST(Similarity, SeededProjectionInRange) {
  const auto proj = nugr::ProjectionPair::seeded(16, 32, 16, 0);
  const auto s = nugr::similarity(random_matrix(1, 64, 16), random_matrix(2, 1, 32), proj);
  ASSERT_EQ(s.size(), 64);
  EXPECT_LE(s.maxCoeff(), 1.0);
  EXPECT_GE(s.minCoeff(), -1.0);
  EXPECT_THROW(nugr::similarity(random_matrix(1, 4, 15), random_matrix(2, 1, 32), proj),
               nugr::DimensionMismatch);
}

TEST(Selector, TieBreakByIndex) {
  const Eigen::VectorXd sims = (Eigen::VectorXd(4) << 0.9, 0.1, 0.5, 0.9).finished();
  const Matrix q = random_matrix(3, 4, 2);
  const auto sel = nugr::select_top_k(q, sims, 2);
  EXPECT_EQ(sel.indices, (std::vector<Eigen::Index>{0, 3}));
  EXPECT_EQ(sel.rows.row(1), q.row(3));
  const auto all = nugr::select_top_k(q, sims, 10);
  EXPECT_EQ(all.indices, (std::vector<Eigen::Index>{0, 3, 2, 1}));
}

TEST(Selector, MatchesFullSortPrefix) {
  const Matrix q = random_matrix(4, 900, 8);
  nugr::SplitMix64 rng(5);
  Eigen::VectorXd sims(900);
  for (Eigen::Index i = 0; i < 900; ++i) sims(i) = std::round(rng.uniform(-1, 1) * 50) / 50;  // forces ties
  std::vector<std::pair<double, Eigen::Index>> full;
  for (Eigen::Index i = 0; i < 900; ++i) full.emplace_back(-sims(i), i);
  std::sort(full.begin(), full.end());
  for (const int k : {32, 64, 256, 900}) {
    const auto sel = nugr::select_top_k(q, sims, k);
    ASSERT_EQ(sel.indices.size(), static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) EXPECT_EQ(sel.indices[static_cast<std::size_t>(i)], full[static_cast<std::size_t>(i)].second);
  }
  const auto sel = nugr::select_top_k(q, sims, 900);
  EXPECT_EQ(std::set<Eigen::Index>(sel.indices.begin(), sel.indices.end()).size(), 900u);
}

TEST(Selector, InvariantUnderPositiveRowScaling) {
  nugr::SplitMix64 rng(6);
  const Matrix projected = random_matrix(7, 900, 16);
  const RowVector ctx = random_matrix(8, 1, 16);
  Matrix scaled = projected;
  for (Eigen::Index r = 0; r < scaled.rows(); ++r) scaled.row(r) *= rng.uniform(0.01, 100.0);
  const Matrix q = random_matrix(9, 900, 4);
  for (const int k : {32, 256}) {
    auto a = nugr::select_top_k(q, nugr::cosine_similarity(projected, ctx), k).indices;
    auto b = nugr::select_top_k(q, nugr::cosine_similarity(scaled, ctx), k).indices;
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    EXPECT_EQ(a, b);
  }
}

TEST(Attention, HandComputedTwoRowsOneHead) {
  nugr::MultiHeadAttention att;
  att.query = nugr::Linear{Matrix::Identity(2, 2), RowVector::Zero(2)};
  att.key = att.query;
  att.value = nugr::Linear{(Matrix(2, 2) << 1, 2, 3, 4).finished(), RowVector::Zero(2)};
  att.output = att.query;
  att.heads = 1;
  const Matrix x = (Matrix(2, 2) << 1, 0, 0, 1).finished();
  std::vector<Matrix> w;
  const Matrix y = att(x, x, &w);
  // Scores are the identity scaled by 1/sqrt(2); values are the rows of V.
  const double a = std::exp(1 / std::sqrt(2.0)), p = a / (a + 1), r = 1 / (a + 1);
  ASSERT_EQ(w.size(), 1u);
  EXPECT_NEAR(w[0](0, 0), p, 1e-12);
  EXPECT_NEAR(w[0](0, 1), r, 1e-12);
  EXPECT_NEAR(y(0, 0), p * 1 + r * 3, 1e-12);
  EXPECT_NEAR(y(0, 1), p * 2 + r * 4, 1e-12);
  EXPECT_NEAR(y(1, 0), r * 1 + p * 3, 1e-12);
  EXPECT_NEAR(y(1, 1), r * 2 + p * 4, 1e-12);
}

// Seeded weights, evaluated with scalar loops.
TEST(Attention, SeededTwoRowsMatchesLoops) {
  nugr::SplitMix64 rng(0);
  const auto att = nugr::MultiHeadAttention::seeded(2, 2, 1, rng);
  const Matrix x = (Matrix(2, 2) << 0.3, -0.7, 1.1, 0.2).finished();
  const Matrix y = att(x, x);
  auto affine = [](const nugr::Linear& l, double a, double b, int j) {
    return a * l.weight(0, j) + b * l.weight(1, j) + l.bias(j);
  };
  double q[2][2], k[2][2], v[2][2];
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      q[i][j] = affine(att.query, x(i, 0), x(i, 1), j);
      k[i][j] = affine(att.key, x(i, 0), x(i, 1), j);
      v[i][j] = affine(att.value, x(i, 0), x(i, 1), j);
    }
  }
  for (int i = 0; i < 2; ++i) {
    double s[2], z = 0;
    for (int j = 0; j < 2; ++j) {
      s[j] = std::exp((q[i][0] * k[j][0] + q[i][1] * k[j][1]) / std::sqrt(2.0));
      z += s[j];
    }
    const double c0 = (s[0] * v[0][0] + s[1] * v[1][0]) / z;
    const double c1 = (s[0] * v[0][1] + s[1] * v[1][1]) / z;
    for (int j = 0; j < 2; ++j) EXPECT_NEAR(y(i, j), affine(att.output, c0, c1, j), 1e-9);
  }
}

struct FuseSetup {
  nugr::FuserConfig cfg{8, 2, 2, 16, 0};
  Matrix all = random_matrix(10, 32, 16);
  RowVector ctx = random_matrix(11, 1, 32);
  nugr::SelectedQueries sel;
  FuseSetup() {
    const auto proj = nugr::ProjectionPair::seeded(16, 32, 16, 0);
    sel = nugr::select_top_k(all, nugr::similarity(all, ctx, proj), cfg.k);
  }
};

TEST(Fuser, ShapeRowSumsAndDeterminism) {
  const FuseSetup s;
  nugr::FuseTrace trace;
  const Matrix out = nugr::fuse(s.sel, s.all, s.ctx, s.cfg, &trace);
  EXPECT_EQ(out.rows(), 8);
  EXPECT_EQ(out.cols(), 16);
  EXPECT_TRUE(out.allFinite());
  ASSERT_EQ(trace.attention_weights.size(), 6u);
  for (const auto& layer : trace.attention_weights) {
    ASSERT_EQ(layer.size(), 2u);
    for (const auto& w : layer) {
      for (Eigen::Index r = 0; r < w.rows(); ++r) EXPECT_NEAR(w.row(r).sum(), 1.0, 1e-6);
    }
  }
  EXPECT_EQ(nugr::fuse(s.sel, s.all, s.ctx, s.cfg), out);
}

TEST(Fuser, PermutationEquivariance) {
  const FuseSetup s;
  const Matrix out = nugr::fuse(s.sel, s.all, s.ctx, s.cfg);
  std::vector<Eigen::Index> perm(8);
  std::iota(perm.begin(), perm.end(), 0);
  nugr::SplitMix64 rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    for (std::size_t i = perm.size() - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
    nugr::SelectedQueries shuffled;
    shuffled.rows.resize(8, 16);
    for (Eigen::Index i = 0; i < 8; ++i) {
      shuffled.rows.row(i) = s.sel.rows.row(perm[static_cast<std::size_t>(i)]);
      shuffled.indices.push_back(s.sel.indices[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])]);
    }
    const Matrix got = nugr::fuse(shuffled, s.all, s.ctx, s.cfg);
    for (Eigen::Index i = 0; i < 8; ++i) {
      EXPECT_TRUE((got.row(i).array() == out.row(perm[static_cast<std::size_t>(i)]).array()).all()) << i;
    }
  }
}

TEST(Fuser, ConfigValidation) {
  nugr::FuserConfig bad{8, 3, 1, 16, 0};
  EXPECT_THROW(bad.validate(), nugr::ValidationError);
  const auto j = nugr::to_json(nugr::FuserConfig{});
  EXPECT_EQ(nugr::fuser_config_from_json(j).k, 256);
  const FuseSetup s;
  const nugr::QueryFuser fuser(s.cfg, 16, 32);
  EXPECT_THROW(fuser(s.sel, s.all, RowVector::Zero(31)), nugr::DimensionMismatch);
  EXPECT_THROW(fuser(s.sel, Matrix::Zero(4, 15), s.ctx), nugr::DimensionMismatch);
}

TEST(BoxHead, Decode) {
  const auto head = nugr::BoxHead::seeded(16, 0);
  const auto boxes = nugr::decode_boxes(random_matrix(13, 40, 16) * 5.0, head);
  ASSERT_EQ(boxes.size(), 40u);
  for (const auto& b : boxes) {
    EXPECT_GT(b.score, 0.0);
    EXPECT_LT(b.score, 1.0);
    for (const double s : b.size_wlh) EXPECT_GT(s, 0.0);
  }
  nugr::BoxHead zero = head;
  zero.linear.weight.setZero();
  const auto same = nugr::decode_boxes(random_matrix(14, 5, 16), zero);
  const auto image = nugr::box_from_params(zero.linear.bias);
  for (const auto& b : same) EXPECT_EQ(b, image);
}

TEST(BoxHead, ResidualDecodingAddsReference) {
  nugr::BoxHead zero{nugr::Linear::zeros(4, 10)};
  nugr::PredictedBox ref;
  ref.center = {3, -2, 1};
  ref.size_wlh = {2, 4, 1.5};
  ref.yaw = 0.5;
  ref.velocity_xy = {1, 0};
  const auto out = nugr::decode_boxes(Matrix::Zero(1, 4), zero, {ref});
  EXPECT_EQ(out[0].center, ref.center);
  EXPECT_NEAR(out[0].size_wlh[1], 4.0, 1e-12);
  EXPECT_DOUBLE_EQ(out[0].yaw, 0.5);
  EXPECT_DOUBLE_EQ(out[0].score, 0.5);
  EXPECT_EQ(out[0].movement, nugr::MovementState::Moving);
}

TEST(EndToEnd, DefaultShapes) {
  const nugr::FuserConfig cfg;
  const Matrix q = random_matrix(15, 900, 256);
  const RowVector ctx = random_matrix(16, 1, 4096);
  const auto proj = nugr::ProjectionPair::seeded(256, 4096, cfg.d, cfg.seed);
  const auto sel = nugr::select_top_k(q, nugr::similarity(q, ctx, proj), cfg.k);
  const Matrix fused = nugr::fuse(sel, q, ctx, cfg);
  EXPECT_EQ(fused.rows(), 256);
  EXPECT_EQ(nugr::decode_boxes(fused, nugr::BoxHead::seeded(256, cfg.seed)).size(), 256u);
}

}  // namespace
