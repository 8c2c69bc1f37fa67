#pragma once

#include <cstdint>
#include <string>

#include <Eigen/Dense>

#include "nugr/error.hpp"
#include "nugr/rng.hpp"

namespace nugr {

// Row-major so that one row is one token / query, matching the usual
// N x C layout of query sets.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

inline constexpr double kInitRange = 0.1;

// Fills a matrix row by row with uniform draws in [-range, range].
inline Matrix seeded_uniform(Eigen::Index rows, Eigen::Index cols, SplitMix64& rng,
                             double range = kInitRange) {
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.uniform(-range, range);
  }
  return m;
}

inline void require_cols(const Matrix& m, Eigen::Index cols, const char* what) {
  if (m.cols() != cols) {
    throw DimensionMismatch(std::string(what) + ": expected " + std::to_string(cols) +
                            " columns, got " + std::to_string(m.cols()));
  }
}

// y = x W + b, applied to each row of x.
struct Linear {
  Matrix weight;  // in x out
  RowVector bias;

  Eigen::Index in_dim() const { return weight.rows(); }
  Eigen::Index out_dim() const { return weight.cols(); }

  static Linear seeded(Eigen::Index in, Eigen::Index out, SplitMix64& rng) {
    Linear l;
    l.weight = seeded_uniform(in, out, rng);
    l.bias = seeded_uniform(1, out, rng);
    return l;
  }

  static Linear zeros(Eigen::Index in, Eigen::Index out) {
    return Linear{Matrix::Zero(in, out), RowVector::Zero(out)};
  }

  Matrix operator()(const Matrix& x) const {
    require_cols(x, in_dim(), "Linear");
    Matrix y = x * weight;
    y.rowwise() += bias;
    return y;
  }
};

enum class Activation { Relu, Identity };

inline Matrix activate(Matrix x, Activation act) {
  if (act == Activation::Relu) x = x.cwiseMax(0.0);
  return x;
}

// Two affine layers with an elementwise nonlinearity between them.
struct Mlp {
  Linear first;
  Linear second;
  Activation activation = Activation::Relu;

  static Mlp seeded(Eigen::Index in, Eigen::Index hidden, Eigen::Index out, SplitMix64& rng,
                    Activation act = Activation::Relu) {
    Mlp m;
    m.first = Linear::seeded(in, hidden, rng);
    m.second = Linear::seeded(hidden, out, rng);
    m.activation = act;
    return m;
  }

  Eigen::Index in_dim() const { return first.in_dim(); }
  Eigen::Index out_dim() const { return second.out_dim(); }

  Matrix operator()(const Matrix& x) const { return second(activate(first(x), activation)); }
};

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace nugr
