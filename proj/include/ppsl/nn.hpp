#pragma once

#include <cmath>
#include <random>
#include <string_view>
#include <type_traits>

#include <Eigen/Dense>

#include "ppsl/graph.hpp"

namespace ppsl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

/// A parameter set exposes its blocks through for_each_block(f), calling
/// f(name, matrix) in a fixed order. Gradients use the same type.
template <class P>
concept ParameterSet = requires(P p, const P cp) {
  p.for_each_block([](std::string_view, Matrix&) {});
  cp.for_each_block([](std::string_view, const Matrix&) {});
};

template <ParameterSet P>
P zeros_like(const P& p) {
  P out = p;
  out.for_each_block([](std::string_view, Matrix& m) { m.setZero(); });
  return out;
}

/// dst += scale * src, block by block.
template <ParameterSet P>
void add_scaled(P& dst, double scale, const P& src) {
  std::vector<const Matrix*> blocks;
  src.for_each_block([&](std::string_view, const Matrix& m) { blocks.push_back(&m); });
  std::size_t i = 0;
  dst.for_each_block([&](std::string_view, Matrix& m) { m += scale * *blocks[i++]; });
}

template <ParameterSet P>
bool all_finite(const P& p) {
  bool ok = true;
  p.for_each_block([&](std::string_view, const Matrix& m) { ok = ok && m.allFinite(); });
  return ok;
}

template <ParameterSet P>
std::size_t parameter_count(const P& p) {
  std::size_t n = 0;
  p.for_each_block([&](std::string_view, const Matrix& m) { n += static_cast<std::size_t>(m.size()); });
  return n;
}

template <ParameterSet P>
bool identical(const P& a, const P& b) {
  std::vector<const Matrix*> blocks;
  b.for_each_block([&](std::string_view, const Matrix& m) { blocks.push_back(&m); });
  std::size_t i = 0;
  bool same = true;
  a.for_each_block([&](std::string_view, const Matrix& m) {
    const Matrix& o = *blocks[i++];
    same = same && m.rows() == o.rows() && m.cols() == o.cols() && m == o;
  });
  return same;
}

/// Glorot-uniform fill.
inline void glorot(Matrix& m, Rng& rng) {
  double a = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
  std::uniform_real_distribution<double> u(-a, a);
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = u(rng);
}

/// Adaptive-moment descent over a parameter set.
template <ParameterSet P>
class Adam {
 public:
  explicit Adam(const P& shape, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : m_(zeros_like(shape)), v_(zeros_like(shape)), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(P& params, const P& grads, double lr) {
    ++t_;
    std::vector<const Matrix*> g;
    grads.for_each_block([&](std::string_view, const Matrix& x) { g.push_back(&x); });
    std::vector<Matrix*> m, v;
    m_.for_each_block([&](std::string_view, Matrix& x) { m.push_back(&x); });
    v_.for_each_block([&](std::string_view, Matrix& x) { v.push_back(&x); });
    double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    std::size_t i = 0;
    params.for_each_block([&](std::string_view, Matrix& p) {
      *m[i] = beta1_ * *m[i] + (1.0 - beta1_) * *g[i];
      *v[i] = beta2_ * *v[i] + (1.0 - beta2_) * g[i]->cwiseProduct(*g[i]);
      p.array() -= lr * (m[i]->array() / c1) / ((v[i]->array() / c2).sqrt() + eps_);
      ++i;
    });
  }

 private:
  P m_, v_;
  double beta1_, beta2_, eps_;
  long t_ = 0;
};

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

/// log(1 + exp(x)) without overflow.
inline double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

inline Matrix relu(const Matrix& x) { return x.cwiseMax(0.0); }

/// Zeroes entries of `grad` where the pre-activation was not positive.
inline Matrix relu_backward(const Matrix& grad, const Matrix& pre) {
  return (pre.array() > 0.0).select(grad, 0.0);
}

/// Numerically stable softmax.
inline Vector softmax(const Vector& logits) {
  Vector p = (logits.array() - logits.maxCoeff()).exp().matrix();
  return p / p.sum();
}

/// Fully connected layer on row-major batches: y = x W + b.
struct Dense {
  Matrix weight;  // in x out
  Matrix bias;    // 1 x out

  Dense() = default;
  Dense(Eigen::Index in, Eigen::Index out) : weight(Matrix::Zero(in, out)), bias(Matrix::Zero(1, out)) {}

  Matrix forward(const Matrix& x) const { return (x * weight).rowwise() + bias.row(0); }
};

}  // namespace ppsl
