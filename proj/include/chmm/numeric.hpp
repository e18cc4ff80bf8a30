#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>

namespace chmm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * log(2*pi)

/// log(sum(exp(v))) with max subtraction. Returns -inf for an all -inf input.
template <typename Derived>
double log_sum_exp(const Eigen::DenseBase<Derived>& v) {
  const double mx = v.maxCoeff();
  if (!std::isfinite(mx)) return mx;
  return mx + std::log((v.derived().array() - mx).exp().sum());
}

/// Normalizes log-weights into a probability vector (max subtraction, then sum).
inline Vector softmax(const Vector& log_w) {
  const double mx = log_w.maxCoeff();
  Vector p = (log_w.array() - mx).exp();
  return p / p.sum();
}

/// argmax with ties broken toward the lowest index.
template <typename Derived>
Eigen::Index argmax_lowest(const Eigen::DenseBase<Derived>& v) {
  Eigen::Index best = 0;
  for (Eigen::Index k = 1; k < v.size(); ++k)
    if (v(k) > v(best)) best = k;
  return best;
}

struct BfgsOptions {
  int max_iter = 200;
  double grad_tol = 1e-10;
  double rel_tol = 1e-14;
};

struct BfgsResult {
  Vector x;
  double value = 0.0;
  int iterations = 0;
};

/// Objective returns f(x) and writes the gradient into its second argument.
using Objective = std::function<double(const Vector&, Vector&)>;

/// Minimizes a smooth objective with BFGS and a backtracking Armijo line search.
/// The returned value never exceeds f(x0).
inline BfgsResult minimize_bfgs(const Objective& f, Vector x0, const BfgsOptions& opts = {}) {
  const Eigen::Index n = x0.size();
  Vector g(n), g_new(n);
  double fx = f(x0, g);
  Matrix h_inv = Matrix::Identity(n, n);
  BfgsResult res{x0, fx, 0};
  if (n == 0) return res;

  for (int it = 0; it < opts.max_iter; ++it) {
    res.iterations = it + 1;
    if (g.lpNorm<Eigen::Infinity>() < opts.grad_tol) break;
    Vector dir = -h_inv * g;
    double slope = g.dot(dir);
    if (slope >= 0.0) {  // lost descent; reset to steepest descent
      h_inv.setIdentity();
      dir = -g;
      slope = -g.squaredNorm();
    }
    double step = 1.0;
    Vector x_new(n);
    double f_new = fx;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      x_new = res.x + step * dir;
      f_new = f(x_new, g_new);
      if (std::isfinite(f_new) && f_new <= fx + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;

    const Vector s = x_new - res.x;
    const Vector y = g_new - g;
    const double sy = s.dot(y);
    const double decrease = fx - f_new;
    res.x = x_new;
    fx = f_new;
    g = g_new;
    if (sy > 1e-16) {
      const double rho = 1.0 / sy;
      const Matrix id = Matrix::Identity(n, n);
      h_inv = (id - rho * s * y.transpose()) * h_inv * (id - rho * y * s.transpose()) +
              rho * s * s.transpose();
    }
    if (decrease <= opts.rel_tol * std::max(1.0, std::abs(fx))) break;
  }
  res.value = fx;
  return res;
}

}  // namespace chmm
