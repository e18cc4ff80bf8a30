#pragma once

#include "chmm/model.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace chmm {

inline constexpr double kMinStateWeight = 1e-8;
inline constexpr double kMinStdDev = 1e-6;

/// Weighted-moment Gaussian update from per-individual state marginals
/// (tau[i] is T x Q). Missing cells carry no weight. The result is not
/// reordered; callers canonicalize after the full M-step.
inline EmissionParams weighted_emission_update(const ObservationMatrix& x, const std::vector<Matrix>& tau,
                                               EmissionMode mode) {
  const Eigen::Index q = tau.empty() ? 0 : tau.front().cols();
  Vector weight = Vector::Zero(q);
  Vector sum = Vector::Zero(q);
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index t = 0; t < x.cols(); ++t) {
      const double v = x(i, t);
      if (std::isnan(v)) continue;
      weight += tau[static_cast<std::size_t>(i)].row(t).transpose();
      sum += v * tau[static_cast<std::size_t>(i)].row(t).transpose();
    }
  for (Eigen::Index r = 0; r < q; ++r)
    if (weight(r) < kMinStateWeight)
      throw DegenerateStateError(static_cast<std::size_t>(r),
                                 "state " + std::to_string(r) + " has no posterior mass");

  EmissionParams out;
  out.mode = mode;
  out.means = sum.array() / weight.array();
  Vector ss = Vector::Zero(q);
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index t = 0; t < x.cols(); ++t) {
      const double v = x(i, t);
      if (std::isnan(v)) continue;
      ss.array() += tau[static_cast<std::size_t>(i)].row(t).transpose().array() * (v - out.means.array()).square();
    }
  if (mode == EmissionMode::homoscedastic) {
    const double sd = std::max(kMinStdDev, std::sqrt(ss.sum() / weight.sum()));
    out.std_devs = Vector::Constant(q, sd);
  } else {
    out.std_devs = (ss.array() / weight.array()).sqrt().max(kMinStdDev);
  }
  return out;
}

}  // namespace chmm
