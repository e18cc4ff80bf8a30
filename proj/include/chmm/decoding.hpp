#pragma once

// Per-locus status calls from the variational posterior.

#include "chmm/model.hpp"
#include "chmm/numeric.hpp"

#include <cmath>
#include <span>
#include <vector>

namespace chmm {

enum class DecodeRule { viterbi, local_map };

struct CallSet {
  StatePath local_map;
  StatePath viterbi_path;
};

/// argmax_r tau_it^r, ties toward the lower state.
inline StatePath local_map(const std::vector<Matrix>& tau) {
  if (tau.empty()) return {};
  StatePath out(static_cast<Eigen::Index>(tau.size()), tau.front().rows());
  for (std::size_t i = 0; i < tau.size(); ++i)
    for (Eigen::Index t = 0; t < tau[i].rows(); ++t)
      out(static_cast<Eigen::Index>(i), t) = static_cast<int>(argmax_lowest(tau[i].row(t)));
  return out;
}

/// log p_tqr = log(pi_qr h_t^r) normalized over r, for one (t, q).
inline Vector variational_log_transition(const Matrix& log_pi, const Matrix& log_h, Eigen::Index t, Eigen::Index q) {
  Vector lp = log_pi.row(q).transpose() + log_h.row(t).transpose();
  const double lse = log_sum_exp(lp);
  return lp.array() - lse;
}

enum class ViterbiForm {
  // argmax_S P~(S) for the factorized chain, P~(S) proportional to
  // m_{r_1} h_1^{r_1} prod_t pi_{r_{t-1} r_t} h_t^{r_t}.
  exact,
  // alpha_1 = tau_1 and per-step transitions pi_qr h_t^r normalized over r.
  // Drops the backward factor, so it is not argmax P~(S) in general.
  locally_normalized,
};

/// Most probable path of one variational chain, in log space with per-step
/// max normalization. Ties go to the lower index.
inline std::vector<int> viterbi_chain(const Matrix& tau, const Matrix& log_h, const ChainParams& chain,
                                      ViterbiForm form = ViterbiForm::exact) {
  const Eigen::Index n_loci = log_h.rows();
  const Eigen::Index q = log_h.cols();
  if (n_loci == 0) return {};
  if (!log_h.allFinite()) throw InputError("viterbi: non-finite log h");
  if (tau.rows() != n_loci || tau.cols() != q) throw InputError("viterbi: tau and log h shapes differ");
  const Matrix log_pi = detail::safe_log(chain.transition);

  Vector alpha = form == ViterbiForm::exact
                     ? Vector(detail::safe_log(chain.initial) + log_h.row(0).transpose())
                     : Vector(detail::safe_log(tau.row(0).transpose()));
  Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic> back(n_loci, q);
  Matrix log_p(q, q);  // row a: log transition out of state a at locus t
  for (Eigen::Index t = 1; t < n_loci; ++t) {
    for (Eigen::Index a = 0; a < q; ++a)
      log_p.row(a) = form == ViterbiForm::exact ? Vector(log_pi.row(a).transpose() + log_h.row(t).transpose())
                                                : variational_log_transition(log_pi, log_h, t, a);
    Vector next(q);
    for (Eigen::Index r = 0; r < q; ++r) {
      Eigen::Index best = 0;
      double best_score = alpha(0) + log_p(0, r);
      for (Eigen::Index a = 1; a < q; ++a) {
        const double sc = alpha(a) + log_p(a, r);
        if (sc > best_score) {
          best_score = sc;
          best = a;
        }
      }
      next(r) = best_score;
      back(t, r) = static_cast<int>(best);
    }
    alpha = next.array() - next.maxCoeff();
  }

  std::vector<int> path(static_cast<std::size_t>(n_loci));
  path.back() = static_cast<int>(argmax_lowest(alpha));
  for (Eigen::Index t = n_loci - 1; t > 0; --t)
    path[static_cast<std::size_t>(t - 1)] = back(t, path[static_cast<std::size_t>(t)]);
  return path;
}

inline StatePath viterbi_variational(const std::vector<Matrix>& tau, const std::vector<Matrix>& log_h,
                                     const ChainParams& chain, ViterbiForm form = ViterbiForm::exact) {
  if (tau.empty()) return {};
  if (log_h.size() != tau.size()) throw InputError("viterbi: tau and log h individual counts differ");
  StatePath out(static_cast<Eigen::Index>(tau.size()), tau.front().rows());
  for (std::size_t i = 0; i < tau.size(); ++i) {
    const std::vector<int> p = viterbi_chain(tau[i], log_h[i], chain, form);
    for (std::size_t t = 0; t < p.size(); ++t) out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)) = p[t];
  }
  return out;
}

/// Score maximized by viterbi_chain in the given form. For the exact form it
/// is log P~(S) up to an additive constant.
inline double variational_path_score(std::span<const int> path, const Matrix& tau, const Matrix& log_h,
                                     const ChainParams& chain, ViterbiForm form = ViterbiForm::exact) {
  const Matrix log_pi = detail::safe_log(chain.transition);
  double score = 0.0;
  if (form == ViterbiForm::exact) {
    score = detail::safe_log(chain.initial)(path[0]) + log_h(0, path[0]);
    for (std::size_t t = 1; t < path.size(); ++t)
      score += log_pi(path[t - 1], path[t]) + log_h(static_cast<Eigen::Index>(t), path[t]);
    return score;
  }
  score = tau(0, path[0]) > 0.0 ? std::log(tau(0, path[0])) : kNegInf;
  for (std::size_t t = 1; t < path.size(); ++t)
    score += variational_log_transition(log_pi, log_h, static_cast<Eigen::Index>(t), path[t - 1])(path[t]);
  return score;
}

}  // namespace chmm
