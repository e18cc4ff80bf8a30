#pragma once

// Exact inference on the joint Q^I-state chain: scaled forward-backward,
// brute-force path enumeration (test oracle), and generalized EM.

#include "chmm/model.hpp"
#include "chmm/mstep.hpp"
#include "chmm/numeric.hpp"

#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace chmm {

struct JointPosterior {
  Matrix gamma;   // T x K smoothed joint marginals
  Matrix xi_sum;  // K x K, sum over t >= 2 of P(S_{t-1}=k, S_t=l | X)
  double log_likelihood = 0.0;
  // Filled by brute_force_posterior only.
  std::vector<std::size_t> map_path;
  double map_log_prob = kNegInf;
};

struct FitReport {
  ModelParams params;
  std::vector<double> log_likelihood_trace;
  int n_iterations = 0;
  bool converged = false;
};

struct ExactEmOptions {
  int max_iter = 100;
  double tol = 1e-6;
  std::size_t cap = kDefaultJointCap;
  // Relative slack for the ascent check, scaled by max(1, |log-likelihood|).
  double ascent_slack = 1e-9;
};

namespace detail {

inline void check_observations(const ObservationMatrix& x, const ModelParams& params) {
  if (static_cast<std::size_t>(x.rows()) != params.n_individuals())
    throw InputError("observation rows (" + std::to_string(x.rows()) + ") differ from model individuals (" +
                     std::to_string(params.n_individuals()) + ")");
  if (x.cols() < 1) throw InputError("observations need at least one locus");
  for (Eigen::Index k = 0; k < x.size(); ++k)
    if (std::isinf(x.data()[k])) throw InputError("observations contain an infinite value");
}

/// K x T matrix of joint log emissions, sum_i log phi_{l_i}(X_it).
inline Matrix joint_log_emissions(const ObservationMatrix& x, const EmissionParams& emission,
                                  const JointStateCodec& codec) {
  const std::vector<Matrix> tables = log_emission_tables(x, emission);
  Matrix out(static_cast<Eigen::Index>(codec.size()), x.cols());
  for (Eigen::Index t = 0; t < x.cols(); ++t) {
    Vector le = tables[0].row(t).transpose();
    for (std::size_t i = 1; i < tables.size(); ++i) le = kron_sum(Vector(tables[i].row(t).transpose()), le);
    out.col(t) = le;
  }
  return out;
}

/// Per-individual state marginals tau_i (T x Q) from joint marginals.
inline std::vector<Matrix> individual_marginals(const Matrix& gamma, const JointStateCodec& codec) {
  const auto n_states = static_cast<Eigen::Index>(codec.n_states());
  std::vector<Matrix> tau(codec.n_individuals(), Matrix::Zero(gamma.rows(), n_states));
  for (std::size_t l = 0; l < codec.size(); ++l)
    for (std::size_t i = 0; i < codec.n_individuals(); ++i)
      tau[i].col(static_cast<Eigen::Index>(codec.digit(l, i))) += gamma.col(static_cast<Eigen::Index>(l));
  return tau;
}

}  // namespace detail

/// Scaled forward-backward on the joint chain. O(T K^2).
inline JointPosterior joint_forward_backward(const ObservationMatrix& x, const ModelParams& params,
                                             std::size_t cap = kDefaultJointCap) {
  detail::check_observations(x, params);
  const JointStateCodec codec(params.n_individuals(), params.n_states(), cap);
  const auto n_joint = static_cast<Eigen::Index>(codec.size());
  const Eigen::Index n_loci = x.cols();

  const Matrix trans = joint_log_transition(params, codec).array().exp();
  const Vector init = joint_log_initial(params, codec).array().exp();
  const Matrix log_e = detail::joint_log_emissions(x, params.emission, codec);

  Matrix e(n_joint, n_loci);
  Vector shift(n_loci);
  for (Eigen::Index t = 0; t < n_loci; ++t) {
    shift(t) = log_e.col(t).maxCoeff();
    e.col(t) = (log_e.col(t).array() - shift(t)).exp();
  }

  Matrix alpha(n_joint, n_loci);
  Vector scale(n_loci);
  for (Eigen::Index t = 0; t < n_loci; ++t) {
    Vector a = t == 0 ? Vector(init.cwiseProduct(e.col(0)))
                      : Vector((trans.transpose() * alpha.col(t - 1)).cwiseProduct(e.col(t)));
    scale(t) = a.sum();
    if (!(scale(t) > 0.0))
      throw DegeneracyError("joint forward pass: zero normalizer at locus " + std::to_string(t));
    alpha.col(t) = a / scale(t);
  }

  Matrix beta(n_joint, n_loci);
  beta.col(n_loci - 1).setOnes();
  // Column t of `weighted` holds e_t * beta_t / c_t, the backward message entering t.
  Matrix weighted(n_joint, n_loci);
  for (Eigen::Index t = n_loci - 1; t >= 0; --t) {
    weighted.col(t) = e.col(t).cwiseProduct(beta.col(t)) / scale(t);
    if (t > 0) beta.col(t - 1) = trans * weighted.col(t);
  }

  JointPosterior post;
  post.gamma = (alpha.cwiseProduct(beta)).transpose();
  for (Eigen::Index t = 0; t < n_loci; ++t) post.gamma.row(t) /= post.gamma.row(t).sum();
  if (n_loci > 1) {
    post.xi_sum = trans.cwiseProduct(alpha.leftCols(n_loci - 1) * weighted.rightCols(n_loci - 1).transpose());
  } else {
    post.xi_sum = Matrix::Zero(n_joint, n_joint);
  }
  post.log_likelihood = scale.array().log().sum() + shift.sum();
  return post;
}

/// Exact posterior by summing over every joint path. K^T must be <= 10^7.
inline JointPosterior brute_force_posterior(const ObservationMatrix& x, const ModelParams& params,
                                            std::size_t cap = kDefaultJointCap) {
  detail::check_observations(x, params);
  const JointStateCodec codec(params.n_individuals(), params.n_states(), cap);
  const std::size_t n_joint = codec.size();
  const auto n_loci = static_cast<std::size_t>(x.cols());
  std::size_t n_paths = 1;
  for (std::size_t t = 0; t < n_loci; ++t) {
    if (n_paths > 10'000'000 / n_joint) throw CapacityError("brute_force_posterior: K^T exceeds 1e7");
    n_paths *= n_joint;
  }

  const Matrix log_p = joint_log_transition(params, codec);
  const Vector log_init = joint_log_initial(params, codec);
  const Matrix log_e = detail::joint_log_emissions(x, params.emission, codec);

  // Odometer over paths; the last locus is the fastest digit and prefix[t]
  // caches the log-probability of path[0..t].
  auto for_each_path = [&](auto&& visit) {
    std::vector<std::size_t> path(n_loci, 0);
    std::vector<double> prefix(n_loci);
    std::size_t dirty = 0;
    for (std::size_t p = 0; p < n_paths; ++p) {
      for (std::size_t t = dirty; t < n_loci; ++t) {
        const auto l = static_cast<Eigen::Index>(path[t]);
        prefix[t] = (t == 0 ? log_init(l) : prefix[t - 1] + log_p(static_cast<Eigen::Index>(path[t - 1]), l)) +
                    log_e(l, static_cast<Eigen::Index>(t));
      }
      visit(path, prefix[n_loci - 1]);
      std::size_t t = n_loci;
      while (t > 0) {
        --t;
        if (++path[t] < n_joint) break;
        path[t] = 0;
      }
      dirty = t;
    }
  };

  JointPosterior post;
  for_each_path([&](const std::vector<std::size_t>& path, double lp) {
    if (lp > post.map_log_prob) {
      post.map_log_prob = lp;
      post.map_path = path;
    }
  });
  const double mx = post.map_log_prob;

  post.gamma = Matrix::Zero(static_cast<Eigen::Index>(n_loci), static_cast<Eigen::Index>(n_joint));
  post.xi_sum = Matrix::Zero(static_cast<Eigen::Index>(n_joint), static_cast<Eigen::Index>(n_joint));
  double total = 0.0;
  for_each_path([&](const std::vector<std::size_t>& path, double lp) {
    const double w = std::exp(lp - mx);
    total += w;
    for (std::size_t t = 0; t < n_loci; ++t) {
      post.gamma(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(path[t])) += w;
      if (t > 0) post.xi_sum(static_cast<Eigen::Index>(path[t - 1]), static_cast<Eigen::Index>(path[t])) += w;
    }
  });
  post.gamma /= total;
  post.xi_sum /= total;
  post.log_likelihood = mx + std::log(total);
  return post;
}

namespace detail {

// Generalized M-step for the chain parameters under the row-normalized joint
// law. Logits pin column 0 to zero, leaving Q(Q-1) free transition parameters
// and Q-1 free initial parameters.

struct ChainObjective {
  const JointStateCodec& codec;
  Vector log_w;                               // log W_l
  std::vector<std::vector<std::size_t>> digits;  // digits[l][i]

  explicit ChainObjective(const JointStateCodec& c, const ModelParams& params)
      : codec(c), log_w(log_coupling_weights(params.similarity, params.coupling, c)), digits(c.size()) {
    for (std::size_t l = 0; l < c.size(); ++l) digits[l] = c.decode(l);
  }

  static Vector row_log_softmax(const Vector& logits) { return logits.array() - log_sum_exp(logits); }

  // Negated expected log initial law; gradient w.r.t. logits 1..Q-1.
  double initial(const Vector& free, const Vector& weight, Vector& grad) const {
    const auto q = static_cast<Eigen::Index>(codec.n_states());
    Vector logits(q);
    logits(0) = 0.0;
    logits.tail(q - 1) = free;
    const Vector log_m = row_log_softmax(logits);
    Vector lv = log_m;
    for (std::size_t i = 1; i < codec.n_individuals(); ++i) lv = kron_sum(log_m, lv);
    lv += log_w;
    const double lse = log_sum_exp(lv);
    const Vector prob = (lv.array() - lse).exp();
    const double total = weight.sum();
    double value = 0.0;
    Vector g_logm = Vector::Zero(q);
    for (std::size_t l = 0; l < codec.size(); ++l) {
      const auto li = static_cast<Eigen::Index>(l);
      if (weight(li) != 0.0) value += weight(li) * (lv(li) - lse);
      const double w = weight(li) - total * prob(li);
      for (std::size_t d : digits[l]) g_logm(static_cast<Eigen::Index>(d)) += w;
    }
    const Vector m = log_m.array().exp();
    const Vector g_logits = g_logm - m * g_logm.sum();
    grad = -g_logits.tail(q - 1);
    return -value;
  }

  // Negated sum_{k,l} xi(k,l) log P_kl; gradient w.r.t. the free logits.
  double transition(const Vector& free, const Matrix& xi, Matrix& prob_scratch, Vector& grad) const {
    const auto q = static_cast<Eigen::Index>(codec.n_states());
    Matrix log_pi(q, q);
    for (Eigen::Index r = 0; r < q; ++r) {
      Vector logits(q);
      logits(0) = 0.0;
      logits.tail(q - 1) = free.segment(r * (q - 1), q - 1);
      log_pi.row(r) = row_log_softmax(logits).transpose();
    }
    Matrix lp = log_pi;
    for (std::size_t i = 1; i < codec.n_individuals(); ++i) lp = kron_sum(log_pi, lp);
    lp.rowwise() += log_w.transpose();
    double value = 0.0;
    prob_scratch.resize(lp.rows(), lp.cols());
    const Vector row_mass = xi.rowwise().sum();
    Matrix g_logpi = Matrix::Zero(q, q);
    for (Eigen::Index k = 0; k < lp.rows(); ++k) {
      const double lse = log_sum_exp(lp.row(k));
      for (Eigen::Index l = 0; l < lp.cols(); ++l) {
        const double lpk = lp(k, l) - lse;
        if (xi(k, l) != 0.0) value += xi(k, l) * lpk;
        const double w = xi(k, l) - row_mass(k) * std::exp(lpk);
        const auto& dk = digits[static_cast<std::size_t>(k)];
        const auto& dl = digits[static_cast<std::size_t>(l)];
        for (std::size_t i = 0; i < dk.size(); ++i)
          g_logpi(static_cast<Eigen::Index>(dk[i]), static_cast<Eigen::Index>(dl[i])) += w;
      }
    }
    grad.resize(q * (q - 1));
    for (Eigen::Index r = 0; r < q; ++r) {
      const Vector pi_row = log_pi.row(r).array().exp();
      const Vector g_row = g_logpi.row(r).transpose() - pi_row * g_logpi.row(r).sum();
      grad.segment(r * (q - 1), q - 1) = -g_row.tail(q - 1);
    }
    return -value;
  }
};

inline Vector probs_to_free_logits(const Vector& p) {
  const Vector lp = p.array().max(1e-12).log();
  return (lp.tail(p.size() - 1).array() - lp(0)).matrix();
}

inline Vector free_logits_to_probs(const Vector& free) {
  Vector logits(free.size() + 1);
  logits(0) = 0.0;
  logits.tail(free.size()) = free;
  return softmax(logits);
}

}  // namespace detail

/// One generalized M-step given the joint posterior: weighted-moment emission
/// update, numerical ascent for (m, pi), then canonical state ordering.
inline ModelParams exact_m_step(const ObservationMatrix& x, const JointPosterior& post, const ModelParams& current,
                                std::size_t cap = kDefaultJointCap) {
  const JointStateCodec codec(current.n_individuals(), current.n_states(), cap);
  const auto q = static_cast<Eigen::Index>(current.n_states());
  ModelParams next = current;

  const std::vector<Matrix> tau = detail::individual_marginals(post.gamma, codec);
  next.emission = weighted_emission_update(x, tau, current.emission.mode);

  if (q > 1) {
    const detail::ChainObjective obj(codec, current);

    // Initial law: start from the better of the current value and the
    // uncoupled closed form, then ascend.
    const Vector w0 = post.gamma.row(0).transpose();
    Vector counts = Vector::Zero(q);
    for (const Matrix& ti : tau) counts += ti.row(0).transpose();
    Vector g;
    Vector start = detail::probs_to_free_logits(current.chain.initial);
    const Vector alt = detail::probs_to_free_logits(counts / counts.sum());
    if (obj.initial(alt, w0, g) < obj.initial(start, w0, g)) start = alt;
    const BfgsResult m_res = minimize_bfgs([&](const Vector& v, Vector& gr) { return obj.initial(v, w0, gr); }, start);
    next.chain.initial = detail::free_logits_to_probs(m_res.x);

    Matrix pair_counts = Matrix::Zero(q, q);
    for (std::size_t k = 0; k < codec.size(); ++k)
      for (std::size_t l = 0; l < codec.size(); ++l) {
        const double v = post.xi_sum(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(l));
        if (v == 0.0) continue;
        for (std::size_t i = 0; i < codec.n_individuals(); ++i)
          pair_counts(static_cast<Eigen::Index>(codec.digit(k, i)), static_cast<Eigen::Index>(codec.digit(l, i))) += v;
      }
    Vector cur_free(q * (q - 1)), alt_free(q * (q - 1));
    for (Eigen::Index r = 0; r < q; ++r) {
      cur_free.segment(r * (q - 1), q - 1) = detail::probs_to_free_logits(current.chain.transition.row(r).transpose());
      const double rs = pair_counts.row(r).sum();
      const Vector row = rs > 0.0 ? Vector(pair_counts.row(r).transpose() / rs)
                                  : Vector(current.chain.transition.row(r).transpose());
      alt_free.segment(r * (q - 1), q - 1) = detail::probs_to_free_logits(row);
    }
    Matrix scratch;
    auto f_pi = [&](const Vector& v, Vector& gr) { return obj.transition(v, post.xi_sum, scratch, gr); };
    Vector gpi;
    const Vector pi_start = f_pi(alt_free, gpi) < f_pi(cur_free, gpi) ? alt_free : cur_free;
    const BfgsResult pi_res = minimize_bfgs(f_pi, pi_start);
    for (Eigen::Index r = 0; r < q; ++r)
      next.chain.transition.row(r) = detail::free_logits_to_probs(pi_res.x.segment(r * (q - 1), q - 1)).transpose();
  }

  const std::vector<std::size_t> order = canonical_order(next.emission);
  if (!is_identity(order)) next = permute_states(next, order);
  return next;
}

/// Exact EM (CHMM-EM). omega stays fixed.
inline FitReport fit_exact_em(const ObservationMatrix& x, const ModelParams& init, const ExactEmOptions& opts = {}) {
  init.validate();
  detail::check_observations(x, init);
  (void)joint_state_count(init.n_states(), init.n_individuals(), opts.cap);

  FitReport report;
  report.params = init;
  report.params.dims.n_loci = static_cast<std::size_t>(x.cols());
  double prev = kNegInf;
  for (int it = 0; it < opts.max_iter; ++it) {
    const JointPosterior post = joint_forward_backward(x, report.params, opts.cap);
    const double ll = post.log_likelihood;
    report.log_likelihood_trace.push_back(ll);
    report.n_iterations = it + 1;
    if (it > 0) {
      if (ll < prev - opts.ascent_slack * std::max(1.0, std::abs(prev)))
        throw InvariantError("exact EM: log-likelihood decreased from " + std::to_string(prev) + " to " +
                             std::to_string(ll));
      if (std::abs(ll - prev) < opts.tol * std::abs(prev)) {
        report.converged = true;
        break;
      }
    }
    prev = ll;
    if (it + 1 == opts.max_iter) break;
    report.params = exact_m_step(x, post, report.params, opts.cap);
  }
  return report;
}

}  // namespace chmm
