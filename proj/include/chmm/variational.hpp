#pragma once

// Structured mean-field variational EM for the coupled model (CHMM-VEM).
//
// The approximating family is a product of independent heterogeneous Markov
// chains, one per individual, with transition weights pi_{q,r} h_it^r and
// initial weights m_q h_i1^q. Each VE step fixes the other chains and solves
// for the correction factors h of one chain, then runs that chain's
// forward-filter / backward-smoother recursion to get tau, Delta and the
// normalizer Ztilde_i. With log omega = 0 the procedure is plain per-individual
// Baum-Welch (iHMM-EM).

#include "chmm/model.hpp"
#include "chmm/mstep.hpp"
#include "chmm/numeric.hpp"
#include "chmm/parallel.hpp"

#include <cmath>
#include <span>
#include <string>
#include <tuple>
#include <vector>

namespace chmm {

/// How the coupling field entering log h is formed from the other chains.
enum class VeUpdate {
  /// log h = log phi + sum_{j != i} (s_ij + s_ji)(1 - tau_j) log omega: the exact
  /// block maximizer of the bound, so every sweep is an ascent step.
  coordinate_ascent,
  /// log h = log phi + log Omega with log Omega = sum_{j != i} s_ij (1 - tau_j) log omega.
  literal,
};

enum class VeSchedule {
  gauss_seidel,  // individuals updated in index order, each seeing the newest tau
  jacobi,        // all individuals updated from the previous sweep's snapshot
};

struct VariationalState {
  std::vector<Matrix> tau;        // per individual, T x Q
  std::vector<Matrix> delta;      // per individual, T x Q*Q; row t couples (t-1, t), entry q*Q + r; row 0 unused
  std::vector<Matrix> log_h;      // per individual, T x Q
  std::vector<Matrix> log_omega;  // per individual, T x Q, from the tau snapshot used in the last update
  Vector log_ztilde;              // per individual

  std::size_t n_individuals() const { return tau.size(); }
};

struct VemOptions {
  int max_iter = 100;
  double tol = 1e-6;  // relative change of the bound
  int n_ve_sweeps = 3;
  VeUpdate update = VeUpdate::coordinate_ascent;
  VeSchedule schedule = VeSchedule::gauss_seidel;
  std::size_t threads = 1;  // only used by the Jacobi schedule
};

struct VemReport {
  ModelParams params;
  VariationalState state;
  std::vector<double> bound_trace;
  int n_iterations = 0;
  bool converged = false;
};

struct IndividualPosterior {
  Matrix tau;    // T x Q
  Matrix delta;  // T x Q*Q
  double log_ztilde = 0.0;
};

// ---------------------------------------------------------------------------

/// log Omega_it^r = [sum_{j != i} s_ij (1 - tau_jt^r)] log omega, for one individual.
inline Matrix log_omega_field(std::size_t i, const std::vector<Matrix>& tau, const SimilarityMatrix& similarity,
                              const CouplingParams& coupling) {
  Matrix out = Matrix::Zero(tau[i].rows(), tau[i].cols());
  if (coupling.log_omega == 0.0) return out;
  const auto ii = static_cast<Eigen::Index>(i);
  for (std::size_t j = 0; j < tau.size(); ++j) {
    if (j == i) continue;
    const double s = similarity.s(ii, static_cast<Eigen::Index>(j));
    if (s != 0.0) out.array() += s * (1.0 - tau[j].array());
  }
  return out * coupling.log_omega;
}

inline std::vector<Matrix> update_log_omega_field(const std::vector<Matrix>& tau, const SimilarityMatrix& similarity,
                                                  const CouplingParams& coupling) {
  std::vector<Matrix> out;
  out.reserve(tau.size());
  for (std::size_t i = 0; i < tau.size(); ++i) out.push_back(log_omega_field(i, tau, similarity, coupling));
  return out;
}

/// Field entering log h for individual i under the chosen update rule.
inline Matrix coupling_field(std::size_t i, const std::vector<Matrix>& tau, const SimilarityMatrix& similarity,
                             const CouplingParams& coupling, VeUpdate update) {
  if (update == VeUpdate::literal) return log_omega_field(i, tau, similarity, coupling);
  Matrix out = Matrix::Zero(tau[i].rows(), tau[i].cols());
  if (coupling.log_omega == 0.0) return out;
  const auto ii = static_cast<Eigen::Index>(i);
  for (std::size_t j = 0; j < tau.size(); ++j) {
    if (j == i) continue;
    const auto jj = static_cast<Eigen::Index>(j);
    const double s = similarity.s(ii, jj) + similarity.s(jj, ii);
    if (s != 0.0) out.array() += s * (1.0 - tau[j].array());
  }
  return out * coupling.log_omega;
}

/// log h_it^r = field_it^r + log phi_r(X_it).
inline Matrix update_variational_params(const Matrix& log_phi, const Matrix& log_field) { return log_field + log_phi; }

inline std::vector<Matrix> update_variational_params(const ObservationMatrix& x, const ModelParams& params,
                                                     const std::vector<Matrix>& log_field) {
  std::vector<Matrix> out;
  for (std::size_t i = 0; i < log_field.size(); ++i)
    out.push_back(update_variational_params(log_emission_table(x, i, params.emission), log_field[i]));
  return out;
}

/// Forward filter, backward smoother for one heterogeneous chain.
///   F_1 ~ m h_1,  F_t^r ~ sum_q F_{t-1}^q pi_qr h_t^r
///   tau_T = F_T,  G_{t+1}^r = sum_q F_t^q pi_qr,
///   Delta^{qr} = pi_qr tau_{t+1}^r / G_{t+1}^r F_t^q,  tau_t^q = sum_r Delta^{qr}
/// log Ztilde accumulates the per-step normalizers.
inline IndividualPosterior individual_forward_backward(const Matrix& log_h, const ChainParams& chain,
                                                       std::size_t individual = 0) {
  const Eigen::Index n_loci = log_h.rows();
  const Eigen::Index q = log_h.cols();
  if (!log_h.allFinite()) throw InputError("individual_forward_backward: non-finite log h");
  const Matrix& pi = chain.transition;

  Matrix filt(n_loci, q);
  double log_z = 0.0;
  for (Eigen::Index t = 0; t < n_loci; ++t) {
    const double mx = log_h.row(t).maxCoeff();
    const Vector h = (log_h.row(t).array() - mx).exp();
    Vector f = t == 0 ? Vector(chain.initial.cwiseProduct(h))
                      : Vector((pi.transpose() * filt.row(t - 1).transpose()).cwiseProduct(h));
    const double c = f.sum();
    if (!(c > 0.0))
      throw DegeneracyError("forward normalizer vanished for individual " + std::to_string(individual) +
                            " at locus " + std::to_string(t));
    filt.row(t) = f.transpose() / c;
    log_z += std::log(c) + mx;
  }

  IndividualPosterior out;
  out.log_ztilde = log_z;
  out.tau.resize(n_loci, q);
  out.delta = Matrix::Zero(n_loci, q * q);
  out.tau.row(n_loci - 1) = filt.row(n_loci - 1);
  for (Eigen::Index t = n_loci - 2; t >= 0; --t) {
    const Vector g = pi.transpose() * filt.row(t).transpose();  // G_{t+1}
    Vector tau_t = Vector::Zero(q);
    for (Eigen::Index r = 0; r < q; ++r) {
      const double next = out.tau(t + 1, r);
      if (g(r) == 0.0) {
        if (next != 0.0)
          throw DegeneracyError("zero predictive mass with nonzero posterior for individual " +
                                std::to_string(individual) + ", locus " + std::to_string(t + 1) + ", state " +
                                std::to_string(r));
        continue;
      }
      const double ratio = next / g(r);
      for (Eigen::Index qq = 0; qq < q; ++qq) {
        const double d = pi(qq, r) * ratio * filt(t, qq);
        out.delta(t + 1, qq * q + r) = d;
        tau_t(qq) += d;
      }
    }
    out.tau.row(t) = tau_t.transpose();
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace detail {

inline void check_vem_inputs(const ObservationMatrix& x, const ModelParams& params) {
  if (static_cast<std::size_t>(x.rows()) != params.n_individuals())
    throw InputError("observation rows (" + std::to_string(x.rows()) + ") differ from model individuals (" +
                     std::to_string(params.n_individuals()) + ")");
  if (x.cols() < 1) throw InputError("observations need at least one locus");
  for (Eigen::Index k = 0; k < x.size(); ++k)
    if (std::isinf(x.data()[k])) throw InputError("observations contain an infinite value");
}

inline void store(VariationalState& state, std::size_t i, IndividualPosterior&& post, Matrix&& log_h,
                  Matrix&& log_omega) {
  state.tau[i] = std::move(post.tau);
  state.delta[i] = std::move(post.delta);
  state.log_ztilde(static_cast<Eigen::Index>(i)) = post.log_ztilde;
  state.log_h[i] = std::move(log_h);
  state.log_omega[i] = std::move(log_omega);
}

}  // namespace detail

/// Starting state: every chain sees pure emission evidence (h = phi).
inline VariationalState initial_state(const std::vector<Matrix>& log_phi, const ChainParams& chain) {
  VariationalState state;
  const std::size_t n = log_phi.size();
  state.tau.resize(n);
  state.delta.resize(n);
  state.log_h.resize(n);
  state.log_omega.resize(n);
  state.log_ztilde = Vector::Zero(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    Matrix lh = log_phi[i];
    detail::store(state, i, individual_forward_backward(lh, chain, i), std::move(lh),
                  Matrix::Zero(log_phi[i].rows(), log_phi[i].cols()));
  }
  return state;
}

/// One VE sweep over all individuals at fixed parameters.
inline void ve_sweep(const std::vector<Matrix>& log_phi, const ModelParams& params, VariationalState& state,
                     const VemOptions& opts = {}) {
  const std::size_t n = state.n_individuals();
  auto update_one = [&](std::size_t i, const std::vector<Matrix>& tau_view) {
    Matrix field = coupling_field(i, tau_view, params.similarity, params.coupling, opts.update);
    Matrix log_omega = opts.update == VeUpdate::literal
                           ? field
                           : log_omega_field(i, tau_view, params.similarity, params.coupling);
    Matrix lh = update_variational_params(log_phi[i], field);
    return std::tuple{individual_forward_backward(lh, params.chain, i), std::move(lh), std::move(log_omega)};
  };
  if (opts.schedule == VeSchedule::gauss_seidel) {
    for (std::size_t i = 0; i < n; ++i) {
      auto [post, lh, lo] = update_one(i, state.tau);
      detail::store(state, i, std::move(post), std::move(lh), std::move(lo));
    }
    return;
  }
  const std::vector<Matrix> snapshot = state.tau;
  std::vector<std::tuple<IndividualPosterior, Matrix, Matrix>> results(n);
  parallel_for(n, opts.threads, [&](std::size_t i) { results[i] = update_one(i, snapshot); });
  for (std::size_t i = 0; i < n; ++i) {
    auto& [post, lh, lo] = results[i];
    detail::store(state, i, std::move(post), std::move(lh), std::move(lo));
  }
}

/// Largest violation of the state invariants (tau rows sum to 1, Delta
/// marginalizes to tau in both directions).
inline double state_consistency_error(const VariationalState& state) {
  double worst = 0.0;
  for (std::size_t i = 0; i < state.n_individuals(); ++i) {
    const Matrix& tau = state.tau[i];
    const Matrix& delta = state.delta[i];
    const Eigen::Index q = tau.cols();
    for (Eigen::Index t = 0; t < tau.rows(); ++t) {
      worst = std::max(worst, std::abs(tau.row(t).sum() - 1.0));
      if (t == 0) continue;
      for (Eigen::Index a = 0; a < q; ++a) {
        double into = 0.0, out_of = 0.0;
        for (Eigen::Index b = 0; b < q; ++b) {
          into += delta(t, b * q + a);    // sum_q Delta^{q a} = tau_t^a
          out_of += delta(t, a * q + b);  // sum_r Delta^{a r} = tau_{t-1}^a
        }
        worst = std::max(worst, std::abs(into - tau(t, a)));
        worst = std::max(worst, std::abs(out_of - tau(t - 1, a)));
      }
    }
  }
  return worst;
}

/// Lower bound J = sum tau [log phi + log Omega - log h] + sum_i log Ztilde_i.
/// Omega is recomputed from the state's own tau, so J is the bound of the
/// distribution the state describes; -log Z is taken as 0 (row-normalized law).
inline double evaluate_bound(const std::vector<Matrix>& log_phi, const ModelParams& params,
                             const VariationalState& state) {
  if (state.n_individuals() != log_phi.size()) throw InputError("evaluate_bound: individual count mismatch");
  if (state_consistency_error(state) > 1e-8) throw InvariantError("evaluate_bound: inconsistent variational state");
  double j = state.log_ztilde.sum();
  for (std::size_t i = 0; i < state.n_individuals(); ++i) {
    const Matrix lo = log_omega_field(i, state.tau, params.similarity, params.coupling);
    j += (state.tau[i].array() * (log_phi[i].array() + lo.array() - state.log_h[i].array())).sum();
  }
  return j;
}

inline double evaluate_bound(const ObservationMatrix& x, const ModelParams& params, const VariationalState& state) {
  return evaluate_bound(log_emission_tables(x, params.emission), params, state);
}

namespace detail {

inline ModelParams m_step_unordered(const ObservationMatrix& x, const VariationalState& state,
                                    const ModelParams& current) {
  const auto q = static_cast<Eigen::Index>(current.n_states());
  ModelParams next = current;
  next.emission = weighted_emission_update(x, state.tau, current.emission.mode);

  Vector m = Vector::Zero(q);
  Matrix counts = Matrix::Zero(q, q);
  for (std::size_t i = 0; i < state.n_individuals(); ++i) {
    m += state.tau[i].row(0).transpose();
    const Matrix& d = state.delta[i];
    if (d.rows() > 1) {
      const Vector col = d.bottomRows(d.rows() - 1).colwise().sum().transpose();
      for (Eigen::Index a = 0; a < q; ++a) counts.row(a) += col.segment(a * q, q).transpose();
    }
  }
  next.chain.initial = m / m.sum();
  for (Eigen::Index a = 0; a < q; ++a) {
    const double rs = counts.row(a).sum();
    if (rs > 0.0) next.chain.transition.row(a) = counts.row(a) / rs;
  }
  return next;
}

}  // namespace detail

/// M-step surrogate: weighted moments for the emissions, expected transition
/// counts for pi, expected first-locus counts for m. omega is untouched.
/// Returned states are in canonical (ascending mean) order.
inline ModelParams m_step(const ObservationMatrix& x, const VariationalState& state, const ModelParams& current) {
  ModelParams next = detail::m_step_unordered(x, state, current);
  const std::vector<std::size_t> order = canonical_order(next.emission);
  if (!is_identity(order)) next = permute_states(next, order);
  return next;
}

/// Relabels the state tensors so that new state q is old state order[q].
inline void permute_state(VariationalState& state, std::span<const std::size_t> order) {
  const auto q = static_cast<Eigen::Index>(order.size());
  for (std::size_t i = 0; i < state.n_individuals(); ++i) {
    Matrix tau(state.tau[i].rows(), q), lh(tau.rows(), q), lo(tau.rows(), q), d(tau.rows(), q * q);
    for (Eigen::Index a = 0; a < q; ++a) {
      const auto oa = static_cast<Eigen::Index>(order[static_cast<std::size_t>(a)]);
      tau.col(a) = state.tau[i].col(oa);
      lh.col(a) = state.log_h[i].col(oa);
      lo.col(a) = state.log_omega[i].col(oa);
      for (Eigen::Index b = 0; b < q; ++b)
        d.col(a * q + b) = state.delta[i].col(oa * q + static_cast<Eigen::Index>(order[static_cast<std::size_t>(b)]));
    }
    state.tau[i] = std::move(tau);
    state.log_h[i] = std::move(lh);
    state.log_omega[i] = std::move(lo);
    state.delta[i] = std::move(d);
  }
}

/// Variational EM. With coupling.log_omega == 0 this is iHMM-EM.
inline VemReport fit_vem(const ObservationMatrix& x, const ModelParams& init, const VemOptions& opts = {}) {
  init.validate();
  detail::check_vem_inputs(x, init);

  VemReport report;
  report.params = init;
  report.params.dims.n_loci = static_cast<std::size_t>(x.cols());
  std::vector<Matrix> log_phi = log_emission_tables(x, report.params.emission);
  report.state = initial_state(log_phi, report.params.chain);

  double prev = kNegInf;
  for (int it = 0; it < opts.max_iter; ++it) {
    for (int s = 0; s < opts.n_ve_sweeps; ++s) ve_sweep(log_phi, report.params, report.state, opts);
    const double j = evaluate_bound(log_phi, report.params, report.state);
    report.bound_trace.push_back(j);
    report.n_iterations = it + 1;
    if (it > 0 && std::abs(j - prev) < opts.tol * std::abs(prev)) {
      report.converged = true;
      break;
    }
    prev = j;
    if (it + 1 == opts.max_iter) break;

    ModelParams next = detail::m_step_unordered(x, report.state, report.params);
    // Keep the carried tau aligned with the canonical relabeling.
    const std::vector<std::size_t> order = canonical_order(next.emission);
    if (!is_identity(order)) {
      next = permute_states(next, order);
      permute_state(report.state, order);
    }
    report.params = std::move(next);
    log_phi = log_emission_tables(x, report.params.emission);
  }
  return report;
}

inline VemReport fit_vem(const ObservationMatrix& x, const SimilarityMatrix& similarity, const ModelParams& init,
                         const VemOptions& opts = {}) {
  ModelParams p = init;
  p.similarity = similarity;
  return fit_vem(x, p, opts);
}

struct InferOptions {
  int max_sweeps = 500;
  double tol = 1e-12;  // sup-norm change of tau between sweeps
  VeUpdate update = VeUpdate::coordinate_ascent;
};

/// Fresh VE at fixed parameters, swept to a fixed point. This is the E-step
/// used for decoding, so fit-then-decode and in-process pipelines agree exactly.
inline VariationalState infer_posterior(const ObservationMatrix& x, const ModelParams& params,
                                        const InferOptions& opts = {}) {
  params.validate();
  detail::check_vem_inputs(x, params);
  const std::vector<Matrix> log_phi = log_emission_tables(x, params.emission);
  VariationalState state = initial_state(log_phi, params.chain);
  if (params.coupling.log_omega == 0.0) return state;
  VemOptions ve;
  ve.update = opts.update;
  for (int s = 0; s < opts.max_sweeps; ++s) {
    const std::vector<Matrix> before = state.tau;
    ve_sweep(log_phi, params, state, ve);
    double change = 0.0;
    for (std::size_t i = 0; i < state.n_individuals(); ++i)
      change = std::max(change, (state.tau[i] - before[i]).cwiseAbs().maxCoeff());
    if (change < opts.tol) break;
  }
  return state;
}

}  // namespace chmm
