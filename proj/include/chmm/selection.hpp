#pragma once

// Choosing the number of states (variational BIC) and calibrating the
// coupling strength (weighted residual sum of squares over a grid).

#include "chmm/model.hpp"
#include "chmm/parallel.hpp"
#include "chmm/variational.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace chmm {

/// log omega = -k/20, k = 1..10, ascending.
inline std::vector<double> default_log_omega_grid() {
  std::vector<double> g;
  for (int k = 10; k >= 1; --k) g.push_back(-static_cast<double>(k) / 20.0);
  return g;
}

enum class PenaltyKind {
  standard,  // D = 1 + Q(Q-1): omega plus transitions
  full,      // also counts means, std devs and the initial law
};

/// [1 + Q(Q-1)] log(I T) / 2
inline double bic_penalty(std::size_t n_states, std::size_t n_individuals, std::size_t n_loci) {
  const double q = static_cast<double>(n_states);
  const double d = 1.0 + q * (q - 1.0);
  return d * std::log(static_cast<double>(n_individuals) * static_cast<double>(n_loci)) / 2.0;
}

inline double bic_penalty_full(std::size_t n_states, std::size_t n_individuals, std::size_t n_loci,
                               EmissionMode mode) {
  const double q = static_cast<double>(n_states);
  const double sds = mode == EmissionMode::homoscedastic ? 1.0 : q;
  const double d = 1.0 + q * (q - 1.0) + (q - 1.0) + q + sds;
  return d * std::log(static_cast<double>(n_individuals) * static_cast<double>(n_loci)) / 2.0;
}

/// sum_{i,t,r} tau_it^r (x_it - mu_r)^2, skipping missing cells.
inline double rss_omega(const std::vector<Matrix>& tau, const ObservationMatrix& x, const Vector& means) {
  if (tau.size() != static_cast<std::size_t>(x.rows())) throw InputError("rss_omega: shape mismatch");
  double rss = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Matrix& ti = tau[static_cast<std::size_t>(i)];
    if (ti.rows() != x.cols() || ti.cols() != means.size()) throw InputError("rss_omega: shape mismatch");
    for (Eigen::Index t = 0; t < x.cols(); ++t) {
      if (std::isnan(x(i, t))) continue;
      rss += (ti.row(t).transpose().array() * (x(i, t) - means.array()).square()).sum();
    }
  }
  return rss;
}

struct QCandidate {
  std::size_t n_states = 0;
  bool ok = false;
  std::string error;
  double bound = 0.0;
  double penalty = 0.0;
  double criterion = 0.0;
};

struct OmegaCandidate {
  double log_omega = 0.0;
  bool ok = false;
  std::string error;
  double rss = 0.0;
  double bound = 0.0;
};

struct SelectionOptions {
  VemOptions vem;
  EmissionMode mode = EmissionMode::heteroscedastic;
  PenaltyKind penalty = PenaltyKind::standard;
  double log_omega = 0.0;   // coupling used while selecting Q
  std::size_t n_states = 3; // states used while selecting omega
  bool warm_start = true;   // omega grid: reuse the previous grid point's fit
  std::size_t threads = 1;
  bool keep_fits = false;
};

struct SelectionReport {
  std::vector<QCandidate> q_results;
  std::vector<OmegaCandidate> omega_results;
  std::optional<std::size_t> chosen_q;
  std::optional<double> chosen_log_omega;
  std::vector<VemReport> fits;  // per candidate, in grid order, when keep_fits is set
};

/// Fits every Q in the grid and picks argmax [J_Q - pen(Q)], ties to the smaller Q.
/// A candidate whose fit throws is recorded and excluded.
inline SelectionReport select_q(const ObservationMatrix& x, const SimilarityMatrix& similarity,
                                std::vector<std::size_t> q_grid, const SelectionOptions& opts = {}) {
  if (q_grid.empty()) throw InputError("select_q: empty grid");
  std::sort(q_grid.begin(), q_grid.end());
  q_grid.erase(std::unique(q_grid.begin(), q_grid.end()), q_grid.end());

  SelectionReport report;
  report.q_results.resize(q_grid.size());
  std::vector<VemReport> fits(q_grid.size());
  const auto n_ind = static_cast<std::size_t>(x.rows());
  const auto n_loci = static_cast<std::size_t>(x.cols());
  parallel_for(q_grid.size(), opts.threads, [&](std::size_t k) {
    QCandidate& c = report.q_results[k];
    c.n_states = q_grid[k];
    c.penalty = opts.penalty == PenaltyKind::standard ? bic_penalty(c.n_states, n_ind, n_loci)
                                                   : bic_penalty_full(c.n_states, n_ind, n_loci, opts.mode);
    try {
      const ModelParams init = initial_params(x, similarity, c.n_states, opts.log_omega, opts.mode);
      fits[k] = fit_vem(x, init, opts.vem);
      c.bound = fits[k].bound_trace.back();
      c.criterion = c.bound - c.penalty;
      c.ok = true;
    } catch (const Error& e) {
      c.error = e.what();
    }
  });
  // Strict improvement keeps the smaller Q on ties.
  double best = kNegInf;
  for (const QCandidate& c : report.q_results)
    if (c.ok && c.criterion > best) {
      best = c.criterion;
      report.chosen_q = c.n_states;
    }
  if (opts.keep_fits) report.fits = std::move(fits);
  return report;
}

/// Fits the model at every grid log omega and picks argmin RSS, ties to the
/// larger log omega (weaker coupling). With warm starts the grid is walked in
/// ascending order and each fit starts from the previous grid point's estimate.
inline SelectionReport select_omega(const ObservationMatrix& x, const SimilarityMatrix& similarity,
                                    std::vector<double> log_omega_grid, const SelectionOptions& opts = {}) {
  if (log_omega_grid.empty()) throw InputError("select_omega: empty grid");
  for (double w : log_omega_grid)
    if (!(w <= 0.0)) throw InputError("select_omega: grid values must be <= 0");
  std::sort(log_omega_grid.begin(), log_omega_grid.end());
  log_omega_grid.erase(std::unique(log_omega_grid.begin(), log_omega_grid.end()), log_omega_grid.end());

  SelectionReport report;
  const std::size_t n = log_omega_grid.size();
  report.omega_results.resize(n);
  std::vector<VemReport> fits(n);

  auto fit_one = [&](std::size_t k, const ModelParams* warm) {
    OmegaCandidate& c = report.omega_results[k];
    c.log_omega = log_omega_grid[k];
    try {
      ModelParams init = warm ? *warm : initial_params(x, similarity, opts.n_states, c.log_omega, opts.mode);
      init.coupling.log_omega = c.log_omega;
      init.similarity = similarity;
      fits[k] = fit_vem(x, init, opts.vem);
      c.rss = rss_omega(fits[k].state.tau, x, fits[k].params.emission.means);
      c.bound = fits[k].bound_trace.back();
      c.ok = true;
    } catch (const Error& e) {
      c.error = e.what();
    }
  };

  if (opts.warm_start) {
    const ModelParams* warm = nullptr;
    for (std::size_t k = 0; k < n; ++k) {
      fit_one(k, warm);
      if (report.omega_results[k].ok) warm = &fits[k].params;
    }
  } else {
    parallel_for(n, opts.threads, [&](std::size_t k) { fit_one(k, nullptr); });
  }

  double best = std::numeric_limits<double>::infinity();
  for (const OmegaCandidate& c : report.omega_results)
    if (c.ok && c.rss <= best) {  // ascending grid: "<=" hands ties to the larger log omega
      best = c.rss;
      report.chosen_log_omega = c.log_omega;
    }
  if (opts.keep_fits) report.fits = std::move(fits);
  return report;
}

}  // namespace chmm
