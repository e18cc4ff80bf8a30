#pragma once

// Fit and decode entry points shared by the command line and the benchmark,
// so both produce identical calls from identical inputs.

#include "chmm/decoding.hpp"
#include "chmm/error.hpp"
#include "chmm/exact.hpp"
#include "chmm/model.hpp"
#include "chmm/variational.hpp"

#include <string>
#include <vector>

namespace chmm {

enum class Method {
  independent,  // uncoupled chains (log omega forced to 0), fitted by VEM which is then exact
  vem,
  exact,
};

inline std::string to_string(Method m) {
  switch (m) {
    case Method::independent: return "independent";
    case Method::vem: return "vem";
    case Method::exact: return "exact";
  }
  return "?";
}

inline Method parse_method(const std::string& name) {
  if (name == "independent") return Method::independent;
  if (name == "vem") return Method::vem;
  if (name == "exact") return Method::exact;
  throw InputError("unknown method '" + name + "'");
}

inline std::string to_string(DecodeRule r) { return r == DecodeRule::viterbi ? "viterbi" : "map"; }

inline DecodeRule parse_rule(const std::string& name) {
  if (name == "viterbi") return DecodeRule::viterbi;
  if (name == "map") return DecodeRule::local_map;
  throw InputError("unknown decoding rule '" + name + "'");
}

struct FitOptions {
  Method method = Method::vem;
  std::size_t n_states = 3;
  double log_omega = 0.0;
  EmissionMode mode = EmissionMode::heteroscedastic;
  int max_iter = 100;
  double tol = 1e-6;
  std::size_t cap = kDefaultJointCap;
  VemOptions vem;  // max_iter and tol are taken from above
};

struct FittedModel {
  Method method = Method::vem;
  ModelParams params;
  std::vector<double> trace;  // bound (VEM) or log-likelihood (exact)
  int n_iterations = 0;
  bool converged = false;
};

inline FittedModel fit_from(const ObservationMatrix& x, const ModelParams& init, const FitOptions& opts) {
  FittedModel out;
  out.method = opts.method;
  ModelParams start = init;
  if (opts.method == Method::independent) start.coupling.log_omega = 0.0;
  if (opts.method == Method::exact) {
    // Fail before any work if the joint chain is out of reach.
    joint_state_count(start.n_states(), start.n_individuals(), opts.cap);
    ExactEmOptions eo;
    eo.max_iter = opts.max_iter;
    eo.tol = opts.tol;
    eo.cap = opts.cap;
    FitReport r = fit_exact_em(x, start, eo);
    out.params = std::move(r.params);
    out.trace = std::move(r.log_likelihood_trace);
    out.n_iterations = r.n_iterations;
    out.converged = r.converged;
    return out;
  }
  VemOptions vo = opts.vem;
  vo.max_iter = opts.max_iter;
  vo.tol = opts.tol;
  VemReport r = fit_vem(x, start, vo);
  out.params = std::move(r.params);
  out.trace = std::move(r.bound_trace);
  out.n_iterations = r.n_iterations;
  out.converged = r.converged;
  return out;
}

inline FittedModel fit_model(const ObservationMatrix& x, const SimilarityMatrix& similarity, const FitOptions& opts) {
  const double log_omega = opts.method == Method::independent ? 0.0 : opts.log_omega;
  SimilarityMatrix sim = similarity;
  if (sim.s.size() == 0) sim = SimilarityMatrix::zeros(static_cast<std::size_t>(x.rows()));
  return fit_from(x, initial_params(x, sim, opts.n_states, log_omega, opts.mode), opts);
}

struct Decoded {
  StatePath states;          // I x T
  std::vector<Matrix> tau;   // per individual, T x Q
};

/// Viterbi always runs on the factorized variational chain at `params`. For
/// exact models tau holds the exact individual marginals and the local rule
/// takes their argmax; otherwise tau comes from a converged variational fit.
inline Decoded decode_model(const ObservationMatrix& x, const ModelParams& params, Method method, DecodeRule rule,
                            std::size_t cap = kDefaultJointCap) {
  Decoded out;
  if (method == Method::exact) {
    const JointPosterior post = joint_forward_backward(x, params, cap);
    const JointStateCodec codec(params.n_individuals(), params.n_states(), cap);
    out.tau = detail::individual_marginals(post.gamma, codec);
    if (rule == DecodeRule::local_map) {
      out.states = local_map(out.tau);
    } else {
      const VariationalState state = infer_posterior(x, params);
      out.states = viterbi_variational(state.tau, state.log_h, params.chain);
    }
    return out;
  }
  const VariationalState state = infer_posterior(x, params);
  out.states = rule == DecodeRule::viterbi ? viterbi_variational(state.tau, state.log_h, params.chain)
                                           : local_map(state.tau);
  out.tau = state.tau;
  return out;
}

}  // namespace chmm
