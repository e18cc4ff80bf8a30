#pragma once

#include "chmm/error.hpp"
#include "chmm/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace chmm {

/// Observations, individuals by loci. NaN marks a missing cell.
using ObservationMatrix = Matrix;
/// Hidden states, individuals by loci, 0-based.
using StatePath = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic>;

inline constexpr std::size_t kDefaultJointCap = 4096;

/// Q^I, or CapacityError when it overflows or exceeds `cap`.
inline std::size_t joint_state_count(std::size_t n_states, std::size_t n_individuals,
                                     std::size_t cap = kDefaultJointCap) {
  std::size_t k = 1;
  for (std::size_t i = 0; i < n_individuals; ++i) {
    if (n_states != 0 && k > std::numeric_limits<std::size_t>::max() / n_states)
      throw CapacityError("joint state space Q^I overflows");
    k *= n_states;
    if (k > cap)
      throw CapacityError("joint state space " + std::to_string(n_states) + "^" +
                          std::to_string(n_individuals) + " exceeds cap " + std::to_string(cap));
  }
  return k;
}

struct ModelDims {
  std::size_t n_individuals = 0;
  std::size_t n_loci = 0;
  std::size_t n_states = 0;

  /// K = Q^I; throws CapacityError above `cap`.
  std::size_t joint_states(std::size_t cap = kDefaultJointCap) const {
    return joint_state_count(n_states, n_individuals, cap);
  }
  bool operator==(const ModelDims&) const = default;
};

enum class EmissionMode { homoscedastic, heteroscedastic };

inline std::string to_string(EmissionMode m) {
  return m == EmissionMode::homoscedastic ? "homoscedastic" : "heteroscedastic";
}

/// Gaussian emission per state. Means are kept in ascending order so that state
/// labels are comparable across fits and against simulated truth.
struct EmissionParams {
  Vector means;
  Vector std_devs;
  EmissionMode mode = EmissionMode::heteroscedastic;

  std::size_t n_states() const { return static_cast<std::size_t>(means.size()); }

  void validate() const {
    if (means.size() == 0 || means.size() != std_devs.size())
      throw InputError("emission: means and std_devs must be nonempty and equal length");
    for (Eigen::Index q = 0; q < means.size(); ++q) {
      if (!std::isfinite(means(q)) || !(std_devs(q) > 0.0) || !std::isfinite(std_devs(q)))
        throw InputError("emission: state " + std::to_string(q) + " has invalid mean or std dev");
      if (q > 0 && means(q) < means(q - 1))
        throw InputError("emission: means must be sorted ascending");
    }
    if (mode == EmissionMode::homoscedastic && (std_devs.array() != std_devs(0)).any())
      throw InputError("emission: homoscedastic mode requires equal std devs");
  }
};

struct ChainParams {
  Vector initial;     // m
  Matrix transition;  // pi, row-stochastic

  std::size_t n_states() const { return static_cast<std::size_t>(initial.size()); }

  void validate() const {
    const Eigen::Index q = initial.size();
    if (q == 0 || transition.rows() != q || transition.cols() != q)
      throw InputError("chain: initial law and transition matrix sizes disagree");
    if ((initial.array() < 0.0).any() || std::abs(initial.sum() - 1.0) > 1e-12)
      throw InputError("chain: initial law is not a probability vector");
    for (Eigen::Index r = 0; r < q; ++r)
      if ((transition.row(r).array() < 0.0).any() || std::abs(transition.row(r).sum() - 1.0) > 1e-12)
        throw InputError("chain: transition row " + std::to_string(r) + " is not stochastic");
  }
};

/// Pairwise similarities s_ij. The diagonal is never read.
struct SimilarityMatrix {
  Matrix s;

  std::size_t size() const { return static_cast<std::size_t>(s.rows()); }

  void validate() const {
    if (s.rows() != s.cols()) throw InputError("similarity matrix must be square");
    for (Eigen::Index i = 0; i < s.rows(); ++i)
      for (Eigen::Index j = 0; j < s.cols(); ++j) {
        if (i == j) continue;
        if (!std::isfinite(s(i, j)) || s(i, j) < 0.0)
          throw InputError("similarity entries must be finite and nonnegative");
        if (std::abs(s(i, j) - s(j, i)) > 1e-9) throw InputError("similarity matrix is not symmetric");
      }
  }

  static SimilarityMatrix zeros(std::size_t n) {
    return {Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n))};
  }
};

struct CouplingParams {
  double log_omega = 0.0;  // 0 is the independent model

  void validate() const {
    if (!(log_omega <= 0.0)) throw InputError("log omega must be <= 0");
  }
};

struct ModelParams {
  ModelDims dims;
  EmissionParams emission;
  ChainParams chain;
  CouplingParams coupling;
  SimilarityMatrix similarity;

  std::size_t n_states() const { return dims.n_states; }
  std::size_t n_individuals() const { return dims.n_individuals; }

  void validate() const {
    emission.validate();
    chain.validate();
    coupling.validate();
    similarity.validate();
    if (emission.n_states() != dims.n_states || chain.n_states() != dims.n_states)
      throw InputError("model: state count disagrees across components");
    if (similarity.size() != dims.n_individuals)
      throw InputError("model: similarity size disagrees with number of individuals");
  }
};

/// Joint index <-> tuple of individual states. Base-Q positional, individual 0
/// is the least significant digit.
class JointStateCodec {
public:
  JointStateCodec(std::size_t n_individuals, std::size_t n_states, std::size_t cap = kDefaultJointCap)
      : n_individuals_(n_individuals), n_states_(n_states),
        n_joint_(joint_state_count(n_states, n_individuals, cap)), stride_(n_individuals) {
    std::size_t p = 1;
    for (std::size_t i = 0; i < n_individuals; ++i) {
      stride_[i] = p;
      p *= n_states;
    }
  }

  std::size_t n_individuals() const { return n_individuals_; }
  std::size_t n_states() const { return n_states_; }
  std::size_t size() const { return n_joint_; }

  std::size_t digit(std::size_t joint, std::size_t i) const { return (joint / stride_[i]) % n_states_; }

  std::vector<std::size_t> decode(std::size_t joint) const {
    std::vector<std::size_t> tuple(n_individuals_);
    for (std::size_t i = 0; i < n_individuals_; ++i) tuple[i] = digit(joint, i);
    return tuple;
  }

  std::size_t encode(std::span<const std::size_t> tuple) const {
    std::size_t joint = 0;
    for (std::size_t i = 0; i < n_individuals_; ++i) joint += tuple[i] * stride_[i];
    return joint;
  }

private:
  std::size_t n_individuals_;
  std::size_t n_states_;
  std::size_t n_joint_;
  std::vector<std::size_t> stride_;
};

// ---------------------------------------------------------------------------
// Closed-form quantities

inline double log_emission(double x, std::size_t q, const EmissionParams& emission) {
  if (!std::isfinite(x)) throw InputError("log_emission: non-finite observation");
  const double sd = emission.std_devs(static_cast<Eigen::Index>(q));
  const double z = (x - emission.means(static_cast<Eigen::Index>(q))) / sd;
  return -std::log(sd) - kHalfLog2Pi - 0.5 * z * z;
}

/// T x Q table of log phi_q(X_it) for one individual; missing (NaN) cells are 0.
inline Matrix log_emission_table(const ObservationMatrix& x, std::size_t i, const EmissionParams& emission) {
  const Eigen::Index n_loci = x.cols();
  const Eigen::Index q = static_cast<Eigen::Index>(emission.n_states());
  Matrix table(n_loci, q);
  for (Eigen::Index t = 0; t < n_loci; ++t) {
    const double v = x(static_cast<Eigen::Index>(i), t);
    if (std::isnan(v)) {
      table.row(t).setZero();
      continue;
    }
    for (Eigen::Index r = 0; r < q; ++r) table(t, r) = log_emission(v, static_cast<std::size_t>(r), emission);
  }
  return table;
}

inline std::vector<Matrix> log_emission_tables(const ObservationMatrix& x, const EmissionParams& emission) {
  std::vector<Matrix> out;
  out.reserve(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) out.push_back(log_emission_table(x, static_cast<std::size_t>(i), emission));
  return out;
}

/// log W_l = log(omega) * sum_i sum_{j != i} s_ij 1{l_j != l_i}.
inline double log_coupling_weight(std::size_t joint, const SimilarityMatrix& similarity,
                                  const CouplingParams& coupling, const JointStateCodec& codec) {
  if (joint >= codec.size()) throw InputError("log_coupling_weight: joint index out of range");
  if (coupling.log_omega == 0.0) return 0.0;
  double disagreement = 0.0;
  const std::size_t n = codec.n_individuals();
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t li = codec.digit(joint, i);
    for (std::size_t j = 0; j < n; ++j)
      if (j != i && codec.digit(joint, j) != li)
        disagreement += similarity.s(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }
  return coupling.log_omega * disagreement;
}

inline Vector log_coupling_weights(const SimilarityMatrix& similarity, const CouplingParams& coupling,
                                   const JointStateCodec& codec) {
  Vector w(static_cast<Eigen::Index>(codec.size()));
  for (std::size_t l = 0; l < codec.size(); ++l)
    w(static_cast<Eigen::Index>(l)) = log_coupling_weight(l, similarity, coupling, codec);
  return w;
}

namespace detail {

// out(a * nb + b) = lhs(a) + rhs(b): lhs carries the more significant digit.
inline Vector kron_sum(const Vector& lhs, const Vector& rhs) {
  Vector out(lhs.size() * rhs.size());
  for (Eigen::Index a = 0; a < lhs.size(); ++a) out.segment(a * rhs.size(), rhs.size()) = rhs.array() + lhs(a);
  return out;
}

inline Matrix kron_sum(const Matrix& lhs, const Matrix& rhs) {
  Matrix out(lhs.rows() * rhs.rows(), lhs.cols() * rhs.cols());
  for (Eigen::Index a = 0; a < lhs.rows(); ++a)
    for (Eigen::Index b = 0; b < lhs.cols(); ++b)
      out.block(a * rhs.rows(), b * rhs.cols(), rhs.rows(), rhs.cols()) = rhs.array() + lhs(a, b);
  return out;
}

inline Matrix safe_log(const Matrix& m) {
  return m.unaryExpr([](double v) { return v > 0.0 ? std::log(v) : kNegInf; });
}

}  // namespace detail

/// Row k of the joint transition matrix, P_kl proportional to prod_i pi_{k_i,l_i} * W_l.
inline Vector joint_transition_row(std::size_t k, const ModelParams& params, std::size_t cap = kDefaultJointCap) {
  const JointStateCodec codec(params.n_individuals(), params.n_states(), cap);
  if (k >= codec.size()) throw InputError("joint_transition_row: index out of range");
  const Matrix log_pi = detail::safe_log(params.chain.transition);
  Vector row = log_pi.row(static_cast<Eigen::Index>(codec.digit(k, 0))).transpose();
  for (std::size_t i = 1; i < codec.n_individuals(); ++i)
    row = detail::kron_sum(Vector(log_pi.row(static_cast<Eigen::Index>(codec.digit(k, i))).transpose()), row);
  row += log_coupling_weights(params.similarity, params.coupling, codec);
  return softmax(row);
}

/// Full K x K joint transition matrix in log space, each row normalized.
inline Matrix joint_log_transition(const ModelParams& params, const JointStateCodec& codec) {
  const Matrix log_pi = detail::safe_log(params.chain.transition);
  Matrix lp = log_pi;
  for (std::size_t i = 1; i < codec.n_individuals(); ++i) lp = detail::kron_sum(log_pi, lp);
  const Vector lw = log_coupling_weights(params.similarity, params.coupling, codec);
  lp.rowwise() += lw.transpose();
  for (Eigen::Index k = 0; k < lp.rows(); ++k) lp.row(k).array() -= log_sum_exp(lp.row(k));
  return lp;
}

inline Vector joint_log_initial(const ModelParams& params, const JointStateCodec& codec) {
  const Vector log_m = detail::safe_log(params.chain.initial);
  Vector lv = log_m;
  for (std::size_t i = 1; i < codec.n_individuals(); ++i) lv = detail::kron_sum(log_m, lv);
  lv += log_coupling_weights(params.similarity, params.coupling, codec);
  lv.array() -= log_sum_exp(lv);
  return lv;
}

/// Initial joint law, P(S_1 = l) proportional to prod_i m_{l_i} * W_l.
inline Vector joint_initial(const ModelParams& params, std::size_t cap = kDefaultJointCap) {
  const JointStateCodec codec(params.n_individuals(), params.n_states(), cap);
  return joint_log_initial(params, codec).array().exp();
}

/// Complete-data log-likelihood up to the additive constant -log Z (which is
/// zero under row normalization and reported separately).
inline double complete_log_likelihood(const ObservationMatrix& x, const StatePath& path, const ModelParams& params) {
  const Eigen::Index n_ind = x.rows();
  const Eigen::Index n_loci = x.cols();
  if (path.rows() != n_ind || path.cols() != n_loci || static_cast<std::size_t>(n_ind) != params.n_individuals())
    throw InputError("complete_log_likelihood: dimension mismatch");
  const auto q_max = static_cast<int>(params.n_states());
  if ((path.array() < 0).any() || (path.array() >= q_max).any())
    throw InputError("complete_log_likelihood: state index out of range");

  const Matrix log_pi = detail::safe_log(params.chain.transition);
  const Vector log_m = detail::safe_log(params.chain.initial);
  double ll = 0.0;
  for (Eigen::Index i = 0; i < n_ind; ++i) {
    ll += log_m(path(i, 0));
    for (Eigen::Index t = 1; t < n_loci; ++t) ll += log_pi(path(i, t - 1), path(i, t));
    for (Eigen::Index t = 0; t < n_loci; ++t) {
      if (!std::isnan(x(i, t))) ll += log_emission(x(i, t), static_cast<std::size_t>(path(i, t)), params.emission);
      if (params.coupling.log_omega != 0.0) {
        double disagreement = 0.0;
        for (Eigen::Index j = 0; j < n_ind; ++j)
          if (j != i && path(j, t) != path(i, t)) disagreement += params.similarity.s(i, j);
        ll += disagreement * params.coupling.log_omega;
      }
    }
  }
  return ll;
}

// ---------------------------------------------------------------------------
// State relabeling and default starting values

/// Reorders states so that new state q is old state order[q].
inline ModelParams permute_states(const ModelParams& params, std::span<const std::size_t> order) {
  ModelParams out = params;
  const auto q = static_cast<Eigen::Index>(order.size());
  for (Eigen::Index a = 0; a < q; ++a) {
    const auto oa = static_cast<Eigen::Index>(order[static_cast<std::size_t>(a)]);
    out.emission.means(a) = params.emission.means(oa);
    out.emission.std_devs(a) = params.emission.std_devs(oa);
    out.chain.initial(a) = params.chain.initial(oa);
    for (Eigen::Index b = 0; b < q; ++b)
      out.chain.transition(a, b) = params.chain.transition(oa, static_cast<Eigen::Index>(order[static_cast<std::size_t>(b)]));
  }
  return out;
}

/// Stable ascending-mean order of the states.
inline std::vector<std::size_t> canonical_order(const EmissionParams& emission) {
  std::vector<std::size_t> order(emission.n_states());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return emission.means(static_cast<Eigen::Index>(a)) < emission.means(static_cast<Eigen::Index>(b));
  });
  return order;
}

inline bool is_identity(std::span<const std::size_t> order) {
  for (std::size_t q = 0; q < order.size(); ++q)
    if (order[q] != q) return false;
  return true;
}

/// Deterministic start: means at pooled quantiles (2q+1)/(2Q), pooled standard
/// deviation, sticky transitions with diagonal 0.9, uniform initial law.
inline ModelParams initial_params(const ObservationMatrix& x, const SimilarityMatrix& similarity, std::size_t n_states,
                                  double log_omega, EmissionMode mode = EmissionMode::heteroscedastic) {
  if (n_states == 0) throw InputError("number of states must be positive");
  std::vector<double> pooled;
  pooled.reserve(static_cast<std::size_t>(x.size()));
  for (Eigen::Index k = 0; k < x.size(); ++k)
    if (!std::isnan(x.data()[k])) pooled.push_back(x.data()[k]);
  if (pooled.size() < 2) throw InputError("need at least two observed values");
  std::sort(pooled.begin(), pooled.end());

  const double n = static_cast<double>(pooled.size());
  const double mean = std::accumulate(pooled.begin(), pooled.end(), 0.0) / n;
  double var = 0.0;
  for (double v : pooled) var += (v - mean) * (v - mean);
  double sd = std::sqrt(var / n);
  if (!(sd > 0.0)) sd = 1.0;

  const auto q = static_cast<Eigen::Index>(n_states);
  ModelParams p;
  p.dims = {static_cast<std::size_t>(x.rows()), static_cast<std::size_t>(x.cols()), n_states};
  p.emission.mode = mode;
  p.emission.means.resize(q);
  p.emission.std_devs = Vector::Constant(q, sd);
  for (Eigen::Index r = 0; r < q; ++r) {
    // Linear-interpolated empirical quantile.
    const double level = (2.0 * static_cast<double>(r) + 1.0) / (2.0 * static_cast<double>(q));
    const double pos = level * (n - 1.0);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, pooled.size() - 1);
    p.emission.means(r) = pooled[lo] + (pos - static_cast<double>(lo)) * (pooled[hi] - pooled[lo]);
  }
  p.chain.initial = Vector::Constant(q, 1.0 / static_cast<double>(q));
  if (q == 1) {
    p.chain.transition = Matrix::Ones(1, 1);
  } else {
    p.chain.transition = Matrix::Constant(q, q, 0.1 / static_cast<double>(q - 1));
    p.chain.transition.diagonal().setConstant(0.9);
  }
  p.coupling.log_omega = log_omega;
  p.similarity = similarity;
  p.validate();
  return p;
}

}  // namespace chmm
