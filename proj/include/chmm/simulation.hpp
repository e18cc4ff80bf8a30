#pragma once

// Synthetic coupled alteration data and call-set evaluation.
//
// Layout: loci are split into blocks of `spacing`; block k has its center at
// k*spacing + spacing/2 - 1 (0-based, i.e. 25, 75, ... in 1-based terms). Each
// block holds one alteration window whose length is Poisson(window_mean),
// clamped to [1, spacing] and kept inside its block. A window carries one
// joint tuple drawn with probability proportional to W_l among tuples with at
// least one altered individual; everything outside windows is normal.

#include "chmm/error.hpp"
#include "chmm/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

namespace chmm {

enum class Scenario { homoscedastic, hetero_a, hetero_b };

inline std::string to_string(Scenario s) {
  switch (s) {
    case Scenario::homoscedastic: return "homoscedastic";
    case Scenario::hetero_a: return "hetero-a";
    case Scenario::hetero_b: return "hetero-b";
  }
  return "?";
}

inline Scenario parse_scenario(const std::string& name) {
  if (name == "homoscedastic" || name == "homo") return Scenario::homoscedastic;
  if (name == "hetero-a") return Scenario::hetero_a;
  if (name == "hetero-b") return Scenario::hetero_b;
  throw InputError("unknown scenario '" + name + "'");
}

/// Emission law of a preset. The homoscedastic preset takes sigma in {0.3, 1, 1.2}.
inline EmissionParams scenario_emission(Scenario s, double sigma = 1.0) {
  EmissionParams e;
  e.means.resize(3);
  e.std_devs.resize(3);
  switch (s) {
    case Scenario::homoscedastic:
      if (sigma != 0.3 && sigma != 1.0 && sigma != 1.2)
        throw InputError("homoscedastic scenario sigma must be one of 0.3, 1, 1.2");
      e.means << -1.0, 0.0, 1.0;
      e.std_devs.setConstant(sigma);
      e.mode = EmissionMode::homoscedastic;
      break;
    case Scenario::hetero_a:
      e.means << -2.0, 0.0, 2.0;
      e.std_devs << 2.0, 0.25, 2.0;
      e.mode = EmissionMode::heteroscedastic;
      break;
    case Scenario::hetero_b:
      e.means << -3.5, 0.0, 0.68;
      e.std_devs << 1.3, 0.2, 0.2;
      e.mode = EmissionMode::heteroscedastic;
      break;
  }
  return e;
}

/// State whose mean is closest to zero, ties to the lower index.
inline std::size_t normal_state(const EmissionParams& emission) {
  if (emission.means.size() == 0) throw InputError("normal_state: no states");
  return static_cast<std::size_t>(argmax_lowest(Vector(-emission.means.array().abs())));
}

/// Two related groups: the first ceil(I/2) individuals form one block.
/// Within-block similarity 0.8, between-block 0.1, unit diagonal.
inline SimilarityMatrix block_kinship(std::size_t n_individuals) {
  const auto n = static_cast<Eigen::Index>(n_individuals);
  const Eigen::Index split = (n + 1) / 2;
  SimilarityMatrix sim{Matrix(n, n)};
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      sim.s(i, j) = i == j ? 1.0 : ((i < split) == (j < split) ? 0.8 : 0.1);
  return sim;
}

/// splitmix64 finalizer; used to derive independent stream seeds.
inline std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t a, std::uint64_t b = 0) {
  return splitmix64(splitmix64(splitmix64(root) ^ a) ^ b);
}

struct SimulationConfig {
  std::size_t n_individuals = 10;
  std::size_t n_loci = 1000;
  Scenario scenario = Scenario::homoscedastic;
  double sigma = 1.0;          // homoscedastic preset only
  EmissionParams emission;     // overrides the preset when non-empty (any Q)
  double log_omega = -0.35;
  std::size_t spacing = 50;
  double window_mean = 15.0;
  SimilarityMatrix similarity;  // empty: block_kinship(n_individuals)
  std::uint64_t seed = 1;

  EmissionParams resolved_emission() const {
    return emission.means.size() > 0 ? emission : scenario_emission(scenario, sigma);
  }
  SimilarityMatrix resolved_similarity() const {
    return similarity.s.size() > 0 ? similarity : block_kinship(n_individuals);
  }
};

struct AlterationWindow {
  std::size_t center = 0;
  std::size_t begin = 0;  // inclusive
  std::size_t end = 0;    // exclusive
  std::vector<std::size_t> tuple;
};

struct SimulatedDataset {
  ObservationMatrix x;
  StatePath truth;
  std::vector<AlterationWindow> windows;
  EmissionParams emission;
  SimilarityMatrix similarity;
  std::size_t normal = 0;
  SimulationConfig config;
};

namespace detail {

inline constexpr std::size_t kExactTupleLimit = std::size_t{1} << 22;

// Draws tuples from the W-proportional law restricted to "not all normal".
class TupleSampler {
public:
  TupleSampler(const SimilarityMatrix& sim, double log_omega, std::size_t n_states, std::size_t normal,
               std::size_t n_individuals)
      : sim_(sim), log_omega_(log_omega), n_states_(n_states), normal_(normal), n_(n_individuals) {
    std::size_t k = 1;
    exact_ = true;
    for (std::size_t i = 0; i < n_; ++i) {
      if (k > kExactTupleLimit / n_states_) {
        exact_ = false;
        break;
      }
      k *= n_states_;
    }
    if (!exact_) return;
    codec_.emplace_back(n_, n_states_, kExactTupleLimit);
    const JointStateCodec& codec = codec_.front();
    const Vector log_w = log_coupling_weights(sim_, CouplingParams{log_omega_}, codec);
    std::vector<std::size_t> all_normal(n_, normal_);
    const std::size_t excluded = codec.encode(all_normal);
    const double mx = log_w.maxCoeff();
    cdf_.resize(codec.size());
    double acc = 0.0;
    for (std::size_t l = 0; l < codec.size(); ++l) {
      if (l != excluded) acc += std::exp(log_w(static_cast<Eigen::Index>(l)) - mx);
      cdf_[l] = acc;
    }
  }

  std::vector<std::size_t> draw(std::mt19937_64& rng) const {
    if (exact_) {
      const double u = std::uniform_real_distribution<double>(0.0, cdf_.back())(rng);
      auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
      if (it == cdf_.end()) --it;
      return codec_.front().decode(static_cast<std::size_t>(it - cdf_.begin()));
    }
    return gibbs(rng);
  }

private:
  // Single-site Gibbs on the restricted law, for tuple spaces too large to tabulate.
  std::vector<std::size_t> gibbs(std::mt19937_64& rng) const {
    std::uniform_int_distribution<std::size_t> pick(0, n_states_ - 1);
    std::vector<std::size_t> l(n_);
    for (auto& v : l) v = pick(rng);
    if (std::all_of(l.begin(), l.end(), [&](std::size_t v) { return v == normal_; }))
      l[0] = (normal_ + 1) % n_states_;
    Vector logp(static_cast<Eigen::Index>(n_states_));
    for (int sweep = 0; sweep < 200; ++sweep) {
      for (std::size_t i = 0; i < n_; ++i) {
        bool others_normal = true;
        for (std::size_t j = 0; j < n_; ++j)
          if (j != i && l[j] != normal_) others_normal = false;
        for (std::size_t r = 0; r < n_states_; ++r) {
          double d = 0.0;
          for (std::size_t j = 0; j < n_; ++j)
            if (j != i && l[j] != r)
              d += sim_.s(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) +
                   sim_.s(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i));
          logp(static_cast<Eigen::Index>(r)) = (others_normal && r == normal_) ? kNegInf : log_omega_ * d;
        }
        const Vector p = softmax(logp);
        const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
        double acc = 0.0;
        std::size_t chosen = n_states_ - 1;
        for (std::size_t r = 0; r < n_states_; ++r) {
          acc += p(static_cast<Eigen::Index>(r));
          if (u < acc) {
            chosen = r;
            break;
          }
        }
        l[i] = chosen;
      }
    }
    return l;
  }

  const SimilarityMatrix& sim_;
  double log_omega_;
  std::size_t n_states_;
  std::size_t normal_;
  std::size_t n_;
  bool exact_ = true;
  std::vector<JointStateCodec> codec_;
  std::vector<double> cdf_;
};

}  // namespace detail

inline SimulatedDataset simulate(const SimulationConfig& config) {
  SimulatedDataset out;
  out.config = config;
  out.emission = config.resolved_emission();
  out.emission.validate();
  out.similarity = config.resolved_similarity();
  out.similarity.validate();
  const std::size_t n_ind = config.n_individuals;
  const std::size_t n_loci = config.n_loci;
  const std::size_t q = out.emission.n_states();
  if (n_ind == 0) throw InputError("simulate: need at least one individual");
  if (q < 2) throw InputError("simulate: need at least two states");
  if (out.similarity.size() != n_ind) throw InputError("simulate: similarity size does not match individuals");
  if (config.spacing < 2) throw InputError("simulate: spacing must be at least 2");
  if (n_loci < config.spacing || n_loci % config.spacing != 0)
    throw InputError("simulate: loci count " + std::to_string(n_loci) + " is not a positive multiple of spacing " +
                     std::to_string(config.spacing));
  if (!(config.window_mean > 0.0)) throw InputError("simulate: window mean must be positive");
  if (!(config.log_omega <= 0.0)) throw InputError("simulate: log omega must be <= 0");

  out.normal = normal_state(out.emission);
  std::mt19937_64 rng(config.seed);
  const detail::TupleSampler sampler(out.similarity, config.log_omega, q, out.normal, n_ind);

  out.truth = StatePath::Constant(static_cast<Eigen::Index>(n_ind), static_cast<Eigen::Index>(n_loci),
                                  static_cast<int>(out.normal));
  std::poisson_distribution<long> length_dist(config.window_mean);
  const std::size_t half = config.spacing / 2;
  for (std::size_t block = 0; block < n_loci / config.spacing; ++block) {
    AlterationWindow w;
    w.center = block * config.spacing + half - 1;
    const auto len = static_cast<std::size_t>(std::clamp<long>(length_dist(rng), 1, static_cast<long>(config.spacing)));
    const std::size_t block_begin = block * config.spacing;
    w.begin = w.center - std::min((len - 1) / 2, w.center - block_begin);
    w.end = std::min(w.begin + len, block_begin + config.spacing);
    w.tuple = sampler.draw(rng);
    for (std::size_t t = w.begin; t < w.end; ++t)
      for (std::size_t i = 0; i < n_ind; ++i)
        out.truth(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)) = static_cast<int>(w.tuple[i]);
    out.windows.push_back(std::move(w));
  }

  std::normal_distribution<double> noise(0.0, 1.0);
  out.x.resize(static_cast<Eigen::Index>(n_ind), static_cast<Eigen::Index>(n_loci));
  for (Eigen::Index i = 0; i < out.x.rows(); ++i)
    for (Eigen::Index t = 0; t < out.x.cols(); ++t) {
      const int s = out.truth(i, t);
      out.x(i, t) = out.emission.means(s) + out.emission.std_devs(s) * noise(rng);
    }
  return out;
}

struct EvalMetrics {
  double fpr = 0.0;
  double fnr = 0.0;
  double accuracy = 0.0;
  std::size_t truth_normal = 0;
  std::size_t truth_altered = 0;
  std::size_t false_altered = 0;  // truth normal, called altered
  std::size_t false_normal = 0;   // truth altered, called normal
  std::size_t correct = 0;        // exact label match
  std::size_t total = 0;

  bool fpr_defined() const { return truth_normal > 0; }
  bool fnr_defined() const { return truth_altered > 0; }
};

/// FPR/FNR on the altered-vs-normal binarization, accuracy on the raw labels.
/// An undefined rate (no cells in its denominator) is NaN.
inline EvalMetrics evaluate(const StatePath& calls, const StatePath& truth, std::size_t normal) {
  if (calls.rows() != truth.rows() || calls.cols() != truth.cols())
    throw InputError("evaluate: calls and truth shapes differ");
  if (truth.size() == 0) throw InputError("evaluate: empty truth");
  const int nrm = static_cast<int>(normal);
  EvalMetrics m;
  m.total = static_cast<std::size_t>(truth.size());
  for (Eigen::Index k = 0; k < truth.size(); ++k) {
    const int c = calls.data()[k];
    const int s = truth.data()[k];
    if (c == s) ++m.correct;
    if (s == nrm) {
      ++m.truth_normal;
      if (c != nrm) ++m.false_altered;
    } else {
      ++m.truth_altered;
      if (c == nrm) ++m.false_normal;
    }
  }
  constexpr double nan = std::numeric_limits<double>::quiet_NaN();
  m.fpr = m.fpr_defined() ? static_cast<double>(m.false_altered) / static_cast<double>(m.truth_normal) : nan;
  m.fnr = m.fnr_defined() ? static_cast<double>(m.false_normal) / static_cast<double>(m.truth_altered) : nan;
  m.accuracy = static_cast<double>(m.correct) / static_cast<double>(m.total);
  return m;
}

}  // namespace chmm
