// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
// Usage: acceptance [criterion numbers...]  (default: all)

#include "test_util.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace chmm;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(double v, int digits = 4) {
  std::ostringstream ss;
  ss.precision(digits);
  ss << v;
  return ss.str();
}

double max_abs(const Matrix& a, const Matrix& b) { return (a - b).cwiseAbs().maxCoeff(); }

// Small instances shared by criteria 1 and 2.
struct SmallInstance {
  ModelParams params;
  ObservationMatrix x;
};

std::vector<SmallInstance> small_instances() {
  std::mt19937_64 rng(20240601);
  std::vector<SmallInstance> out;
  for (int k = 0; k < 50; ++k) {
    const std::size_t q = k % 2 == 0 ? 2 : 3;
    SmallInstance s;
    s.params = chmm::testing::random_params(rng, 2, q, 4);
    s.x = chmm::testing::random_observations(rng, s.params, 4);
    out.push_back(std::move(s));
  }
  return out;
}

Outcome criterion_1() {
  const auto start = Clock::now();
  double worst = 0.0;
  for (const SmallInstance& s : small_instances()) {
    const JointPosterior fb = joint_forward_backward(s.x, s.params);
    const JointPosterior bf = brute_force_posterior(s.x, s.params);
    worst = std::max(worst, std::abs(fb.log_likelihood - bf.log_likelihood));
    worst = std::max(worst, max_abs(fb.gamma, bf.gamma));
    worst = std::max(worst, max_abs(fb.xi_sum, bf.xi_sum));
  }
  const double secs = seconds_since(start);
  return {worst <= 1e-10 && secs < 10.0,
          "50 instances, max |forward-backward - brute force| = " + fmt(worst) + " (tol 1e-10), " + fmt(secs, 3) +
              " s (limit 10 s)"};
}

Outcome criterion_2() {
  const auto start = Clock::now();
  double worst_excess = -std::numeric_limits<double>::infinity();
  double worst_gap_zero = 0.0;
  for (const SmallInstance& s : small_instances()) {
    const double log_p = brute_force_posterior(s.x, s.params).log_likelihood;
    const std::vector<Matrix> log_phi = log_emission_tables(s.x, s.params.emission);
    VariationalState st = initial_state(log_phi, s.params.chain);
    worst_excess = std::max(worst_excess, evaluate_bound(log_phi, s.params, st) - log_p);
    for (int sweep = 0; sweep < 50; ++sweep) {
      ve_sweep(log_phi, s.params, st);
      worst_excess = std::max(worst_excess, evaluate_bound(log_phi, s.params, st) - log_p);
    }

    ModelParams indep = s.params;
    indep.coupling.log_omega = 0.0;
    const double log_p0 = brute_force_posterior(s.x, indep).log_likelihood;
    VariationalState st0 = initial_state(log_phi, indep.chain);
    for (int sweep = 0; sweep < 5; ++sweep) ve_sweep(log_phi, indep, st0);
    const double gap = log_p0 - evaluate_bound(log_phi, indep, st0);
    worst_gap_zero = std::max(worst_gap_zero, std::abs(gap));
    worst_excess = std::max(worst_excess, -gap);
  }
  const double secs = seconds_since(start);
  return {worst_excess <= 1e-10 && worst_gap_zero < 1e-8 && secs < 30.0,
          "max (J - log P) = " + fmt(worst_excess) + " (slack 1e-10), max gap at log omega 0 = " + fmt(worst_gap_zero) +
              " (< 1e-8), " + fmt(secs, 3) + " s (limit 30 s)"};
}

// Criteria 3 and 5 share the same runs.
struct VeRunSummary {
  double worst_drop = 0.0;         // max over sweeps of J_prev - J_next
  double worst_consistency = 0.0;  // max Delta/tau violation after any sweep
  int n_sweeps = 0;
};

// Independent check of the pairwise marginals against tau, both directions.
double delta_tau_violation(const VariationalState& st) {
  double worst = 0.0;
  for (std::size_t i = 0; i < st.tau.size(); ++i) {
    const Matrix& tau = st.tau[i];
    const Matrix& delta = st.delta[i];
    const Eigen::Index q = tau.cols();
    for (Eigen::Index t = 1; t < tau.rows(); ++t) {
      Vector prev = Vector::Zero(q), next = Vector::Zero(q);
      for (Eigen::Index a = 0; a < q; ++a)
        for (Eigen::Index b = 0; b < q; ++b) {
          prev(a) += delta(t, a * q + b);
          next(b) += delta(t, a * q + b);
        }
      worst = std::max(worst, (prev - tau.row(t - 1).transpose()).cwiseAbs().maxCoeff());
      worst = std::max(worst, (next - tau.row(t).transpose()).cwiseAbs().maxCoeff());
    }
  }
  return worst;
}

const VeRunSummary& ve_runs() {
  static const VeRunSummary summary = [] {
    VeRunSummary s;
    std::mt19937_64 rng(20240603);
    for (int k = 0; k < 20; ++k) {
      const ModelParams p = chmm::testing::random_params(rng, 5, 3, 200);
      const ObservationMatrix x = chmm::testing::random_observations(rng, p, 200);
      const std::vector<Matrix> log_phi = log_emission_tables(x, p.emission);
      VariationalState st = initial_state(log_phi, p.chain);
      double prev = evaluate_bound(log_phi, p, st);
      for (int sweep = 0; sweep < 30; ++sweep) {
        ve_sweep(log_phi, p, st);
        const double j = evaluate_bound(log_phi, p, st);
        s.worst_drop = std::max(s.worst_drop, prev - j);
        s.worst_consistency = std::max(s.worst_consistency, delta_tau_violation(st));
        prev = j;
        ++s.n_sweeps;
      }
    }
    return s;
  }();
  return summary;
}

Outcome criterion_3() {
  const VeRunSummary& s = ve_runs();
  return {s.worst_drop <= 1e-8,
          "20 instances, " + std::to_string(s.n_sweeps) + " sweeps, largest bound decrease = " + fmt(s.worst_drop) +
              " (slack 1e-8)"};
}

Outcome criterion_5() {
  const VeRunSummary& s = ve_runs();
  return {s.worst_consistency <= 1e-10,
          "max |sum Delta - tau| over both directions after every sweep = " + fmt(s.worst_consistency) +
              " (tol 1e-10)"};
}

Outcome criterion_4() {
  std::mt19937_64 rng(20240604);
  double worst_drop = 0.0;
  int n_steps = 0;
  for (int k = 0; k < 10; ++k) {
    const ModelParams truth = chmm::testing::random_params(rng, 3, 2, 300);
    const ObservationMatrix x = chmm::testing::random_observations(rng, truth, 300);
    const ModelParams init = initial_params(x, truth.similarity, 2, truth.coupling.log_omega);
    ExactEmOptions o;
    o.max_iter = 60;
    o.tol = 1e-12;
    o.ascent_slack = std::numeric_limits<double>::infinity();  // record, judge below
    const FitReport r = fit_exact_em(x, init, o);
    for (std::size_t it = 1; it < r.log_likelihood_trace.size(); ++it) {
      worst_drop = std::max(worst_drop, r.log_likelihood_trace[it - 1] - r.log_likelihood_trace[it]);
      ++n_steps;
    }
  }
  return {worst_drop <= 1e-9, "10 fits, " + std::to_string(n_steps) + " EM steps, largest log-likelihood decrease = " +
                                  fmt(worst_drop) + " (slack 1e-9)"};
}

template <typename F>
double median_seconds(int reps, F&& f) {
  f();  // untimed warm-up
  std::vector<double> t;
  for (int r = 0; r < reps; ++r) {
    const auto start = Clock::now();
    f();
    t.push_back(seconds_since(start));
  }
  std::sort(t.begin(), t.end());
  return t[t.size() / 2];
}

Outcome criterion_6() {
  const auto start = Clock::now();
  constexpr int kIterations = 20;
  auto dataset = [](std::size_t n_ind) {
    SimulationConfig c;
    c.n_individuals = n_ind;
    c.n_loci = 1000;
    c.sigma = 1.0;
    c.log_omega = -0.2;
    c.seed = derive_seed(20240606, n_ind);
    return simulate(c);
  };
  auto em_time = [&](std::size_t n_ind) {
    const SimulatedDataset d = dataset(n_ind);
    const ModelParams init = initial_params(d.x, d.similarity, 3, -0.2, EmissionMode::homoscedastic);
    ExactEmOptions o;
    o.max_iter = kIterations;
    o.tol = 0.0;
    return median_seconds(5, [&] { (void)fit_exact_em(d.x, init, o); });
  };
  const double em3 = em_time(3);
  const double em4 = em_time(4);
  const double em5 = em_time(5);
  const SimulatedDataset d5 = dataset(5);
  const ModelParams init5 = initial_params(d5.x, d5.similarity, 3, -0.2, EmissionMode::homoscedastic);
  VemOptions vo;
  vo.max_iter = kIterations;
  vo.tol = 0.0;
  const double vem5 = median_seconds(5, [&] { (void)fit_vem(d5.x, init5, vo); });
  const double secs = seconds_since(start);
  const double r43 = em4 / em3;
  const double r55 = em5 / vem5;
  return {r43 >= 4.0 && r55 >= 10.0 && secs < 3600.0,
          "Q=3, T=1000, " + std::to_string(kIterations) + " iterations each, warm-up then median of 5: EM I=3 " + fmt(em3, 3) +
              " s, I=4 " + fmt(em4, 3) + " s (ratio " + fmt(r43, 3) + ", need >= 4), EM I=5 " + fmt(em5, 3) +
              " s vs VEM I=5 " + fmt(vem5, 3) + " s (ratio " + fmt(r55, 3) + ", need >= 10)"};
}

// Criteria 7 and 8 share one benchmark run.
const BenchmarkReport& study2_report(double* seconds) {
  static double secs = 0.0;
  static const BenchmarkReport report = [] {
    const auto start = Clock::now();
    BenchmarkOptions o;
    o.study = 2;
    o.n_replicates = 20;
    o.root_seed = 20240607;
    o.n_loci = 1000;
    o.methods = {Method::independent, Method::vem};
    o.configs = {BenchConfig{"homo-s1.2-moderate", Scenario::homoscedastic, 1.2, -0.35, 10}};
    BenchmarkReport r = run_benchmark(o);
    secs = seconds_since(start);
    return r;
  }();
  if (seconds) *seconds = secs;
  return report;
}

Outcome criterion_7() {
  double secs = 0.0;
  const BenchmarkReport& r = study2_report(&secs);
  std::map<std::size_t, double> ihmm, vem;
  std::size_t failures = 0;
  for (const ReplicateRecord& rec : r.replicates) {
    if (!rec.ok) {
      ++failures;
      continue;
    }
    (rec.method == Method::vem ? vem : ihmm)[rec.replicate] = rec.metrics.accuracy;
  }
  double s_v = 0.0, s_i = 0.0;
  std::size_t wins = 0, pairs = 0;
  for (const auto& [rep, acc] : vem) {
    s_v += acc;
    const auto it = ihmm.find(rep);
    if (it == ihmm.end()) continue;
    ++pairs;
    if (acc > it->second) ++wins;
  }
  for (const auto& [rep, acc] : ihmm) s_i += acc;
  const double mean_v = vem.empty() ? 0.0 : s_v / static_cast<double>(vem.size());
  const double mean_i = ihmm.empty() ? 0.0 : s_i / static_cast<double>(ihmm.size());
  const double win_rate = static_cast<double>(wins) / 20.0;
  const bool pass = failures == 0 && pairs == 20 && mean_v > mean_i && win_rate >= 0.7 && secs < 1800.0;
  return {pass, "I=10, T=1000, sigma=1.2, log omega=-0.35, 20 replicates: mean accuracy CHMM-VEM " + fmt(mean_v, 5) +
                    " vs iHMM-EM " + fmt(mean_i, 5) + ", VEM wins " + std::to_string(wins) + "/20 (need >= 14), " +
                    std::to_string(failures) + " failed fits, " + fmt(secs, 4) + " s (limit 1800 s)"};
}

Outcome criterion_8() {
  const BenchmarkReport& r = study2_report(nullptr);
  constexpr double kStep = 0.05;
  std::map<std::size_t, std::vector<const OmegaRecord*>> by_rep;
  for (const OmegaRecord& o : r.omega_grid) by_rep[o.replicate].push_back(&o);
  std::size_t hits = 0;
  std::ostringstream pairs;
  for (const auto& [rep, recs] : by_rep) {
    double best = -1.0;
    for (const OmegaRecord* o : recs)
      if (o->ok) best = std::max(best, o->accuracy);
    const OmegaRecord* sel = nullptr;
    for (const OmegaRecord* o : recs)
      if (o->selected) sel = o;
    if (!sel) continue;
    bool hit = false;
    double nearest_argmax = 0.0;
    for (const OmegaRecord* o : recs)
      if (o->ok && o->accuracy == best) {
        if (!hit) nearest_argmax = o->log_omega;
        if (std::abs(o->log_omega - sel->log_omega) <= kStep + 1e-9) {
          hit = true;
          nearest_argmax = o->log_omega;
        }
      }
    if (hit) ++hits;
    pairs << ' ' << fmt(sel->log_omega, 3) << '/' << fmt(nearest_argmax, 3);
  }
  const double rate = static_cast<double>(hits) / 20.0;
  return {rate >= 0.6, "selected log omega within one grid step (0.05) of an accuracy-maximizing grid value in " +
                           std::to_string(hits) + "/20 replicates (need >= 12); selected/argmax:" + pairs.str()};
}

Outcome criterion_9() {
  std::mt19937_64 rng(20240609);
  int mismatches = 0, chains = 0;
  for (int k = 0; k < 100; ++k) {
    const ModelParams p = chmm::testing::random_params(rng, 2, 2, 6);
    const ObservationMatrix x = chmm::testing::random_observations(rng, p, 6);
    const std::vector<Matrix> log_phi = log_emission_tables(x, p.emission);
    VariationalState st = initial_state(log_phi, p.chain);
    for (int sweep = 0; sweep < 5; ++sweep) ve_sweep(log_phi, p, st);
    for (std::size_t i = 0; i < 2; ++i) {
      const auto en = chmm::testing::enumerate_chain(st.log_h[i], p.chain.initial, p.chain.transition);
      if (viterbi_chain(st.tau[i], st.log_h[i], p.chain) != en.argmax) ++mismatches;
      ++chains;
    }
  }
  return {mismatches == 0, "100 instances (" + std::to_string(chains) + " chains), Q=2, T=6: " +
                               std::to_string(mismatches) + " paths differ from the enumeration argmax"};
}

Outcome criterion_10() {
  std::size_t correct = 0;
  std::ostringstream picks;
  for (std::size_t rep = 0; rep < 20; ++rep) {
    SimulationConfig c;
    c.sigma = 0.3;
    c.seed = derive_seed(20240610, rep);
    const SimulatedDataset d = simulate(c);
    SelectionOptions o;
    o.log_omega = c.log_omega;
    o.mode = EmissionMode::homoscedastic;
    const SelectionReport r = select_q(d.x, d.similarity, {2, 3, 4}, o);
    const std::size_t q = r.chosen_q.value_or(0);
    if (q == 3) ++correct;
    picks << ' ' << q;
  }
  return {correct >= 18, "I=10, T=1000, sigma=0.3: selected Q = 3 in " + std::to_string(correct) +
                             "/20 replicates (need >= 18); picks:" + picks.str()};
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(CHMM_CLI) + " " + args;
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome criterion_11() {
  const fs::path dir = fs::temp_directory_path() / ("chmm_acceptance_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  const std::string base = "bench --study 2 --replicates 3 --threads 1 --seed 11 --out ";
  const int rc1 = run_cli(base + (dir / "a.csv").string());
  const int rc2 = run_cli(base + (dir / "b.csv").string());
  if (rc1 != 0 || rc2 != 0) return {false, "bench exited with " + std::to_string(rc1) + " and " + std::to_string(rc2)};
  std::vector<std::string> differ;
  for (const std::string suffix : {"", ".replicates", ".omega_grid", ".failures"}) {
    const std::string a = read_file(dir / ("a" + suffix + ".csv"));
    const std::string b = read_file(dir / ("b" + suffix + ".csv"));
    if (a != b || a.empty()) differ.push_back("a" + suffix + ".csv");
  }
  fs::remove_all(dir);
  return {differ.empty(), differ.empty()
                              ? "summary, replicates, omega grid and failures files identical byte for byte "
                                "(wall-clock timings file excluded)"
                              : "files differ: " + differ.front()};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<int, std::function<Outcome()>>> all = {
      {1, criterion_1}, {2, criterion_2}, {3, criterion_3}, {4, criterion_4},   {5, criterion_5},  {6, criterion_6},
      {7, criterion_7}, {8, criterion_8}, {9, criterion_9}, {10, criterion_10}, {11, criterion_11}};
  std::set<int> wanted;
  for (int a = 1; a < argc; ++a) wanted.insert(std::atoi(argv[a]));

  int failed = 0;
  for (const auto& [n, run] : all) {
    if (!wanted.empty() && !wanted.count(n)) continue;
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << n << ": " << o.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
