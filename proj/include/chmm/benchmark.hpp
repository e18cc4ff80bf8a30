#pragma once

// Replicated simulate -> fit -> decode -> evaluate comparisons.
//
// Study 1 varies the panel size at weak coupling and includes the exact EM.
// Study 2 uses ten individuals across noise regimes; the coupled variational
// fit there calibrates log omega on the grid by weighted RSS.

#include "chmm/error.hpp"
#include "chmm/parallel.hpp"
#include "chmm/pipeline.hpp"
#include "chmm/selection.hpp"
#include "chmm/simulation.hpp"
#include "chmm/table.hpp"

#include <chrono>
#include <cstdint>
#include <string>
#include <vector>

namespace chmm {

struct BenchConfig {
  std::string name;
  Scenario scenario = Scenario::homoscedastic;
  double sigma = 1.0;
  double log_omega = -0.2;
  std::size_t n_individuals = 10;
};

inline std::vector<BenchConfig> study_configs(int study) {
  std::vector<BenchConfig> out;
  if (study == 1) {
    for (std::size_t n = 2; n <= 5; ++n)
      out.push_back({"I" + std::to_string(n), Scenario::homoscedastic, 1.0, -0.2, n});
    return out;
  }
  if (study == 2) {
    for (double sigma : {0.3, 1.0, 1.2})
      for (const auto& [label, w] : {std::pair{"weak", -0.2}, std::pair{"moderate", -0.35}})
        out.push_back({"homo-s" + format_double(sigma) + "-" + label, Scenario::homoscedastic, sigma, w, 10});
    out.push_back({"hetero-a-weak", Scenario::hetero_a, 1.0, -0.2, 10});
    out.push_back({"hetero-b-weak", Scenario::hetero_b, 1.0, -0.2, 10});
    return out;
  }
  throw InputError("study must be 1 or 2");
}

inline std::string method_label(Method m) {
  switch (m) {
    case Method::independent: return "iHMM-EM";
    case Method::vem: return "CHMM-VEM";
    case Method::exact: return "CHMM-EM";
  }
  return "?";
}

struct BenchmarkOptions {
  int study = 1;
  std::size_t n_replicates = 100;
  std::vector<Method> methods;      // empty: study default
  std::vector<BenchConfig> configs;  // empty: study default
  std::uint64_t root_seed = 1;
  std::size_t n_loci = 1000;
  std::size_t threads = 1;
  int max_iter = 100;
  double tol = 1e-6;
  std::size_t cap = kDefaultJointCap;
  int calibrate_omega = -1;  // -1: study default (on for study 2)
  std::vector<double> omega_grid = default_log_omega_grid();

  std::vector<Method> resolved_methods() const {
    if (!methods.empty()) return methods;
    if (study == 1) return {Method::independent, Method::vem, Method::exact};
    return {Method::independent, Method::vem};
  }
  std::vector<BenchConfig> resolved_configs() const { return configs.empty() ? study_configs(study) : configs; }
  bool calibrates() const { return calibrate_omega < 0 ? study == 2 : calibrate_omega != 0; }
};

struct ReplicateRecord {
  std::string config;
  std::size_t replicate = 0;
  std::uint64_t seed = 0;
  Method method = Method::vem;
  bool ok = false;
  std::string error;
  EvalMetrics metrics;
  double log_omega = 0.0;  // coupling used for decoding
  int n_iterations = 0;
  double seconds = 0.0;    // wall time of fit + decode
};

struct OmegaRecord {
  std::string config;
  std::size_t replicate = 0;
  double log_omega = 0.0;
  bool ok = false;
  double rss = 0.0;
  double accuracy = 0.0;
  bool selected = false;
};

struct BenchmarkReport {
  int study = 1;
  std::vector<BenchConfig> configs;
  std::vector<Method> methods;
  std::vector<ReplicateRecord> replicates;  // config-major, then replicate, then method
  std::vector<OmegaRecord> omega_grid;
};

namespace detail {

struct ReplicateOutcome {
  std::vector<ReplicateRecord> records;
  std::vector<OmegaRecord> omega;
};

inline ReplicateOutcome run_replicate(const BenchConfig& cfg, std::size_t config_index, std::size_t replicate,
                                      const BenchmarkOptions& opts, const std::vector<Method>& methods) {
  using clock = std::chrono::steady_clock;
  ReplicateOutcome out;
  const std::uint64_t seed = derive_seed(opts.root_seed, config_index, replicate);

  SimulationConfig sc;
  sc.n_individuals = cfg.n_individuals;
  sc.n_loci = opts.n_loci;
  sc.scenario = cfg.scenario;
  sc.sigma = cfg.sigma;
  sc.log_omega = cfg.log_omega;
  sc.seed = seed;

  auto record = [&](Method m) {
    ReplicateRecord r;
    r.config = cfg.name;
    r.replicate = replicate;
    r.seed = seed;
    r.method = m;
    return r;
  };

  SimulatedDataset data;
  try {
    data = simulate(sc);
  } catch (const Error& e) {
    for (Method m : methods) {
      ReplicateRecord r = record(m);
      r.error = std::string("simulation: ") + e.what();
      out.records.push_back(std::move(r));
    }
    return out;
  }

  FitOptions fo;
  fo.n_states = data.emission.n_states();
  fo.mode = cfg.scenario == Scenario::homoscedastic ? EmissionMode::homoscedastic : EmissionMode::heteroscedastic;
  fo.max_iter = opts.max_iter;
  fo.tol = opts.tol;
  fo.cap = opts.cap;

  for (Method m : methods) {
    ReplicateRecord r = record(m);
    const auto start = clock::now();
    try {
      fo.method = m;
      if (m == Method::vem && opts.calibrates()) {
        SelectionOptions so;
        so.vem.max_iter = opts.max_iter;
        so.vem.tol = opts.tol;
        so.mode = fo.mode;
        so.n_states = fo.n_states;
        so.keep_fits = true;
        const SelectionReport sel = select_omega(data.x, data.similarity, opts.omega_grid, so);
        if (!sel.chosen_log_omega) throw DegeneracyError("omega calibration: every grid fit failed");
        for (std::size_t k = 0; k < sel.omega_results.size(); ++k) {
          const OmegaCandidate& c = sel.omega_results[k];
          OmegaRecord o;
          o.config = cfg.name;
          o.replicate = replicate;
          o.log_omega = c.log_omega;
          o.ok = c.ok;
          o.selected = c.ok && c.log_omega == *sel.chosen_log_omega;
          if (c.ok) {
            o.rss = c.rss;
            const Decoded d = decode_model(data.x, sel.fits[k].params, m, DecodeRule::viterbi, opts.cap);
            o.accuracy = evaluate(d.states, data.truth, data.normal).accuracy;
            if (o.selected) {
              r.metrics = evaluate(d.states, data.truth, data.normal);
              r.log_omega = c.log_omega;
              r.n_iterations = sel.fits[k].n_iterations;
            }
          }
          out.omega.push_back(o);
        }
      } else {
        fo.log_omega = m == Method::independent ? 0.0 : cfg.log_omega;
        const FittedModel fit = fit_model(data.x, data.similarity, fo);
        const Decoded d = decode_model(data.x, fit.params, m, DecodeRule::viterbi, opts.cap);
        r.metrics = evaluate(d.states, data.truth, data.normal);
        r.log_omega = fit.params.coupling.log_omega;
        r.n_iterations = fit.n_iterations;
      }
      r.ok = true;
    } catch (const Error& e) {
      r.error = e.what();
    }
    r.seconds = std::chrono::duration<double>(clock::now() - start).count();
    out.records.push_back(std::move(r));
  }
  return out;
}

}  // namespace detail

/// Seeds come from (root seed, config index, replicate index), and results
/// are gathered by index, so the report does not depend on the thread count.
inline BenchmarkReport run_benchmark(const BenchmarkOptions& opts) {
  BenchmarkReport report;
  report.study = opts.study;
  report.configs = opts.resolved_configs();
  report.methods = opts.resolved_methods();
  for (const BenchConfig& c : report.configs)
    for (Method m : report.methods)
      if (m == Method::exact) joint_state_count(3, c.n_individuals, opts.cap);

  const std::size_t n_tasks = report.configs.size() * opts.n_replicates;
  std::vector<detail::ReplicateOutcome> outcomes(n_tasks);
  parallel_for(n_tasks, opts.threads, [&](std::size_t task) {
    const std::size_t c = task / opts.n_replicates;
    const std::size_t r = task % opts.n_replicates;
    outcomes[task] = detail::run_replicate(report.configs[c], c, r, opts, report.methods);
  });
  for (auto& o : outcomes) {
    for (auto& r : o.records) report.replicates.push_back(std::move(r));
    for (auto& w : o.omega) report.omega_grid.push_back(std::move(w));
  }
  return report;
}

// ---------------------------------------------------------------------------
// Tables. None of these carry wall times except timings_table, so the others
// are reproducible bit for bit.

inline Table summary_table(const BenchmarkReport& report) {
  Table t;
  t.header = {"study", "config", "method", "n_ok", "n_failed", "mean_fpr", "mean_fnr", "mean_accuracy",
              "sd_accuracy", "win_rate_vs_iHMM"};
  for (const BenchConfig& cfg : report.configs) {
    for (Method m : report.methods) {
      std::size_t n_ok = 0, n_failed = 0, n_fpr = 0, n_fnr = 0, n_pairs = 0, n_wins = 0;
      double s_fpr = 0.0, s_fnr = 0.0, s_acc = 0.0, s_acc2 = 0.0;
      for (const ReplicateRecord& r : report.replicates) {
        if (r.config != cfg.name || r.method != m) continue;
        if (!r.ok) {
          ++n_failed;
          continue;
        }
        ++n_ok;
        if (r.metrics.fpr_defined()) ++n_fpr, s_fpr += r.metrics.fpr;
        if (r.metrics.fnr_defined()) ++n_fnr, s_fnr += r.metrics.fnr;
        s_acc += r.metrics.accuracy;
        s_acc2 += r.metrics.accuracy * r.metrics.accuracy;
        for (const ReplicateRecord& b : report.replicates)
          if (b.ok && b.config == r.config && b.replicate == r.replicate && b.method == Method::independent) {
            ++n_pairs;
            if (r.metrics.accuracy > b.metrics.accuracy) ++n_wins;
          }
      }
      constexpr double nan = std::numeric_limits<double>::quiet_NaN();
      const double n = static_cast<double>(n_ok);
      const double mean_acc = n_ok ? s_acc / n : nan;
      const double sd_acc = n_ok > 1 ? std::sqrt(std::max(0.0, (s_acc2 - n * mean_acc * mean_acc) / (n - 1.0))) : nan;
      const double win = (m != Method::independent && n_pairs) ? static_cast<double>(n_wins) / static_cast<double>(n_pairs) : nan;
      t.add({std::to_string(report.study), cfg.name, method_label(m), std::to_string(n_ok), std::to_string(n_failed),
             format_double(n_fpr ? s_fpr / static_cast<double>(n_fpr) : nan),
             format_double(n_fnr ? s_fnr / static_cast<double>(n_fnr) : nan), format_double(mean_acc),
             format_double(sd_acc), format_double(win)});
    }
  }
  return t;
}

inline Table replicates_table(const BenchmarkReport& report) {
  Table t;
  t.header = {"config", "replicate", "seed", "method", "status", "fpr", "fnr", "accuracy", "log_omega", "n_iterations"};
  for (const ReplicateRecord& r : report.replicates)
    t.add({r.config, std::to_string(r.replicate), std::to_string(r.seed), method_label(r.method),
           r.ok ? "ok" : "failed", format_double(r.ok ? r.metrics.fpr : std::nan("")),
           format_double(r.ok ? r.metrics.fnr : std::nan("")), format_double(r.ok ? r.metrics.accuracy : std::nan("")),
           format_double(r.log_omega), std::to_string(r.n_iterations)});
  return t;
}

/// Long format: one row per (config, replicate, grid log omega).
inline Table omega_grid_table(const BenchmarkReport& report) {
  Table t;
  t.header = {"config", "replicate", "log_omega", "status", "rss", "accuracy", "selected"};
  for (const OmegaRecord& o : report.omega_grid)
    t.add({o.config, std::to_string(o.replicate), format_double(o.log_omega), o.ok ? "ok" : "failed",
           format_double(o.ok ? o.rss : std::nan("")), format_double(o.ok ? o.accuracy : std::nan("")),
           o.selected ? "1" : "0"});
  return t;
}

inline Table timings_table(const BenchmarkReport& report) {
  Table t;
  t.header = {"config", "replicate", "method", "seconds"};
  for (const ReplicateRecord& r : report.replicates)
    t.add({r.config, std::to_string(r.replicate), method_label(r.method), format_double(r.seconds)});
  return t;
}

inline Table failures_table(const BenchmarkReport& report) {
  Table t;
  t.header = {"config", "replicate", "method", "error"};
  for (const ReplicateRecord& r : report.replicates)
    if (!r.ok) {
      std::string msg = r.error;
      for (char& ch : msg)
        if (ch == ',' || ch == '\n') ch = ';';
      t.add({r.config, std::to_string(r.replicate), method_label(r.method), msg});
    }
  return t;
}

}  // namespace chmm
