// chmm: coupled-HMM copy-number calling from the command line.

#include "chmm/chmm.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace chmm;

namespace {

EmissionMode parse_emission(const std::string& s) {
  if (s == "homo" || s == "homoscedastic") return EmissionMode::homoscedastic;
  if (s == "hetero" || s == "heteroscedastic") return EmissionMode::heteroscedastic;
  throw InputError("unknown emission mode '" + s + "' (homo|hetero)");
}

template <typename T>
std::vector<T> parse_list(const std::string& text, const std::string& what) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::istringstream is(item);
    is.imbue(std::locale::classic());
    T v{};
    if (!(is >> v) || !(is >> std::ws).eof()) throw InputError(what + ": cannot parse '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw InputError(what + ": empty list");
  return out;
}

fs::path sidecar(const fs::path& out, const std::string& tag) {
  fs::path p = out.parent_path() / out.stem();
  p += "." + tag + ".csv";
  return p;
}

ObservationMatrix select_rows(const LabeledMatrix& signal, const std::vector<std::string>& ids) {
  ObservationMatrix x(static_cast<Eigen::Index>(ids.size()), signal.values.cols());
  for (std::size_t k = 0; k < ids.size(); ++k) {
    const auto it = std::find(signal.row_ids.begin(), signal.row_ids.end(), ids[k]);
    if (it == signal.row_ids.end()) throw InputError("individual '" + ids[k] + "' is not in the signal file");
    x.row(static_cast<Eigen::Index>(k)) = signal.values.row(it - signal.row_ids.begin());
  }
  return x;
}

SimilarityMatrix load_similarity(const std::string& path, const std::vector<std::string>& ids) {
  const KinshipLoad k = read_kinship(path, ids);
  if (k.max_asymmetry > 0.0)
    std::cerr << "kinship: symmetrized, max |s_ij - s_ji| = " << format_double(k.max_asymmetry) << "\n";
  if (k.n_clamped > 0) std::cerr << "kinship: " << k.n_clamped << " negative entries clamped to 0\n";
  return k.similarity;
}

Matrix sub_similarity(const SimilarityMatrix& sim, const std::vector<std::size_t>& idx) {
  const auto n = static_cast<Eigen::Index>(idx.size());
  Matrix out(n, n);
  for (Eigen::Index a = 0; a < n; ++a)
    for (Eigen::Index b = 0; b < n; ++b)
      out(a, b) = sim.s(static_cast<Eigen::Index>(idx[static_cast<std::size_t>(a)]),
                        static_cast<Eigen::Index>(idx[static_cast<std::size_t>(b)]));
  return out;
}

// ---------------------------------------------------------------------------

struct FitArgs {
  std::string signal, kinship, groups, out, calls, method = "vem", emission = "hetero", rule = "viterbi";
  std::size_t states = 3;
  std::optional<double> log_omega;
  int max_iter = 100;
  double tol = 1e-6;
  std::size_t threads = 1;
  std::size_t cap = kDefaultJointCap;
};

int run_fit(const FitArgs& a) {
  FitOptions fo;
  fo.method = parse_method(a.method);
  fo.n_states = a.states;
  fo.mode = parse_emission(a.emission);
  fo.max_iter = a.max_iter;
  fo.tol = a.tol;
  fo.cap = a.cap;
  if (fo.method == Method::independent) {
    fo.log_omega = 0.0;
  } else {
    if (!a.log_omega) throw InputError("--log-omega is required for method " + a.method);
    if (a.kinship.empty()) throw InputError("--kinship is required for method " + a.method);
    fo.log_omega = *a.log_omega;
  }
  if (!(fo.log_omega <= 0.0)) throw InputError("--log-omega must be <= 0");
  const DecodeRule rule = parse_rule(a.rule);

  const LabeledMatrix signal = read_signal(a.signal);
  const std::size_t n_ind = signal.row_ids.size();
  const SimilarityMatrix sim =
      a.kinship.empty() ? SimilarityMatrix::zeros(n_ind) : load_similarity(a.kinship, signal.row_ids);

  std::vector<Group> groups;
  if (a.groups.empty()) groups.push_back({"all", signal.row_ids});
  else groups = parse_groups(read_file(a.groups), signal.row_ids, a.groups);

  // Fail on capacity before fitting anything.
  if (fo.method == Method::exact)
    for (const Group& g : groups) joint_state_count(fo.n_states, g.individuals.size(), fo.cap);

  ModelArchive archive;
  archive.signal_sha256 = file_sha256(a.signal);
  archive.kinship_sha256 = a.kinship.empty() ? "" : file_sha256(a.kinship);
  archive.loci = signal.col_ids;
  archive.options = fo;
  archive.groups.resize(groups.size());
  std::vector<CallBlock> blocks(groups.size());

  parallel_for(groups.size(), a.threads, [&](std::size_t k) {
    const Group& g = groups[k];
    std::vector<std::size_t> idx;
    for (const auto& id : g.individuals)
      idx.push_back(static_cast<std::size_t>(std::find(signal.row_ids.begin(), signal.row_ids.end(), id) -
                                             signal.row_ids.begin()));
    const ObservationMatrix x = select_rows(signal, g.individuals);
    const SimilarityMatrix gs{sub_similarity(sim, idx)};
    ArchiveGroup& ag = archive.groups[k];
    ag.name = g.name;
    ag.individuals = g.individuals;
    ag.fit = fit_model(x, gs, fo);
    if (!a.calls.empty()) {
      blocks[k].individuals = g.individuals;
      blocks[k].labels = state_labels(ag.fit.params.emission);
      blocks[k].decoded = decode_model(x, ag.fit.params, fo.method, rule, fo.cap);
    }
  });

  for (const ArchiveGroup& g : archive.groups)
    std::cerr << "group " << g.name << ": " << g.individuals.size() << " individuals, log omega "
              << format_double(g.fit.params.coupling.log_omega) << ", " << g.fit.n_iterations << " iterations"
              << (g.fit.converged ? "" : " (not converged)") << "\n";

  const std::string doc = archive_to_string(archive);
  const std::string calls = a.calls.empty() ? "" : calls_table(signal.col_ids, blocks).to_csv();
  write_file_atomic(a.out, doc);
  if (!a.calls.empty()) write_file_atomic(a.calls, calls);
  return 0;
}

struct DecodeArgs {
  std::string model, signal, out, rule = "viterbi";
};

int run_decode(const DecodeArgs& a) {
  const DecodeRule rule = parse_rule(a.rule);
  const ModelArchive archive = load_archive(a.model);
  const LabeledMatrix signal = read_signal(a.signal);
  const std::string digest = file_sha256(a.signal);
  if (digest != archive.signal_sha256)
    std::cerr << "warning: signal digest " << digest << " differs from the archived digest "
              << archive.signal_sha256 << "\n";
  if (signal.col_ids != archive.loci) throw InputError("signal loci do not match the loci the model was fitted on");

  std::vector<CallBlock> blocks;
  for (const ArchiveGroup& g : archive.groups) {
    const ObservationMatrix x = select_rows(signal, g.individuals);
    CallBlock b;
    b.individuals = g.individuals;
    b.labels = state_labels(g.fit.params.emission);
    b.decoded = decode_model(x, g.fit.params, g.fit.method, rule, archive.options.cap);
    blocks.push_back(std::move(b));
  }
  write_file_atomic(a.out, calls_table(signal.col_ids, blocks).to_csv());
  return 0;
}

struct SelectArgs {
  std::string signal, kinship, out, grid, emission = "hetero", penalty = "standard";
  double log_omega = 0.0;
  std::size_t states = 3;
  int max_iter = 100;
  double tol = 1e-6;
  std::size_t threads = 1;
  bool cold = false;
};

SelectionOptions selection_options(const SelectArgs& a) {
  SelectionOptions so;
  so.vem.max_iter = a.max_iter;
  so.vem.tol = a.tol;
  so.mode = parse_emission(a.emission);
  if (a.penalty == "standard") so.penalty = PenaltyKind::standard;
  else if (a.penalty == "full") so.penalty = PenaltyKind::full;
  else throw InputError("unknown penalty '" + a.penalty + "' (standard|full)");
  so.log_omega = a.log_omega;
  so.n_states = a.states;
  so.warm_start = !a.cold;
  so.threads = a.threads;
  return so;
}

int run_select_q(const SelectArgs& a) {
  const SelectionOptions so = selection_options(a);
  if (!(so.log_omega <= 0.0)) throw InputError("--log-omega must be <= 0");
  const std::vector<std::size_t> grid = parse_list<std::size_t>(a.grid.empty() ? "2,3,4" : a.grid, "--grid");
  for (std::size_t q : grid)
    if (q < 1) throw InputError("--grid: state counts must be positive");
  const LabeledMatrix signal = read_signal(a.signal);
  const SimilarityMatrix sim = load_similarity(a.kinship, signal.row_ids);
  const SelectionReport r = select_q(signal.values, sim, grid, so);
  Table t;
  t.header = {"n_states", "status", "bound", "penalty", "criterion", "selected"};
  for (const QCandidate& c : r.q_results)
    t.add({std::to_string(c.n_states), c.ok ? "ok" : "failed", format_double(c.ok ? c.bound : std::nan("")),
           format_double(c.penalty), format_double(c.ok ? c.criterion : std::nan("")),
           r.chosen_q && *r.chosen_q == c.n_states ? "1" : "0"});
  if (!r.chosen_q) throw DegeneracyError("select-q: every candidate failed");
  write_table(a.out, t);
  std::cerr << "selected Q = " << *r.chosen_q << "\n";
  return 0;
}

int run_select_omega(const SelectArgs& a) {
  const SelectionOptions so = selection_options(a);
  const std::vector<double> grid =
      a.grid.empty() || a.grid == "default" ? default_log_omega_grid() : parse_list<double>(a.grid, "--grid");
  const LabeledMatrix signal = read_signal(a.signal);
  const SimilarityMatrix sim = load_similarity(a.kinship, signal.row_ids);
  const SelectionReport r = select_omega(signal.values, sim, grid, so);
  Table t;
  t.header = {"log_omega", "status", "rss", "bound", "selected"};
  for (const OmegaCandidate& c : r.omega_results)
    t.add({format_double(c.log_omega), c.ok ? "ok" : "failed", format_double(c.ok ? c.rss : std::nan("")),
           format_double(c.ok ? c.bound : std::nan("")),
           r.chosen_log_omega && *r.chosen_log_omega == c.log_omega ? "1" : "0"});
  if (!r.chosen_log_omega) throw DegeneracyError("select-omega: every grid fit failed");
  write_table(a.out, t);
  std::cerr << "selected log omega = " << format_double(*r.chosen_log_omega) << "\n";
  return 0;
}

struct SimulateArgs {
  std::string config, out_dir, kinship;
};

int run_simulate(const SimulateArgs& a) {
  SimulationConfig c = simulation_config_from_string(read_file(a.config), a.config);
  std::vector<std::string> ids, loci;
  for (std::size_t i = 0; i < c.n_individuals; ++i) ids.push_back("ind" + std::to_string(i + 1));
  for (std::size_t t = 0; t < c.n_loci; ++t) loci.push_back("locus" + std::to_string(t + 1));
  if (!a.kinship.empty()) {
    const LabeledMatrix km = read_labeled_matrix(a.kinship);
    if (km.row_ids.size() != c.n_individuals)
      throw InputError("--kinship must list exactly n_individuals individuals");
    ids = km.row_ids;
    c.similarity = align_kinship(km, ids, a.kinship).similarity;
  }
  const SimulatedDataset d = simulate(c);

  LabeledMatrix signal{"id", ids, loci, d.x};
  LabeledMatrix truth{"id", ids, loci, d.truth.cast<double>()};
  LabeledMatrix kin{"id", ids, ids, d.similarity.s};
  Table windows;
  windows.header = {"window", "center", "begin", "end"};
  for (const auto& id : ids) windows.header.push_back(id);
  for (std::size_t k = 0; k < d.windows.size(); ++k) {
    const AlterationWindow& w = d.windows[k];
    // 1-based inclusive locus positions.
    std::vector<std::string> row = {std::to_string(k + 1), std::to_string(w.center + 1), std::to_string(w.begin + 1),
                                    std::to_string(w.end)};
    for (std::size_t s : w.tuple) row.push_back(std::to_string(s));
    windows.add(std::move(row));
  }
  fs::create_directories(a.out_dir);
  const fs::path dir(a.out_dir);
  write_labeled_matrix(dir / "signal.csv", signal);
  write_labeled_matrix(dir / "truth.csv", truth);
  write_labeled_matrix(dir / "kinship.csv", kin);
  write_table(dir / "windows.csv", windows);
  write_file_atomic(dir / "config.json", simulation_config_to_string(c));
  return 0;
}

struct BenchArgs {
  int study = 1;
  std::size_t replicates = 100;
  std::string out, methods, configs;
  std::uint64_t seed = 1;
  std::size_t threads = 1;
  std::size_t loci = 1000;
  int max_iter = 100;
  double tol = 1e-6;
  std::size_t cap = kDefaultJointCap;
};

int run_bench(const BenchArgs& a) {
  BenchmarkOptions bo;
  bo.study = a.study;
  bo.n_replicates = a.replicates;
  bo.root_seed = a.seed;
  bo.threads = a.threads;
  bo.n_loci = a.loci;
  bo.max_iter = a.max_iter;
  bo.tol = a.tol;
  bo.cap = a.cap;
  if (a.study != 1 && a.study != 2) throw InputError("--study must be 1 or 2");
  if (!a.methods.empty()) {
    std::stringstream ss(a.methods);
    std::string m;
    while (std::getline(ss, m, ',')) bo.methods.push_back(parse_method(m));
  }
  if (!a.configs.empty()) {
    const std::vector<BenchConfig> all = study_configs(a.study);
    std::stringstream ss(a.configs);
    std::string name;
    while (std::getline(ss, name, ',')) {
      const auto it = std::find_if(all.begin(), all.end(), [&](const BenchConfig& c) { return c.name == name; });
      if (it == all.end()) throw InputError("unknown configuration '" + name + "' for study " + std::to_string(a.study));
      bo.configs.push_back(*it);
    }
  }
  const BenchmarkReport r = run_benchmark(bo);
  const fs::path out(a.out);
  const std::string summary = summary_table(r).to_csv();
  const std::string reps = replicates_table(r).to_csv();
  const std::string grid = omega_grid_table(r).to_csv();
  const std::string times = timings_table(r).to_csv();
  const Table failures = failures_table(r);
  write_file_atomic(out, summary);
  write_file_atomic(sidecar(out, "replicates"), reps);
  write_file_atomic(sidecar(out, "omega_grid"), grid);
  write_file_atomic(sidecar(out, "timings"), times);
  write_file_atomic(sidecar(out, "failures"), failures.to_csv());
  if (!failures.rows.empty()) std::cerr << failures.rows.size() << " method fits failed; see failures file\n";
  return 0;
}

struct KinshipArgs {
  std::string snp, out;
  int alpha = 0;
};

int run_kinship(const KinshipArgs& a) {
  const LabeledMatrix z = read_labeled_matrix(a.snp);
  if (z.values.hasNaN()) throw InputError(a.snp + ": missing genotypes are not supported");
  const SnpKinship k = kinship_from_snp(z.values, a.alpha);
  if (k.n_dropped > 0) std::cerr << "kinship: dropped " << k.n_dropped << " monomorphic markers\n";
  std::size_t negatives = 0;
  for (Eigen::Index i = 0; i < k.raw.rows(); ++i)
    for (Eigen::Index j = 0; j < k.raw.cols(); ++j)
      if (i != j && k.raw(i, j) < 0.0) ++negatives;
  if (negatives > 0) std::cerr << "kinship: " << negatives << " negative entries (clamped to 0 when loaded)\n";
  write_labeled_matrix(a.out, LabeledMatrix{z.corner, z.row_ids, z.row_ids, k.raw});
  return 0;
}

struct LrrArgs {
  std::string observed, expected, out;
};

int run_lrr(const LrrArgs& a) {
  const LabeledMatrix obs = read_labeled_matrix(a.observed);
  const LabeledMatrix exp = read_labeled_matrix(a.expected);
  if (exp.values.rows() != 1) throw InputError(a.expected + ": expected intensities must be a single row");
  if (exp.col_ids != obs.col_ids) throw InputError(a.expected + ": loci do not match the observed file");
  const Matrix x = compute_lrr(obs.values, exp.values.row(0).transpose());
  write_labeled_matrix(a.out, LabeledMatrix{obs.corner, obs.row_ids, obs.col_ids, x});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Coupled hidden Markov models for copy-number calling across related individuals"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  FitArgs fit;
  auto* c_fit = app.add_subcommand("fit", "Fit a model and save it as an archive");
  c_fit->add_option("--signal", fit.signal, "Signal matrix (rows individuals, columns loci)")->required();
  c_fit->add_option("--kinship", fit.kinship, "Kinship matrix");
  c_fit->add_option("--states", fit.states, "Number of hidden states")->capture_default_str();
  c_fit->add_option("--log-omega", fit.log_omega, "Coupling strength log(omega) <= 0");
  c_fit->add_option("--method", fit.method, "vem|exact|independent")->capture_default_str();
  c_fit->add_option("--emission", fit.emission, "homo|hetero")->capture_default_str();
  c_fit->add_option("--max-iter", fit.max_iter)->capture_default_str();
  c_fit->add_option("--tol", fit.tol, "Relative convergence tolerance")->capture_default_str();
  c_fit->add_option("--threads", fit.threads, "Parallel group fits")->capture_default_str();
  c_fit->add_option("--cap", fit.cap, "Largest joint state space for the exact method")->capture_default_str();
  c_fit->add_option("--groups", fit.groups, "individual,group file; each group is fitted on its own");
  c_fit->add_option("--calls", fit.calls, "Also write merged calls here");
  c_fit->add_option("--rule", fit.rule, "Rule for --calls: viterbi|map")->capture_default_str();
  c_fit->add_option("--out", fit.out, "Archive path")->required();

  DecodeArgs dec;
  auto* c_dec = app.add_subcommand("decode", "Call per-locus states with a fitted archive");
  c_dec->add_option("--model", dec.model)->required();
  c_dec->add_option("--signal", dec.signal)->required();
  c_dec->add_option("--rule", dec.rule, "viterbi|map")->capture_default_str();
  c_dec->add_option("--out", dec.out)->required();

  SelectArgs sq;
  auto* c_sq = app.add_subcommand("select-q", "Choose the number of states by penalized bound");
  c_sq->add_option("--signal", sq.signal)->required();
  c_sq->add_option("--kinship", sq.kinship)->required();
  c_sq->add_option("--grid", sq.grid, "Comma-separated state counts (default 2,3,4)");
  c_sq->add_option("--log-omega", sq.log_omega)->capture_default_str();
  c_sq->add_option("--emission", sq.emission)->capture_default_str();
  c_sq->add_option("--penalty", sq.penalty, "standard|full")->capture_default_str();
  c_sq->add_option("--max-iter", sq.max_iter)->capture_default_str();
  c_sq->add_option("--tol", sq.tol)->capture_default_str();
  c_sq->add_option("--threads", sq.threads)->capture_default_str();
  c_sq->add_option("--out", sq.out)->required();

  SelectArgs so;
  auto* c_so = app.add_subcommand("select-omega", "Calibrate log(omega) by weighted RSS on a grid");
  c_so->add_option("--signal", so.signal)->required();
  c_so->add_option("--kinship", so.kinship)->required();
  c_so->add_option("--grid", so.grid, "'default' (-k/20, k=1..10) or comma-separated log omegas");
  c_so->add_option("--states", so.states)->capture_default_str();
  c_so->add_option("--emission", so.emission)->capture_default_str();
  c_so->add_option("--max-iter", so.max_iter)->capture_default_str();
  c_so->add_option("--tol", so.tol)->capture_default_str();
  c_so->add_option("--threads", so.threads, "Used with --cold")->capture_default_str();
  c_so->add_flag("--cold", so.cold, "Start every grid fit from scratch instead of the previous estimate");
  c_so->add_option("--out", so.out)->required();

  SimulateArgs sim;
  auto* c_sim = app.add_subcommand("simulate", "Generate a synthetic data set");
  c_sim->add_option("--config", sim.config, "JSON simulation config")->required();
  c_sim->add_option("--kinship", sim.kinship, "Kinship to couple with (default: two-block synthetic)");
  c_sim->add_option("--out-dir", sim.out_dir)->required();

  BenchArgs bench;
  auto* c_bench = app.add_subcommand("bench", "Replicated method comparison on simulated data");
  c_bench->add_option("--study", bench.study, "1 (panel size) or 2 (ten individuals)")->required();
  c_bench->add_option("--replicates", bench.replicates)->capture_default_str();
  c_bench->add_option("--seed", bench.seed, "Root seed")->capture_default_str();
  c_bench->add_option("--threads", bench.threads)->capture_default_str();
  c_bench->add_option("--loci", bench.loci)->capture_default_str();
  c_bench->add_option("--methods", bench.methods, "Comma-separated subset of independent,vem,exact");
  c_bench->add_option("--configs", bench.configs, "Comma-separated configuration names (default: all of the study)");
  c_bench->add_option("--max-iter", bench.max_iter)->capture_default_str();
  c_bench->add_option("--tol", bench.tol)->capture_default_str();
  c_bench->add_option("--cap", bench.cap)->capture_default_str();
  c_bench->add_option("--out", bench.out, "Summary report path; sidecar files sit next to it")->required();

  KinshipArgs kin;
  auto* c_kin = app.add_subcommand("kinship", "Kinship from minor-allele counts");
  c_kin->add_option("--snp", kin.snp)->required();
  c_kin->add_option("--alpha", kin.alpha)->capture_default_str();
  c_kin->add_option("--out", kin.out)->required();

  LrrArgs lrr;
  auto* c_lrr = app.add_subcommand("lrr", "log R ratio from observed and expected intensities");
  c_lrr->add_option("--observed", lrr.observed)->required();
  c_lrr->add_option("--expected", lrr.expected)->required();
  c_lrr->add_option("--out", lrr.out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ExitCode::input);
  }

  try {
    if (c_fit->parsed()) return run_fit(fit);
    if (c_dec->parsed()) return run_decode(dec);
    if (c_sq->parsed()) return run_select_q(sq);
    if (c_so->parsed()) return run_select_omega(so);
    if (c_sim->parsed()) return run_simulate(sim);
    if (c_bench->parsed()) return run_bench(bench);
    if (c_kin->parsed()) return run_kinship(kin);
    if (c_lrr->parsed()) return run_lrr(lrr);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(exit_code(e));
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::input);
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::invariant);
  }
  return static_cast<int>(ExitCode::input);
}
