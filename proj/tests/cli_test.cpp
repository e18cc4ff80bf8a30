#include "test_util.hpp"

#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>

using namespace chmm;
namespace fs = std::filesystem;

namespace {

fs::path work_dir() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / ("chmm_cli_test_" + std::to_string(::getpid()));
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

int run(const std::string& args) {
  const std::string cmd = std::string(CHMM_CLI) + " " + args + " 2>" + (work_dir() / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string p(const std::string& name) { return (work_dir() / name).string(); }

struct Files {
  std::vector<std::string> ids, loci;
  SimulatedDataset data;
};

Files write_dataset(std::size_t n_ind, std::size_t n_loci, std::uint64_t seed, const std::string& tag) {
  SimulationConfig c;
  c.n_individuals = n_ind;
  c.n_loci = n_loci;
  c.sigma = 0.3;
  c.seed = seed;
  Files f{{}, {}, simulate(c)};
  for (std::size_t i = 0; i < n_ind; ++i) f.ids.push_back("s" + std::to_string(i));
  for (std::size_t t = 0; t < n_loci; ++t) f.loci.push_back("m" + std::to_string(t));
  write_labeled_matrix(p(tag + "_signal.csv"), LabeledMatrix{"id", f.ids, f.loci, f.data.x});
  write_labeled_matrix(p(tag + "_kin.csv"), LabeledMatrix{"id", f.ids, f.ids, f.data.similarity.s});
  return f;
}

}  // namespace

TEST(Cli, UsageErrorsExitWithInputCode) {
  EXPECT_EQ(run(""), 2);
  EXPECT_EQ(run("fit --signal nowhere.csv --out " + p("x.json") + " --method independent"), 2);
  EXPECT_EQ(run("frobnicate"), 2);
  write_file_atomic(p("bad_signal.csv"), "id,a,b\nr,1,zz\n");
  EXPECT_EQ(run("fit --signal " + p("bad_signal.csv") + " --method independent --out " + p("x.json")), 2);
}

TEST(Cli, ExactOverCapacityExitsWithCapacityCode) {
  write_dataset(10, 50, 11, "cap10");
  EXPECT_EQ(run("fit --signal " + p("cap10_signal.csv") + " --kinship " + p("cap10_kin.csv") +
                " --method exact --states 3 --log-omega -0.3 --out " + p("cap10.json")),
            3);
  EXPECT_FALSE(fs::exists(p("cap10.json")));
  write_dataset(6, 50, 12, "cap6");
  EXPECT_EQ(run("fit --signal " + p("cap6_signal.csv") + " --kinship " + p("cap6_kin.csv") +
                " --method exact --states 3 --log-omega -0.3 --max-iter 3 --out " + p("cap6.json")),
            0);
  EXPECT_TRUE(fs::exists(p("cap6.json")));
}

TEST(Cli, FitRequiresCouplingInputs) {
  write_dataset(3, 100, 13, "req");
  EXPECT_EQ(run("fit --signal " + p("req_signal.csv") + " --method vem --out " + p("req.json")), 2);
  EXPECT_EQ(run("fit --signal " + p("req_signal.csv") + " --kinship " + p("req_kin.csv") + " --log-omega 0.2 --out " +
                p("req.json")),
            2);
}

TEST(Cli, FitThenDecodeMatchesLibraryPipeline) {
  const Files f = write_dataset(4, 150, 14, "fd");
  ASSERT_EQ(run("fit --signal " + p("fd_signal.csv") + " --kinship " + p("fd_kin.csv") +
                " --log-omega -0.25 --out " + p("fd.json") + " --calls " + p("fd_fit_calls.csv")),
            0);
  ASSERT_EQ(run("decode --model " + p("fd.json") + " --signal " + p("fd_signal.csv") + " --out " + p("fd_calls.csv")), 0);
  EXPECT_EQ(read_file(p("fd_calls.csv")), read_file(p("fd_fit_calls.csv")));

  FitOptions fo;
  fo.log_omega = -0.25;
  const FittedModel m = fit_model(f.data.x, f.data.similarity, fo);
  const ModelArchive a = load_archive(p("fd.json"));
  ASSERT_EQ(a.groups.size(), 1u);
  EXPECT_EQ(a.groups[0].fit.params.emission.means, m.params.emission.means);
  EXPECT_EQ(a.groups[0].fit.trace, m.trace);
  EXPECT_EQ(a.signal_sha256, file_sha256(p("fd_signal.csv")));

  const Decoded d = decode_model(f.data.x, m.params, Method::vem, DecodeRule::viterbi, kDefaultJointCap);
  CallBlock b{f.ids, state_labels(m.params.emission), d};
  EXPECT_EQ(read_file(p("fd_calls.csv")), calls_table(f.loci, {b}).to_csv());

  // map rule differs only in the decoder
  ASSERT_EQ(run("decode --model " + p("fd.json") + " --signal " + p("fd_signal.csv") + " --rule map --out " +
                p("fd_map.csv")),
            0);
  const Decoded dm = decode_model(f.data.x, m.params, Method::vem, DecodeRule::local_map, kDefaultJointCap);
  CallBlock bm{f.ids, state_labels(m.params.emission), dm};
  EXPECT_EQ(read_file(p("fd_map.csv")), calls_table(f.loci, {bm}).to_csv());
}

TEST(Cli, RepeatedRunsAreIdentical) {
  write_dataset(3, 100, 15, "det");
  const std::string args = "fit --signal " + p("det_signal.csv") + " --kinship " + p("det_kin.csv") +
                           " --log-omega -0.3 --calls ";
  ASSERT_EQ(run(args + p("det_c1.csv") + " --out " + p("det1.json")), 0);
  ASSERT_EQ(run(args + p("det_c2.csv") + " --out " + p("det2.json")), 0);
  EXPECT_EQ(read_file(p("det1.json")), read_file(p("det2.json")));
  EXPECT_EQ(read_file(p("det_c1.csv")), read_file(p("det_c2.csv")));
}

TEST(Cli, DecodeWarnsOnDigestMismatchAndRejectsOtherLoci) {
  const Files f = write_dataset(3, 100, 16, "dig");
  ASSERT_EQ(run("fit --signal " + p("dig_signal.csv") + " --kinship " + p("dig_kin.csv") + " --log-omega -0.2 --out " +
                p("dig.json")),
            0);
  Matrix shifted = f.data.x;
  shifted(0, 0) += 0.5;
  write_labeled_matrix(p("dig_other.csv"), LabeledMatrix{"id", f.ids, f.loci, shifted});
  ASSERT_EQ(run("decode --model " + p("dig.json") + " --signal " + p("dig_other.csv") + " --out " + p("dig_c.csv")), 0);
  EXPECT_NE(read_file(p("stderr.txt")).find("warning"), std::string::npos);

  std::vector<std::string> loci = f.loci;
  loci[3] = "renamed";
  write_labeled_matrix(p("dig_loci.csv"), LabeledMatrix{"id", f.ids, loci, f.data.x});
  EXPECT_EQ(run("decode --model " + p("dig.json") + " --signal " + p("dig_loci.csv") + " --out " + p("dig_c.csv")), 2);
}

TEST(Cli, SingleGroupEqualsUngrouped) {
  write_dataset(4, 100, 17, "grp");
  write_file_atomic(p("grp_one.csv"), "individual,group\ns0,all\ns1,all\ns2,all\ns3,all\n");
  const std::string base = "fit --signal " + p("grp_signal.csv") + " --kinship " + p("grp_kin.csv") +
                           " --log-omega -0.3 --out " + p("grp.json") + " --calls ";
  ASSERT_EQ(run(base + p("grp_a.csv")), 0);
  ASSERT_EQ(run(base + p("grp_b.csv") + " --groups " + p("grp_one.csv")), 0);
  EXPECT_EQ(read_file(p("grp_a.csv")), read_file(p("grp_b.csv")));

  // two groups: each block is its own fit, the calls file keeps all individuals
  write_file_atomic(p("grp_two.csv"), "individual,group\ns0,g1\ns1,g2\ns2,g1\ns3,g2\n");
  ASSERT_EQ(run(base + p("grp_c.csv") + " --groups " + p("grp_two.csv") + " --threads 2"), 0);
  const ModelArchive a = load_archive(p("grp.json"));
  ASSERT_EQ(a.groups.size(), 2u);
  EXPECT_EQ(a.groups[0].individuals, (std::vector<std::string>{"s0", "s2"}));
  const std::string calls = read_file(p("grp_c.csv"));
  EXPECT_EQ(std::count(calls.begin(), calls.end(), '\n'), 401);
  write_file_atomic(p("grp_bad.csv"), "individual,group\ns0,g1\n");
  EXPECT_EQ(run(base + p("grp_d.csv") + " --groups " + p("grp_bad.csv")), 2);
}

TEST(Cli, SimulateKinshipAndLrr) {
  write_file_atomic(p("sim.json"), "{\"n_individuals\": 3, \"n_loci\": 150, \"seed\": 5}\n");
  ASSERT_EQ(run("simulate --config " + p("sim.json") + " --out-dir " + p("simdir")), 0);
  const LabeledMatrix s = read_signal(p("simdir") + "/signal.csv");
  EXPECT_EQ(s.values.rows(), 3);
  EXPECT_EQ(s.values.cols(), 150);
  SimulationConfig c;
  c.n_individuals = 3;
  c.n_loci = 150;
  c.seed = 5;
  EXPECT_EQ(s.values, simulate(c).x);
  write_file_atomic(p("sim_bad.json"), "{\"loci\": 3}\n");
  EXPECT_EQ(run("simulate --config " + p("sim_bad.json") + " --out-dir " + p("simdir2")), 2);

  write_file_atomic(p("snp.csv"), "id,r1,r2\na,0,2\nb,2,0\n");
  ASSERT_EQ(run("kinship --snp " + p("snp.csv") + " --alpha 1 --out " + p("kin_out.csv")), 0);
  const LabeledMatrix k = read_labeled_matrix(p("kin_out.csv"));
  EXPECT_NEAR(k.values(0, 1), -2.0, 1e-15);
  write_file_atomic(p("snp_mono.csv"), "id,r1\na,0\nb,0\n");
  EXPECT_EQ(run("kinship --snp " + p("snp_mono.csv") + " --alpha 1 --out " + p("kin_out2.csv")), 2);

  write_file_atomic(p("obs.csv"), "id,m1,m2\na,2,1\n");
  write_file_atomic(p("exp.csv"), "id,m1,m2\nref,1,1\n");
  ASSERT_EQ(run("lrr --observed " + p("obs.csv") + " --expected " + p("exp.csv") + " --out " + p("lrr.csv")), 0);
  const LabeledMatrix l = read_labeled_matrix(p("lrr.csv"));
  EXPECT_EQ(l.values(0, 0), 1.0);
  EXPECT_EQ(l.values(0, 1), 0.0);
  write_file_atomic(p("exp0.csv"), "id,m1,m2\nref,0,1\n");
  EXPECT_EQ(run("lrr --observed " + p("obs.csv") + " --expected " + p("exp0.csv") + " --out " + p("lrr.csv")), 2);
}

TEST(Cli, SelectCommandsWriteTables) {
  write_dataset(4, 150, 18, "sel");
  ASSERT_EQ(run("select-q --signal " + p("sel_signal.csv") + " --kinship " + p("sel_kin.csv") +
                " --grid 2,3 --log-omega -0.2 --out " + p("sel_q.csv")),
            0);
  const std::string q = read_file(p("sel_q.csv"));
  EXPECT_EQ(q.rfind("n_states,status,bound,penalty,criterion,selected\n", 0), 0u);
  ASSERT_EQ(run("select-omega --signal " + p("sel_signal.csv") + " --kinship " + p("sel_kin.csv") +
                " --grid -0.3,-0.1 --out " + p("sel_o.csv")),
            0);
  const std::string o = read_file(p("sel_o.csv"));
  EXPECT_EQ(std::count(o.begin(), o.end(), '\n'), 3);
  EXPECT_EQ(run("select-omega --signal " + p("sel_signal.csv") + " --kinship " + p("sel_kin.csv") +
                " --grid -0.3,0.1 --out " + p("sel_o.csv")),
            2);
}
