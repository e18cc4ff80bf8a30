#include "test_util.hpp"

#include <gtest/gtest.h>

#include <numbers>

using namespace chmm;
using chmm::testing::random_params;

namespace {

EmissionParams standard_emission(double mu, double sd) {
  EmissionParams e;
  e.means = Vector::Constant(1, mu);
  e.std_devs = Vector::Constant(1, sd);
  return e;
}

ModelParams two_by_two(double log_omega, double s12 = 1.0) {
  ModelParams p;
  p.dims = {2, 4, 2};
  p.emission.means = Vector(2);
  p.emission.means << -1.0, 1.0;
  p.emission.std_devs = Vector::Ones(2);
  p.chain.initial = Vector::Constant(2, 0.5);
  p.chain.transition = Matrix(2, 2);
  p.chain.transition << 0.9, 0.1, 0.1, 0.9;
  p.coupling.log_omega = log_omega;
  p.similarity.s = Matrix(2, 2);
  p.similarity.s << 1.0, s12, s12, 1.0;
  p.validate();
  return p;
}

}  // namespace

TEST(JointStateCount, PowersAndCap) {
  EXPECT_EQ(joint_state_count(3, 6), 729u);
  EXPECT_EQ(joint_state_count(2, 12), 4096u);
  EXPECT_THROW(joint_state_count(2, 13), CapacityError);
  EXPECT_THROW(joint_state_count(3, 10), CapacityError);
  EXPECT_EQ(joint_state_count(3, 10, 100000), 59049u);
  EXPECT_THROW(joint_state_count(3, 64, std::numeric_limits<std::size_t>::max()), CapacityError);
}

TEST(ModelDims, JointStatesIsLazy) {
  ModelDims d{10, 1000, 3};
  EXPECT_THROW(d.joint_states(), CapacityError);
  EXPECT_EQ(d.joint_states(60000), 59049u);
}

TEST(Codec, RoundTripAndDigitOrder) {
  const JointStateCodec codec(3, 3);
  EXPECT_EQ(codec.size(), 27u);
  for (std::size_t l = 0; l < codec.size(); ++l) {
    const auto tuple = codec.decode(l);
    EXPECT_EQ(codec.encode(tuple), l);
  }
  // individual 0 is the least significant digit
  const std::vector<std::size_t> t{1, 0, 0};
  EXPECT_EQ(codec.encode(t), 1u);
  const std::vector<std::size_t> u{0, 0, 2};
  EXPECT_EQ(codec.encode(u), 18u);
}

TEST(LogEmission, Examples) {
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  EXPECT_NEAR(log_emission(0.0, 0, standard_emission(0.0, 1.0)), -half_log_2pi, 1e-15);
  EXPECT_NEAR(log_emission(0.0, 0, standard_emission(0.0, 1.0)), -0.918939, 1e-6);
  EXPECT_NEAR(log_emission(1.0, 0, standard_emission(-1.0, 1.0)), -half_log_2pi - 2.0, 1e-15);
  EXPECT_NEAR(log_emission(1.0, 0, standard_emission(-1.0, 1.0)), -2.918939, 1e-6);
  for (double sd : {0.1, 0.7, 3.0})
    EXPECT_NEAR(log_emission(2.5, 0, standard_emission(2.5, sd)), -std::log(sd) - half_log_2pi, 1e-14);
}

TEST(LogEmission, RejectsNonFinite) {
  EXPECT_THROW(log_emission(std::numeric_limits<double>::infinity(), 0, standard_emission(0, 1)), InputError);
  EXPECT_THROW(log_emission(std::numeric_limits<double>::quiet_NaN(), 0, standard_emission(0, 1)), InputError);
}

TEST(LogEmission, IntegratesToOne) {
  for (auto [mu, sd] : {std::pair{0.0, 1.0}, std::pair{-2.0, 0.25}, std::pair{3.0, 2.0}}) {
    const EmissionParams e = standard_emission(mu, sd);
    const double lo = mu - 20.0 * sd, hi = mu + 20.0 * sd;
    const int n = 200000;
    const double h = (hi - lo) / n;
    double s = 0.5 * (std::exp(log_emission(lo, 0, e)) + std::exp(log_emission(hi, 0, e)));
    for (int k = 1; k < n; ++k) s += std::exp(log_emission(lo + k * h, 0, e));
    EXPECT_NEAR(s * h, 1.0, 1e-6);
  }
}

TEST(LogEmissionTable, MissingCellsAreEvidenceFree) {
  ObservationMatrix x(1, 3);
  x << 0.5, std::numeric_limits<double>::quiet_NaN(), -0.5;
  EmissionParams e;
  e.means = Vector(2);
  e.means << -1.0, 1.0;
  e.std_devs = Vector::Ones(2);
  const Matrix t = log_emission_table(x, 0, e);
  EXPECT_EQ(t.row(1).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_NEAR(t(0, 1), log_emission(0.5, 1, e), 0.0);
}

TEST(CouplingWeight, Examples) {
  ModelParams p = two_by_two(-0.2, 0.5);
  const JointStateCodec codec(2, 2);
  const std::vector<std::size_t> mixed{0, 1};
  EXPECT_NEAR(log_coupling_weight(codec.encode(mixed), p.similarity, p.coupling, codec), -0.2, 1e-15);
  const std::vector<std::size_t> same{1, 1};
  EXPECT_EQ(log_coupling_weight(codec.encode(same), p.similarity, p.coupling, codec), 0.0);
  p.coupling.log_omega = 0.0;
  for (std::size_t l = 0; l < codec.size(); ++l)
    EXPECT_EQ(log_coupling_weight(l, p.similarity, p.coupling, codec), 0.0);
  EXPECT_THROW(log_coupling_weight(4, p.similarity, p.coupling, codec), InputError);
}

TEST(CouplingWeight, MonotoneInLogOmegaAndZeroOnlyOnConstantTuples) {
  std::mt19937_64 rng(7);
  const SimilarityMatrix s = chmm::testing::random_similarity(rng, 3);
  const JointStateCodec codec(3, 3);
  for (std::size_t l = 0; l < codec.size(); ++l) {
    const auto tuple = codec.decode(l);
    const bool constant = tuple[0] == tuple[1] && tuple[1] == tuple[2];
    double prev = -std::numeric_limits<double>::infinity();
    for (double w : {-2.0, -1.0, -0.35, -0.2, -0.05, 0.0}) {
      const double v = log_coupling_weight(l, s, CouplingParams{w}, codec);
      EXPECT_LE(v, 0.0);
      EXPECT_GE(v, prev);
      prev = v;
      EXPECT_EQ(v == 0.0, w == 0.0 || constant) << "l=" << l << " w=" << w;
    }
  }
}

TEST(JointTransition, HandNormalizedExample) {
  const ModelParams p = two_by_two(-0.35);
  const Vector row = joint_transition_row(0, p);
  // joint index = l_0 + 2 l_1, so (0,1) in the individual-pair order is index 2
  const double e = std::exp(-0.7);
  const double z = 0.81 + 2 * 0.09 * e + 0.01;
  EXPECT_NEAR(row(0), 0.81 / z, 1e-15);
  EXPECT_NEAR(row(1), 0.09 * e / z, 1e-15);
  EXPECT_NEAR(row(2), 0.09 * e / z, 1e-15);
  EXPECT_NEAR(row(3), 0.01 / z, 1e-15);
}

TEST(JointTransition, IndependentIsProductChain) {
  std::mt19937_64 rng(11);
  const ModelParams p = random_params(rng, 3, 2, 5, 0.0);
  const JointStateCodec codec(3, 2);
  for (std::size_t k = 0; k < codec.size(); ++k) {
    const Vector row = joint_transition_row(k, p);
    for (std::size_t l = 0; l < codec.size(); ++l) {
      double prod = 1.0;
      for (std::size_t i = 0; i < 3; ++i)
        prod *= p.chain.transition(static_cast<Eigen::Index>(codec.digit(k, i)),
                                   static_cast<Eigen::Index>(codec.digit(l, i)));
      EXPECT_NEAR(row(static_cast<Eigen::Index>(l)), prod, 1e-15);
    }
  }
}

TEST(JointTransition, SingleIndividualIsPi) {
  std::mt19937_64 rng(12);
  const ModelParams p = random_params(rng, 1, 3, 5);
  for (std::size_t k = 0; k < 3; ++k) {
    const Vector row = joint_transition_row(k, p);
    for (Eigen::Index l = 0; l < 3; ++l) EXPECT_NEAR(row(l), p.chain.transition(static_cast<Eigen::Index>(k), l), 1e-15);
  }
}

TEST(JointTransition, RowsAreStochastic) {
  std::mt19937_64 rng(13);
  for (int rep = 0; rep < 10; ++rep) {
    const ModelParams p = random_params(rng, 3, 3, 5);
    const JointStateCodec codec(3, 3);
    const Matrix lp = joint_log_transition(p, codec);
    for (std::size_t k = 0; k < codec.size(); ++k) {
      const Vector row = joint_transition_row(k, p);
      EXPECT_NEAR(row.sum(), 1.0, 1e-12);
      EXPECT_TRUE((row.array() >= 0.0).all());
      EXPECT_LT((row - Vector(lp.row(static_cast<Eigen::Index>(k)).array().exp().transpose())).cwiseAbs().maxCoeff(), 1e-14);
    }
  }
}

TEST(JointTransition, CapacityError) {
  std::mt19937_64 rng(14);
  const ModelParams p = random_params(rng, 9, 3, 5);  // 19683 > 4096
  EXPECT_THROW(joint_transition_row(0, p), CapacityError);
  EXPECT_THROW(joint_initial(p), CapacityError);
  EXPECT_NO_THROW(joint_transition_row(0, p, 20000));
}

TEST(JointTransition, PermutationEquivariance) {
  std::mt19937_64 rng(15);
  const ModelParams p = random_params(rng, 3, 2, 5, -0.5);
  const std::vector<std::size_t> perm{2, 0, 1};  // new individual a is old perm[a]
  ModelParams pp = p;
  for (Eigen::Index a = 0; a < 3; ++a)
    for (Eigen::Index b = 0; b < 3; ++b)
      pp.similarity.s(a, b) = p.similarity.s(static_cast<Eigen::Index>(perm[static_cast<std::size_t>(a)]),
                                             static_cast<Eigen::Index>(perm[static_cast<std::size_t>(b)]));
  const JointStateCodec codec(3, 2);
  auto relabel = [&](std::size_t joint) {
    std::vector<std::size_t> tuple(3);
    for (std::size_t a = 0; a < 3; ++a) tuple[a] = codec.digit(joint, perm[a]);
    return codec.encode(tuple);
  };
  for (std::size_t k = 0; k < codec.size(); ++k) {
    const Vector row = joint_transition_row(k, p);
    const Vector row_p = joint_transition_row(relabel(k), pp);
    for (std::size_t l = 0; l < codec.size(); ++l)
      EXPECT_NEAR(row(static_cast<Eigen::Index>(l)), row_p(static_cast<Eigen::Index>(relabel(l))), 1e-15);
  }
}

TEST(JointInitial, Examples) {
  const ModelParams p = two_by_two(-0.2);
  const Vector v = joint_initial(p);
  const double e = std::exp(-0.4);
  const double z = 2.0 + 2.0 * e;
  EXPECT_NEAR(v(0), 1.0 / z, 1e-15);
  EXPECT_NEAR(v(1), e / z, 1e-15);
  EXPECT_NEAR(v(2), e / z, 1e-15);
  EXPECT_NEAR(v(3), 1.0 / z, 1e-15);
  EXPECT_NEAR(v.sum(), 1.0, 1e-12);
  EXPECT_GT(v(0), v(1));

  ModelParams q = p;
  q.coupling.log_omega = 0.0;
  q.chain.initial << 0.3, 0.7;
  const Vector w = joint_initial(q);
  EXPECT_NEAR(w(0), 0.09, 1e-15);
  EXPECT_NEAR(w(1), 0.21, 1e-15);
  EXPECT_NEAR(w(3), 0.49, 1e-15);
}

TEST(CompleteLogLikelihood, HandComputedTinyInstance) {
  ModelParams p = two_by_two(-0.3, 0.6);
  p.chain.initial << 0.4, 0.6;
  p.chain.transition << 0.8, 0.2, 0.3, 0.7;
  p.emission.std_devs << 0.5, 2.0;
  ObservationMatrix x(2, 2);
  x << -0.7, 1.2, 0.4, 2.5;
  StatePath s(2, 2);
  s << 0, 1, 1, 1;
  using chmm::testing::gauss_logpdf;
  double expected = std::log(0.4) + std::log(0.6);                   // initial
  expected += std::log(0.2) + std::log(0.7);                          // transitions
  expected += gauss_logpdf(-0.7, -1.0, 0.5) + gauss_logpdf(1.2, 1.0, 2.0);
  expected += gauss_logpdf(0.4, 1.0, 2.0) + gauss_logpdf(2.5, 1.0, 2.0);
  expected += 2 * 0.6 * -0.3;                                         // t=1 disagreement counted for i=1 and i=2
  EXPECT_NEAR(complete_log_likelihood(x, s, p), expected, 1e-12);
}

TEST(CompleteLogLikelihood, ConstantPathHasNoCoupling) {
  std::mt19937_64 rng(21);
  const ModelParams p = random_params(rng, 3, 3, 6, -0.8);
  const ObservationMatrix x = chmm::testing::random_observations(rng, p, 6);
  const StatePath s = StatePath::Constant(3, 6, 2);
  double expected = 3 * std::log(p.chain.initial(2)) + 3 * 5 * std::log(p.chain.transition(2, 2));
  for (Eigen::Index i = 0; i < 3; ++i)
    for (Eigen::Index t = 0; t < 6; ++t) expected += log_emission(x(i, t), 2, p.emission);
  EXPECT_NEAR(complete_log_likelihood(x, s, p), expected, 1e-10);
}

TEST(CompleteLogLikelihood, IndependentIsSumOfSingleHmms) {
  std::mt19937_64 rng(22);
  for (int rep = 0; rep < 20; ++rep) {
    const ModelParams p = random_params(rng, 3, 2, 5, 0.0);
    const ObservationMatrix x = chmm::testing::random_observations(rng, p, 5);
    std::uniform_int_distribution<int> pick(0, 1);
    StatePath s(3, 5);
    for (Eigen::Index k = 0; k < s.size(); ++k) s.data()[k] = pick(rng);
    double sum = 0.0;
    for (Eigen::Index i = 0; i < 3; ++i) {
      ModelParams single = p;
      single.dims.n_individuals = 1;
      single.similarity = SimilarityMatrix::zeros(1);
      sum += complete_log_likelihood(x.row(i), s.row(i), single);
    }
    EXPECT_NEAR(complete_log_likelihood(x, s, p), sum, 1e-10);
  }
}

TEST(CompleteLogLikelihood, Errors) {
  const ModelParams p = two_by_two(-0.2);
  ObservationMatrix x = ObservationMatrix::Zero(2, 4);
  EXPECT_THROW(complete_log_likelihood(x, StatePath::Zero(2, 3), p), InputError);
  EXPECT_THROW(complete_log_likelihood(x, StatePath::Constant(2, 4, 2), p), InputError);
}

TEST(ParamsValidation, Invariants) {
  ModelParams p = two_by_two(-0.2);
  EXPECT_NO_THROW(p.validate());
  ModelParams bad = p;
  bad.coupling.log_omega = 0.1;
  EXPECT_THROW(bad.validate(), InputError);
  bad = p;
  bad.chain.transition(0, 0) = 0.95;
  EXPECT_THROW(bad.validate(), InputError);
  bad = p;
  bad.emission.means << 1.0, -1.0;
  EXPECT_THROW(bad.validate(), InputError);
  bad = p;
  bad.emission.mode = EmissionMode::homoscedastic;
  bad.emission.std_devs << 1.0, 2.0;
  EXPECT_THROW(bad.validate(), InputError);
  bad = p;
  bad.similarity.s(0, 1) = 0.3;
  EXPECT_THROW(bad.validate(), InputError);
  bad = p;
  bad.similarity.s(0, 1) = bad.similarity.s(1, 0) = -0.1;
  EXPECT_THROW(bad.validate(), InputError);
}

TEST(InitialParams, QuantilesAndStickyChain) {
  ObservationMatrix x(1, 5);
  x << 4.0, 0.0, 1.0, 3.0, 2.0;
  const ModelParams p = initial_params(x, SimilarityMatrix::zeros(1), 2, 0.0);
  // levels 1/4 and 3/4 of 0..4
  EXPECT_NEAR(p.emission.means(0), 1.0, 1e-15);
  EXPECT_NEAR(p.emission.means(1), 3.0, 1e-15);
  EXPECT_NEAR(p.emission.std_devs(0), std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(p.chain.transition(0, 0), 0.9, 0.0);
  EXPECT_NEAR(p.chain.transition(0, 1), 0.1, 1e-15);
  EXPECT_NEAR(p.chain.initial(1), 0.5, 0.0);
}
