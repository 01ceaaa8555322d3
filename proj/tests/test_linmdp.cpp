#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "rpmdp/generators.hpp"
#include "rpmdp/linmdp.hpp"
#include "rpmdp/mdp_io.hpp"
#include "rpmdp/rng.hpp"

using namespace rpmdp;

namespace {

Instance random_instance(std::uint64_t seed, GenParams p = {}) {
  return generate("random", p, seed);
}

}  // namespace

// --------------------------- occupancy ------------------------------------
TEST(Occupancy, MatchesForwardRecursionOracle) {
  for (std::uint64_t seed = 1; seed <= 8; ++seed) {
    const Instance inst = random_instance(seed);
    const auto occ = occupancy(inst.mdp, inst.target);
    const auto oracle = oracles::occupancy_forward(inst.mdp, inst.target);
    for (int h = 0; h < inst.mdp.H; ++h)
      for (int s = 0; s < inst.mdp.S; ++s)
        EXPECT_NEAR(occ.d_occ(h, s), oracle[h][s], 1e-12);
  }
}

TEST(Occupancy, StageSumsToOne) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const Instance inst = random_instance(seed);
    const auto occ = occupancy(inst.mdp, inst.target);
    for (int h = 0; h < inst.mdp.H; ++h)
      EXPECT_NEAR(occ.d_occ.row(h).sum(), 1.0, 1e-9);
  }
}

TEST(Occupancy, MatchesMonteCarloWithin3SE) {
  const Instance inst = random_instance(42);
  const int N = 200000;
  const auto mc = oracles::mc_occupancy(inst.mdp, inst.target, N, 777);
  const auto occ = occupancy(inst.mdp, inst.target);
  for (int h = 0; h < inst.mdp.H; ++h)
    for (int s = 0; s < inst.mdp.S; ++s) {
      const double p = occ.d_occ(h, s);
      const double se = std::sqrt(std::max(p * (1 - p), 1e-12) / N);
      EXPECT_LE(std::abs(mc[h][s] - p), 3.0 * se + 1e-9)
          << "h=" << h << " s=" << s;
    }
}

TEST(Occupancy, SupportListsStatesAboveThreshold) {
  // terminal-ish chain: from state 0 both actions stay in state 0
  std::vector<Mat> rewards(2, Mat::Constant(2, 2, 0.5));
  std::vector<Mat> trans(2, Mat::Zero(4, 2));
  for (int i = 0; i < 4; ++i) trans[0](i, 0) = 1.0, trans[1](i, 0) = 1.0;
  Vec rho(2);
  rho << 1.0, 0.0;
  const LinearMdp m = make_tabular(rewards, trans, rho);
  const auto occ = occupancy(m, Policy::constant(2, 2, 0));
  EXPECT_TRUE(occ.on(0, 0));
  EXPECT_FALSE(occ.on(0, 1));
  EXPECT_TRUE(occ.on(1, 0));
  EXPECT_FALSE(occ.on(1, 1));
  EXPECT_EQ(occ.support(1), std::vector<int>{0});
}

// --------------------------- policy evaluation ----------------------------
TEST(QPolicy, MatchesPlainDpOracle) {
  std::mt19937_64 g(5);
  for (int rep = 0; rep < 8; ++rep) {
    const Instance inst = random_instance(100 + rep);
    const Policy pi = oracles::random_policy(inst.mdp.H, inst.mdp.S, inst.mdp.A, g);
    const QFunction qf = q_policy(inst.mdp, pi);
    const auto dp = oracles::dp_policy(inst.mdp, pi);
    for (int h = 0; h < inst.mdp.H; ++h)
      for (int s = 0; s < inst.mdp.S; ++s) {
        EXPECT_NEAR(qf.v(h, s), dp.v[h][s], 1e-12);
        for (int a = 0; a < inst.mdp.A; ++a)
          EXPECT_NEAR(qf.q[h](s, a), dp.q[h][s][a], 1e-12);
      }
  }
}

TEST(QPolicy, ThetaOverrideUsesAlternateRewards) {
  std::mt19937_64 g(9);
  const Instance inst = random_instance(7);
  std::vector<Vec> theta2(inst.mdp.H);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (auto& t : theta2) {
    t = Vec(inst.mdp.d);
    for (int i = 0; i < inst.mdp.d; ++i) t(i) = u(g);
  }
  const QFunction qf = q_policy(inst.mdp, inst.target, &theta2);
  const auto dp = oracles::dp_policy(inst.mdp, inst.target, theta2.data());
  for (int h = 0; h < inst.mdp.H; ++h)
    for (int s = 0; s < inst.mdp.S; ++s)
      for (int a = 0; a < inst.mdp.A; ++a)
        EXPECT_NEAR(qf.q[h](s, a), dp.q[h][s][a], 1e-12);
}

TEST(QPolicy, BellmanClosureResidualTiny) {
  // linear MDP => Q^pi is exactly linear in phi; the LS fit must be exact
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const Instance inst = random_instance(seed);
    const QFunction qf = q_policy(inst.mdp, inst.target);
    for (int h = 0; h < inst.mdp.H; ++h) EXPECT_LE(qf.residual[h], 1e-8);
  }
}

TEST(QPolicy, ValueMatchesMonteCarloWithin3SE) {
  const Instance inst = random_instance(13);
  const auto dp = oracles::dp_policy(inst.mdp, inst.target);
  const auto mc = oracles::mc_value(inst.mdp, inst.target, 200000, 31337);
  EXPECT_LE(std::abs(mc.mean - dp.v0), 3.0 * mc.se + 1e-9);
}

// --------------------------- optimal control ------------------------------
TEST(QOptimal, MatchesExhaustiveEnumeration) {
  std::mt19937_64 g(21);
  for (int rep = 0; rep < 6; ++rep) {
    const auto spec = oracles::random_tabular_spec(3, 2, 2, g);
    const LinearMdp m = oracles::tabular_mdp(spec);
    const auto [qf, pi] = q_optimal(m);
    const auto [best_v, best_pi] = oracles::dp_optimal_exhaustive(m);
    double v0 = 0.0;
    for (int s = 0; s < m.S; ++s) v0 += m.rho(s) * qf.v(0, s);
    EXPECT_NEAR(v0, best_v, 1e-10);
    // the greedy policy must achieve the optimal value when re-evaluated
    EXPECT_NEAR(oracles::dp_policy(m, pi).v0, best_v, 1e-10);
  }
}

TEST(QOptimal, TieBreaksToLowestAction) {
  // both actions identical everywhere -> greedy must pick action 0
  std::vector<Mat> rewards(2, Mat::Constant(2, 2, 0.4));
  std::vector<Mat> trans(2, Mat::Constant(4, 2, 0.5));
  Vec rho = Vec::Constant(2, 0.5);
  const LinearMdp m = make_tabular(rewards, trans, rho);
  const auto [qf, pi] = q_optimal(m);
  for (int h = 0; h < m.H; ++h)
    for (int s = 0; s < m.S; ++s) EXPECT_EQ(pi.at(h, s), 0);
}

// --------------------------- tabular embedding ----------------------------
TEST(MakeTabular, RoundTripsRewardAndTransition) {
  std::mt19937_64 g(3);
  const auto spec = oracles::random_tabular_spec(2, 3, 2, g);
  const LinearMdp m = oracles::tabular_mdp(spec);
  EXPECT_EQ(m.d, 6);
  for (int h = 0; h < m.H; ++h)
    for (int s = 0; s < m.S; ++s)
      for (int a = 0; a < m.A; ++a) {
        EXPECT_NEAR(m.reward(h, s, a), spec.rewards[h][s][a], 1e-15);
        const Vec p = m.trans(h, s, a);
        for (int s2 = 0; s2 < m.S; ++s2) EXPECT_NEAR(p(s2), spec.trans[h][s][a][s2], 1e-15);
        EXPECT_GE(oracles::hot_coordinate(m, h, s, a), 0);
      }
  EXPECT_TRUE(validate(m).violations.empty());
}

TEST(MakeTabular, RejectsBadInput) {
  std::vector<Mat> rewards(1, Mat::Constant(2, 2, 1.5));
  std::vector<Mat> trans(1, Mat::Constant(4, 2, 0.5));
  Vec rho = Vec::Constant(2, 0.5);
  EXPECT_THROW(make_tabular(rewards, trans, rho), ValidationError);
  rewards[0].setConstant(0.5);
  trans[0](0, 0) = 0.9;  // row sums to 1.4
  EXPECT_THROW(make_tabular(rewards, trans, rho), ValidationError);
}

// --------------------------- validation -----------------------------------
TEST(Validate, FlagsEachInvariantViolation) {
  const Instance base = random_instance(2);

  {
    LinearMdp m = base.mdp;
    m.phi[0].row(0) *= 3.0;  // feature norm > 1
    const auto rep = validate(m);
    EXPECT_FALSE(rep.violations.empty());
    EXPECT_NE(rep.violations[0].what.find("phi norm"), std::string::npos);
    EXPECT_THROW(require_valid(m), ValidationError);
  }
  {
    LinearMdp m = base.mdp;
    m.theta[1] *= 100.0;  // theta norm and reward range both break
    EXPECT_FALSE(validate(m).violations.empty());
  }
  {
    LinearMdp m = base.mdp;
    m.mu[0](0, 0) += 0.3;  // measure row no longer sums to 1
    EXPECT_FALSE(validate(m).violations.empty());
  }
  {
    LinearMdp m = base.mdp;
    m.rho(0) += 0.5;  // initial distribution no longer sums to 1
    EXPECT_FALSE(validate(m).violations.empty());
  }
  {
    LinearMdp m = base.mdp;
    m.phi.pop_back();  // shape breakage is structural
    EXPECT_THROW(validate(m), StructuralError);
  }
}

TEST(Validate, CleanInstancePasses) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed)
    EXPECT_TRUE(validate(random_instance(seed).mdp).violations.empty());
}

// --------------------------- sampling -------------------------------------
TEST(Sampling, InitialStateMatchesRhoWithin3SE) {
  const Instance inst = random_instance(11);
  Rng rng(99);
  const int N = 100000;
  std::vector<int> counts(inst.mdp.S, 0);
  for (int i = 0; i < N; ++i) counts[sample_initial(inst.mdp, rng)]++;
  for (int s = 0; s < inst.mdp.S; ++s) {
    const double p = inst.mdp.rho(s);
    const double se = std::sqrt(std::max(p * (1 - p), 1e-12) / N);
    EXPECT_LE(std::abs(double(counts[s]) / N - p), 3.0 * se + 1e-9);
  }
}

TEST(Sampling, RewardNoiseClampedAndSeeded) {
  Instance inst = random_instance(17, GenParams{.H = 3, .S = 5, .A = 3, .d = 0,
                                                .noise_sigma = 0.4});
  EXPECT_GT(inst.mdp.noise_sigma, 0.0);
  Rng a(5), b(5);
  for (int i = 0; i < 2000; ++i) {
    const double ra = sample_reward(inst.mdp, 0, 0, 0, a);
    const double rb = sample_reward(inst.mdp, 0, 0, 0, b);
    EXPECT_EQ(ra, rb);  // identical streams -> identical draws
    EXPECT_GE(ra, 0.0);
    EXPECT_LE(ra, 1.0);
  }
  inst.mdp.noise_sigma = 0.0;
  Rng c(5);
  EXPECT_EQ(sample_reward(inst.mdp, 0, 0, 0, c), inst.mdp.reward(0, 0, 0));
}

TEST(Sampling, NextStateDistributionWithin3SE) {
  const Instance inst = random_instance(23);
  Rng rng(1234);
  const int N = 100000;
  std::vector<int> counts(inst.mdp.S, 0);
  for (int i = 0; i < N; ++i) counts[sample_next(inst.mdp, 0, 1, 2, rng)]++;
  const Vec p = inst.mdp.trans(0, 1, 2);
  for (int s2 = 0; s2 < inst.mdp.S; ++s2) {
    const double se = std::sqrt(std::max(p(s2) * (1 - p(s2)), 1e-12) / N);
    EXPECT_LE(std::abs(double(counts[s2]) / N - p(s2)), 3.0 * se + 1e-9);
  }
}

// --------------------------- serialization --------------------------------
TEST(MdpIo, JsonRoundTripIsExact) {
  const Instance inst = random_instance(31);
  const json j = mdp_to_json(inst.mdp);
  const LinearMdp back = mdp_from_json(json::parse(j.dump()));
  EXPECT_EQ(back.H, inst.mdp.H);
  EXPECT_EQ(back.d, inst.mdp.d);
  for (int h = 0; h < inst.mdp.H; ++h) {
    EXPECT_TRUE(back.phi[h].isApprox(inst.mdp.phi[h], 0.0));
    EXPECT_TRUE(back.theta[h].isApprox(inst.mdp.theta[h], 0.0));
    EXPECT_TRUE(back.mu[h].isApprox(inst.mdp.mu[h], 0.0));
  }
  EXPECT_TRUE(back.rho.isApprox(inst.mdp.rho, 0.0));
}

TEST(MdpIo, PolicyRoundTripAndValidation) {
  const Instance inst = random_instance(37);
  const json j = policy_to_json(inst.target);
  const Policy back = policy_from_json(json::parse(j.dump()));
  for (int h = 0; h < inst.mdp.H; ++h)
    for (int s = 0; s < inst.mdp.S; ++s) EXPECT_EQ(back.at(h, s), inst.target.at(h, s));

  json bad = j;
  bad["actions"][0][0] = 99;  // out of range for the model
  const Policy broken = policy_from_json(bad);
  EXPECT_THROW(require_policy_for(broken, inst.mdp), ValidationError);

  json stoch;
  stoch["probs"] = {{{0.5, 0.5}, {1.0, 0.0}}};
  const Policy sp = policy_from_json(stoch);
  EXPECT_TRUE(sp.stochastic);
  EXPECT_NEAR(sp.prob(0, 0, 1), 0.5, 1e-15);
  json badp = stoch;
  badp["probs"][0][0] = {0.9, 0.9};  // does not sum to one
  EXPECT_THROW(policy_from_json(badp), ValidationError);
}

TEST(MdpIo, RejectsMalformedModel) {
  const Instance inst = random_instance(41);
  json j = mdp_to_json(inst.mdp);
  j["phi"][0].erase(0);  // wrong row count
  EXPECT_THROW(mdp_from_json(j), StructuralError);

  json k = mdp_to_json(inst.mdp);
  k["theta"][0][0] = 50.0;  // valid shape, invalid norms
  EXPECT_THROW(mdp_from_json(k), ValidationError);
}

// --------------------------- rng ------------------------------------------
TEST(Rngs, DerivedStreamsDifferButReproduce) {
  EXPECT_NE(derive_stream(1, 0), derive_stream(1, 1));
  EXPECT_EQ(derive_stream(1, 7), derive_stream(1, 7));
  Rng a(derive_stream(9, 2)), b(derive_stream(9, 2));
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.uniform01(), b.uniform01());
}

TEST(Rngs, CategoricalRejectsZeroMass) {
  Rng r(1);
  Vec p = Vec::Zero(3);
  EXPECT_THROW(r.categorical(p.data(), int(p.size())), std::runtime_error);
}
