#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "qol/grid_oracle.hpp"
#include "qol/oracle_checks.hpp"

using namespace qol;
using namespace qol::grid;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

GridMDP random_mdp(std::uint64_t seed, std::size_t s, std::size_t k, double gamma) {
    Rng rng(seed, Stream::oracle, 99);
    return random_grid_mdp(rng, s, k, gamma);
}

}  // namespace

TEST(GridOracle, QEqualsRewardWhenGammaZero) {
    const auto mdp = random_mdp(1, 3, 5, 0.0);
    const auto q = q_from_v(mdp, std::vector<double>{4.0, -2.0, 7.0});
    for (std::size_t s = 0; s < 3; ++s)
        for (std::size_t k = 0; k < 5; ++k) EXPECT_EQ(q(s, k), mdp.reward(s, k));
}

TEST(GridOracle, ConstantValueShiftsQ) {
    const auto mdp = random_mdp(2, 3, 5, 0.9);
    const auto q = q_from_v(mdp, std::vector<double>(3, 2.5));
    for (std::size_t s = 0; s < 3; ++s)
        for (std::size_t k = 0; k < 5; ++k) EXPECT_NEAR(q(s, k), mdp.reward(s, k) + 0.9 * 2.5, 1e-14);
}

TEST(GridOracle, QMatchesDirectSummation) {
    const auto mdp = random_mdp(3, 3, 5, 0.7);
    const std::vector<double> v{0.3, -1.1, 2.0};
    const auto q = q_from_v(mdp, v);
    for (std::size_t s = 0; s < 3; ++s)
        for (std::size_t k = 0; k < 5; ++k) {
            const double direct = mdp.reward(s, k) + 0.7 * (mdp.p(s, k, 0) * v[0] + mdp.p(s, k, 1) * v[1] +
                                                             mdp.p(s, k, 2) * v[2]);
            EXPECT_NEAR(q(s, k), direct, 1e-14);
        }
}

TEST(GridOracle, RandomMdpIsValid) {
    EXPECT_NO_THROW(random_mdp(4, 6, 41, 0.9).validate());
}

// Q = {0, 1, 2}, delta = 0.5, mu = 0.3: eta_tilde = 1.2 from
// 0.5 * sum (0.5 + (Q - eta)/0.6) = 1 over {1, 2}; cell Q=0 fails
// 0.5 * (2 + 1) < 0.6.
TEST(GridOracle, ThreeCellSupport) {
    const std::vector<double> q{0.0, 1.0, 2.0};
    const auto pol = support_and_policy(q, 0.3, 0.5, kInf);
    EXPECT_FALSE(pol.support[0]);
    EXPECT_TRUE(pol.support[1]);
    EXPECT_TRUE(pol.support[2]);
    EXPECT_NEAR(pol.eta_tilde, 1.2, 1e-14);
    EXPECT_NEAR(pol.density[2], 0.5 + 0.8 / 0.6, 1e-14);
    EXPECT_NEAR(pol.density[1], 0.5 - 0.2 / 0.6, 1e-14);
    EXPECT_EQ(pol.density[0], 0.0);
    EXPECT_NEAR(pol.varpi[0], 0.9, 1e-14);
    EXPECT_EQ(pol.varpi[1], 0.0);
}

TEST(GridOracle, ConstantRowGivesUniformDensity) {
    const std::vector<double> q(8, 1.7);
    for (double mu : {0.01, 0.3, 5.0}) {
        const auto pol = support_and_policy(q, mu, 0.125, kInf);
        for (double p : pol.density) EXPECT_NEAR(p, 1.0, 1e-12);
        EXPECT_NEAR(bmu_row(q, pol, mu, 0.125), 1.7 + mu * (1.0 - 1.0), 1e-12);
    }
    // K delta = 2: uniform density 1/2, B = q0 + mu (1 - 1/2)
    const std::vector<double> q2(4, -0.4);
    const auto pol = support_and_policy(q2, 0.2, 0.5, kInf);
    for (double p : pol.density) EXPECT_NEAR(p, 0.5, 1e-12);
    EXPECT_NEAR(bmu_row(q2, pol, 0.2, 0.5), -0.4 + 0.2 * 0.5, 1e-12);
}

TEST(GridOracle, LargeMuIsNearlyUniform) {
    std::vector<double> q(21);
    for (std::size_t k = 0; k < q.size(); ++k) q[k] = std::sin(static_cast<double>(k));
    const double delta = 1.0 / 21.0;
    const auto pol = support_and_policy(q, 1e6, delta, kInf);
    for (double p : pol.density) EXPECT_NEAR(p, 1.0, 1e-6);
}

TEST(GridOracle, InfeasibleCapRejected) {
    const std::vector<double> q{0.0, 1.0};
    EXPECT_THROW(support_and_policy(q, 0.1, 0.25, 1.5), NumericError);
}

TEST(GridOracle, CapBindsAndNormalizes) {
    std::vector<double> q(40);
    for (std::size_t k = 0; k < q.size(); ++k) q[k] = -40.0 * std::pow((static_cast<double>(k) + 0.5) / 40.0 - 0.4, 2);
    const auto pol = support_and_policy(q, 0.01, 1.0 / 40.0, 5.0);
    EXPECT_TRUE(pol.cap_active);
    double mass = 0.0;
    for (double p : pol.density) {
        EXPECT_LE(p, 5.0);
        mass += p / 40.0;
    }
    EXPECT_NEAR(mass, 1.0, 1e-10);
    EXPECT_NEAR(bmu_row(q, pol, 0.01, 1.0 / 40.0), bmu_row_closed_form(q, pol, 0.01, 1.0 / 40.0, 5.0), 1e-10);
}

// The expectation form is the maximum of the smoothed objective: no feasible
// perturbation of the density does better.
TEST(GridOracle, PolicyMaximizesSmoothedObjective) {
    Rng rng(8, Stream::oracle, 1);
    for (int rep = 0; rep < 200; ++rep) {
        std::vector<double> q(7);
        for (auto& x : q) x = rng.uniform(-1.0, 1.0);
        const double mu = rng.uniform(0.05, 1.0), delta = 1.0 / 7.0;
        const auto pol = support_and_policy(q, mu, delta, kInf);
        const double best = bmu_row(q, pol, mu, delta);
        auto pert = pol.density;
        const auto i = rng.uniform_index(7), j = rng.uniform_index(7);
        const double eps = std::min(0.05, pert[j]);
        pert[i] += eps;
        pert[j] -= eps;
        double obj = 0.0;
        for (std::size_t k = 0; k < 7; ++k) obj += delta * pert[k] * (q[k] + mu * (1.0 - pert[k]));
        EXPECT_LE(obj, best + 1e-12);
    }
}

TEST(GridOracle, SmallMuApproachesHardMax) {
    const auto mdp = random_mdp(5, 4, 31, 0.9);
    const std::vector<double> v{1.0, -0.5, 0.25, 2.0};
    const auto soft = apply_bmu(mdp, v, 1e-8, kInf);
    const auto hard = hard_bellman(mdp, v);
    for (std::size_t s = 0; s < 4; ++s) EXPECT_NEAR(soft[s], hard[s], 1e-6);
}

TEST(GridOracle, ClosedFormMatchesExpectationForm) {
    const auto mdp = random_mdp(6, 5, 41, 0.5);
    Rng rng(6, Stream::oracle, 2);
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<double> v(5);
        for (auto& x : v) x = rng.uniform(-3.0, 3.0);
        const double mu = rng.uniform(0.01, 1.0);
        const auto q = q_from_v(mdp, v);
        for (std::size_t s = 0; s < 5; ++s) {
            const auto pol = support_and_policy(q.row(s), mu, mdp.delta(), kInf);
            EXPECT_NEAR(bmu_row(q.row(s), pol, mu, mdp.delta()),
                        bmu_row_closed_form(q.row(s), pol, mu, mdp.delta(), kInf), 1e-10);
        }
    }
}

TEST(GridOracle, HardBellmanProperties) {
    const auto mdp0 = random_mdp(7, 3, 9, 0.0);
    const auto h0 = hard_bellman(mdp0, std::vector<double>{5.0, 5.0, 5.0});
    for (std::size_t s = 0; s < 3; ++s) {
        const auto row = mdp0.reward.row(s);
        EXPECT_EQ(h0[s], *std::max_element(row.begin(), row.end()));
    }
    const auto mdp = random_mdp(7, 3, 9, 0.8);
    const std::vector<double> v{0.1, 0.2, -0.3};
    const auto a = hard_bellman(mdp, v);
    const auto b = hard_bellman(mdp, std::vector<double>{2.1, 2.2, 1.7});
    for (std::size_t s = 0; s < 3; ++s) EXPECT_NEAR(b[s] - a[s], 0.8 * 2.0, 1e-13);
}

TEST(GridOracle, FixedPointResidualWithinTolerance) {
    const auto mdp = random_mdp(8, 4, 21, 0.9);
    const auto fp = fixed_point(mdp, 0.2, 5.0, 1e-10, 100000);
    EXPECT_LE(sup_distance(apply_bmu(mdp, fp.value, 0.2, 5.0), fp.value), 1e-10);
    EXPECT_THROW(fixed_point(mdp, 0.2, 5.0, 1e-10, 3), NumericError);
}

TEST(GridOracle, StationarityAtFixedPoint) {
    const auto mdp = random_mdp(9, 4, 31, 0.9);
    const double mu = 1.0;
    const auto fp = fixed_point(mdp, mu, kInf, 1e-12, 100000);
    const auto res = stationarity_residual(mdp, fp.value, fp.policy, mu);
    const auto eta = state_multiplier(fp.policy, fp.value);
    for (std::size_t s = 0; s < 4; ++s) {
        EXPECT_GE(eta[s], -mu * 5.0);
        EXPECT_LE(eta[s], 0.0);
        for (std::size_t k = 0; k < 31; ++k) {
            EXPECT_EQ(fp.policy.varpi(s, k) * fp.policy.density(s, k), 0.0);
            if (fp.policy.density(s, k) > 0.0) {
                EXPECT_LE(std::abs(res(s, k)), 1e-6);
            }
        }
    }
}

TEST(GridOracle, ArgmaxAlwaysInSupportPrintedSetNever) {
    Rng rng(10, Stream::oracle, 3);
    for (int rep = 0; rep < 500; ++rep) {
        std::vector<double> q(1 + rng.uniform_index(30));
        for (auto& x : q) x = rng.uniform(-5.0, 5.0);
        const double mu = std::exp(rng.uniform(std::log(1e-3), std::log(10.0)));
        const double delta = 1.0 / static_cast<double>(q.size());
        const auto best = static_cast<std::size_t>(std::max_element(q.begin(), q.end()) - q.begin());
        EXPECT_TRUE(support_and_policy(q, mu, delta, kInf).support[best]);
        EXPECT_FALSE(printed_screening_set(q, mu, delta)[best]);
    }
}

TEST(OracleSuite, AllChecksPassForSeedThree) {
    oracle::OracleOptions opt;
    opt.seed = 3;
    for (const auto& row : oracle::run_all(opt)) EXPECT_TRUE(row.pass) << row.name << " worst=" << row.worst;
}

TEST(OracleSuite, OptionsValidated) {
    oracle::OracleOptions opt;
    opt.max_actions = 3;
    EXPECT_THROW(opt.validate(), ConfigError);
    opt = {};
    opt.gamma = 1.0;
    EXPECT_THROW(opt.validate(), ConfigError);
}
