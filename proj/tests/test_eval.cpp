#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "qol/eval.hpp"
#include "test_util.hpp"

using namespace qol;

namespace {

ModelConfig env1_model(double mu = 0.1) {
    ModelConfig c;
    c.mu = mu;
    c.basis = BasisSpec::polynomial(2);
    c.action_width = 1.0;
    return c;
}

}  // namespace

TEST(Rollout, ZeroRewardGivesZeroReturn) {
    const auto e = make_env(EnvId::I);
    const auto rep = evaluate(e, behavior_policy(e), 20, 100, 1, [](double, std::span<const double>) { return 0.0; });
    for (double r : rep.returns) EXPECT_EQ(r, 0.0);
}

TEST(Rollout, UnitRewardGivesGeometricSum) {
    const auto e = make_env(EnvId::II);
    const auto rep = evaluate(e, behavior_policy(e), 20, 100, 1, [](double, std::span<const double>) { return 1.0; });
    const double expected = (1.0 - std::pow(0.9, 100)) / 0.1;
    for (double r : rep.returns) EXPECT_NEAR(r, expected, 1e-12);
    EXPECT_NEAR(rep.sd, 0.0, 1e-12);
}

TEST(Rollout, SummaryStatistics) {
    const auto e = make_env(EnvId::I);
    const auto rep = evaluate_behavior(e, 50, 30, 7);
    ASSERT_EQ(rep.returns.size(), 50u);
    double s = 0.0;
    for (double r : rep.returns) s += r;
    EXPECT_NEAR(rep.mean, s / 50.0, 1e-12);
    for (std::size_t k = 0; k + 1 < rep.quantiles.size(); ++k) EXPECT_LE(rep.quantiles[k], rep.quantiles[k + 1]);
    EXPECT_TRUE(rep.within_bound());
}

TEST(Rollout, SeedDeterminesReturns) {
    const auto e = make_env(EnvId::III);
    EXPECT_EQ(evaluate_behavior(e, 8, 20, 3).returns, evaluate_behavior(e, 8, 20, 3).returns);
    EXPECT_NE(evaluate_behavior(e, 8, 20, 3).returns, evaluate_behavior(e, 8, 20, 4).returns);
}

TEST(Rollout, ZeroRolloutsRejected) {
    const auto e = make_env(EnvId::I);
    EXPECT_THROW(evaluate_behavior(e, 0, 10, 1), ConfigError);
    EXPECT_THROW(evaluate_behavior(e, 5, 0, 1), ConfigError);
}

TEST(Rollout, LearnedPolicyStaysInActionRange) {
    const auto e = make_env(EnvId::I);
    auto p = ModelParams::zeros(6, 2);
    p.theta.theta2[0] = 3.0;
    const auto policy = learned_policy(e, p, env1_model());
    Rng rng(1);
    for (int i = 0; i < 200; ++i) {
        const double a = policy(std::vector<double>{rng.normal(), rng.normal()}, rng);
        EXPECT_GE(a, 0.0);
        EXPECT_LE(a, 1.0);
    }
}

TEST(Quantile, TypeSevenInterpolation) {
    EXPECT_EQ(quantile({1.0, 2.0, 3.0, 4.0}, 0.5), 2.5);
    EXPECT_EQ(quantile({4.0, 1.0, 3.0, 2.0}, 0.0), 1.0);
    EXPECT_EQ(quantile({4.0, 1.0, 3.0, 2.0}, 1.0), 4.0);
    EXPECT_DOUBLE_EQ(quantile({0.0, 10.0}, 0.25), 2.5);
    EXPECT_EQ(quantile({7.0}, 0.9), 7.0);
    EXPECT_THROW(quantile({}, 0.5), DataError);
}

TEST(Stats, MeanAndSd) {
    const std::vector<double> xs{2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0};
    EXPECT_EQ(mean_of(xs), 5.0);
    EXPECT_DOUBLE_EQ(sd_of(xs), std::sqrt(32.0 / 7.0));
    EXPECT_EQ(sd_of(std::vector<double>{3.0}), 0.0);
}

TEST(Cv, CriterionIsMeanInitialValueMinusOffset) {
    const auto d = generate_dataset(make_env(EnvId::I), 6, 5, 2);
    auto p = ModelParams::zeros(6, 2);
    p.theta.theta1[1] = 0.4;
    p.theta.theta2[2] = -0.3;
    const auto cfg = env1_model(0.1);
    double s = 0.0;
    for (const auto& tr : d.trajectories()) s += value(tr.transitions[0].state, p.theta, cfg);
    EXPECT_NEAR(cv_criterion(d, p, cfg), s / 6.0 - 1.0, 1e-12);
}

TEST(Cv, SelectionPrefersLargestThenSmallerMu) {
    const std::vector<double> mu{0.01, 0.05, 0.1, 0.2};
    EXPECT_EQ(select_mu(mu, std::vector<double>{1.0, 3.0, 2.0, 0.0}), 1u);
    EXPECT_EQ(select_mu(mu, std::vector<double>{1.0, 3.0, 3.0, 0.0}), 1u);
    const std::vector<double> rev{0.2, 0.1};
    EXPECT_EQ(select_mu(rev, std::vector<double>{5.0, 5.0}), 1u);
    EXPECT_EQ(select_mu(std::vector<double>{0.3}, std::vector<double>{-2.0}), 0u);
}

TEST(Cv, ReportConsistentWithCriteria) {
    const auto d = generate_dataset(make_env(EnvId::I), 10, 8, 3);
    TrainConfig t;
    t.max_iters = 30;
    t.n_inits = 5;
    const std::vector<double> grid{0.05, 0.2};
    const auto rep = cross_validate_mu(d, grid, env1_model(), t, 1.0);
    ASSERT_EQ(rep.criterion.size(), 2u);
    EXPECT_EQ(rep.selected, select_mu(rep.mu, rep.criterion));
    EXPECT_EQ(rep.selected_mu, grid[rep.selected]);
    for (std::size_t i = 0; i < 2; ++i) {
        auto cfg = env1_model(grid[i]);
        EXPECT_DOUBLE_EQ(rep.criterion[i], cv_criterion(d, rep.params[i], cfg));
    }
    test::TempDir dir;
    write_cv_report(rep, dir.file("cv.csv"));
    const auto text = test::read_text(dir.file("cv.csv"));
    EXPECT_EQ(text.rfind("mu,criterion,selected\n", 0), 0u);
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 3);
}

TEST(Sweep, RowsAndCsv) {
    SweepConfig sw;
    sw.n = 6;
    sw.T = 6;
    sw.n_seeds = 2;
    sw.n_rollouts = 5;
    sw.horizon = 10;
    sw.bandwidth = 1.0;
    TrainConfig t;
    t.max_iters = 10;
    t.n_inits = 3;
    const std::vector<double> grid{0.1, 0.3};
    const auto rows = sensitivity_sweep(make_env(EnvId::I), grid, env1_model(), t, sw);
    ASSERT_EQ(rows.size(), 2u);
    for (std::size_t i = 0; i < 2; ++i) {
        EXPECT_EQ(rows[i].mu, grid[i]);
        EXPECT_EQ(rows[i].n_seeds, 2u);
        EXPECT_NEAR(rows[i].mean_return, mean_of(rows[i].seed_means), 1e-12);
        EXPECT_NEAR(rows[i].sd_return, sd_of(rows[i].seed_means), 1e-12);
    }
    test::TempDir dir;
    write_sweep_csv(rows, dir.file("s.csv"));
    const auto text = test::read_text(dir.file("s.csv"));
    EXPECT_EQ(text.rfind("mu,mean_return,sd_return,n_seeds\n", 0), 0u);
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 3);
    EXPECT_THROW(sensitivity_sweep(make_env(EnvId::I), std::vector<double>{}, env1_model(), t, sw), ConfigError);
}
