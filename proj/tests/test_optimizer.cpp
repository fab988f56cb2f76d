#include <gtest/gtest.h>

#include <cmath>

#include "qol/envs.hpp"
#include "qol/optimizer.hpp"
#include "test_util.hpp"

using namespace qol;

namespace {

ModelConfig env1_model() {
    ModelConfig c;
    c.mu = 0.1;
    c.basis = BasisSpec::polynomial(2);
    c.action_width = 1.0;
    return c;
}

TrainConfig quick(std::uint64_t seed, std::size_t iters = 300) {
    TrainConfig t;
    t.seed = seed;
    t.max_iters = iters;
    t.n_inits = 20;
    return t;
}

}  // namespace

TEST(Schedule, EnvOneFirstRate) {
    TrainConfig t;
    EXPECT_DOUBLE_EQ(learning_rate(t, 1), 0.002 / (1.0 + 1e-4));
}

TEST(Schedule, MonotoneDecreasing) {
    TrainConfig t;
    for (std::size_t j = 1; j < 5000; ++j) EXPECT_LT(learning_rate(t, j + 1), learning_rate(t, j));
    t.decay = 0.0;
    EXPECT_EQ(learning_rate(t, 1), learning_rate(t, 1000));
}

TEST(TrainConfig, Validation) {
    TrainConfig t;
    t.alpha0 = 0.0;
    EXPECT_THROW(t.validate(), ConfigError);
    t = {};
    t.decay = -1.0;
    EXPECT_THROW(t.validate(), ConfigError);
    t = {};
    t.eps = 0.0;
    EXPECT_THROW(t.validate(), ConfigError);
    t = {};
    t.n_inits = 0;
    EXPECT_THROW(t.validate(), ConfigError);
}

TEST(InitSearch, SingleDrawAndMinimum) {
    const auto d = generate_dataset(make_env(EnvId::I), 10, 12, 1);
    const auto m = env1_model();
    const LossEvaluator ev(d, m, {1.0, fit_standardizer(d), 1.0});
    Rng r1(5, Stream::init), r2(5, Stream::init);
    const auto one = init_search(ev, 2, 1, r1);
    ASSERT_EQ(one.candidate_losses.size(), 1u);
    EXPECT_EQ(one.loss, one.candidate_losses[0]);
    const auto many = init_search(ev, 2, 30, r2);
    for (double l : many.candidate_losses) EXPECT_LE(many.loss, l);
    EXPECT_EQ(many.candidate_losses[0], one.loss);
    for (double x : many.params.flatten()) {
        EXPECT_GE(x, -1.0);
        EXPECT_LT(x, 1.0);
    }
}

TEST(Sgd, StopsImmediatelyWhenLambdaVanishes) {
    const ModelConfig m = [] {
        ModelConfig c;
        c.basis = BasisSpec::polynomial(1);
        return c;
    }();
    const auto p = ModelParams::zeros(3, 1);
    std::vector<Trajectory> trajs;
    for (int i = 0; i < 3; ++i) {
        Trajectory tr;
        tr.id = i;
        for (int t = 0; t < 4; ++t) {
            Transition x{{0.1 * i + 0.05 * t}, 0.2, 0.0, {0.1 * i + 0.05 * (t + 1)}};
            x.reward = -lambda_term(x, p, m);
            tr.transitions.push_back(x);
        }
        trajs.push_back(tr);
    }
    const Dataset d(trajs);
    const LossEvaluator ev(d, m, {1.0, fit_standardizer(d), 1.0});
    TrainConfig t;
    t.batch = 2;
    const auto res = sgd_train(d, ev, p, t);
    EXPECT_TRUE(res.report.converged);
    EXPECT_EQ(res.report.iterations(), 1u);
    EXPECT_LT(res.report.movement[0], 1e-12);
}

TEST(Sgd, BatchLargerThanDataRejected) {
    const auto d = generate_dataset(make_env(EnvId::I), 3, 4, 1);
    const auto m = env1_model();
    const LossEvaluator ev(d, m, {1.0, fit_standardizer(d), 1.0});
    TrainConfig t;
    EXPECT_THROW(sgd_train(d, ev, ModelParams::zeros(6, 2), t), ConfigError);
}

TEST(Sgd, NonFiniteLossRaisesWithPartialReport) {
    const auto d = generate_dataset(make_env(EnvId::I), 10, 12, 2);
    ModelConfig m = env1_model();
    m.action_width.reset();
    const LossEvaluator ev(d, m, {1.0, fit_standardizer(d), 1.0});
    TrainConfig t;
    t.alpha0 = 1e6;
    t.max_iters = 50;
    Rng rng(1, Stream::init);
    const auto init = init_search(ev, 2, 1, rng);
    try {
        sgd_train(d, ev, init.params, t);
        FAIL() << "expected TrainingError";
    } catch (const TrainingError& e) {
        ASSERT_TRUE(e.report().failure.has_value());
        EXPECT_NE(e.report().failure->find("iteration"), std::string::npos);
        EXPECT_EQ(e.report().final_params.flat_size(), init.params.flat_size());
    }
}

TEST(TrainFull, DeterministicAndFinite) {
    const auto d = generate_dataset(make_env(EnvId::I), 25, 24, 3);
    const auto a = train_full(d, env1_model(), quick(3), 1.0);
    const auto b = train_full(d, env1_model(), quick(3), 1.0);
    EXPECT_EQ(a.params, b.params);
    EXPECT_EQ(a.report.loss, b.report.loss);
    for (double l : a.report.loss) EXPECT_TRUE(std::isfinite(l));
    EXPECT_EQ(a.report.loss.size(), a.report.grad_norm.size());
    EXPECT_EQ(a.report.loss.size(), a.report.movement.size());
    EXPECT_EQ(a.report.loss.size(), a.report.rate.size());
    EXPECT_LE(a.report.max_peak_density, 5.0 + 1e-12);
    EXPECT_FALSE(a.report.cap_warning);
}

TEST(TrainFull, MedianBandwidthByDefault) {
    const auto d = generate_dataset(make_env(EnvId::I), 25, 24, 4);
    const auto fit = train_full(d, env1_model(), quick(4, 20));
    const auto expected = median_heuristic_bandwidth(d, fit_standardizer(d), 4).bandwidth;
    EXPECT_EQ(fit.kernel.bandwidth, expected);
}

TEST(TrainFull, DimensionMismatchRejected) {
    const auto d = generate_dataset(make_env(EnvId::III), 5, 4, 4);
    EXPECT_THROW(train_full(d, env1_model(), quick(4, 5)), ConfigError);
}

TEST(TrainReport, CsvLayout) {
    test::TempDir dir;
    TrainReport r;
    r.loss = {1.5, 1.25};
    r.grad_norm = {2.0, 1.0};
    r.movement = {0.004, 0.002};
    r.rate = {0.002, 0.002};
    r.failure = "iteration 3: non-finite loss";
    write_train_report(r, dir.file("r.csv"));
    EXPECT_EQ(test::read_text(dir.file("r.csv")),
              "iteration,loss,grad_norm,movement,learning_rate\n"
              "1,1.5,2,0.004,0.002\n"
              "2,1.25,1,0.002,0.002\n"
              "# error: iteration 3: non-finite loss\n");
}
