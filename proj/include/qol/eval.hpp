#pragma once

// Monte-Carlo policy evaluation, mu cross-validation and sensitivity sweeps.

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "qol/envs.hpp"
#include "qol/error.hpp"
#include "qol/mdp_data.hpp"
#include "qol/optimizer.hpp"
#include "qol/parallel.hpp"
#include "qol/qgauss_model.hpp"
#include "qol/rng.hpp"

namespace qol {

using ActionFn = std::function<double(std::span<const double> state, Rng& rng)>;
using RewardFn = std::function<double(double action, std::span<const double> next_state)>;

/// Actions drawn from the fitted q-Gaussian; projected onto the behavior
/// range for environments with bounded action sets.
inline ActionFn learned_policy(const EnvSpec& spec, const ModelParams& params, const ModelConfig& cfg) {
    return [spec, theta = params.theta, cfg](std::span<const double> s, Rng& rng) {
        const double a = sample_action(s, theta, cfg, rng);
        return spec.bounded_actions ? std::clamp(a, spec.behavior_lo, spec.behavior_hi) : a;
    };
}

inline ActionFn behavior_policy(const EnvSpec& spec) {
    return [spec](std::span<const double>, Rng& rng) { return behavior_action(spec, rng); };
}

struct RolloutResult {
    double discounted_return = 0.0;
    double max_abs_reward = 0.0;
};

/// sum_{t=1}^{horizon} gamma^{t-1} R^t from a fresh initial state. A non-empty
/// `reward` replaces the environment reward.
inline RolloutResult mc_rollout(const EnvSpec& spec, const ActionFn& policy, std::size_t horizon, Rng& rng,
                                const RewardFn& reward = {}) {
    if (horizon < 1) throw ConfigError("horizon must be at least 1");
    RolloutResult out;
    auto st = env_reset(spec, rng);
    double disc = 1.0;
    for (std::size_t t = 0; t < horizon; ++t) {
        const double a = policy(st.state, rng);
        auto step = env_step(spec, st.state, a, rng);
        const double r = reward ? reward(a, step.next_state) : step.reward;
        out.discounted_return += disc * r;
        out.max_abs_reward = std::max(out.max_abs_reward, std::abs(r));
        disc *= spec.gamma;
        st.state = std::move(step.next_state);
    }
    return out;
}

/// Linear interpolation between order statistics (the usual "type 7" rule).
inline double quantile(std::vector<double> xs, double p) {
    if (xs.empty()) throw DataError("quantile of an empty sample");
    std::sort(xs.begin(), xs.end());
    const double h = p * static_cast<double>(xs.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, xs.size() - 1);
    return xs[lo] + (h - static_cast<double>(lo)) * (xs[hi] - xs[lo]);
}

inline double mean_of(std::span<const double> xs) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

/// Sample standard deviation (n - 1 denominator); 0 for a single value.
inline double sd_of(std::span<const double> xs) {
    if (xs.size() < 2) return 0.0;
    const double m = mean_of(xs);
    double s = 0.0;
    for (double x : xs) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(xs.size() - 1));
}

struct EvalReport {
    std::vector<double> returns;
    double mean = 0.0;
    double sd = 0.0;
    std::array<double, 5> quantiles{};  // 5%, 25%, 50%, 75%, 95%
    std::size_t horizon = 0;
    double gamma = 0.0;
    std::uint64_t seed = 0;
    double max_abs_reward = 0.0;

    static constexpr std::array<double, 5> kLevels{0.05, 0.25, 0.5, 0.75, 0.95};

    double return_bound() const {
        return max_abs_reward * (1.0 - std::pow(gamma, static_cast<double>(horizon))) / (1.0 - gamma);
    }
    bool within_bound() const {
        const double b = return_bound() * (1.0 + 1e-12);
        return std::all_of(returns.begin(), returns.end(), [b](double r) { return std::abs(r) <= b; });
    }
};

/// n_rollouts independent rollouts; rollout i draws from stream (seed, rollout, i).
inline EvalReport evaluate(const EnvSpec& spec, const ActionFn& policy, std::size_t n_rollouts, std::size_t horizon,
                           std::uint64_t seed, const RewardFn& reward = {}) {
    if (n_rollouts < 1) throw ConfigError("n_rollouts must be at least 1");
    std::vector<RolloutResult> runs(n_rollouts);
    parallel_for(n_rollouts, [&](std::size_t i) {
        Rng rng(seed, Stream::rollout, i);
        runs[i] = mc_rollout(spec, policy, horizon, rng, reward);
    });
    EvalReport rep;
    rep.horizon = horizon;
    rep.gamma = spec.gamma;
    rep.seed = seed;
    for (const auto& r : runs) {
        rep.returns.push_back(r.discounted_return);
        rep.max_abs_reward = std::max(rep.max_abs_reward, r.max_abs_reward);
    }
    rep.mean = mean_of(rep.returns);
    rep.sd = sd_of(rep.returns);
    for (std::size_t k = 0; k < EvalReport::kLevels.size(); ++k) rep.quantiles[k] = quantile(rep.returns, EvalReport::kLevels[k]);
    if (!rep.within_bound()) throw NumericError("discounted return exceeds the empirical reward bound");
    return rep;
}

inline EvalReport evaluate_policy(const EnvSpec& spec, const ModelParams& params, const ModelConfig& cfg,
                                  std::size_t n_rollouts, std::size_t horizon, std::uint64_t seed) {
    return evaluate(spec, learned_policy(spec, params, cfg), n_rollouts, horizon, seed);
}

inline EvalReport evaluate_behavior(const EnvSpec& spec, std::size_t n_rollouts, std::size_t horizon,
                                    std::uint64_t seed) {
    return evaluate(spec, behavior_policy(spec), n_rollouts, horizon, seed);
}

inline void write_eval_report(const EvalReport& rep, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << "# mean=" << detail::format_double(rep.mean) << " sd=" << detail::format_double(rep.sd)
        << " q05=" << detail::format_double(rep.quantiles[0]) << " q25=" << detail::format_double(rep.quantiles[1])
        << " q50=" << detail::format_double(rep.quantiles[2]) << " q75=" << detail::format_double(rep.quantiles[3])
        << " q95=" << detail::format_double(rep.quantiles[4]) << " horizon=" << rep.horizon
        << " gamma=" << detail::format_double(rep.gamma) << " seed=" << rep.seed << '\n';
    out << "rollout,discounted_return\n";
    for (std::size_t i = 0; i < rep.returns.size(); ++i) out << i << ',' << detail::format_double(rep.returns[i]) << '\n';
    if (!out) throw IoError("write failed for '" + path + "'");
}

/// Mean fitted value on each trajectory's first state, minus mu / (1 - gamma).
inline double cv_criterion(const Dataset& data, const ModelParams& params, const ModelConfig& cfg) {
    double s = 0.0;
    for (const auto& tr : data.trajectories()) s += value(tr.transitions.front().state, params.theta, cfg);
    return s / static_cast<double>(data.size()) - cfg.mu / (1.0 - cfg.gamma);
}

inline const std::vector<double> kDefaultMuGrid{0.01, 0.05, 0.1, 0.2, 0.3, 0.5};

struct CvReport {
    std::vector<double> mu;
    std::vector<double> criterion;
    std::vector<ModelParams> params;
    double selected_mu = 0.0;
    std::size_t selected = 0;
};

/// Index of the largest criterion; ties go to the smaller mu.
inline std::size_t select_mu(std::span<const double> mu, std::span<const double> criterion) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < mu.size(); ++i)
        if (criterion[i] > criterion[best] || (criterion[i] == criterion[best] && mu[i] < mu[best])) best = i;
    return best;
}

inline CvReport cross_validate_mu(const Dataset& data, std::span<const double> mu_grid, const ModelConfig& base,
                                  const TrainConfig& train, std::optional<double> bandwidth = std::nullopt) {
    if (mu_grid.empty()) throw ConfigError("mu grid is empty");
    CvReport rep;
    for (double mu : mu_grid) {
        ModelConfig cfg = base;
        cfg.mu = mu;
        auto fit = train_full(data, cfg, train, bandwidth);
        rep.mu.push_back(mu);
        rep.criterion.push_back(cv_criterion(data, fit.params, cfg));
        rep.params.push_back(std::move(fit.params));
    }
    rep.selected = select_mu(rep.mu, rep.criterion);
    rep.selected_mu = rep.mu[rep.selected];
    return rep;
}

inline void write_cv_report(const CvReport& rep, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << "mu,criterion,selected\n";
    for (std::size_t i = 0; i < rep.mu.size(); ++i)
        out << detail::format_double(rep.mu[i]) << ',' << detail::format_double(rep.criterion[i]) << ','
            << (i == rep.selected ? 1 : 0) << '\n';
    if (!out) throw IoError("write failed for '" + path + "'");
}

struct SweepConfig {
    std::size_t n = 25;
    std::size_t T = 24;
    std::size_t n_seeds = 10;
    std::size_t n_rollouts = 100;
    std::size_t horizon = 100;
    std::uint64_t seed = 0;
    std::optional<double> bandwidth;  // median heuristic when unset
};

struct SweepRow {
    double mu = 0.0;
    double mean_return = 0.0;
    double sd_return = 0.0;
    std::size_t n_seeds = 0;
    std::vector<double> seed_means;
};

/// For each mu and each replicate k: fresh dataset (seed + k), full training,
/// evaluation. One row per mu with the mean and sd of the per-replicate mean
/// returns.
inline std::vector<SweepRow> sensitivity_sweep(const EnvSpec& spec, std::span<const double> mu_grid,
                                               const ModelConfig& base, const TrainConfig& train,
                                               const SweepConfig& sweep) {
    if (mu_grid.empty()) throw ConfigError("mu grid is empty");
    if (sweep.n_seeds < 1) throw ConfigError("n_seeds must be at least 1");
    std::vector<Dataset> datasets;
    for (std::size_t k = 0; k < sweep.n_seeds; ++k) datasets.push_back(generate_dataset(spec, sweep.n, sweep.T, sweep.seed + k));
    std::vector<SweepRow> rows;
    for (double mu : mu_grid) {
        ModelConfig cfg = base;
        cfg.mu = mu;
        SweepRow row{mu, 0.0, 0.0, sweep.n_seeds, std::vector<double>(sweep.n_seeds)};
        parallel_for(sweep.n_seeds, [&](std::size_t k) {
            TrainConfig tc = train;
            tc.seed = sweep.seed + k;
            const auto fit = train_full(datasets[k], cfg, tc, sweep.bandwidth);
            row.seed_means[k] = evaluate_policy(spec, fit.params, cfg, sweep.n_rollouts, sweep.horizon, tc.seed).mean;
        });
        row.mean_return = mean_of(row.seed_means);
        row.sd_return = sd_of(row.seed_means);
        rows.push_back(std::move(row));
    }
    return rows;
}

inline void write_sweep_csv(std::span<const SweepRow> rows, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << "mu,mean_return,sd_return,n_seeds\n";
    for (const auto& r : rows)
        out << detail::format_double(r.mu) << ',' << detail::format_double(r.mean_return) << ','
            << detail::format_double(r.sd_return) << ',' << r.n_seeds << '\n';
    if (!out) throw IoError("write failed for '" + path + "'");
}

}  // namespace qol
