#pragma once

// Multi-start initialization and minibatch SGD on the U-statistic loss.
//
// Learning rate alpha_j = alpha0 / (1 + d sqrt(j)); for d > 0 the schedule is
// decreasing with sum alpha_j = inf and sum alpha_j^2 < inf. Training stops
// once the Euclidean parameter movement of one step is <= eps.

#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "qol/error.hpp"
#include "qol/kernel_loss.hpp"
#include "qol/mdp_data.hpp"
#include "qol/qgauss_model.hpp"
#include "qol/rng.hpp"

namespace qol {

struct TrainConfig {
    double alpha0 = 0.002;
    double decay = 1e-4;
    std::size_t batch = 5;
    double eps = 1e-5;
    std::size_t max_iters = 20000;
    std::size_t n_inits = 200;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(alpha0 > 0.0)) throw ConfigError("alpha0 must be positive");
        if (!(decay >= 0.0)) throw ConfigError("decay must be non-negative");
        if (!(eps > 0.0)) throw ConfigError("eps must be positive");
        if (n_inits < 1) throw ConfigError("n_inits must be at least 1");
        if (batch < 1) throw ConfigError("batch size must be at least 1");
    }
};

inline double learning_rate(const TrainConfig& cfg, std::size_t j) {
    return cfg.alpha0 / (1.0 + cfg.decay * std::sqrt(static_cast<double>(j)));
}

struct TrainReport {
    std::vector<double> loss;       // minibatch loss before each update
    std::vector<double> grad_norm;  // Euclidean norm of the minibatch gradient
    std::vector<double> movement;   // ||params_j - params_{j-1}||
    std::vector<double> rate;
    ModelParams final_params;
    double init_loss = 0.0;
    double wall_seconds = 0.0;
    std::size_t kink_events = 0;
    std::size_t clip_events = 0;
    bool converged = false;  // stopped on the movement criterion
    double max_peak_density = 0.0;
    bool cap_warning = false;  // peak density exceeded C on some data state
    std::optional<std::string> failure;

    std::size_t iterations() const { return loss.size(); }
};

/// Raised when training hits a non-finite loss or gradient. Carries the
/// partial report, including the last finite parameters.
class TrainingError : public NumericError {
public:
    TrainingError(const std::string& what, TrainReport report) : NumericError(what), report_(std::move(report)) {}
    const TrainReport& report() const { return report_; }

private:
    TrainReport report_;
};

struct InitResult {
    ModelParams params;
    double loss = 0.0;
    std::vector<double> candidate_losses;  // +inf for non-finite candidates
};

/// n_inits draws with every trained coordinate i.i.d. U(-1, 1); returns the
/// draw with the smallest full-data loss.
inline InitResult init_search(const LossEvaluator& eval, std::size_t state_dim, std::size_t n_inits, Rng& rng,
                              double k0 = 1.0, double b0 = 0.0) {
    if (n_inits < 1) throw ConfigError("n_inits must be at least 1");
    const std::size_t m = eval.model().basis.dim();
    InitResult best;
    best.loss = std::numeric_limits<double>::infinity();
    bool found = false;
    for (std::size_t i = 0; i < n_inits; ++i) {
        ModelParams p = ModelParams::zeros(m, state_dim);
        p.xi.k0 = k0;
        p.xi.b0 = b0;
        std::vector<double> flat(p.flat_size());
        for (auto& x : flat) x = rng.uniform(-1.0, 1.0);
        p.assign(flat);
        double loss = std::numeric_limits<double>::infinity();
        try {
            loss = eval.loss(p, {}, {CoeffMode::training, false}).value;
        } catch (const NumericError&) {
        }
        best.candidate_losses.push_back(loss);
        if (!found || loss < best.loss) {
            best.params = p;
            best.loss = loss;
            found = true;
        }
    }
    if (!std::isfinite(best.loss)) throw NumericError("init_search: every candidate has a non-finite loss");
    return best;
}

inline double l2_norm(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

/// Largest peak density of the induced policy over the states in the data.
inline double max_peak_density(const Dataset& data, const ModelParams& p, const ModelConfig& cfg) {
    double peak = 0.0;
    for (const auto& tr : data.trajectories())
        for (const auto& x : tr.transitions)
            peak = std::max(peak, policy_at(x.state, p.theta, cfg).peak());
    return peak;
}

struct TrainResult {
    ModelParams params;
    TrainReport report;
};

inline TrainResult sgd_train(const Dataset& data, const LossEvaluator& eval, const ModelParams& init,
                             const TrainConfig& cfg) {
    cfg.validate();
    if (cfg.batch > data.size())
        throw ConfigError("batch size " + std::to_string(cfg.batch) + " exceeds number of trajectories " +
                          std::to_string(data.size()));
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(cfg.seed, Stream::minibatch);
    ModelParams p = init;
    std::vector<double> flat = p.flatten();
    TrainReport rep;
    for (std::size_t j = 1; j <= cfg.max_iters; ++j) {
        const auto batch = sample_minibatch(data, cfg.batch, rng);
        GradientVector g;
        try {
            g = eval.gradient(p, batch.indices(), {CoeffMode::training, false});
        } catch (const NumericError& e) {
            rep.final_params = p;
            rep.failure = "iteration " + std::to_string(j) + ": " + e.what();
            rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            throw TrainingError(*rep.failure, rep);
        }
        const double rate = learning_rate(cfg, j);
        const double gnorm = l2_norm(g.values);
        for (std::size_t q = 0; q < flat.size(); ++q) flat[q] -= rate * g.values[q];
        p.assign(flat);
        const double move = rate * gnorm;
        rep.loss.push_back(g.loss);
        rep.grad_norm.push_back(gnorm);
        rep.movement.push_back(move);
        rep.rate.push_back(rate);
        rep.kink_events += g.kink_events;
        rep.clip_events += g.clip_events;
        if (move <= cfg.eps) {
            rep.converged = true;
            break;
        }
    }
    rep.final_params = p;
    rep.max_peak_density = max_peak_density(data, p, eval.model());
    rep.cap_warning = rep.max_peak_density > eval.model().cap;
    rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return {p, rep};
}

struct FullTrainResult {
    ModelParams params;
    TrainReport report;
    KernelConfig kernel;
    bool bandwidth_degenerate = false;
};

/// standardize -> bandwidth (median heuristic unless overridden) ->
/// init_search -> sgd_train.
inline FullTrainResult train_full(const Dataset& data, const ModelConfig& model, const TrainConfig& cfg,
                                  std::optional<double> bandwidth = std::nullopt, double k0 = 1.0, double b0 = 0.0) {
    model.validate();
    cfg.validate();
    if (model.basis.state_dim != data.state_dim())
        throw ConfigError("basis state dimension " + std::to_string(model.basis.state_dim) +
                          " does not match data dimension " + std::to_string(data.state_dim()));
    const auto t0 = std::chrono::steady_clock::now();
    FullTrainResult out;
    out.kernel.standardizer = fit_standardizer(data);
    if (bandwidth) {
        out.kernel.bandwidth = *bandwidth;
    } else {
        const auto bw = median_heuristic_bandwidth(data, out.kernel.standardizer, cfg.seed);
        out.kernel.bandwidth = bw.bandwidth;
        out.bandwidth_degenerate = bw.degenerate;
    }
    const LossEvaluator eval(data, model, out.kernel);
    Rng init_rng(cfg.seed, Stream::init);
    const auto init = init_search(eval, data.state_dim(), cfg.n_inits, init_rng, k0, b0);
    auto res = sgd_train(data, eval, init.params, cfg);
    out.params = std::move(res.params);
    out.report = std::move(res.report);
    out.report.init_loss = init.loss;
    out.report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

inline void write_train_report(const TrainReport& rep, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << "iteration,loss,grad_norm,movement,learning_rate\n";
    for (std::size_t i = 0; i < rep.loss.size(); ++i)
        out << (i + 1) << ',' << detail::format_double(rep.loss[i]) << ',' << detail::format_double(rep.grad_norm[i])
            << ',' << detail::format_double(rep.movement[i]) << ',' << detail::format_double(rep.rate[i]) << '\n';
    if (rep.failure) out << "# error: " << *rep.failure << '\n';
    if (!out) throw IoError("write failed for '" + path + "'");
}

}  // namespace qol
