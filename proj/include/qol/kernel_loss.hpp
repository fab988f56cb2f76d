#pragma once

// Kernel-embedded U-statistic loss over within-trajectory transition pairs
//
//   L = mean_i  1/(T(T-1)) sum_{j != k} Lambda_j K(x_j, x_k) Lambda_k,
//   Lambda = r + gamma V(s') - mu prox_circ(pi(a|s)) - eta(s) + varpi(s, a) - V(s),
//
// and its analytic gradient with respect to [theta1, theta2, theta3, xi].
// K is a Gaussian kernel on standardized (state, action) pairs; it does not
// depend on the parameters, so Gram matrices are computed once per trajectory.

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qol/error.hpp"
#include "qol/mdp_data.hpp"
#include "qol/parallel.hpp"
#include "qol/qgauss_model.hpp"
#include "qol/rng.hpp"

namespace qol {

struct KernelConfig {
    double bandwidth = 1.0;
    Standardizer standardizer;
    double rkhs_scale = 1.0;  // C0; multiplies the loss, never moves the argmin

    void validate(std::size_t state_dim) const {
        if (!(bandwidth > 0.0)) throw ConfigError("kernel bandwidth must be positive");
        if (standardizer.dim() != state_dim + 1) throw ConfigError("standardizer dimension mismatch");
    }
};

inline double gaussian_kernel_standardized(std::span<const double> x, std::span<const double> y, double bandwidth) {
    if (x.size() != y.size()) throw ConfigError("kernel arguments have different dimensions");
    double d2 = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) d2 += (x[i] - y[i]) * (x[i] - y[i]);
    return std::exp(-d2 / (2.0 * bandwidth * bandwidth));
}

inline double gaussian_kernel(std::span<const double> s1, double a1, std::span<const double> s2, double a2,
                              const KernelConfig& cfg) {
    if (s1.size() != s2.size() || s1.size() + 1 != cfg.standardizer.dim())
        throw ConfigError("kernel arguments have inconsistent dimensions");
    return gaussian_kernel_standardized(cfg.standardizer.apply(s1, a1), cfg.standardizer.apply(s2, a2), cfg.bandwidth);
}

struct BandwidthResult {
    double bandwidth = 1.0;
    bool degenerate = false;  // all sampled points coincide; bandwidth forced to 1
};

/// Median pairwise standardized distance over at most max_points transitions
/// drawn without replacement from the dataset.
inline BandwidthResult median_heuristic_bandwidth(const Dataset& data, const Standardizer& st, std::uint64_t seed,
                                                  std::size_t max_points = 2000) {
    std::vector<std::vector<double>> pts;
    for (const auto& tr : data.trajectories())
        for (const auto& x : tr.transitions) pts.push_back(st.apply(x.state, x.action));
    if (pts.size() < 2) throw DataError("median heuristic needs at least two transitions");
    if (pts.size() > max_points) {
        Rng rng(seed, Stream::bandwidth);
        for (std::size_t i = 0; i < max_points; ++i) std::swap(pts[i], pts[i + rng.uniform_index(pts.size() - i)]);
        pts.resize(max_points);
    }
    std::vector<double> dist;
    dist.reserve(pts.size() * (pts.size() - 1) / 2);
    for (std::size_t i = 0; i < pts.size(); ++i)
        for (std::size_t j = i + 1; j < pts.size(); ++j) {
            double d2 = 0.0;
            for (std::size_t c = 0; c < pts[i].size(); ++c) d2 += (pts[i][c] - pts[j][c]) * (pts[i][c] - pts[j][c]);
            dist.push_back(std::sqrt(d2));
        }
    const auto n = dist.size();
    std::nth_element(dist.begin(), dist.begin() + n / 2, dist.end());
    double med = dist[n / 2];
    if (n % 2 == 0) med = 0.5 * (med + *std::max_element(dist.begin(), dist.begin() + n / 2));
    if (!(med > 0.0)) return {1.0, true};
    return {med, false};
}

/// Lambda from its already-evaluated pieces.
inline double lambda_from_terms(double reward, double gamma, double value_next, double density, double eta_s,
                                double varpi_sa, double value_s, double mu) {
    return reward + gamma * value_next - mu * prox_circ(density) - eta_s + varpi_sa - value_s;
}

inline double lambda_term(const Transition& tr, const ModelParams& p, const ModelConfig& cfg,
                          CoeffMode mode = CoeffMode::evaluate) {
    const QGaussian here(q_coeffs(tr.state, p.theta, cfg, mode), cfg.mu);
    const QGaussian next(q_coeffs(tr.next_state, p.theta, cfg, mode), cfg.mu);
    return lambda_from_terms(tr.reward, cfg.gamma, next.value(), here.density(tr.action),
                             eta(tr.state, p.xi, cfg.mu, cfg.cap), here.varpi(tr.action), here.value(), cfg.mu);
}

/// Bound on |Lambda| when rewards are bounded by r_max and the value class
/// respects the same bound.
inline double lambda_bound(double r_max, double gamma, double mu, double cap) {
    return 4.0 * r_max / (1.0 - gamma) + mu * cap;
}

struct LossValue {
    double value = 0.0;
    std::size_t pairs = 0;
};

/// Flat layout matches ModelParams::flatten(): [theta1, theta2, theta3, xi].
struct GradientVector {
    std::vector<double> values;
    double loss = 0.0;
    std::size_t pairs = 0;
    std::size_t kink_events = 0;  // transitions exactly on the support boundary
    std::size_t clip_events = 0;  // theta1'phi clipped (training mode only)
};

struct LossOptions {
    CoeffMode mode = CoeffMode::evaluate;
    bool parallel = false;
};

/// Precomputes, per trajectory, everything that does not depend on the
/// parameters: basis features of s and s', rewards, actions, the Gram matrix.
class LossEvaluator {
public:
    LossEvaluator(const Dataset& data, const ModelConfig& model, const KernelConfig& kernel)
        : LossEvaluator(DatasetView(data), model, kernel) {}

    LossEvaluator(const DatasetView& view, const ModelConfig& model, const KernelConfig& kernel)
        : model_(model), kernel_(kernel), range_(admissible_range(model)) {
        model_.validate();
        kernel_.validate(view.dataset().state_dim());
        cache_.reserve(view.size());
        for (std::size_t i = 0; i < view.size(); ++i) cache_.push_back(prepare(view[i]));
    }

    std::size_t size() const { return cache_.size(); }
    const ModelConfig& model() const { return model_; }
    const KernelConfig& kernel() const { return kernel_; }

    /// Loss over the cached trajectories selected by `which` (all if empty).
    LossValue loss(const ModelParams& p, std::span<const std::size_t> which = {}, LossOptions opt = {}) const {
        const auto idx = resolve(which);
        std::vector<double> per(idx.size());
        auto body = [&](std::size_t i) {
            const auto& c = cache_[idx[i]];
            std::vector<double> lam(c.T);
            for (std::size_t j = 0; j < c.T; ++j) lam[j] = eval_lambda(c, j, p, opt.mode, nullptr, nullptr);
            per[i] = pair_sum(c, lam) / static_cast<double>(c.T * (c.T - 1));
        };
        run(idx.size(), body, opt.parallel);
        LossValue out;
        for (std::size_t i = 0; i < idx.size(); ++i) {
            out.value += per[i];
            out.pairs += cache_[idx[i]].T * (cache_[idx[i]].T - 1);
        }
        out.value = kernel_.rkhs_scale * out.value / static_cast<double>(idx.size());
        if (!std::isfinite(out.value)) throw NumericError("non-finite loss");
        return out;
    }

    /// Per-trajectory losses (unscaled by the trajectory average), for
    /// standard-error computations.
    std::vector<double> per_trajectory_loss(const ModelParams& p) const {
        std::vector<double> per(cache_.size());
        for (std::size_t i = 0; i < cache_.size(); ++i) {
            const auto& c = cache_[i];
            std::vector<double> lam(c.T);
            for (std::size_t j = 0; j < c.T; ++j) lam[j] = eval_lambda(c, j, p, CoeffMode::evaluate, nullptr, nullptr);
            per[i] = kernel_.rkhs_scale * pair_sum(c, lam) / static_cast<double>(c.T * (c.T - 1));
        }
        return per;
    }

    GradientVector gradient(const ModelParams& p, std::span<const std::size_t> which = {}, LossOptions opt = {}) const {
        const auto idx = resolve(which);
        const std::size_t n_par = p.flat_size();
        struct Part {
            std::vector<double> grad;
            double loss = 0.0;
            std::size_t kinks = 0, clips = 0;
        };
        std::vector<Part> parts(idx.size());
        auto body = [&](std::size_t i) {
            const auto& c = cache_[idx[i]];
            Part& part = parts[i];
            part.grad.assign(n_par, 0.0);
            std::vector<double> lam(c.T);
            std::vector<std::vector<double>> dlam(c.T, std::vector<double>(n_par, 0.0));
            for (std::size_t j = 0; j < c.T; ++j) {
                Events ev;
                lam[j] = eval_lambda(c, j, p, opt.mode, &dlam[j], &ev);
                part.kinks += ev.kink;
                part.clips += ev.clips;
            }
            const double norm = 1.0 / static_cast<double>(c.T * (c.T - 1));
            part.loss = pair_sum(c, lam) * norm;
            for (std::size_t j = 0; j < c.T; ++j) {
                double weight = 0.0;
                for (std::size_t k = 0; k < c.T; ++k)
                    if (k != j) weight += c.gram[j * c.T + k] * lam[k];
                weight *= 2.0 * norm;
                for (std::size_t q = 0; q < n_par; ++q) part.grad[q] += weight * dlam[j][q];
            }
        };
        run(idx.size(), body, opt.parallel);
        GradientVector out;
        out.values.assign(n_par, 0.0);
        const double scale = kernel_.rkhs_scale / static_cast<double>(idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i) {
            for (std::size_t q = 0; q < n_par; ++q) out.values[q] += parts[i].grad[q];
            out.loss += parts[i].loss;
            out.pairs += cache_[idx[i]].T * (cache_[idx[i]].T - 1);
            out.kink_events += parts[i].kinks;
            out.clip_events += parts[i].clips;
        }
        for (auto& g : out.values) g *= scale;
        out.loss *= scale;
        if (!std::isfinite(out.loss)) throw NumericError("non-finite loss");
        for (double g : out.values)
            if (!std::isfinite(g)) throw NumericError("non-finite gradient");
        return out;
    }

    /// Lambda for every cached transition, trajectory-major.
    std::vector<std::vector<double>> lambdas(const ModelParams& p) const {
        std::vector<std::vector<double>> out;
        for (const auto& c : cache_) {
            std::vector<double> lam(c.T);
            for (std::size_t j = 0; j < c.T; ++j) lam[j] = eval_lambda(c, j, p, CoeffMode::evaluate, nullptr, nullptr);
            out.push_back(std::move(lam));
        }
        return out;
    }

    /// Gram matrix of cached trajectory i (row-major T x T).
    std::span<const double> gram(std::size_t i) const { return cache_[i].gram; }

private:
    struct Cached {
        std::size_t T = 0;
        std::vector<std::vector<double>> phi, phi_next, state;
        std::vector<double> action, reward;
        std::vector<double> gram;
    };

    struct Events {
        std::size_t kink = 0;
        std::size_t clips = 0;
    };

    Cached prepare(const Trajectory& tr) const {
        Cached c;
        c.T = tr.length();
        std::vector<std::vector<double>> z;
        for (const auto& x : tr.transitions) {
            c.phi.push_back(basis_eval(x.state, model_.basis));
            c.phi_next.push_back(basis_eval(x.next_state, model_.basis));
            c.state.push_back(x.state);
            c.action.push_back(x.action);
            c.reward.push_back(x.reward);
            z.push_back(kernel_.standardizer.apply(x.state, x.action));
        }
        c.gram.resize(c.T * c.T);
        for (std::size_t j = 0; j < c.T; ++j)
            for (std::size_t k = 0; k < c.T; ++k)
                c.gram[j * c.T + k] = gaussian_kernel_standardized(z[j], z[k], kernel_.bandwidth);
        return c;
    }

    std::vector<std::size_t> resolve(std::span<const std::size_t> which) const {
        if (cache_.empty()) throw DataError("empty batch");
        if (!which.empty()) {
            for (auto i : which)
                if (i >= cache_.size()) throw ConfigError("trajectory index out of range");
            return {which.begin(), which.end()};
        }
        std::vector<std::size_t> all(cache_.size());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
        return all;
    }

    template <typename Fn>
    static void run(std::size_t n, Fn&& fn, bool parallel) {
        if (parallel)
            parallel_for(n, fn);
        else
            for (std::size_t i = 0; i < n; ++i) fn(i);
    }

    static double pair_sum(const Cached& c, const std::vector<double>& lam) {
        double acc = 0.0;
        for (std::size_t j = 0; j < c.T; ++j)
            for (std::size_t k = 0; k < c.T; ++k)
                if (k != j) acc += lam[j] * c.gram[j * c.T + k] * lam[k];
        return acc;
    }

    // Lambda at transition j, optionally with its gradient.
    double eval_lambda(const Cached& c, std::size_t j, const ModelParams& p, CoeffMode mode, std::vector<double>* grad,
                       Events* ev) const {
        const double mu = model_.mu;
        const auto& phi = c.phi[j];
        const auto& phin = c.phi_next[j];
        const auto cq = q_coeffs_from_features(phi, p.theta, mode, range_);
        const auto cn = q_coeffs_from_features(phin, p.theta, mode, range_);
        const QGaussian here(cq, mu), next(cn, mu);
        const double a = c.action[j];
        const double pre = here.density_unclipped(a);
        const double dens = std::max(0.0, pre);
        const double slack = std::max(0.0, -pre);
        const double z = p.xi.k0 * (dot(p.xi.xi, c.state[j]) - p.xi.b0);
        const double sig = 1.0 / (1.0 + std::exp(-z));
        const double eta_s = -mu * model_.cap * sig;
        const double lam = lambda_from_terms(c.reward[j], model_.gamma, next.value(), dens, eta_s, slack, here.value(), mu);
        if (!grad) return lam;

        if (ev) ev->clips += static_cast<std::size_t>(cq.clipped) + static_cast<std::size_t>(cn.clipped);
        // d Lambda / d alpha at s: -dV + w * d(pre), w = -2mu inside, -1 outside, 0 at the kink.
        double w = 0.0;
        if (pre > 0.0)
            w = -2.0 * mu;
        else if (pre < 0.0)
            w = -1.0;
        else if (ev)
            ++ev->kink;
        const auto dv = here.value_grad();
        const auto dpre = here.density_unclipped_grad(a);
        const auto dvn = next.value_grad();
        std::array<double, 3> g_here{}, g_next{};
        for (int i = 0; i < 3; ++i) {
            g_here[i] = -dv[i] + w * dpre[i];
            g_next[i] = model_.gamma * dvn[i];
        }
        // alpha1 = exp(theta1'phi): chain factor alpha1, zero once clipped.
        const double c1_here = cq.clipped ? 0.0 : cq.a1;
        const double c1_next = cn.clipped ? 0.0 : cn.a1;
        const std::size_t m = phi.size();
        auto& g = *grad;
        for (std::size_t i = 0; i < m; ++i) {
            g[i] = g_here[0] * c1_here * phi[i] + g_next[0] * c1_next * phin[i];
            g[m + i] = g_here[1] * phi[i] + g_next[1] * phin[i];
            g[2 * m + i] = g_here[2] * phi[i] + g_next[2] * phin[i];
        }
        // -d eta / d xi = mu C sig (1 - sig) k0 s
        const double deta = mu * model_.cap * sig * (1.0 - sig) * p.xi.k0;
        for (std::size_t i = 0; i < c.state[j].size(); ++i) g[3 * m + i] = deta * c.state[j][i];
        return lam;
    }

    ModelConfig model_;
    KernelConfig kernel_;
    std::optional<ExpRange> range_;
    std::vector<Cached> cache_;
};

inline LossValue u_statistic_loss(const DatasetView& batch, const ModelParams& p, const ModelConfig& model,
                                  const KernelConfig& kernel, LossOptions opt = {}) {
    if (batch.size() == 0) throw DataError("empty batch");
    return LossEvaluator(batch, model, kernel).loss(p, {}, opt);
}

inline GradientVector loss_gradient(const DatasetView& batch, const ModelParams& p, const ModelConfig& model,
                                    const KernelConfig& kernel, LossOptions opt = {}) {
    if (batch.size() == 0) throw DataError("empty batch");
    return LossEvaluator(batch, model, kernel).gradient(p, {}, opt);
}

}  // namespace qol
