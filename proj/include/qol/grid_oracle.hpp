#pragma once

// Brute-force smoothed Bellman machinery on a small enumerable MDP whose
// action interval is cut into K equal cells. Integrals over actions are
// midpoint sums with cell width delta. This is the reference the parametric
// model and the loss are checked against.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "qol/error.hpp"
#include "qol/rng.hpp"

namespace qol::grid {

/// Dense row-major matrix, just enough for per-(state, action-cell) tables.
class Table {
public:
    Table() = default;
    Table(std::size_t rows, std::size_t cols, double fill = 0.0) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

private:
    std::size_t rows_ = 0, cols_ = 0;
    std::vector<double> data_;
};

struct GridMDP {
    std::size_t n_states = 0;
    std::size_t n_actions = 0;  // K cells
    double a_lo = 0.0;
    double a_hi = 1.0;
    std::vector<double> transition;  // [s][k][s'], each (s, k) slice sums to 1
    Table reward;                    // r[s, k]
    double gamma = 0.9;

    double delta() const { return (a_hi - a_lo) / static_cast<double>(n_actions); }
    double action(std::size_t k) const { return a_lo + (static_cast<double>(k) + 0.5) * delta(); }
    double p(std::size_t s, std::size_t k, std::size_t sp) const {
        return transition[(s * n_actions + k) * n_states + sp];
    }
    double& p(std::size_t s, std::size_t k, std::size_t sp) { return transition[(s * n_actions + k) * n_states + sp]; }

    void validate() const {
        if (n_states == 0 || n_actions == 0) throw ConfigError("grid MDP needs at least one state and one action cell");
        if (!(a_hi > a_lo)) throw ConfigError("action interval is empty");
        if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in [0, 1)");
        if (transition.size() != n_states * n_actions * n_states) throw ConfigError("transition tensor has wrong size");
        if (reward.rows() != n_states || reward.cols() != n_actions) throw ConfigError("reward table has wrong shape");
        for (std::size_t s = 0; s < n_states; ++s)
            for (std::size_t k = 0; k < n_actions; ++k) {
                double total = 0.0;
                for (std::size_t sp = 0; sp < n_states; ++sp) {
                    if (p(s, k, sp) < 0.0) throw ConfigError("negative transition probability");
                    total += p(s, k, sp);
                }
                if (std::abs(total - 1.0) > 1e-12) throw ConfigError("transition row does not sum to 1");
            }
    }
};

using GridValue = std::vector<double>;

/// Q[s, k] = r[s, k] + gamma * sum_s' P[s, k, s'] v[s'].
inline Table q_from_v(const GridMDP& mdp, std::span<const double> v) {
    Table q(mdp.n_states, mdp.n_actions);
    for (std::size_t s = 0; s < mdp.n_states; ++s)
        for (std::size_t k = 0; k < mdp.n_actions; ++k) {
            double ev = 0.0;
            for (std::size_t sp = 0; sp < mdp.n_states; ++sp) ev += mdp.p(s, k, sp) * v[sp];
            q(s, k) = mdp.reward(s, k) + mdp.gamma * ev;
        }
    return q;
}

/// Induced policy at one state.
struct RowPolicy {
    std::vector<char> support;    // density > 0
    std::vector<double> density;  // integrates to 1 with cell width delta
    std::vector<double> varpi;    // max(0, eta_tilde - mu - Q)
    double eta_tilde = 0.0;       // normalization multiplier
    bool cap_active = false;      // some cell sits at the density cap
};

namespace detail {

// Sparsemax-style threshold without a cap. Returns eta_tilde.
inline double uncapped_threshold(std::span<const double> q, double mu, double delta) {
    std::vector<std::size_t> order(q.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return q[a] > q[b]; });
    double cum = 0.0;
    double eta = 0.0;
    for (std::size_t i = 0; i < order.size(); ++i) {
        cum += q[order[i]];
        const double candidate = mu + (delta * cum - 2.0 * mu) / (static_cast<double>(i + 1) * delta);
        if (i == 0 || q[order[i]] > candidate - mu)
            eta = candidate;
        else
            break;
    }
    return eta;
}

inline double capped_mass(std::span<const double> q, double eta, double mu, double delta, double cap) {
    double total = 0.0;
    for (double x : q) total += std::clamp(0.5 + (x - eta) / (2.0 * mu), 0.0, cap);
    return delta * total;
}

// Solves delta * sum clamp(1/2 + (Q - eta)/(2 mu), 0, C) = 1 exactly: the
// left side is piecewise linear in eta with kinks where a cell enters the
// support or reaches the cap.
inline double capped_threshold(std::span<const double> q, double mu, double delta, double cap) {
    std::vector<double> kinks;
    kinks.reserve(2 * q.size());
    for (double x : q) {
        kinks.push_back(x + mu);
        kinks.push_back(x + mu - 2.0 * mu * cap);
    }
    std::sort(kinks.begin(), kinks.end());
    // mass is non-increasing along kinks; first kink has mass K delta C >= 1.
    std::size_t lo = 0, hi = kinks.size() - 1;
    while (hi - lo > 1) {
        const auto mid = (lo + hi) / 2;
        if (capped_mass(q, kinks[mid], mu, delta, cap) >= 1.0)
            lo = mid;
        else
            hi = mid;
    }
    const double m_lo = capped_mass(q, kinks[lo], mu, delta, cap);
    const double m_hi = capped_mass(q, kinks[hi], mu, delta, cap);
    if (m_lo == m_hi) return kinks[lo];
    return kinks[lo] + (m_lo - 1.0) * (kinks[hi] - kinks[lo]) / (m_lo - m_hi);
}

}  // namespace detail

/// Unique maximizer of sum_k delta pi_k (Q_k + mu (1 - pi_k)) over densities
/// with delta sum pi = 1 and 0 <= pi <= cap. Cells are in the support exactly
/// when Q > eta_tilde - mu; without a binding cap this is the greedy
/// "advantage mass below 2 mu" rule over cells sorted by Q (ties broken by
/// lower index). Pass cap = infinity for no cap.
inline RowPolicy support_and_policy(std::span<const double> q, double mu, double delta, double cap) {
    if (!(mu > 0.0) || !(delta > 0.0) || !(cap > 0.0)) throw ConfigError("mu, delta and cap must be positive");
    if (static_cast<double>(q.size()) * delta * cap < 1.0)
        throw NumericError("infeasible cap: K * delta * C = " + std::to_string(q.size() * delta * cap) + " < 1");
    RowPolicy out;
    out.eta_tilde = detail::uncapped_threshold(q, mu, delta);
    double peak = 0.0;
    for (double x : q) peak = std::max(peak, 0.5 + (x - out.eta_tilde) / (2.0 * mu));
    if (peak > cap) {
        out.eta_tilde = detail::capped_threshold(q, mu, delta, cap);
        out.cap_active = true;
    }
    out.support.resize(q.size());
    out.density.resize(q.size());
    out.varpi.resize(q.size());
    for (std::size_t k = 0; k < q.size(); ++k) {
        const double raw = 0.5 + (q[k] - out.eta_tilde) / (2.0 * mu);
        out.support[k] = q[k] > out.eta_tilde - mu;
        out.density[k] = out.support[k] ? std::min(raw, cap) : 0.0;
        out.varpi[k] = std::max(0.0, out.eta_tilde - mu - q[k]);
    }
    return out;
}

/// Expectation form: delta * sum pi (Q + mu (1 - pi)).
inline double bmu_row(std::span<const double> q, const RowPolicy& pol, double mu, double delta) {
    double acc = 0.0;
    for (std::size_t k = 0; k < q.size(); ++k)
        if (pol.density[k] > 0.0) acc += pol.density[k] * (q[k] + mu * (1.0 - pol.density[k]));
    return delta * acc;
}

/// Closed form over the support split into interior cells W1 and capped cells
/// W2. Without capped cells this is
///   mu - (1 / 4mu) ((int_W Q - 2mu)^2 / sigma(W) - int_W Q^2).
/// With capped cells, pi = Q/(2mu) + rho on W1 where
/// rho = (1 - C sigma2)/sigma1 - int_W1 Q / (2 mu sigma1), giving
///   mu + int_W1 Q^2/(4mu) + C int_W2 Q - mu rho^2 sigma1 - mu C^2 sigma2.
inline double bmu_row_closed_form(std::span<const double> q, const RowPolicy& pol, double mu, double delta, double cap) {
    double sigma1 = 0.0, sigma2 = 0.0, q1 = 0.0, q2 = 0.0, qsq1 = 0.0;
    for (std::size_t k = 0; k < q.size(); ++k) {
        if (!pol.support[k]) continue;
        if (pol.density[k] >= cap) {
            sigma2 += delta;
            q2 += delta * q[k];
        } else {
            sigma1 += delta;
            q1 += delta * q[k];
            qsq1 += delta * q[k] * q[k];
        }
    }
    if (sigma2 == 0.0) return mu - ((q1 - 2.0 * mu) * (q1 - 2.0 * mu) / sigma1 - qsq1) / (4.0 * mu);
    if (sigma1 == 0.0) return mu + cap * q2 - mu * cap * cap * sigma2;
    const double rho = (1.0 - cap * sigma2) / sigma1 - q1 / (2.0 * mu * sigma1);
    return mu + qsq1 / (4.0 * mu) + cap * q2 - mu * rho * rho * sigma1 - mu * cap * cap * sigma2;
}

inline GridValue apply_bmu(const GridMDP& mdp, std::span<const double> v, double mu, double cap) {
    const auto q = q_from_v(mdp, v);
    GridValue out(mdp.n_states);
    for (std::size_t s = 0; s < mdp.n_states; ++s) {
        const auto pol = support_and_policy(q.row(s), mu, mdp.delta(), cap);
        out[s] = bmu_row(q.row(s), pol, mu, mdp.delta());
    }
    return out;
}

inline GridValue hard_bellman(const GridMDP& mdp, std::span<const double> v) {
    const auto q = q_from_v(mdp, v);
    GridValue out(mdp.n_states);
    for (std::size_t s = 0; s < mdp.n_states; ++s) {
        const auto row = q.row(s);
        out[s] = *std::max_element(row.begin(), row.end());
    }
    return out;
}

struct GridPolicy {
    Table density;
    Table varpi;
    std::vector<std::vector<char>> support;
    std::vector<double> eta_tilde;
    std::size_t capped_states = 0;
};

inline GridPolicy induced_policy(const GridMDP& mdp, std::span<const double> v, double mu, double cap) {
    const auto q = q_from_v(mdp, v);
    GridPolicy g{Table(mdp.n_states, mdp.n_actions), Table(mdp.n_states, mdp.n_actions), {}, {}, 0};
    for (std::size_t s = 0; s < mdp.n_states; ++s) {
        auto pol = support_and_policy(q.row(s), mu, mdp.delta(), cap);
        std::copy(pol.density.begin(), pol.density.end(), g.density.row(s).begin());
        std::copy(pol.varpi.begin(), pol.varpi.end(), g.varpi.row(s).begin());
        g.support.push_back(std::move(pol.support));
        g.eta_tilde.push_back(pol.eta_tilde);
        if (pol.cap_active) ++g.capped_states;
    }
    return g;
}

inline double sup_distance(std::span<const double> a, std::span<const double> b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

struct FixedPoint {
    GridValue value;
    GridPolicy policy;
    std::size_t iterations = 0;
    double residual = 0.0;  // sup-norm of the last update
};

/// Iterates v <- B_mu v from v = 0 until the sup-norm change is <= tol.
inline FixedPoint fixed_point(const GridMDP& mdp, double mu, double cap, double tol, std::size_t max_iter) {
    if (!(tol > 0.0)) throw ConfigError("tolerance must be positive");
    GridValue v(mdp.n_states, 0.0);
    double change = std::numeric_limits<double>::infinity();
    std::size_t it = 0;
    while (it < max_iter) {
        auto next = apply_bmu(mdp, v, mu, cap);
        change = sup_distance(next, v);
        v = std::move(next);
        ++it;
        if (change <= tol) return {v, induced_policy(mdp, v, mu, cap), it, change};
    }
    throw NumericError("fixed_point: " + std::to_string(max_iter) + " iterations exceeded, residual " +
                       std::to_string(change));
}

/// Hard-max value iteration, for the proximal-bias comparison.
inline GridValue hard_fixed_point(const GridMDP& mdp, double tol, std::size_t max_iter) {
    GridValue v(mdp.n_states, 0.0);
    for (std::size_t it = 0; it < max_iter; ++it) {
        auto next = hard_bellman(mdp, v);
        const double change = sup_distance(next, v);
        v = std::move(next);
        if (change <= tol) return v;
    }
    throw NumericError("hard_fixed_point: iteration limit exceeded");
}

/// Per-cell discrepancy of the stationarity identity
///   r + gamma P v - mu (2 pi - 1) - eta + varpi - v,  eta = eta_tilde - v.
/// Vanishes wherever 0 < pi < C; on capped cells it equals the cap multiplier.
inline Table stationarity_residual(const GridMDP& mdp, std::span<const double> v, const GridPolicy& pol, double mu) {
    const auto q = q_from_v(mdp, v);
    Table res(mdp.n_states, mdp.n_actions);
    for (std::size_t s = 0; s < mdp.n_states; ++s) {
        const double eta = pol.eta_tilde[s] - v[s];
        for (std::size_t k = 0; k < mdp.n_actions; ++k)
            res(s, k) = q(s, k) - mu * (2.0 * pol.density(s, k) - 1.0) - eta + pol.varpi(s, k) - v[s];
    }
    return res;
}

/// eta(s) = eta_tilde(s) - v(s), the state multiplier in the stationarity identity.
inline std::vector<double> state_multiplier(const GridPolicy& pol, std::span<const double> v) {
    std::vector<double> eta(v.size());
    for (std::size_t s = 0; s < v.size(); ++s) eta[s] = pol.eta_tilde[s] - v[s];
    return eta;
}

/// The screening set with the inequality as literally printed:
/// advantage mass of strictly better cells > 2 mu. It selects the cells the
/// KKT rule excludes, never the argmax.
inline std::vector<char> printed_screening_set(std::span<const double> q, double mu, double delta) {
    std::vector<char> out(q.size());
    for (std::size_t k = 0; k < q.size(); ++k) {
        double mass = 0.0;
        for (double x : q)
            if (x > q[k]) mass += delta * (x - q[k]);
        out[k] = mass > 2.0 * mu;
    }
    return out;
}

/// Largest Q change between neighbouring action cells: the grid slack Delta * Lip.
inline double grid_slack(const Table& q) {
    double m = 0.0;
    for (std::size_t s = 0; s < q.rows(); ++s)
        for (std::size_t k = 1; k < q.cols(); ++k) m = std::max(m, std::abs(q(s, k) - q(s, k - 1)));
    return m;
}

/// Random MDP with rewards and transitions smooth in the action:
///   r(s, a) = b0 + b1 sin(2 pi f a + phase) - b2 (a - c)^2
///   P(s' | s, a) proportional to exp(w_s' + u_s' a).
inline GridMDP random_grid_mdp(Rng& rng, std::size_t n_states, std::size_t n_actions, double gamma,
                               double a_lo = 0.0, double a_hi = 1.0) {
    GridMDP m;
    m.n_states = n_states;
    m.n_actions = n_actions;
    m.a_lo = a_lo;
    m.a_hi = a_hi;
    m.gamma = gamma;
    m.reward = Table(n_states, n_actions);
    m.transition.assign(n_states * n_actions * n_states, 0.0);
    constexpr double two_pi = 6.283185307179586;
    for (std::size_t s = 0; s < n_states; ++s) {
        const double b0 = rng.uniform(-1.0, 1.0), b1 = rng.uniform(0.0, 1.0), b2 = rng.uniform(0.0, 3.0);
        const double f = rng.uniform(0.5, 2.0), phase = rng.uniform(0.0, two_pi);
        const double c = rng.uniform(a_lo, a_hi);
        std::vector<double> w(n_states), u(n_states);
        for (std::size_t sp = 0; sp < n_states; ++sp) {
            w[sp] = rng.uniform(-1.0, 1.0);
            u[sp] = rng.uniform(-2.0, 2.0);
        }
        for (std::size_t k = 0; k < n_actions; ++k) {
            const double a = m.action(k);
            const double x = (a - a_lo) / (a_hi - a_lo);
            m.reward(s, k) = b0 + b1 * std::sin(two_pi * f * x + phase) - b2 * (a - c) * (a - c);
            double total = 0.0;
            for (std::size_t sp = 0; sp < n_states; ++sp) total += (m.p(s, k, sp) = std::exp(w[sp] + u[sp] * x));
            for (std::size_t sp = 0; sp < n_states; ++sp) m.p(s, k, sp) /= total;
        }
    }
    return m;
}

}  // namespace qol::grid
