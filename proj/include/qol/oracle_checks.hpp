#pragma once

// Operator-level invariants evaluated on random grid MDPs. Each check returns
// one row: the worst measured quantity, the threshold it is held to, and
// whether it passed.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "qol/error.hpp"
#include "qol/grid_oracle.hpp"
#include "qol/mdp_data.hpp"
#include "qol/rng.hpp"

namespace qol::oracle {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct CheckRow {
    std::string name;
    double worst = 0.0;
    double threshold = 0.0;
    bool pass = false;
    std::string detail;
};

struct OracleOptions {
    std::uint64_t seed = 0;
    std::size_t n_mdps = 20;
    std::size_t pairs = 100;       // value pairs per MDP for the contraction check
    std::size_t max_states = 6;
    std::size_t max_actions = 41;
    double cap = 5.0;
    std::size_t n_rows = 50;       // random Q rows for the adaptability check
    std::optional<double> gamma;   // overrides the 0.5 / 0.9 alternation
    std::vector<double> mu_list{0.01, 0.1, 0.5};  // fixed-point value-gap check

    void validate() const {
        if (max_states < 2) throw ConfigError("oracle suite needs at least 2 states");
        if (max_actions < 5) throw ConfigError("oracle suite needs at least 5 actions");
        if (!(cap > 0.0)) throw ConfigError("cap C must be positive");
        if (gamma && !(*gamma >= 0.0 && *gamma < 1.0)) throw ConfigError("gamma must lie in [0, 1)");
        if (mu_list.empty()) throw ConfigError("mu list is empty");
        for (double mu : mu_list)
            if (!(mu > 0.0)) throw ConfigError("mu values must be positive");
    }
};

/// MDP i of the suite: |S| in [2, max_states], K in [5, max_actions], gamma
/// alternating 0.5 / 0.9.
inline grid::GridMDP suite_mdp(const OracleOptions& opt, std::size_t i) {
    Rng rng(opt.seed, Stream::oracle, i);
    const auto s = 2 + rng.uniform_index(opt.max_states - 1);
    const auto k = 5 + rng.uniform_index(opt.max_actions - 4);
    return grid::random_grid_mdp(rng, s, k, opt.gamma.value_or(i % 2 == 0 ? 0.5 : 0.9));
}

inline std::vector<double> random_values(Rng& rng, std::size_t n, double scale) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(-scale, scale);
    return v;
}

/// ||B_mu v1 - B_mu v2|| <= gamma ||v1 - v2|| for random pairs; worst is the
/// largest ratio / gamma.
inline CheckRow check_contraction(const OracleOptions& opt) {
    CheckRow row{"contraction", 0.0, 1.0, true, ""};
    std::size_t violations = 0, total = 0;
    for (std::size_t i = 0; i < opt.n_mdps; ++i) {
        const auto mdp = suite_mdp(opt, i);
        Rng rng(opt.seed, Stream::oracle, 1000 + i);
        for (std::size_t j = 0; j < opt.pairs; ++j) {
            const double mu = std::exp(rng.uniform(std::log(0.01), std::log(2.0)));
            const auto v1 = random_values(rng, mdp.n_states, 10.0);
            const auto v2 = random_values(rng, mdp.n_states, 10.0);
            const double lhs = grid::sup_distance(grid::apply_bmu(mdp, v1, mu, opt.cap), grid::apply_bmu(mdp, v2, mu, opt.cap));
            const double rhs = mdp.gamma * grid::sup_distance(v1, v2);
            row.worst = std::max(row.worst, lhs / rhs);
            // rounding slack: both sides are sums of O(10) quantities
            if (lhs > rhs * (1.0 + 1e-12) + 1e-12) ++violations;
            ++total;
        }
    }
    row.pass = violations == 0;
    row.detail = std::to_string(violations) + " violations in " + std::to_string(total) + " pairs";
    return row;
}

/// mu(1 - C) - 10 slack <= B_mu v - B v <= mu + 10 slack, slack = Delta * Lip
/// measured as the largest neighbouring-cell change of Q.
inline CheckRow check_proximal_bias(const OracleOptions& opt) {
    CheckRow row{"proximal_bias", 0.0, 0.0, true, ""};
    std::size_t violations = 0, total = 0;
    for (std::size_t i = 0; i < opt.n_mdps; ++i) {
        const auto mdp = suite_mdp(opt, i);
        Rng rng(opt.seed, Stream::oracle, 2000 + i);
        for (std::size_t j = 0; j < 10; ++j) {
            const double mu = std::exp(rng.uniform(std::log(0.01), std::log(1.0)));
            const auto v = random_values(rng, mdp.n_states, 5.0);
            const double slack = 10.0 * grid::grid_slack(grid::q_from_v(mdp, v));
            const auto soft = grid::apply_bmu(mdp, v, mu, opt.cap);
            const auto hard = grid::hard_bellman(mdp, v);
            for (std::size_t s = 0; s < mdp.n_states; ++s) {
                const double gap = soft[s] - hard[s];
                const double excess = std::max(mu * (1.0 - opt.cap) - slack - gap, gap - mu - slack);
                row.worst = std::max(row.worst, excess);
                if (excess > 0.0) ++violations;
                ++total;
            }
        }
    }
    row.pass = violations == 0;
    row.detail = std::to_string(violations) + " violations in " + std::to_string(total) + " states (worst = largest excess)";
    return row;
}

/// With no cap, B_mu v -> B v as mu -> 0.
inline CheckRow check_bias_vanishes(const OracleOptions& opt, double mu = 1e-8, double tol = 1e-6) {
    CheckRow row{"bias_vanishes_small_mu", 0.0, tol, true, "mu = " + detail::format_double(mu) + ", C = inf"};
    for (std::size_t i = 0; i < opt.n_mdps; ++i) {
        const auto mdp = suite_mdp(opt, i);
        Rng rng(opt.seed, Stream::oracle, 3000 + i);
        const auto v = random_values(rng, mdp.n_states, 5.0);
        row.worst = std::max(row.worst, grid::sup_distance(grid::apply_bmu(mdp, v, mu, kInf), grid::hard_bellman(mdp, v)));
    }
    row.pass = row.worst <= tol;
    return row;
}

/// ||v*_mu - v*|| <= mu max(|1 - C|, 1) / (1 - gamma) + 10 slack / (1 - gamma).
inline CheckRow check_value_gap(const OracleOptions& opt) {
    CheckRow row{"fixed_point_value_gap", 0.0, 0.0, true, "worst = largest ratio gap / bound"};
    for (std::size_t i = 0; i < opt.n_mdps; ++i) {
        const auto mdp = suite_mdp(opt, i);
        const auto hard = grid::hard_fixed_point(mdp, 1e-12, 100000);
        const double slack = 10.0 * grid::grid_slack(grid::q_from_v(mdp, hard));
        for (double mu : opt.mu_list) {
            const auto fp = grid::fixed_point(mdp, mu, opt.cap, 1e-12, 100000);
            const double bound = (mu * std::max(std::abs(1.0 - opt.cap), 1.0) + slack) / (1.0 - mdp.gamma);
            row.worst = std::max(row.worst, grid::sup_distance(fp.value, hard) / bound);
        }
    }
    row.threshold = 1.0;
    row.pass = row.worst <= 1.0;
    return row;
}

struct StationarityResult {
    CheckRow residual;
    CheckRow slackness;
    CheckRow eta_range;
    std::size_t capped_states = 0;
};

/// At the fixed point: the stationarity residual on supported, uncapped cells;
/// varpi * pi == 0 exactly; eta in [-mu C, 0]. Without a binding cap
/// eta = -mu int pi^2. mu values are large enough that the cap rarely binds.
inline StationarityResult check_stationarity(const OracleOptions& opt, double tol = 1e-6) {
    StationarityResult out{{"stationarity_residual", 0.0, tol, true, ""},
                           {"complementary_slackness", 0.0, 0.0, true, ""},
                           {"eta_range", 0.0, 0.0, true, ""},
                           0};
    for (std::size_t i = 0; i < opt.n_mdps; ++i) {
        const auto mdp = suite_mdp(opt, i);
        for (double mu : {0.5, 1.0, 2.0}) {
            const auto fp = grid::fixed_point(mdp, mu, opt.cap, 1e-10, 100000);
            const auto res = grid::stationarity_residual(mdp, fp.value, fp.policy, mu);
            const auto eta = grid::state_multiplier(fp.policy, fp.value);
            out.capped_states += fp.policy.capped_states;
            for (std::size_t s = 0; s < mdp.n_states; ++s) {
                bool capped = false;
                for (std::size_t k = 0; k < mdp.n_actions; ++k) {
                    const double pi = fp.policy.density(s, k);
                    capped = capped || pi >= opt.cap;
                    if (pi > 0.0 && pi < opt.cap) out.residual.worst = std::max(out.residual.worst, std::abs(res(s, k)));
                    out.slackness.worst = std::max(out.slackness.worst, std::abs(pi * fp.policy.varpi(s, k)));
                }
                // on a capped state part of eta moves into the cap multiplier
                if (capped) continue;
                const double outside = std::max(-mu * opt.cap - eta[s], eta[s]);
                out.eta_range.worst = std::max(out.eta_range.worst, outside);
            }
        }
    }
    out.residual.pass = out.residual.worst <= tol;
    out.residual.detail = std::to_string(out.capped_states) + " capped states excluded";
    out.slackness.pass = out.slackness.worst == 0.0;
    out.eta_range.pass = out.eta_range.worst <= 0.0;
    out.eta_range.detail = "worst = largest distance outside [-mu C, 0] over uncapped states";
    return out;
}

/// Q row on K cells of [0, 1]: steep concave bump plus a small ripple.
inline std::vector<double> adaptability_row(Rng& rng, std::size_t K) {
    const double amp = rng.uniform(2e4, 1e5);
    const double m = rng.uniform(0.3, 0.7);
    const double f = rng.uniform(0.5, 2.0), phase = rng.uniform(0.0, 6.283185307179586);
    std::vector<double> q(K);
    for (std::size_t k = 0; k < K; ++k) {
        const double a = (static_cast<double>(k) + 0.5) / static_cast<double>(K);
        q[k] = amp * (-(a - m) * (a - m) + 0.05 * std::sin(6.283185307179586 * f * a + phase));
    }
    return q;
}

struct AdaptabilityResult {
    CheckRow distance;
    CheckRow support;
};

/// Over mu in {1, 10, 100, 1000} (no cap): sup-distance to uniform strictly
/// decreases and the support measure strictly increases, on every row.
inline AdaptabilityResult check_adaptability(const OracleOptions& opt, std::size_t K = 401) {
    AdaptabilityResult out{{"adaptability_distance_decreasing", 0.0, 0.0, true, ""},
                           {"adaptability_support_increasing", 0.0, 0.0, true, ""}};
    const double delta = 1.0 / static_cast<double>(K);
    std::size_t bad_d = 0, bad_s = 0;
    for (std::size_t r = 0; r < opt.n_rows; ++r) {
        Rng rng(opt.seed, Stream::oracle, 4000 + r);
        const auto q = adaptability_row(rng, K);
        double prev_d = kInf, prev_s = -1.0;
        bool ok_d = true, ok_s = true;
        for (double mu : {1.0, 10.0, 100.0, 1000.0}) {
            const auto pol = grid::support_and_policy(q, mu, delta, kInf);
            double d = 0.0, s = 0.0;
            for (std::size_t k = 0; k < K; ++k) {
                d = std::max(d, std::abs(pol.density[k] - 1.0));
                if (pol.support[k]) s += delta;
            }
            ok_d = ok_d && d < prev_d;
            ok_s = ok_s && s > prev_s;
            prev_d = d;
            prev_s = s;
        }
        bad_d += !ok_d;
        bad_s += !ok_s;
    }
    out.distance.worst = static_cast<double>(bad_d);
    out.distance.pass = bad_d == 0;
    out.distance.detail = std::to_string(bad_d) + " of " + std::to_string(opt.n_rows) + " rows not strictly decreasing";
    out.support.worst = static_cast<double>(bad_s);
    out.support.pass = bad_s == 0;
    out.support.detail = std::to_string(bad_s) + " of " + std::to_string(opt.n_rows) + " rows not strictly increasing";
    return out;
}

/// Delta * sum pi = 1 and the closed-form value agrees with the expectation
/// form on uncapped rows.
inline std::vector<CheckRow> check_policy_rows(const OracleOptions& opt) {
    CheckRow norm{"normalization", 0.0, 1e-10, true, ""};
    CheckRow dual{"closed_form_value", 0.0, 1e-10, true, "includes capped rows"};
    CheckRow argmax{"argmax_in_support", 0.0, 0.0, true, ""};
    CheckRow printed{"printed_screening_set_excludes_argmax", 0.0, 0.0, true,
                     "the literal inequality selects the complement of the KKT support"};
    std::size_t argmax_missing = 0, printed_has_argmax = 0;
    for (std::size_t i = 0; i < opt.n_mdps; ++i) {
        const auto mdp = suite_mdp(opt, i);
        Rng rng(opt.seed, Stream::oracle, 5000 + i);
        for (std::size_t j = 0; j < 10; ++j) {
            const double mu = std::exp(rng.uniform(std::log(0.01), std::log(2.0)));
            const auto v = random_values(rng, mdp.n_states, 5.0);
            const auto q = grid::q_from_v(mdp, v);
            for (std::size_t s = 0; s < mdp.n_states; ++s) {
                const auto row = q.row(s);
                const auto pol = grid::support_and_policy(row, mu, mdp.delta(), opt.cap);
                double mass = 0.0;
                for (double p : pol.density) mass += p;
                norm.worst = std::max(norm.worst, std::abs(mass * mdp.delta() - 1.0));
                const double a = grid::bmu_row(row, pol, mu, mdp.delta());
                const double b = grid::bmu_row_closed_form(row, pol, mu, mdp.delta(), opt.cap);
                dual.worst = std::max(dual.worst, std::abs(a - b) / std::max(1.0, std::abs(a)));
                const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
                argmax_missing += !pol.support[best];
                printed_has_argmax += grid::printed_screening_set(row, mu, mdp.delta())[best] != 0;
            }
        }
    }
    norm.pass = norm.worst <= norm.threshold;
    dual.pass = dual.worst <= dual.threshold;
    argmax.worst = static_cast<double>(argmax_missing);
    argmax.pass = argmax_missing == 0;
    printed.worst = static_cast<double>(printed_has_argmax);
    printed.pass = printed_has_argmax == 0;
    return {norm, dual, argmax, printed};
}

inline std::vector<CheckRow> run_all(const OracleOptions& opt) {
    opt.validate();
    std::vector<CheckRow> rows;
    rows.push_back(check_contraction(opt));
    rows.push_back(check_proximal_bias(opt));
    rows.push_back(check_bias_vanishes(opt));
    rows.push_back(check_value_gap(opt));
    auto st = check_stationarity(opt);
    rows.push_back(st.residual);
    rows.push_back(st.slackness);
    rows.push_back(st.eta_range);
    auto ad = check_adaptability(opt);
    rows.push_back(ad.distance);
    rows.push_back(ad.support);
    for (auto& r : check_policy_rows(opt)) rows.push_back(std::move(r));
    return rows;
}

inline void write_check_csv(const std::vector<CheckRow>& rows, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << "invariant,worst,threshold,status,detail\n";
    for (const auto& r : rows)
        out << r.name << ',' << detail::format_double(r.worst) << ',' << detail::format_double(r.threshold) << ','
            << (r.pass ? "pass" : "fail") << ",\"" << r.detail << "\"\n";
    if (!out) throw IoError("write failed for '" + path + "'");
}

}  // namespace qol::oracle
