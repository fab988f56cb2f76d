#pragma once

// Synthetic environments I-IV and behavior-policy data generation.
//
//   I   d=2, A in [0,1]:  S'_1 = g(A) S_1 + S_1 S_2 / 4 + e_1,  S'_2 = -g(A) S_2 + S_1 S_2 / 4 + e_2,
//                         g(A) = (1 - e^-A) / (1 + e^-A),
//                         R = 3 (-exp(S'_1 - S'_2) A^2 + (S'_1 + S'_2 + 0.5) A + S'_1 + S'_2)
//   II  d=2, A in [0,1]:  S'_1 = 0.75 (2A - 1) S_1 + S_1 S_2 / 4 + e_1,
//                         S'_2 = 0.75 (1 - 2A) S_2 + S_1 S_2 / 4 + e_2,
//                         R = S'_1^3 / 4 + 2 S'_1 + S'_2^3 / 2 + S'_2 + (2A - 1) / 4
//   III d=8, behavior A ~ U(-100, 100), learned actions unrestricted:
//                         S' ~ N(m, Sigma), m_j = tanh(+A/100 + S_j) for j <= 4,
//                                           m_j = tanh(-A/100 + S_j) for j >= 5,
//                         R = -exp(S'_1/2 + S'_5/2) (A/100)^2
//                             + 2 (S'_2 + S'_3 + S'_6 + S'_7 + 0.5) A/100 + S'_4 + S'_8
//   IV  transitions of III, R = (S'_1/2)^3 + (S'_2/2)^3 + S'_3 + S'_4
//                             + 2 ((S'_5/2)^3 + (S'_6/2)^3) + (S'_7 + S'_8) / 2
//
// Noise e ~ N(0, noise_sd^2) per coordinate (Sigma = noise_sd^2 I for III/IV).
// Initial states are N(0, init_sd^2) per coordinate.

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "qol/error.hpp"
#include "qol/mdp_data.hpp"
#include "qol/parallel.hpp"
#include "qol/rng.hpp"

namespace qol {

enum class EnvId { I, II, III, IV };

inline std::string to_string(EnvId id) {
    switch (id) {
        case EnvId::I: return "I";
        case EnvId::II: return "II";
        case EnvId::III: return "III";
        case EnvId::IV: return "IV";
    }
    return "?";
}

inline EnvId parse_env(const std::string& s) {
    if (s == "I" || s == "1") return EnvId::I;
    if (s == "II" || s == "2") return EnvId::II;
    if (s == "III" || s == "3") return EnvId::III;
    if (s == "IV" || s == "4") return EnvId::IV;
    throw ConfigError("unknown environment '" + s + "' (expected I, II, III or IV)");
}

struct EnvSpec {
    EnvId id = EnvId::I;
    std::size_t state_dim = 2;
    double behavior_lo = 0.0;  // behavior policy is U(behavior_lo, behavior_hi)
    double behavior_hi = 1.0;
    bool bounded_actions = true;  // learned actions are projected onto [behavior_lo, behavior_hi]
    double noise_sd = 0.5;
    double init_sd = 0.5;
    double gamma = 0.9;
};

inline EnvSpec make_env(EnvId id) {
    EnvSpec e;
    e.id = id;
    if (id == EnvId::III || id == EnvId::IV) {
        e.state_dim = 8;
        e.behavior_lo = -100.0;
        e.behavior_hi = 100.0;
        e.bounded_actions = false;
    }
    return e;
}

/// Width of the action set for environments whose learned actions are bounded.
inline std::optional<double> action_width(const EnvSpec& spec) {
    if (!spec.bounded_actions) return std::nullopt;
    return spec.behavior_hi - spec.behavior_lo;
}

struct EnvState {
    std::vector<double> state;
};

struct StepResult {
    std::vector<double> next_state;
    double reward = 0.0;
};

inline EnvState env_reset(const EnvSpec& spec, Rng& rng) {
    EnvState s{std::vector<double>(spec.state_dim)};
    for (auto& x : s.state) x = rng.normal(0.0, spec.init_sd);
    return s;
}

/// Noise-free part of the transition.
inline std::vector<double> env_mean_next(const EnvSpec& spec, std::span<const double> s, double a) {
    std::vector<double> m(spec.state_dim);
    switch (spec.id) {
        case EnvId::I: {
            const double g = (1.0 - std::exp(-a)) / (1.0 + std::exp(-a));
            const double cross = 0.25 * s[0] * s[1];
            m[0] = g * s[0] + cross;
            m[1] = -g * s[1] + cross;
            break;
        }
        case EnvId::II: {
            const double cross = 0.25 * s[0] * s[1];
            m[0] = 0.75 * (2.0 * a - 1.0) * s[0] + cross;
            m[1] = 0.75 * (1.0 - 2.0 * a) * s[1] + cross;
            break;
        }
        case EnvId::III:
        case EnvId::IV: {
            const double u = a / 100.0;
            for (std::size_t j = 0; j < 8; ++j) m[j] = std::tanh((j < 4 ? u : -u) + s[j]);
            break;
        }
    }
    return m;
}

inline double env_reward(const EnvSpec& spec, double a, std::span<const double> sp) {
    switch (spec.id) {
        case EnvId::I:
            return 3.0 * (-std::exp(sp[0] - sp[1]) * a * a + (sp[0] + sp[1] + 0.5) * a + sp[0] + sp[1]);
        case EnvId::II:
            return 0.25 * sp[0] * sp[0] * sp[0] + 2.0 * sp[0] + 0.5 * sp[1] * sp[1] * sp[1] + sp[1] +
                   0.25 * (2.0 * a - 1.0);
        case EnvId::III: {
            const double u = a / 100.0;
            return -std::exp(sp[0] / 2.0 + sp[4] / 2.0) * u * u + 2.0 * (sp[1] + sp[2] + sp[5] + sp[6] + 0.5) * u +
                   sp[3] + sp[7];
        }
        case EnvId::IV: {
            auto cube = [](double x) { return x * x * x; };
            return cube(sp[0] / 2.0) + cube(sp[1] / 2.0) + sp[2] + sp[3] + 2.0 * (cube(sp[4] / 2.0) + cube(sp[5] / 2.0)) +
                   0.5 * (sp[6] + sp[7]);
        }
    }
    return 0.0;
}

/// One transition: mean dynamics plus Gaussian noise, reward from the realized
/// next state. Consumes exactly state_dim normal draws.
inline StepResult env_step(const EnvSpec& spec, std::span<const double> s, double a, Rng& rng) {
    StepResult out{env_mean_next(spec, s, a), 0.0};
    for (auto& x : out.next_state) x += spec.noise_sd * rng.normal();
    out.reward = env_reward(spec, a, out.next_state);
    return out;
}

inline double behavior_action(const EnvSpec& spec, Rng& rng) { return rng.uniform(spec.behavior_lo, spec.behavior_hi); }

/// n trajectories of length T under the uniform behavior policy. Trajectory i
/// draws from its own stream (seed, data, i).
inline Dataset generate_dataset(const EnvSpec& spec, std::size_t n, std::size_t T, std::uint64_t seed) {
    if (n < 1 || T < 1) throw ConfigError("n and T must be at least 1");
    std::vector<Trajectory> trajs(n);
    parallel_for(n, [&](std::size_t i) {
        Rng rng(seed, Stream::data, i);
        auto st = env_reset(spec, rng);
        Trajectory tr;
        tr.id = static_cast<std::int64_t>(i);
        for (std::size_t t = 0; t < T; ++t) {
            const double a = behavior_action(spec, rng);
            auto step = env_step(spec, st.state, a, rng);
            tr.transitions.push_back({st.state, a, step.reward, step.next_state});
            st.state = std::move(step.next_state);
        }
        trajs[i] = std::move(tr);
    });
    return Dataset(std::move(trajs), to_string(spec.id), seed);
}

}  // namespace qol
