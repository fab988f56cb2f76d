#pragma once

// Quadratic-in-action Q model and the q-Gaussian policy it induces:
//
//   Q(s, a) = -exp(theta1' phi(s)) a^2 + theta2' phi(s) a + theta3' phi(s)
//
// The policy is a clipped downward parabola centred at the Q maximizer with a
// closed-form support whose half-width scales like mu^(1/3). Value, slack
// multiplier (varpi) and the sigmoid multiplier eta are all closed form.

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "qol/error.hpp"
#include "qol/rng.hpp"

namespace qol {

enum class BasisKind { polynomial2, radial };

/// Feature map phi(s). Component 0 is always the constant 1.
///  - polynomial2: (1, s_1..s_d, then s_i s_j for i <= j in row-major order)
///  - radial: (1, exp(-|s - c_k|^2 / (2 width^2)) for each centre c_k)
struct BasisSpec {
    BasisKind kind = BasisKind::polynomial2;
    std::size_t state_dim = 0;
    std::vector<std::vector<double>> centers;
    double width = 1.0;

    static BasisSpec polynomial(std::size_t d) { return {BasisKind::polynomial2, d, {}, 1.0}; }
    static BasisSpec radial(std::vector<std::vector<double>> centers, double width) {
        if (centers.empty()) throw ConfigError("radial basis needs at least one centre");
        const auto d = centers.front().size();
        return {BasisKind::radial, d, std::move(centers), width};
    }

    std::size_t dim() const {
        if (kind == BasisKind::polynomial2) return 1 + state_dim + state_dim * (state_dim + 1) / 2;
        return 1 + centers.size();
    }

    bool operator==(const BasisSpec&) const = default;
};

inline std::vector<double> basis_eval(std::span<const double> s, const BasisSpec& basis) {
    if (s.size() != basis.state_dim)
        throw ConfigError("state has dimension " + std::to_string(s.size()) + ", basis expects " +
                          std::to_string(basis.state_dim));
    std::vector<double> phi;
    phi.reserve(basis.dim());
    phi.push_back(1.0);
    if (basis.kind == BasisKind::polynomial2) {
        for (double v : s) phi.push_back(v);
        for (std::size_t i = 0; i < s.size(); ++i)
            for (std::size_t j = i; j < s.size(); ++j) phi.push_back(s[i] * s[j]);
    } else {
        for (const auto& c : basis.centers) {
            double d2 = 0.0;
            for (std::size_t i = 0; i < s.size(); ++i) d2 += (s[i] - c[i]) * (s[i] - c[i]);
            phi.push_back(std::exp(-d2 / (2.0 * basis.width * basis.width)));
        }
    }
    return phi;
}

struct ThetaParams {
    std::vector<double> theta1, theta2, theta3;
    bool operator==(const ThetaParams&) const = default;
};

/// eta(s) = -mu C / (1 + exp(-k0 (xi's - b0))). Only xi is trained.
struct XiParams {
    std::vector<double> xi;
    double k0 = 1.0;
    double b0 = 0.0;
    bool operator==(const XiParams&) const = default;
};

/// Everything the trainer optimizes. Flat layout: [theta1, theta2, theta3, xi].
struct ModelParams {
    ThetaParams theta;
    XiParams xi;

    static ModelParams zeros(std::size_t m, std::size_t state_dim) {
        return {{std::vector<double>(m, 0.0), std::vector<double>(m, 0.0), std::vector<double>(m, 0.0)},
                {std::vector<double>(state_dim, 0.0), 1.0, 0.0}};
    }

    std::size_t basis_dim() const { return theta.theta1.size(); }
    std::size_t flat_size() const { return 3 * basis_dim() + xi.xi.size(); }

    std::vector<double> flatten() const {
        std::vector<double> out;
        out.reserve(flat_size());
        for (const auto* v : {&theta.theta1, &theta.theta2, &theta.theta3, &xi.xi}) out.insert(out.end(), v->begin(), v->end());
        return out;
    }

    void assign(std::span<const double> flat) {
        if (flat.size() != flat_size()) throw ConfigError("parameter vector has wrong length");
        auto it = flat.begin();
        for (auto* v : {&theta.theta1, &theta.theta2, &theta.theta3, &xi.xi})
            for (auto& x : *v) x = *it++;
    }

    bool operator==(const ModelParams&) const = default;
};

struct ModelConfig {
    double mu = 0.1;
    double cap = 5.0;
    double gamma = 0.9;
    BasisSpec basis;
    // Length of a bounded action set. When set, a1 is confined to the range
    // where the support fits inside the action set and the peak is <= cap.
    std::optional<double> action_width;

    void validate() const {
        if (!(mu > 0.0)) throw ConfigError("mu must be positive");
        if (!(cap > 0.0)) throw ConfigError("cap C must be positive");
        if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in [0, 1)");
        if (basis.dim() < 1 || basis.state_dim < 1) throw ConfigError("basis dimension must be positive");
        if (action_width && !(*action_width > 1.5 / cap))
            throw ConfigError("action_width must exceed 3 / (2 C) so that a policy with peak <= C fits");
    }

    bool operator==(const ModelConfig&) const = default;
};

/// Q(a) = -a1 a^2 + a2 a + a3 with a1 > 0.
struct QuadCoeffs {
    double a1 = 1.0;
    double a2 = 0.0;
    double a3 = 0.0;
    bool clipped = false;  // theta1'phi hit the training clip

    double q(double a) const { return -a1 * a * a + a2 * a + a3; }
    double mode() const { return a2 / (2.0 * a1); }
    double q_max() const { return a3 + a2 * a2 / (4.0 * a1); }
};

enum class CoeffMode {
    evaluate,  // overflow of exp is an error
    training,  // theta1'phi clipped to +-kTrainingExpClip
};

inline constexpr double kTrainingExpClip = 50.0;
inline constexpr double kExpOverflow = 700.0;

inline double dot(std::span<const double> x, std::span<const double> y) {
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * y[i];
    return acc;
}

/// Range of log(a1) = theta1'phi.
struct ExpRange {
    double lo;
    double hi;
};

/// peak = (3/2)(a1 / 12mu)^(1/3) <= C and support width 2 (3/4) / peak <= w
/// translate to 12mu / w^3 <= a1 <= 12mu (2C/3)^3.
inline std::optional<ExpRange> admissible_range(const ModelConfig& cfg) {
    if (!cfg.action_width) return std::nullopt;
    const double w = *cfg.action_width;
    return ExpRange{std::log(12.0 * cfg.mu / (w * w * w)), std::log(12.0 * cfg.mu * std::pow(2.0 * cfg.cap / 3.0, 3))};
}

inline QuadCoeffs q_coeffs_from_features(std::span<const double> phi, const ThetaParams& theta,
                                         CoeffMode mode = CoeffMode::evaluate,
                                         const std::optional<ExpRange>& range = std::nullopt) {
    QuadCoeffs c;
    double z = dot(theta.theta1, phi);
    if (range && (z < range->lo || z > range->hi)) {
        z = std::clamp(z, range->lo, range->hi);
        c.clipped = true;
    }
    if (mode == CoeffMode::training) {
        if (z > kTrainingExpClip || z < -kTrainingExpClip) {
            z = std::clamp(z, -kTrainingExpClip, kTrainingExpClip);
            c.clipped = true;
        }
    } else if (z > kExpOverflow) {
        throw NumericError("exp overflow: theta1'phi = " + std::to_string(z) + " exceeds " +
                           std::to_string(kExpOverflow));
    }
    c.a1 = std::exp(z);
    c.a2 = dot(theta.theta2, phi);
    c.a3 = dot(theta.theta3, phi);
    return c;
}

inline QuadCoeffs q_coeffs(std::span<const double> s, const ThetaParams& theta, const BasisSpec& basis,
                           CoeffMode mode = CoeffMode::evaluate) {
    const auto phi = basis_eval(s, basis);
    return q_coeffs_from_features(phi, theta, mode);
}

inline QuadCoeffs q_coeffs(std::span<const double> s, const ThetaParams& theta, const ModelConfig& cfg,
                           CoeffMode mode = CoeffMode::evaluate) {
    const auto phi = basis_eval(s, cfg.basis);
    return q_coeffs_from_features(phi, theta, mode, admissible_range(cfg));
}

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
    double width() const { return hi - lo; }
    bool contains(double a) const { return a >= lo && a <= hi; }
};

inline double prox_circ(double x) { return 2.0 * x - 1.0; }

/// The q-Gaussian policy induced at one state by a concave quadratic Q.
///
///   density(a) = ( peak - (a1 / (2 mu)) (a - mode)^2 )^+,
///   peak = (3/2) (a1 / (12 mu))^(1/3),  half-width l = (12 a1^2 mu)^(1/3) / (2 a1).
class QGaussian {
public:
    QGaussian(const QuadCoeffs& c, double mu) : c_(c), mu_(mu) {
        half_width_ = std::cbrt(12.0 * c.a1 * c.a1 * mu) / (2.0 * c.a1);
        peak_ = 1.5 * std::cbrt(c.a1 / (12.0 * mu));
    }

    const QuadCoeffs& coeffs() const { return c_; }
    double mu() const { return mu_; }
    double mode() const { return c_.mode(); }
    double half_width() const { return half_width_; }
    double peak() const { return peak_; }
    Interval support() const { return {(c_.a2 - std::cbrt(12.0 * c_.a1 * c_.a1 * mu_)) / (2.0 * c_.a1),
                                       (c_.a2 + std::cbrt(12.0 * c_.a1 * c_.a1 * mu_)) / (2.0 * c_.a1)}; }

    /// The density before clipping at zero. Negative outside the support.
    double density_unclipped(double a) const {
        const double u = a - mode();
        return peak_ - c_.a1 / (2.0 * mu_) * u * u;
    }

    double density(double a) const { return std::max(0.0, density_unclipped(a)); }

    double cdf(double a) const {
        const double u = a - mode();
        const double l = half_width_;
        if (u <= -l) return 0.0;
        if (u >= l) return 1.0;
        return peak_ * ((u + l) - (u * u * u + l * l * l) / (3.0 * l * l));
    }

    /// Uniform proposals on the support, accepted with probability
    /// density/peak. Acceptance rate is exactly 2/3.
    double sample(Rng& rng) const {
        const auto w = support();
        for (int i = 0; i < 1'000'000; ++i) {
            const double a = rng.uniform(w.lo, w.hi);
            if (rng.uniform01() * peak_ <= density(a)) return a;
        }
        throw NumericError("rejection sampler exceeded iteration cap");
    }

    /// Closed-form integrals of Q and Q^2 over the support.
    struct Integrals {
        double sigma;  // support length
        double q;      // int Q
        double q2;     // int Q^2
        double q_centered2;  // int (Q - mean Q)^2
    };

    Integrals integrals() const {
        const double l = half_width_;
        const double a1 = c_.a1;
        const double qm = c_.q_max();
        const double l3 = l * l * l;
        const double l5 = l3 * l * l;
        return {2.0 * l, 2.0 * l * qm - 2.0 / 3.0 * a1 * l3,
                2.0 * l * qm * qm - 4.0 / 3.0 * qm * a1 * l3 + 0.4 * a1 * a1 * l5, 8.0 / 45.0 * a1 * a1 * l5};
    }

    /// Smoothed Bellman value at this state,
    ///   mu - (1 / 4mu) ((int Q - 2mu)^2 / sigma - int Q^2),
    /// expanded around the mean of Q on the support to avoid cancellation.
    double value() const {
        const auto in = integrals();
        const double qbar = in.q / in.sigma;
        return mu_ + qbar - mu_ / in.sigma + in.q_centered2 / (4.0 * mu_);
    }

    /// Slack multiplier, the negative part of the unclipped density.
    double varpi(double a) const { return std::max(0.0, -density_unclipped(a)); }

    /// Partial derivatives of value() with respect to (a1, a2, a3). Uses the
    /// reduced form value = q_max + mu - (6/5) mu peak.
    std::array<double, 3> value_grad() const {
        const double m = mode();
        return {-m * m - 2.0 * mu_ * peak_ / (5.0 * c_.a1), m, 1.0};
    }

    /// Partial derivatives of density_unclipped(a) with respect to (a1, a2, a3).
    std::array<double, 3> density_unclipped_grad(double a) const {
        const double u = a - mode();
        return {peak_ / (3.0 * c_.a1) - u * u / (2.0 * mu_) - u * mode() / mu_, u / (2.0 * mu_), 0.0};
    }

private:
    QuadCoeffs c_;
    double mu_;
    double half_width_;
    double peak_;
};

inline QGaussian policy_at(std::span<const double> s, const ThetaParams& theta, const ModelConfig& cfg,
                           CoeffMode mode = CoeffMode::evaluate) {
    return QGaussian(q_coeffs(s, theta, cfg, mode), cfg.mu);
}

inline Interval support(std::span<const double> s, const ThetaParams& theta, const ModelConfig& cfg) {
    return policy_at(s, theta, cfg).support();
}

inline double policy_density(double a, std::span<const double> s, const ThetaParams& theta, const ModelConfig& cfg) {
    return policy_at(s, theta, cfg).density(a);
}

inline double sample_action(std::span<const double> s, const ThetaParams& theta, const ModelConfig& cfg, Rng& rng) {
    return policy_at(s, theta, cfg).sample(rng);
}

inline double value(std::span<const double> s, const ThetaParams& theta, const ModelConfig& cfg) {
    return policy_at(s, theta, cfg).value();
}

inline double varpi(std::span<const double> s, double a, const ThetaParams& theta, const ModelConfig& cfg) {
    return policy_at(s, theta, cfg).varpi(a);
}

inline double eta(std::span<const double> s, const XiParams& xi, double mu, double cap) {
    const double z = xi.k0 * (dot(xi.xi, s) - xi.b0);
    return -mu * cap / (1.0 + std::exp(-z));
}

// ---------------------------------------------------------------------------
// Model files

inline constexpr int kModelSchemaVersion = 1;

inline nlohmann::json basis_to_json(const BasisSpec& b) {
    nlohmann::json j{{"kind", b.kind == BasisKind::polynomial2 ? "polynomial2" : "radial"}, {"state_dim", b.state_dim}};
    if (b.kind == BasisKind::radial) {
        j["centers"] = b.centers;
        j["width"] = b.width;
    }
    return j;
}

inline BasisSpec basis_from_json(const nlohmann::json& j) {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "polynomial2") return BasisSpec::polynomial(j.at("state_dim").get<std::size_t>());
    if (kind == "radial") {
        auto b = BasisSpec::radial(j.at("centers").get<std::vector<std::vector<double>>>(), j.at("width").get<double>());
        if (b.state_dim != j.at("state_dim").get<std::size_t>()) throw ConfigError("radial centre dimension mismatch");
        return b;
    }
    throw ConfigError("unknown basis kind '" + kind + "'");
}

inline void save_model(const ModelParams& p, const ModelConfig& cfg, const std::string& path) {
    nlohmann::json j{{"schema", "qol-model"},
                     {"version", kModelSchemaVersion},
                     {"theta1", p.theta.theta1},
                     {"theta2", p.theta.theta2},
                     {"theta3", p.theta.theta3},
                     {"xi", p.xi.xi},
                     {"k0", p.xi.k0},
                     {"b0", p.xi.b0},
                     {"mu", cfg.mu},
                     {"cap", cfg.cap},
                     {"gamma", cfg.gamma},
                     {"basis", basis_to_json(cfg.basis)},
                     {"action_width", cfg.action_width ? nlohmann::json(*cfg.action_width) : nlohmann::json()}};
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << j.dump(2) << '\n';
    if (!out) throw IoError("write failed for '" + path + "'");
}

struct LoadedModel {
    ModelParams params;
    ModelConfig config;
};

inline LoadedModel load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "'");
    LoadedModel m;
    try {
        const auto j = nlohmann::json::parse(in);
        if (j.at("schema").get<std::string>() != "qol-model") throw ConfigError("not a model file");
        if (j.at("version").get<int>() != kModelSchemaVersion)
            throw ConfigError("model schema version " + std::to_string(j.at("version").get<int>()) +
                              " is not supported");
        m.params.theta.theta1 = j.at("theta1").get<std::vector<double>>();
        m.params.theta.theta2 = j.at("theta2").get<std::vector<double>>();
        m.params.theta.theta3 = j.at("theta3").get<std::vector<double>>();
        m.params.xi.xi = j.at("xi").get<std::vector<double>>();
        m.params.xi.k0 = j.at("k0").get<double>();
        m.params.xi.b0 = j.at("b0").get<double>();
        m.config.mu = j.at("mu").get<double>();
        m.config.cap = j.at("cap").get<double>();
        m.config.gamma = j.at("gamma").get<double>();
        m.config.basis = basis_from_json(j.at("basis"));
        if (const auto& w = j.at("action_width"); !w.is_null()) m.config.action_width = w.get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("model file '" + path + "': " + e.what());
    }
    const auto mdim = m.config.basis.dim();
    for (const auto* v : {&m.params.theta.theta1, &m.params.theta.theta2, &m.params.theta.theta3})
        if (v->size() != mdim)
            throw ConfigError("theta length " + std::to_string(v->size()) + " does not match basis dimension " +
                              std::to_string(mdim));
    if (m.params.xi.xi.size() != m.config.basis.state_dim) throw ConfigError("xi length does not match state dimension");
    if (!(m.params.xi.k0 > 0.0)) throw ConfigError("k0 must be positive");
    m.config.validate();
    return m;
}

}  // namespace qol
