#pragma once

// Plain-text run configuration: one `key = value` per line, '#' starts a
// comment. Unknown keys are rejected.
//
//   key           default       meaning
//   env           (none)        I, II, III or IV
//   n             25            trajectories to generate
//   T             24            transitions per trajectory
//   format        auto          csv or json; auto picks from the file extension
//   mu            0.1           proximal weight
//   cap           5             density cap C
//   gamma         0.9           discount
//   basis         polynomial2   polynomial2 or radial
//   radial_centers 10           radial basis: centres drawn from the data states
//   radial_width  1             radial basis width
//   action_width  auto          auto (from the environment), none, or a width
//   k0            1             eta sigmoid growth rate
//   b0            0             eta sigmoid midpoint
//   alpha0        0.002         initial learning rate
//   decay         1e-4          learning-rate decay d
//   batch         5             minibatch size in trajectories
//   eps           1e-5          stopping threshold on parameter movement
//   max_iters     20000         iteration cap
//   n_inits       200           multi-start draws
//   bandwidth     auto          auto (median heuristic) or a positive value
//   seed          0             master seed
//   rollouts      100           evaluation rollouts
//   horizon       100           evaluation horizon
//   mu_grid       0.01,0.05,0.1,0.2,0.3,0.5
//   seeds         10            replicates per mu in a sweep
//   mdps          20            random MDPs in oracle-check
//   states        6             oracle-check: largest |S|
//   actions       41            oracle-check: largest action grid K
//   oracle_mu     0.01,0.1,0.5  oracle-check: mu values for the value-gap check
//   oracle_gamma  auto          oracle-check: auto alternates 0.5 and 0.9
//   data, model, out, report    paths

#include <charconv>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "qol/envs.hpp"
#include "qol/error.hpp"
#include "qol/eval.hpp"
#include "qol/mdp_data.hpp"
#include "qol/optimizer.hpp"
#include "qol/qgauss_model.hpp"

namespace qol {

struct RunConfig {
    std::optional<EnvId> env;
    std::size_t n = 25;
    std::size_t T = 24;
    std::string format = "auto";
    double mu = 0.1;
    double cap = 5.0;
    double gamma = 0.9;
    std::string basis = "polynomial2";
    std::size_t radial_centers = 10;
    double radial_width = 1.0;
    std::string action_width = "auto";
    double k0 = 1.0;
    double b0 = 0.0;
    double alpha0 = 0.002;
    double decay = 1e-4;
    std::size_t batch = 5;
    double eps = 1e-5;
    std::size_t max_iters = 20000;
    std::size_t n_inits = 200;
    std::optional<double> bandwidth;
    std::uint64_t seed = 0;
    std::size_t rollouts = 100;
    std::size_t horizon = 100;
    std::vector<double> mu_grid = kDefaultMuGrid;
    std::size_t seeds = 10;
    std::size_t mdps = 20;
    std::size_t states = 6;
    std::size_t actions = 41;
    std::vector<double> oracle_mu{0.01, 0.1, 0.5};
    std::optional<double> oracle_gamma;
    std::string data, model, out, report;

    static const std::vector<std::string>& keys() {
        static const std::vector<std::string> k{
            "env",    "n",      "T",         "format", "mu",       "cap",     "gamma",  "basis",   "radial_centers",
            "radial_width", "action_width", "k0", "b0", "alpha0", "decay",   "batch",  "eps",     "max_iters",
            "n_inits", "bandwidth", "seed",  "rollouts", "horizon", "mu_grid", "seeds",  "mdps",    "states",
            "actions", "oracle_mu", "oracle_gamma", "data", "model",  "out",    "report"};
        return k;
    }

    void set(const std::string& key, const std::string& value);
    std::map<std::string, std::string> resolved() const;

    TrainConfig train_config() const {
        TrainConfig t;
        t.alpha0 = alpha0;
        t.decay = decay;
        t.batch = batch;
        t.eps = eps;
        t.max_iters = max_iters;
        t.n_inits = n_inits;
        t.seed = seed;
        return t;
    }
};

namespace detail {

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
    T out{};
    const auto* end = v.data() + v.size();
    const auto [ptr, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc() || ptr != end) throw ConfigError("invalid value '" + v + "' for key '" + key + "'");
    return out;
}

inline std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::vector<double> parse_list(const std::string& key, const std::string& v) {
    std::vector<double> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_number<double>(key, trim(item)));
    if (out.empty()) throw ConfigError("key '" + key + "' needs at least one value");
    return out;
}

}  // namespace detail

inline void RunConfig::set(const std::string& key, const std::string& value) {
    using detail::parse_number;
    const auto sz = [&] { return parse_number<std::size_t>(key, value); };
    const auto real = [&] { return parse_number<double>(key, value); };
    if (key == "env") env = parse_env(value);
    else if (key == "n") n = sz();
    else if (key == "T") T = sz();
    else if (key == "format") {
        if (value != "auto" && value != "csv" && value != "json") throw ConfigError("format must be auto, csv or json");
        format = value;
    } else if (key == "mu") mu = real();
    else if (key == "cap") cap = real();
    else if (key == "gamma") gamma = real();
    else if (key == "basis") {
        if (value != "polynomial2" && value != "radial") throw ConfigError("basis must be polynomial2 or radial");
        basis = value;
    } else if (key == "radial_centers") radial_centers = sz();
    else if (key == "radial_width") radial_width = real();
    else if (key == "action_width") {
        if (value != "auto" && value != "none") (void)real();
        action_width = value;
    } else if (key == "k0") k0 = real();
    else if (key == "b0") b0 = real();
    else if (key == "alpha0") alpha0 = real();
    else if (key == "decay") decay = real();
    else if (key == "batch") batch = sz();
    else if (key == "eps") eps = real();
    else if (key == "max_iters") max_iters = sz();
    else if (key == "n_inits") n_inits = sz();
    else if (key == "bandwidth") {
        if (value == "auto") bandwidth.reset();
        else {
            bandwidth = real();
            if (!(*bandwidth > 0.0)) throw ConfigError("bandwidth must be positive");
        }
    } else if (key == "seed") seed = parse_number<std::uint64_t>(key, value);
    else if (key == "rollouts") rollouts = sz();
    else if (key == "horizon") horizon = sz();
    else if (key == "mu_grid") mu_grid = detail::parse_list(key, value);
    else if (key == "seeds") seeds = sz();
    else if (key == "mdps") mdps = sz();
    else if (key == "states") states = sz();
    else if (key == "actions") actions = sz();
    else if (key == "oracle_mu") oracle_mu = detail::parse_list(key, value);
    else if (key == "oracle_gamma") {
        if (value == "auto") oracle_gamma.reset();
        else oracle_gamma = real();
    }
    else if (key == "data") data = value;
    else if (key == "model") model = value;
    else if (key == "out") out = value;
    else if (key == "report") report = value;
    else throw ConfigError("unknown configuration key '" + key + "'");
}

inline std::map<std::string, std::string> RunConfig::resolved() const {
    using detail::format_double;
    const auto join = [](const std::vector<double>& xs) {
        std::string s;
        for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? "," : "") + format_double(xs[i]);
        return s;
    };
    return {{"env", env ? to_string(*env) : ""},
            {"n", std::to_string(n)},
            {"T", std::to_string(T)},
            {"format", format},
            {"mu", format_double(mu)},
            {"cap", format_double(cap)},
            {"gamma", format_double(gamma)},
            {"basis", basis},
            {"radial_centers", std::to_string(radial_centers)},
            {"radial_width", format_double(radial_width)},
            {"action_width", action_width},
            {"k0", format_double(k0)},
            {"b0", format_double(b0)},
            {"alpha0", format_double(alpha0)},
            {"decay", format_double(decay)},
            {"batch", std::to_string(batch)},
            {"eps", format_double(eps)},
            {"max_iters", std::to_string(max_iters)},
            {"n_inits", std::to_string(n_inits)},
            {"bandwidth", bandwidth ? format_double(*bandwidth) : "auto"},
            {"seed", std::to_string(seed)},
            {"rollouts", std::to_string(rollouts)},
            {"horizon", std::to_string(horizon)},
            {"mu_grid", join(mu_grid)},
            {"seeds", std::to_string(seeds)},
            {"mdps", std::to_string(mdps)},
            {"states", std::to_string(states)},
            {"actions", std::to_string(actions)},
            {"oracle_mu", join(oracle_mu)},
            {"oracle_gamma", oracle_gamma ? format_double(*oracle_gamma) : "auto"},
            {"data", data},
            {"model", model},
            {"out", out},
            {"report", report}};
}

inline RunConfig parse_run_config(std::istream& in) {
    RunConfig cfg;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
        cfg.set(detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
    }
    return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config '" + path + "'");
    return parse_run_config(in);
}

}  // namespace qol
