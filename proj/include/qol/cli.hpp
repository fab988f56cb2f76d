#pragma once

// The `qol` command line: gen-data, train, eval, cv, sweep and oracle-check.
// Every subcommand takes --config FILE; flags override config values.
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <chrono>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "qol/envs.hpp"
#include "qol/error.hpp"
#include "qol/eval.hpp"
#include "qol/manifest.hpp"
#include "qol/mdp_data.hpp"
#include "qol/optimizer.hpp"
#include "qol/oracle_checks.hpp"
#include "qol/qgauss_model.hpp"
#include "qol/run_config.hpp"

namespace qol::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

namespace detail {

/// Errors raised after arguments were accepted; reported with exit code 1
/// even when the underlying exception is a ConfigError (e.g. a malformed
/// model file).
class RuntimeFailure : public Error {
public:
    using Error::Error;
};

template <typename Fn>
auto at_runtime(Fn&& fn) {
    try {
        return fn();
    } catch (const ConfigError& e) {
        throw RuntimeFailure(e.what());
    }
}

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

/// Flag spellings: --max-iters for max_iters, with a few renames.
inline std::string flag_for(const std::string& key) {
    static const std::map<std::string, std::string> renamed{{"oracle_mu", "--mu-list"}, {"oracle_gamma", "--gamma"}};
    if (auto it = renamed.find(key); it != renamed.end()) return it->second;
    std::string f = "--" + key;
    for (auto& c : f)
        if (c == '_') c = '-';
    return f;
}

/// A subcommand with --config and one string flag per config key. Flag values
/// are applied over the config file through RunConfig::set.
class Command {
public:
    Command(CLI::App& app, const std::string& name, const std::string& help, std::vector<std::string> keys)
        : sub_(app.add_subcommand(name, help)), keys_(std::move(keys)) {
        sub_->add_option("--config", config_path_, "key = value configuration file");
        for (const auto& k : keys_) sub_->add_option(flag_for(k), raw_[k], "overrides config key '" + k + "'");
    }

    CLI::App* app() const { return sub_; }
    bool parsed() const { return sub_->parsed(); }

    RunConfig resolve() const {
        RunConfig cfg = config_path_.empty() ? RunConfig{} : load_config(config_path_);
        for (const auto& k : keys_)
            if (sub_->count(flag_for(k)) > 0) cfg.set(k, raw_.at(k));
        return cfg;
    }

    std::string command_line() const {
        std::string s = sub_->get_name();
        if (!config_path_.empty()) s += " --config " + config_path_;
        for (const auto& k : keys_)
            if (sub_->count(flag_for(k)) > 0) s += " " + flag_for(k) + " " + raw_.at(k);
        return s;
    }

private:
    static RunConfig load_config(const std::string& path) {
        try {
            return load_run_config(path);
        } catch (const IoError& e) {
            throw ConfigError(e.what());
        }
    }

    CLI::App* sub_;
    std::vector<std::string> keys_;
    std::string config_path_;
    std::map<std::string, std::string> raw_;
};

inline const std::vector<std::string> kModelKeys{"mu", "cap", "gamma", "basis", "radial_centers", "radial_width",
                                                  "action_width", "k0", "b0"};
inline const std::vector<std::string> kTrainKeys{"alpha0", "decay", "batch", "eps", "max_iters", "n_inits",
                                                  "bandwidth", "seed"};

inline std::vector<std::string> join(std::initializer_list<std::vector<std::string>> parts) {
    std::vector<std::string> out;
    for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
    return out;
}

inline DataFormat data_format(const RunConfig& cfg, const std::string& path) {
    if (cfg.format == "csv") return DataFormat::csv;
    if (cfg.format == "json") return DataFormat::json;
    return format_from_path(path);
}

inline const std::string& require(const std::string& value, const std::string& flag) {
    if (value.empty()) throw ConfigError(flag + " is required");
    return value;
}

inline EnvId require_env(const RunConfig& cfg) {
    if (!cfg.env) throw ConfigError("--env is required");
    return *cfg.env;
}

/// Radial centres are distinct data states drawn from stream (seed, init, 1).
inline BasisSpec make_basis(const RunConfig& cfg, const Dataset& data) {
    if (cfg.basis == "polynomial2") return BasisSpec::polynomial(data.state_dim());
    std::vector<std::vector<double>> states;
    for (const auto& tr : data.trajectories())
        for (const auto& x : tr.transitions) states.push_back(x.state);
    if (cfg.radial_centers < 1 || cfg.radial_centers > states.size())
        throw ConfigError("radial_centers must lie in [1, " + std::to_string(states.size()) + "]");
    Rng rng(cfg.seed, Stream::init, 1);
    for (std::size_t i = 0; i < cfg.radial_centers; ++i) std::swap(states[i], states[i + rng.uniform_index(states.size() - i)]);
    states.resize(cfg.radial_centers);
    return BasisSpec::radial(std::move(states), cfg.radial_width);
}

/// "auto" takes the action-set width of the environment the data came from;
/// unknown or unbounded environments leave the model unrestricted.
inline std::optional<double> resolve_action_width(const RunConfig& cfg, std::optional<EnvId> env) {
    if (cfg.action_width == "none") return std::nullopt;
    if (cfg.action_width != "auto") return std::stod(cfg.action_width);
    if (!env) return std::nullopt;
    return action_width(make_env(*env));
}

/// --env when given, else the tag stored in a JSON dataset. CSV files carry
/// no tag.
inline std::optional<EnvId> data_env(const RunConfig& cfg, const Dataset& data) {
    if (cfg.env) return cfg.env;
    if (!data.meta().env) return std::nullopt;
    try {
        return parse_env(*data.meta().env);
    } catch (const ConfigError&) {
        return std::nullopt;
    }
}

inline ModelConfig model_config(const RunConfig& cfg, BasisSpec basis, std::optional<EnvId> env) {
    ModelConfig m;
    m.mu = cfg.mu;
    m.cap = cfg.cap;
    m.gamma = cfg.gamma;
    m.basis = std::move(basis);
    m.action_width = resolve_action_width(cfg, env);
    m.validate();
    return m;
}

inline void write_manifest(const std::string& output, const Command& cmd, const RunConfig& cfg,
                           const std::vector<std::string>& inputs, const std::vector<std::string>& outputs,
                           Clock::time_point t0) {
    RunManifest m;
    m.command = cmd.command_line();
    m.config = cfg.resolved();
    for (const auto& p : inputs) m.add_input(p);
    for (const auto& p : outputs) m.add_output(p);
    m.wall_seconds = seconds_since(t0);
    m.write(manifest_path(output));
}

inline Dataset load_data(const RunConfig& cfg) {
    const auto& path = require(cfg.data, "--data");
    return at_runtime([&] { return load_dataset(path, data_format(cfg, path)); });
}

}  // namespace detail

inline int cmd_gen_data(const detail::Command& cmd, std::ostream& out) {
    const auto t0 = detail::Clock::now();
    const RunConfig cfg = cmd.resolve();
    const auto spec = make_env(detail::require_env(cfg));
    const auto& path = detail::require(cfg.out, "--out");
    if (cfg.n < 1 || cfg.T < 1) throw ConfigError("n and T must be at least 1");
    const auto data = generate_dataset(spec, cfg.n, cfg.T, cfg.seed);
    save_dataset(data, path, detail::data_format(cfg, path));
    detail::write_manifest(path, cmd, cfg, {}, {path}, t0);
    out << "wrote " << data.size() << " trajectories x " << cfg.T << " transitions to " << path << '\n';
    return kExitOk;
}

inline int cmd_train(const detail::Command& cmd, std::ostream& out, std::ostream& err) {
    const auto t0 = detail::Clock::now();
    const RunConfig cfg = cmd.resolve();
    const auto& model_path = detail::require(cfg.out, "--out");
    const std::string report_path = cfg.report.empty() ? model_path + ".report.csv" : cfg.report;
    const auto tc = cfg.train_config();
    tc.validate();
    const auto data = detail::load_data(cfg);
    const auto model = detail::model_config(cfg, detail::make_basis(cfg, data), detail::data_env(cfg, data));
    if (tc.batch > data.size()) throw ConfigError("batch size exceeds the number of trajectories");
    try {
        const auto fit = detail::at_runtime([&] { return train_full(data, model, tc, cfg.bandwidth, cfg.k0, cfg.b0); });
        save_model(fit.params, model, model_path);
        write_train_report(fit.report, report_path);
        detail::write_manifest(model_path, cmd, cfg, {cfg.data}, {model_path, report_path}, t0);
        out << "iterations " << fit.report.iterations() << (fit.report.converged ? " (converged)" : " (iteration cap)")
            << ", final loss " << qol::detail::format_double(fit.report.loss.back()) << ", bandwidth "
            << qol::detail::format_double(fit.kernel.bandwidth) << '\n';
        if (fit.bandwidth_degenerate) err << "warning: median-heuristic bandwidth was degenerate\n";
        if (fit.report.cap_warning)
            err << "warning: peak density " << qol::detail::format_double(fit.report.max_peak_density)
                << " exceeds C on some data state\n";
        out << "wrote " << model_path << ", " << report_path << '\n';
        return kExitOk;
    } catch (const TrainingError& e) {
        write_train_report(e.report(), report_path);
        detail::write_manifest(report_path, cmd, cfg, {cfg.data}, {report_path}, t0);
        err << "error: training failed: " << e.what() << " (report: " << report_path << ")\n";
        return kExitFailure;
    }
}

inline int cmd_eval(const detail::Command& cmd, bool behavior, std::ostream& out) {
    const auto t0 = detail::Clock::now();
    const RunConfig cfg = cmd.resolve();
    const auto spec = make_env(detail::require_env(cfg));
    if (!behavior) detail::require(cfg.model, "--model");
    if (cfg.rollouts < 1 || cfg.horizon < 1) throw ConfigError("rollouts and horizon must be at least 1");
    const auto rep = detail::at_runtime([&] {
        if (behavior) return evaluate_behavior(spec, cfg.rollouts, cfg.horizon, cfg.seed);
        const auto m = load_model(cfg.model);
        if (m.config.basis.state_dim != spec.state_dim)
            throw detail::RuntimeFailure("model state dimension does not match environment " + to_string(spec.id));
        return evaluate_policy(spec, m.params, m.config, cfg.rollouts, cfg.horizon, cfg.seed);
    });
    out << (behavior ? "behavior" : "learned") << " policy: mean " << qol::detail::format_double(rep.mean) << " sd "
        << qol::detail::format_double(rep.sd) << " median " << qol::detail::format_double(rep.quantiles[2]) << '\n';
    if (!cfg.out.empty()) {
        write_eval_report(rep, cfg.out);
        std::vector<std::string> inputs;
        if (!behavior) inputs.push_back(cfg.model);
        detail::write_manifest(cfg.out, cmd, cfg, inputs, {cfg.out}, t0);
    }
    return kExitOk;
}

inline int cmd_cv(const detail::Command& cmd, std::ostream& out) {
    const auto t0 = detail::Clock::now();
    const RunConfig cfg = cmd.resolve();
    const auto tc = cfg.train_config();
    tc.validate();
    const auto data = detail::load_data(cfg);
    const auto base = detail::model_config(cfg, detail::make_basis(cfg, data), detail::data_env(cfg, data));
    for (double mu : cfg.mu_grid)
        if (!(mu > 0.0)) throw ConfigError("mu grid values must be positive");
    const auto rep = detail::at_runtime([&] { return cross_validate_mu(data, cfg.mu_grid, base, tc, cfg.bandwidth); });
    for (std::size_t i = 0; i < rep.mu.size(); ++i)
        out << "mu " << qol::detail::format_double(rep.mu[i]) << " criterion "
            << qol::detail::format_double(rep.criterion[i]) << (i == rep.selected ? "  <- selected" : "") << '\n';
    if (!cfg.out.empty()) {
        write_cv_report(rep, cfg.out);
        detail::write_manifest(cfg.out, cmd, cfg, {cfg.data}, {cfg.out}, t0);
    }
    return kExitOk;
}

inline int cmd_sweep(const detail::Command& cmd, std::ostream& out) {
    const auto t0 = detail::Clock::now();
    const RunConfig cfg = cmd.resolve();
    const auto spec = make_env(detail::require_env(cfg));
    const auto tc = cfg.train_config();
    tc.validate();
    ModelConfig base;
    base.mu = cfg.mu;
    base.cap = cfg.cap;
    base.gamma = cfg.gamma;
    if (cfg.basis != "polynomial2") throw ConfigError("sweep supports the polynomial2 basis only");
    base.basis = BasisSpec::polynomial(spec.state_dim);
    base.action_width = detail::resolve_action_width(cfg, spec.id);
    base.validate();
    SweepConfig sw{cfg.n, cfg.T, cfg.seeds, cfg.rollouts, cfg.horizon, cfg.seed, cfg.bandwidth};
    if (sw.n_seeds < 1) throw ConfigError("--seeds must be at least 1");
    const auto rows = detail::at_runtime([&] { return sensitivity_sweep(spec, cfg.mu_grid, base, tc, sw); });
    for (const auto& r : rows)
        out << "mu " << qol::detail::format_double(r.mu) << " mean return " << qol::detail::format_double(r.mean_return)
            << " sd " << qol::detail::format_double(r.sd_return) << " (" << r.n_seeds << " seeds)\n";
    if (!cfg.out.empty()) {
        write_sweep_csv(rows, cfg.out);
        detail::write_manifest(cfg.out, cmd, cfg, {}, {cfg.out}, t0);
    }
    return kExitOk;
}

inline int cmd_oracle_check(const detail::Command& cmd, std::ostream& out) {
    const auto t0 = detail::Clock::now();
    const RunConfig cfg = cmd.resolve();
    oracle::OracleOptions opt;
    opt.seed = cfg.seed;
    opt.n_mdps = cfg.mdps;
    opt.max_states = cfg.states;
    opt.max_actions = cfg.actions;
    opt.cap = cfg.cap;
    opt.gamma = cfg.oracle_gamma;
    opt.mu_list = cfg.oracle_mu;
    opt.validate();
    const auto rows = detail::at_runtime([&] { return oracle::run_all(opt); });
    bool all = true;
    for (const auto& r : rows) {
        out << (r.pass ? "pass " : "FAIL ") << r.name << " worst=" << qol::detail::format_double(r.worst)
            << " threshold=" << qol::detail::format_double(r.threshold) << '\n';
        all = all && r.pass;
    }
    if (!cfg.out.empty()) {
        oracle::write_check_csv(rows, cfg.out);
        detail::write_manifest(cfg.out, cmd, cfg, {}, {cfg.out}, t0);
    }
    return all ? kExitOk : kExitFailure;
}

/// Entry point shared by the `qol` binary and the tests.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Quasi-optimal policy learning for continuous-action offline RL", "qol"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kToolVersion));
    using detail::Command;
    using detail::join;
    const Command gen(app, "gen-data", "simulate a behavior-policy dataset",
                      {"env", "n", "T", "seed", "format", "out"});
    const Command train(app, "train", "fit a q-Gaussian policy",
                        join({{"data", "env", "format", "out", "report"}, detail::kModelKeys, detail::kTrainKeys}));
    const Command eval(app, "eval", "Monte-Carlo evaluation of a fitted or the behavior policy",
                       {"env", "model", "rollouts", "horizon", "seed", "out"});
    bool behavior = false;
    eval.app()->add_flag("--behavior", behavior, "evaluate the uniform behavior policy instead of --model");
    const Command cv(app, "cv", "cross-validate mu over a grid",
                     join({{"data", "env", "format", "mu_grid", "out"}, detail::kModelKeys, detail::kTrainKeys}));
    const Command sweep(app, "sweep", "return sensitivity over a mu grid",
                        join({{"env", "n", "T", "mu_grid", "seeds", "rollouts", "horizon", "out"}, detail::kModelKeys,
                              detail::kTrainKeys}));
    const Command oracle_cmd(app, "oracle-check", "verify operator invariants on random grid MDPs",
                             {"seed", "mdps", "states", "actions", "oracle_mu", "cap", "oracle_gamma", "out"});
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
    }
    try {
        if (gen.parsed()) return cmd_gen_data(gen, out);
        if (train.parsed()) return cmd_train(train, out, err);
        if (eval.parsed()) return cmd_eval(eval, behavior, out);
        if (cv.parsed()) return cmd_cv(cv, out);
        if (sweep.parsed()) return cmd_sweep(sweep, out);
        if (oracle_cmd.parsed()) return cmd_oracle_check(oracle_cmd, out);
        return kExitUsage;
    } catch (const detail::RuntimeFailure& e) {
        err << "error: " << e.what() << '\n';
        return kExitFailure;
    } catch (const ConfigError& e) {
        err << "usage error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return kExitFailure;
    }
}

}  // namespace qol::cli
