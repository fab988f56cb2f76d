#pragma once

// Offline trajectory data: types, CSV/JSON persistence, minibatching and the
// standardization statistics shared by the loss kernel.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "qol/error.hpp"
#include "qol/rng.hpp"

namespace qol {

struct Transition {
    std::vector<double> state;
    double action = 0.0;
    double reward = 0.0;
    std::vector<double> next_state;

    bool operator==(const Transition&) const = default;
};

struct Trajectory {
    std::int64_t id = 0;
    std::vector<Transition> transitions;

    std::size_t length() const { return transitions.size(); }
    bool operator==(const Trajectory&) const = default;
};

struct DatasetMeta {
    std::size_t state_dim = 0;
    std::size_t horizon = 0;  // T, shared by every trajectory
    std::optional<std::string> env;
    std::optional<std::uint64_t> seed;

    bool operator==(const DatasetMeta&) const = default;
};

enum class DataFormat { csv, json };

inline DataFormat format_from_path(const std::string& path) {
    auto dot = path.rfind('.');
    if (dot != std::string::npos && path.substr(dot) == ".json") return DataFormat::json;
    return DataFormat::csv;
}

class Dataset {
public:
    Dataset() = default;

    /// Builds and validates; meta.state_dim and meta.horizon are filled in.
    Dataset(std::vector<Trajectory> trajectories, std::optional<std::string> env = std::nullopt,
            std::optional<std::uint64_t> seed = std::nullopt)
        : trajectories_(std::move(trajectories)) {
        meta_.env = std::move(env);
        meta_.seed = seed;
        validate();
    }

    const std::vector<Trajectory>& trajectories() const { return trajectories_; }
    const Trajectory& operator[](std::size_t i) const { return trajectories_[i]; }
    const DatasetMeta& meta() const { return meta_; }
    std::size_t size() const { return trajectories_.size(); }
    bool empty() const { return trajectories_.empty(); }
    std::size_t state_dim() const { return meta_.state_dim; }
    std::size_t horizon() const { return meta_.horizon; }
    std::size_t transition_count() const { return size() * horizon(); }

    /// Assumption-2 diagnostic: largest |reward| in the data. Not enforced.
    double max_abs_reward() const {
        double m = 0.0;
        for (const auto& tr : trajectories_)
            for (const auto& t : tr.transitions) m = std::max(m, std::abs(t.reward));
        return m;
    }

    bool operator==(const Dataset&) const = default;

private:
    void validate() {
        if (trajectories_.empty()) throw DataError("empty dataset");
        const auto& first = trajectories_.front();
        if (first.transitions.empty()) throw DataError("trajectory " + std::to_string(first.id) + " is empty");
        meta_.state_dim = first.transitions.front().state.size();
        meta_.horizon = first.transitions.size();
        if (meta_.state_dim == 0) throw DataError("state dimension must be at least 1");
        for (const auto& tr : trajectories_) {
            if (tr.length() < 2)
                throw DataError("trajectory " + std::to_string(tr.id) + " has T=" + std::to_string(tr.length()) +
                                " < 2");
            if (tr.length() != meta_.horizon)
                throw DataError("inconsistent T: trajectory " + std::to_string(tr.id) + " has " +
                                std::to_string(tr.length()) + ", expected " + std::to_string(meta_.horizon));
            for (std::size_t t = 0; t < tr.length(); ++t) {
                const auto& x = tr.transitions[t];
                const std::string where = "trajectory " + std::to_string(tr.id) + " t=" + std::to_string(t);
                if (x.state.size() != meta_.state_dim || x.next_state.size() != meta_.state_dim)
                    throw DataError("inconsistent state dimension at " + where);
                auto finite = [](double v) { return std::isfinite(v); };
                if (!std::all_of(x.state.begin(), x.state.end(), finite) ||
                    !std::all_of(x.next_state.begin(), x.next_state.end(), finite) || !std::isfinite(x.action) ||
                    !std::isfinite(x.reward))
                    throw DataError("non-finite value at " + where);
            }
        }
    }

    std::vector<Trajectory> trajectories_;
    DatasetMeta meta_;
};

/// Read-only selection of whole trajectories from a dataset.
class DatasetView {
public:
    DatasetView(const Dataset& data, std::vector<std::size_t> indices)
        : data_(&data), indices_(std::move(indices)) {}

    explicit DatasetView(const Dataset& data) : data_(&data), indices_(data.size()) {
        std::iota(indices_.begin(), indices_.end(), std::size_t{0});
    }

    std::size_t size() const { return indices_.size(); }
    const Trajectory& operator[](std::size_t i) const { return (*data_)[indices_[i]]; }
    const std::vector<std::size_t>& indices() const { return indices_; }
    const Dataset& dataset() const { return *data_; }

private:
    const Dataset* data_;
    std::vector<std::size_t> indices_;
};

/// n0 distinct trajectories, uniformly without replacement (partial
/// Fisher-Yates). Order of the returned indices is the draw order.
inline DatasetView sample_minibatch(const Dataset& data, std::size_t n0, Rng& rng) {
    if (n0 < 1 || n0 > data.size())
        throw ConfigError("minibatch size " + std::to_string(n0) + " outside [1, " + std::to_string(data.size()) +
                          "]");
    std::vector<std::size_t> idx(data.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = 0; i < n0; ++i) {
        const auto j = i + rng.uniform_index(idx.size() - i);
        std::swap(idx[i], idx[j]);
    }
    idx.resize(n0);
    return DatasetView(data, std::move(idx));
}

/// Per-coordinate mean and population deviation of (state, action) pairs.
struct Standardizer {
    std::vector<double> mean;
    std::vector<double> sd;

    static Standardizer identity(std::size_t dim) { return {std::vector<double>(dim, 0.0), std::vector<double>(dim, 1.0)}; }

    std::size_t dim() const { return mean.size(); }

    /// Standardized concatenation [state..., action].
    std::vector<double> apply(std::span<const double> state, double action) const {
        std::vector<double> out(state.size() + 1);
        for (std::size_t i = 0; i < state.size(); ++i) out[i] = (state[i] - mean[i]) / sd[i];
        out.back() = (action - mean.back()) / sd.back();
        return out;
    }
};

inline Standardizer fit_standardizer(const Dataset& data) {
    if (data.empty()) throw DataError("empty dataset");
    const std::size_t d = data.state_dim() + 1;
    std::vector<double> sum(d, 0.0);
    double count = 0.0;
    for (const auto& tr : data.trajectories())
        for (const auto& x : tr.transitions) {
            for (std::size_t i = 0; i + 1 < d; ++i) sum[i] += x.state[i];
            sum.back() += x.action;
            count += 1.0;
        }
    Standardizer st{std::vector<double>(d), std::vector<double>(d, 0.0)};
    for (std::size_t i = 0; i < d; ++i) st.mean[i] = sum[i] / count;
    for (const auto& tr : data.trajectories())
        for (const auto& x : tr.transitions) {
            for (std::size_t i = 0; i + 1 < d; ++i) st.sd[i] += (x.state[i] - st.mean[i]) * (x.state[i] - st.mean[i]);
            st.sd.back() += (x.action - st.mean.back()) * (x.action - st.mean.back());
        }
    for (auto& s : st.sd) {
        s = std::sqrt(s / count);
        if (!(s > 0.0)) s = 1.0;
    }
    return st;
}

namespace detail {

inline std::string format_double(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    if (ec != std::errc{}) throw IoError("cannot format double");
    return std::string(buf, end);
}

inline double parse_double(std::string_view s, std::size_t row, std::string_view column) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        throw DataError("row " + std::to_string(row) + ": cannot parse column '" + std::string(column) + "' value '" +
                        std::string(s) + "'");
    return v;
}

inline std::int64_t parse_int(std::string_view s, std::size_t row, std::string_view column) {
    while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.remove_suffix(1);
    while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        throw DataError("row " + std::to_string(row) + ": cannot parse integer column '" + std::string(column) +
                        "' value '" + std::string(s) + "'");
    return v;
}

inline std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        auto pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

inline std::vector<std::string> csv_header(std::size_t state_dim) {
    std::vector<std::string> h{"traj_id", "t"};
    for (std::size_t i = 1; i <= state_dim; ++i) h.push_back("s_" + std::to_string(i));
    h.push_back("a");
    h.push_back("r");
    for (std::size_t i = 1; i <= state_dim; ++i) h.push_back("sp_" + std::to_string(i));
    return h;
}

struct Record {
    std::int64_t traj_id;
    std::int64_t t;
    Transition x;
    std::size_t row;
};

// Groups records by trajectory id, orders each trajectory by time index and
// checks per-record finiteness so errors can name the offending row.
inline Dataset assemble(std::vector<Record> records, std::optional<std::string> env,
                        std::optional<std::uint64_t> seed) {
    if (records.empty()) throw DataError("empty dataset");
    for (const auto& r : records) {
        auto finite = [](double v) { return std::isfinite(v); };
        if (!std::all_of(r.x.state.begin(), r.x.state.end(), finite) ||
            !std::all_of(r.x.next_state.begin(), r.x.next_state.end(), finite) || !std::isfinite(r.x.action) ||
            !std::isfinite(r.x.reward))
            throw DataError("row " + std::to_string(r.row) + ": non-finite value");
    }
    std::map<std::int64_t, std::vector<Record*>> groups;
    for (auto& r : records) groups[r.traj_id].push_back(&r);
    std::vector<Trajectory> trajs;
    for (auto& [id, recs] : groups) {
        std::sort(recs.begin(), recs.end(), [](const Record* a, const Record* b) { return a->t < b->t; });
        for (std::size_t i = 1; i < recs.size(); ++i)
            if (recs[i]->t == recs[i - 1]->t)
                throw DataError("row " + std::to_string(recs[i]->row) + ": duplicate time index " +
                                std::to_string(recs[i]->t) + " in trajectory " + std::to_string(id));
        Trajectory tr;
        tr.id = id;
        for (auto* r : recs) tr.transitions.push_back(std::move(r->x));
        trajs.push_back(std::move(tr));
    }
    return Dataset(std::move(trajs), std::move(env), seed);
}

}  // namespace detail

inline void save_dataset(const Dataset& data, const std::string& path, DataFormat format) {
    if (data.empty()) throw DataError("empty dataset");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    if (format == DataFormat::csv) {
        const auto header = detail::csv_header(data.state_dim());
        for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
        out << '\n';
        for (const auto& tr : data.trajectories())
            for (std::size_t t = 0; t < tr.length(); ++t) {
                const auto& x = tr.transitions[t];
                out << tr.id << ',' << t;
                for (double v : x.state) out << ',' << detail::format_double(v);
                out << ',' << detail::format_double(x.action) << ',' << detail::format_double(x.reward);
                for (double v : x.next_state) out << ',' << detail::format_double(v);
                out << '\n';
            }
    } else {
        nlohmann::json j;
        j["format"] = "qol-dataset";
        j["version"] = 1;
        nlohmann::json meta{{"state_dim", data.state_dim()}, {"horizon", data.horizon()}};
        if (data.meta().env) meta["env"] = *data.meta().env;
        if (data.meta().seed) meta["seed"] = *data.meta().seed;
        j["meta"] = meta;
        auto& recs = j["records"] = nlohmann::json::array();
        for (const auto& tr : data.trajectories())
            for (std::size_t t = 0; t < tr.length(); ++t) {
                const auto& x = tr.transitions[t];
                recs.push_back({{"traj_id", tr.id}, {"t", t}, {"s", x.state}, {"a", x.action}, {"r", x.reward},
                                {"sp", x.next_state}});
            }
        out << j.dump() << '\n';
    }
    out.flush();
    if (!out) throw IoError("write failed for '" + path + "'");
}

inline Dataset load_dataset(const std::string& path, DataFormat format) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::vector<detail::Record> records;
    std::optional<std::string> env;
    std::optional<std::uint64_t> seed;

    if (format == DataFormat::csv) {
        std::string line;
        if (!std::getline(in, line)) throw DataError("row 1: missing header");
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto cols = detail::split_csv(line);
        if (cols.size() < 6 || (cols.size() - 4) % 2 != 0)
            throw DataError("row 1: header has " + std::to_string(cols.size()) + " columns; expected 2*d_s + 4");
        const std::size_t d = (cols.size() - 4) / 2;
        const auto expected = detail::csv_header(d);
        for (std::size_t i = 0; i < cols.size(); ++i)
            if (cols[i] != expected[i])
                throw DataError("row 1: header column " + std::to_string(i + 1) + " is '" + std::string(cols[i]) +
                                "', expected '" + expected[i] + "'");
        std::size_t row = 1;
        while (std::getline(in, line)) {
            ++row;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty()) continue;
            const auto f = detail::split_csv(line);
            if (f.size() != cols.size())
                throw DataError("row " + std::to_string(row) + ": " + std::to_string(f.size()) + " fields, expected " +
                                std::to_string(cols.size()));
            detail::Record r;
            r.row = row;
            r.traj_id = detail::parse_int(f[0], row, expected[0]);
            r.t = detail::parse_int(f[1], row, expected[1]);
            r.x.state.resize(d);
            r.x.next_state.resize(d);
            for (std::size_t i = 0; i < d; ++i) r.x.state[i] = detail::parse_double(f[2 + i], row, expected[2 + i]);
            r.x.action = detail::parse_double(f[2 + d], row, "a");
            r.x.reward = detail::parse_double(f[3 + d], row, "r");
            for (std::size_t i = 0; i < d; ++i)
                r.x.next_state[i] = detail::parse_double(f[4 + d + i], row, expected[4 + d + i]);
            records.push_back(std::move(r));
        }
    } else {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(in);
        } catch (const nlohmann::json::exception& e) {
            throw DataError(std::string("JSON parse failure: ") + e.what());
        }
        if (!j.contains("records") || !j["records"].is_array()) throw DataError("JSON dataset lacks 'records' array");
        if (j.contains("meta")) {
            const auto& m = j["meta"];
            if (m.contains("env")) env = m["env"].get<std::string>();
            if (m.contains("seed")) seed = m["seed"].get<std::uint64_t>();
        }
        std::optional<std::size_t> d;
        std::size_t row = 0;
        for (const auto& rec : j["records"]) {
            ++row;
            auto num = [&](const nlohmann::json& v, const char* name) {
                if (v.is_null()) throw DataError("record " + std::to_string(row) + ": non-finite value in '" + name + "'");
                if (!v.is_number())
                    throw DataError("record " + std::to_string(row) + ": field '" + name + "' is not a number");
                return v.get<double>();
            };
            try {
                detail::Record r;
                r.row = row;
                r.traj_id = rec.at("traj_id").get<std::int64_t>();
                r.t = rec.at("t").get<std::int64_t>();
                for (const auto& v : rec.at("s")) r.x.state.push_back(num(v, "s"));
                for (const auto& v : rec.at("sp")) r.x.next_state.push_back(num(v, "sp"));
                r.x.action = num(rec.at("a"), "a");
                r.x.reward = num(rec.at("r"), "r");
                if (!d) d = r.x.state.size();
                if (r.x.state.size() != *d || r.x.next_state.size() != *d)
                    throw DataError("record " + std::to_string(row) + ": inconsistent state dimension");
                records.push_back(std::move(r));
            } catch (const nlohmann::json::exception& e) {
                throw DataError("record " + std::to_string(row) + ": " + e.what());
            }
        }
    }
    return detail::assemble(std::move(records), std::move(env), seed);
}

}  // namespace qol
