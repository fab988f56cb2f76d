#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace qol {

/// Named random streams. Every consumer of randomness derives its generator
/// from (seed, stream, index) so results never depend on call order or on
/// how work is scheduled across threads.
enum class Stream : std::uint32_t {
    data = 1,       // dataset generation, index = trajectory
    init = 2,       // multi-start initialization
    minibatch = 3,  // SGD minibatch draws
    rollout = 4,    // policy evaluation, index = rollout
    bandwidth = 5,  // median-heuristic subsample
    oracle = 6,     // random grid MDPs for oracle checks
};

/// mt19937_64 seeded through std::seed_seq (both fully specified by the
/// standard), plus portable uniform and Gaussian draws. The standard
/// distribution objects are implementation-defined, so they are avoided.
class Rng {
public:
    explicit Rng(std::uint64_t seed, Stream stream = Stream::data, std::uint64_t index = 0) {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(index),
                          static_cast<std::uint32_t>(index >> 32)};
        engine_.seed(seq);
    }

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    /// Uniform integer in [0, n). Lemire-style rejection keeps it unbiased.
    std::uint64_t uniform_index(std::uint64_t n) {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

    /// Standard normal via the Marsaglia polar method.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform01() - 1.0;
            v = 2.0 * uniform01() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double factor = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * factor;
        has_spare_ = true;
        return u * factor;
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace qol
