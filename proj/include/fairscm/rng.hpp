#pragma once

#include <cmath>
#include <cstdint>
#include <span>

namespace fairscm {

/**
 * Counter-based random stream keyed by (seed, row index).
 *
 * Each (seed, row) pair opens an independent deterministic stream, so a
 * dataset sampled in one pass is bit-identical to the same dataset sampled
 * in arbitrary row chunks or in parallel. Within a stream, draws advance
 * a splitmix64 state.
 */
class RowRng {
public:
    RowRng(uint64_t seed, uint64_t row)
        : state_(mix64(mix64(seed + 0x9E3779B97F4A7C15ull) ^
                       mix64(row + 0xBF58476D1CE4E5B9ull))) {}

    uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ull;
        return mix64(state_);
    }

    /// Uniform draw strictly inside (0, 1); safe as a log() argument.
    double next_uniform() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    /// Gaussian draw via Box-Muller; always consumes exactly two uniforms.
    double next_normal(double mean, double stddev) {
        double u1 = next_uniform();
        double u2 = next_uniform();
        double z = std::sqrt(-2.0 * std::log(u1)) *
                   std::cos(2.0 * 3.14159265358979323846 * u2);
        return mean + stddev * z;
    }

    /// 0/1 draw; consumes one uniform.
    double next_bernoulli(double p) {
        return next_uniform() < p ? 1.0 : 0.0;
    }

    /// Index into `probs` by CDF walk; consumes one uniform.
    int next_categorical(std::span<const double> probs) {
        double u = next_uniform();
        double acc = 0.0;
        for (int i = 0; i < static_cast<int>(probs.size()); ++i) {
            acc += probs[i];
            if (u < acc) return i;
        }
        return static_cast<int>(probs.size()) - 1;
    }

    static uint64_t mix64(uint64_t x) {
        x += 0x9E3779B97F4A7C15ull;
        x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
        x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
        return x ^ (x >> 31);
    }

private:
    uint64_t state_;
};

} // namespace fairscm
