#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>

namespace fedstream {

// All randomness in a run flows from one master seed. Sub-streams are derived
// as derive_seed(master, component_tag, index), so runs replay identically
// regardless of evaluation order or platform (mt19937_64 is bit-specified;
// the samplers below avoid the implementation-defined std distributions).

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

namespace seed_tag {
constexpr std::uint64_t stream = 1;   // per-device instance stream
constexpr std::uint64_t node = 2;     // per-device node (drift gating, train seeds)
constexpr std::uint64_t server = 3;   // evaluator selection
constexpr std::uint64_t test_set = 4; // held-out test draw
constexpr std::uint64_t offset = 5;   // per-device mean offsets
} // namespace seed_tag

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t tag, std::uint64_t index = 0) {
    std::uint64_t s = master;
    splitmix64(s);
    s ^= splitmix64(s) + tag;
    splitmix64(s);
    s ^= splitmix64(s) + index;
    return splitmix64(s);
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform double in [0, 1), 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, n).
    std::size_t uniform_index(std::size_t n) {
        if (n == 0) throw std::invalid_argument("uniform_index: n must be positive");
        // Lemire unbiased bounded draw.
        while (true) {
            std::uint64_t x = engine_();
            __uint128_t m = static_cast<__uint128_t>(x) * n;
            auto lo = static_cast<std::uint64_t>(m);
            if (lo >= n || lo >= (std::uint64_t(0) - n) % n) return static_cast<std::size_t>(m >> 64);
        }
    }

    /// Standard normal via Box-Muller; consumes exactly two uniforms.
    double normal() {
        double u1 = 1.0 - uniform(); // (0, 1]
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    /// Gamma(shape, 1) via Marsaglia-Tsang; shape < 1 boosted through shape+1.
    double gamma(double shape) {
        if (!(shape > 0.0)) throw std::invalid_argument("gamma: shape must be positive");
        if (shape < 1.0) {
            double u = 1.0 - uniform();
            return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        while (true) {
            double x = normal();
            double v = 1.0 + c * x;
            if (v <= 0.0) continue;
            v = v * v * v;
            double u = uniform();
            if (u < 1.0 - 0.0331 * (x * x) * (x * x)) return d * v;
            if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
        }
    }

    /// Beta(a, b) as Ga/(Ga+Gb).
    double beta(double a, double b) {
        double x = gamma(a);
        double y = gamma(b);
        return x / (x + y);
    }

private:
    std::mt19937_64 engine_;
};

} // namespace fedstream
