#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace dc {

// Deterministic RNG. std::uniform_* distributions are implementation-defined,
// so every draw here is spelled out explicitly and reproduces bit-for-bit
// given the same seed.
class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(seed) {}

    uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53 bits of mantissa.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n), n > 0. Rejection-free modulo is fine here;
    // the bias at 64 bits is far below anything observable.
    uint64_t below(uint64_t n) { return engine_() % n; }

    // Box-Muller, one value per call (the pair's second half is kept).
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1, u2;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    // Fisher-Yates sample of k distinct indices from [0, n).
    std::vector<uint64_t> sample_without_replacement(uint64_t n, uint64_t k) {
        std::vector<uint64_t> pool(n);
        for (uint64_t i = 0; i < n; ++i) pool[i] = i;
        std::vector<uint64_t> out;
        out.reserve(k);
        for (uint64_t i = 0; i < k && i < n; ++i) {
            const uint64_t j = i + below(n - i);
            std::swap(pool[i], pool[j]);
            out.push_back(pool[i]);
        }
        return out;
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace dc
