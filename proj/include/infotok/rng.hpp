#pragma once

#include <cmath>
#include <cstdint>

namespace infotok::rng {

// Counter-based random streams. Every draw is a pure function of
// (seed, role, step, counter), so reruns and paired ablations consume
// identical randomness without storing any of it.

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

enum class Role : std::uint64_t {
    weight_init = 1,
    batch_indices = 2,
    noise_understand = 3,
    noise_generate = 4,
    data_latent = 5,
    data_image_noise = 6,
    data_text_noise = 7,
    image_anchor = 8,
    text_anchor = 9,
    probe_shuffle = 10,
    eval_batch = 11,
    eval_noise = 12,
    oracle = 13,
};

class Stream {
public:
    Stream(std::uint64_t seed, Role role, std::uint64_t step = 0)
        : state_(splitmix64(splitmix64(splitmix64(seed) ^ static_cast<std::uint64_t>(role)) ^ step)) {}

    std::uint64_t next_u64() {
        counter_ += 1;
        return splitmix64(state_ + counter_ * 0x9e3779b97f4a7c15ULL);
    }

    // Uniform in (0, 1]; never 0 so log() stays finite.
    double uniform() {
        return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    }

    // Uniform in [lo, hi).
    double uniform(double lo, double hi) {
        return lo + (uniform() - 0x1.0p-53) * (hi - lo);
    }

    // Integer in [0, n). n must be >= 1.
    std::uint64_t below(std::uint64_t n) {
        // 53-bit scaling; modulo bias is irrelevant for n << 2^53.
        auto r = static_cast<std::uint64_t>(uniform(0.0, 1.0) * static_cast<double>(n));
        return r >= n ? n - 1 : r;
    }

    // Standard normal via Box-Muller, one spare cached per pair.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

private:
    std::uint64_t state_;
    std::uint64_t counter_ = 0;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

} // namespace infotok::rng
