// Apache License, Version 2.0, refer to LICENSE.txt
//
// Self-contained random number generation so that seeded streams are
// identical across platforms and standard-library versions. The core
// generator is xoshiro256++ seeded through splitmix64; substreams are
// derived from (seed, stream index), which keeps parallel generation
// reproducible regardless of scheduling.

#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace vmfmix {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t rotl(std::uint64_t v, int k) {
    return (v << k) | (v >> (64 - k));
}

}  // namespace detail

class Rng {
  public:
    explicit Rng(std::uint64_t seed) : seed_(seed) {
        std::uint64_t sm = seed;
        for (auto& w : s_)
            w = detail::splitmix64(sm);
    }

    // Independent substream for a given index (e.g. document number).
    Rng split(std::uint64_t stream) const {
        std::uint64_t sm = seed_ ^ (0x2545f4914f6cdd1dULL * (stream + 1));
        return Rng(detail::splitmix64(sm));
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = detail::rotl(s_[0] + s_[3], 23) + s_[0];
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = detail::rotl(s_[3], 45);
        return result;
    }

    // Uniform on [0, 1) with 53 random bits.
    double uniform() {
        return (next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform on (0, 1], safe as a log() argument.
    double uniform_pos() {
        return 1.0 - uniform();
    }

    // Standard normal via Box-Muller; the spare draw is cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double r = std::sqrt(-2.0 * std::log(uniform_pos()));
        const double theta = 2.0 * 3.141592653589793238462643 * uniform();
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    // Gamma(shape, 1) by Marsaglia-Tsang, with the standard boost for
    // shape < 1.
    double gamma(double shape) {
        if (!(shape > 0.0))
            throw std::domain_error("Rng::gamma: shape must be > 0");
        if (shape < 1.0) {
            const double u = uniform_pos();
            return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x, v;
            do {
                x = normal();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = uniform_pos();
            if (u < 1.0 - 0.0331 * x * x * x * x)
                return d * v;
            if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v)))
                return d * v;
        }
    }

    std::uint64_t seed() const { return seed_; }

  private:
    std::uint64_t seed_;
    std::uint64_t s_[4];
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace vmfmix
