#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace ionread {

// Generator identifier recorded in output metadata.
inline constexpr std::string_view kRngId = "xoshiro256++/splitmix64";

inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// xoshiro256++ with per-stream state derived from (master_seed, stream_id)
// via splitmix64. Streams with distinct ids are statistically independent,
// which is what makes trial campaigns reproducible under any parallel
// schedule: trial i owns stream i and nothing else touches it.
class Rng {
  public:
    Rng(uint64_t master_seed, uint64_t stream_id) {
        uint64_t sm = master_seed ^ (stream_id * 0xda942042e4dd58b5ULL);
        s_[0] = splitmix64(sm);
        s_[1] = splitmix64(sm);
        s_[2] = splitmix64(sm);
        s_[3] = splitmix64(sm);
    }

    uint64_t next_u64() {
        const uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
        const uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Exponential with the given mean; strictly positive.
    double exponential(double mean) { return -mean * std::log1p(-uniform()); }

    // Poisson sample. Sequential inversion below mean 10 (exact CDF walk,
    // the relevant regime here since per-sub-bin means are ~0.5), PTRS
    // transformed rejection above.
    uint32_t poisson(double mean) {
        if (mean <= 0.0) return 0;
        if (mean < 10.0) return poisson_inversion(mean);
        return poisson_ptrs(mean);
    }

  private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    uint32_t poisson_inversion(double mean) {
        const double target = uniform();
        uint32_t k = 0;
        double p = std::exp(-mean);
        double cdf = p;
        while (target > cdf) {
            ++k;
            p *= mean / k;
            cdf += p;
            if (p <= 0.0) break;  // exhausted double precision in the far tail
        }
        return k;
    }

    // Hormann's PTRS rejection sampler, valid for mean >= 10.
    uint32_t poisson_ptrs(double mean) {
        const double slam = std::sqrt(mean);
        const double loglam = std::log(mean);
        const double b = 0.931 + 2.53 * slam;
        const double a = -0.059 + 0.02483 * b;
        const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
        const double v_r = 0.9277 - 3.6224 / (b - 2.0);
        for (;;) {
            const double u = uniform() - 0.5;
            const double v = uniform();
            const double us = 0.5 - std::fabs(u);
            const double k = std::floor((2.0 * a / us + b) * u + mean + 0.43);
            if (us >= 0.07 && v <= v_r) return static_cast<uint32_t>(k);
            if (k < 0.0 || (us < 0.013 && v > us)) continue;
            if (std::log(v * inv_alpha / (a / (us * us) + b)) <=
                k * loglam - mean - std::lgamma(k + 1.0)) {
                return static_cast<uint32_t>(k);
            }
        }
    }

    uint64_t s_[4];
};

}  // namespace ionread
