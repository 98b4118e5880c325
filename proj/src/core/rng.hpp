#ifndef METANO_RNG_HPP
#define METANO_RNG_HPP

#include <cstdint>
#include <cmath>

namespace metano {

// SplitMix64 counter-based generator. Bitwise reproducible across platforms,
// unlike std::normal_distribution, so all experiment seeds flow through this.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // uniform in [0,1)
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // uniform in [lo,hi)
    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // standard normal via Box-Muller; caches the second deviate
    double gaussian() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        double u1 = 0.0;
        while (u1 == 0.0) u1 = next_double();
        double u2 = next_double();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        cached_ = r * std::sin(a);
        has_cached_ = true;
        return r * std::cos(a);
    }

private:
    std::uint64_t state_;
    bool has_cached_ = false;
    double cached_ = 0.0;
};

// Stateless seed derivation so parallel generation reproduces sequential output.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
    Rng r(base ^ (0x517cc1b727220a95ULL * (index + 1)));
    return r.next_u64();
}

} // namespace metano

#endif
