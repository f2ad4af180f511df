#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

namespace mle {

    // xoshiro256** seeded through splitmix64. The std distributions are
    // implementation-defined, so the few we need are written out here to keep
    // runs reproducible across standard libraries. The whole state is four
    // words, which makes checkpointing trivial.
    class Rng {
    public:
        using result_type = std::uint64_t;
        using State = std::array<std::uint64_t, 4>;

        explicit Rng(std::uint64_t seed = 0) { reseed(seed); }

        static constexpr result_type min() { return 0; }
        static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

        void reseed(std::uint64_t seed)
        {
            std::uint64_t x = seed;
            for (auto& s : _s) {
                x += 0x9e3779b97f4a7c15ULL;
                std::uint64_t z = x;
                z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
                z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
                s = z ^ (z >> 31);
            }
        }

        result_type operator()() { return next(); }

        result_type next()
        {
            const std::uint64_t result = rotl(_s[1] * 5, 7) * 9;
            const std::uint64_t t = _s[1] << 17;
            _s[2] ^= _s[0];
            _s[3] ^= _s[1];
            _s[1] ^= _s[2];
            _s[0] ^= _s[3];
            _s[2] ^= t;
            _s[3] = rotl(_s[3], 45);
            return result;
        }

        /// Uniform in [0, 1).
        double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

        double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

        /// Uniform integer in [0, n). n must be positive.
        std::uint64_t below(std::uint64_t n)
        {
            // rejection sampling on the top of the range keeps it unbiased
            const std::uint64_t limit = max() - max() % n;
            std::uint64_t r;
            do {
                r = next();
            } while (r >= limit);
            return r % n;
        }

        /// Uniform integer in [lo, hi].
        std::int64_t integer(std::int64_t lo, std::int64_t hi)
        {
            return lo + static_cast<std::int64_t>(below(static_cast<std::uint64_t>(hi - lo) + 1));
        }

        bool bernoulli(double p) { return uniform() < p; }

        // Box-Muller, one draw per call (no cached spare, so the state stays four words).
        double normal(double mean = 0.0, double sd = 1.0)
        {
            double u1 = uniform();
            while (u1 <= 0.0)
                u1 = uniform();
            const double u2 = uniform();
            return mean + sd * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
        }

        const State& state() const { return _s; }
        void set_state(const State& s) { _s = s; }

        friend bool operator==(const Rng&, const Rng&) = default;

    private:
        static constexpr std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

        State _s{};
    };

} // namespace mle
