#pragma once

#include <cstdint>
#include <cmath>
#include <vector>
#include <string_view>

namespace rewirelab {

// Deterministic splitmix64 generator. All randomness in the library flows
// through this type so that runs are reproducible bit-for-bit from a seed,
// independent of the standard library's distribution implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform double in [0, 1).
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). Rejection sampling keeps it unbiased.
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) return 0;
        std::uint64_t threshold = (~n + 1) % n;  // 2^64 mod n
        for (;;) {
            std::uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    int index(int n) { return static_cast<int>(below(static_cast<std::uint64_t>(n))); }

    // Box-Muller; one value per call (the pair's partner is discarded to keep
    // the stream position independent of call parity).
    double gaussian() {
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 1e-300) u1 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    double gaussian(double mean, double stddev) { return mean + stddev * gaussian(); }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // Derive an independent child stream. Used to give each (epoch, batch,
    // step, ...) site its own deterministic stream so that adding draws at
    // one site never shifts another site's sequence.
    Rng child(std::uint64_t tag) const {
        Rng r(state_ ^ (0xD1B54A32D192ED03ULL * (tag + 0x632BE59BD9B4E019ULL)));
        r.next_u64();
        return r;
    }

    std::uint64_t state() const { return state_; }

private:
    std::uint64_t state_;
};

// FNV-1a over a string tag; handy for naming derived streams.
inline std::uint64_t hash_tag(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (char c : s) {
        h ^= static_cast<std::uint8_t>(c);
        h *= 0x100000001B3ULL;
    }
    return h;
}

}  // namespace rewirelab
