#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace sslseg {

/// Tensor extents, outermost dimension first. Images are [B, C, H, W].
using Shape = std::vector<int>;

inline int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Raised when a training loss goes non-finite.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Counter-based deterministic RNG (splitmix64 core). Independent of the
/// standard library so sequences are identical across platforms and runs.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) { next(); }

    /// Derives an independent stream from a seed and up to three stream ids
    /// (e.g. image index, epoch). Same arguments, same stream.
    static Rng stream(uint64_t seed, uint64_t a, uint64_t b = 0, uint64_t c = 0) {
        uint64_t h = mix(seed + 0x9e3779b97f4a7c15ull);
        h = mix(h ^ mix(a + 0xbf58476d1ce4e5b9ull));
        h = mix(h ^ mix(b + 0x94d049bb133111ebull));
        h = mix(h ^ mix(c + 0xd6e8feb86659fd93ull));
        return Rng(h);
    }

    uint64_t next() {
        state_ += 0x9e3779b97f4a7c15ull;
        return mix(state_);
    }

    /// Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(next() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n).
    int64_t below(int64_t n) {
        return static_cast<int64_t>(next() % static_cast<uint64_t>(n));
    }

    /// Standard normal via Box-Muller; second draw is cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    /// Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(below(static_cast<int64_t>(i)));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    static uint64_t mix(uint64_t z) {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace sslseg
