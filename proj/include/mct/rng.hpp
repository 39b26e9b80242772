#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace mct {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

/// Derives an independent stream seed from a master seed. All per-sample,
/// per-restart, and per-fold randomness flows through this so that a single
/// command seed reproduces every downstream draw.
inline std::uint64_t mix_seed(std::uint64_t master, std::uint64_t stream) {
    return splitmix64(master ^ splitmix64(stream + 1));
}

/// Deterministic RNG. mt19937_64 has a standardized output sequence, and the
/// distribution helpers below avoid <random> distributions, whose mappings
/// are implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t u64() { return gen_(); }

    // uniform in [0, n), unbiased via rejection
    std::uint64_t below(std::uint64_t n) {
        if (n <= 1) return 0;
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = gen_();
        } while (x >= limit);
        return x % n;
    }

    std::size_t index(std::size_t n) { return static_cast<std::size_t>(below(n)); }

    // uniform in [0, 1) with 53-bit resolution
    double unit() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    // standard normal, Box-Muller with cached spare
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = unit();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        const double u2 = unit();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // seeded partial Fisher-Yates: k distinct indices from [0, n)
    template <typename OutIt>
    void sample_without_replacement(std::size_t n, std::size_t k, OutIt out) {
        std::vector<std::size_t> idx(n);
        for (std::size_t i = 0; i < n; ++i) idx[i] = i;
        for (std::size_t i = 0; i < k; ++i) {
            const std::size_t j = i + index(n - i);
            std::swap(idx[i], idx[j]);
            *out++ = idx[i];
        }
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = index(i);
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 gen_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace mct
