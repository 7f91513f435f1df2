#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace ncst {

/// All randomness in a run flows from one global seed. Components derive
/// their own streams with a stable tag so that adding a consumer never
/// perturbs the draws of another.
inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

inline uint64_t derive_seed(uint64_t global_seed, std::string_view tag) {
    return splitmix64(global_seed ^ fnv1a64(tag));
}

class RngStream {
  public:
    explicit RngStream(uint64_t seed) : gen_(seed) {}
    RngStream(uint64_t global_seed, std::string_view tag) : gen_(derive_seed(global_seed, tag)) {}

    std::mt19937_64& engine() { return gen_; }

    uint64_t u64() { return gen_(); }

    /// Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(gen_() >> 11) * (1.0 / 9007199254740992.0);
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [lo, hi] inclusive.
    int uniform_int(int lo, int hi) {
        return lo + static_cast<int>(u64() % static_cast<uint64_t>(hi - lo + 1));
    }

    double normal() {
        std::normal_distribution<double> d(0.0, 1.0);
        return d(gen_);
    }

    template <class T>
    void shuffle(std::vector<T>& xs) {
        for (size_t i = xs.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(u64() % i);
            std::swap(xs[i - 1], xs[j]);
        }
    }

    /// Sample k distinct indices from [0, n) in draw order.
    std::vector<int> sample_without_replacement(int n, int k) {
        std::vector<int> pool(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) pool[static_cast<size_t>(i)] = i;
        shuffle(pool);
        pool.resize(static_cast<size_t>(k));
        return pool;
    }

  private:
    std::mt19937_64 gen_;
};

}  // namespace ncst
