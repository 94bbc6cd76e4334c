#pragma once

#include <cstdint>
#include <random>

namespace paradiff {

// splitmix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
    return mix_seed(mix_seed(seed ^ mix_seed(a + 1)) ^ mix_seed(b + 0x51ed27u));
}

// Random source handed to every stochastic operation. Virtual so tests can
// inject deterministic draws (e.g. zero noise).
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}
    virtual ~Rng() = default;

    virtual double normal() { return normal_(engine_); }
    // Uniform in [0, 1).
    virtual double uniform() { return uniform_(engine_); }
    // Uniform integer in [lo, hi].
    virtual int uniform_int(int lo, int hi) {
        return lo + static_cast<int>(uniform() * static_cast<double>(hi - lo + 1)) % (hi - lo + 1);
    }
    bool bernoulli(double p) { return uniform() < p; }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace paradiff
