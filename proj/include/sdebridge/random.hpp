#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>

namespace sdebridge {

/// splitmix64 finaliser; decorrelates user seeds and derived stream indices.
inline std::uint64_t mix_seed(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

/// Deterministic generator handle. Every randomised operation in the library
/// takes a seed or one of these explicitly; there is no global RNG.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : gen_(mix_seed(seed)) {}

    double normal() { return normal_(gen_); }
    double uniform() { return uniform_(gen_); }

    void fill_normal(Eigen::VectorXd& z) {
        for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = normal();
    }

    /// Independent stream for concurrent work item `index`
    /// (seed xor index, then scrambled through the constructor).
    static Rng stream(std::uint64_t seed, std::uint64_t index) { return Rng(seed ^ index); }

  private:
    std::mt19937_64 gen_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace sdebridge
