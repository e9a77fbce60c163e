#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace sqr {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Bad input: configuration, data or preconditions. The CLI maps it to exit code 1.
class UserError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Solver or matrix failure on valid input. The CLI maps it to exit code 2.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Random streams
//
// Every consumer of randomness derives its own generator from the root seed
// with stream_seed(root, domain, index). Domains keep e.g. draw b of the
// pivotal method and replication b of a Monte Carlo study apart, so that
// parallel execution reproduces the sequential result exactly.
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

enum class StreamDomain : std::uint64_t {
    PivotalDraw = 1,
    GaussianDraw = 2,
    WeightedBootstrap = 3,
    GradientBootstrap = 4,
    McReplication = 5,
    McDesign = 6,
    DgpSample = 7,
    MegaSample = 8,
    Retry = 9,
};

inline std::uint64_t stream_seed(std::uint64_t root, StreamDomain domain, std::uint64_t index) {
    std::uint64_t h = splitmix64(root);
    h = splitmix64(h ^ (static_cast<std::uint64_t>(domain) * 0xD1B54A32D192ED03ULL));
    return splitmix64(h ^ index);
}

/// xoshiro256** seeded through splitmix64. Output is fully specified, unlike
/// the std:: distributions, so draws are identical across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t x = seed;
        for (auto& s : state_) {
            x = splitmix64(x);
            s = x;
        }
    }

    std::uint64_t next() {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    /// Uniform on the open interval (0,1).
    double uniform() { return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53; }

    double standard_normal();
    double standard_exponential();

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
    std::uint64_t state_[4];
};

double normal_cdf(double x);
double normal_pdf(double x);
double normal_quantile(double p);

}  // namespace sqr
