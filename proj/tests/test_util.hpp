#pragma once

#include "sqr/common.hpp"
#include "sqr/qr_core.hpp"

#include <cstdint>

namespace sqr::testing {

/// Uniform on [lo, hi).
inline double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * rng.uniform(); }

/// Intercept plus (m - 1) uniform covariates on [-1, 1] and a heteroskedastic
/// linear response with normal errors.
inline Dataset random_dataset(std::uint64_t seed, Eigen::Index n, Eigen::Index m) {
    Rng rng(seed);
    Dataset d;
    d.z.resize(n, m);
    d.y.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        d.z(i, 0) = 1.0;
        for (Eigen::Index j = 1; j < m; ++j) d.z(i, j) = uniform(rng, -1.0, 1.0);
        double mean = 0.0;
        for (Eigen::Index j = 0; j < m; ++j) mean += (0.5 + 0.25 * static_cast<double>(j)) * d.z(i, j);
        const double scale = m > 1 ? 1.0 + 0.3 * d.z(i, 1) : 1.0;
        d.y(i) = mean + scale * rng.standard_normal();
    }
    return d;
}

/// Exact identity matrix check for flooring-sensitive tests.
inline bool bit_equal(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
    for (Eigen::Index i = 0; i < a.size(); ++i)
        if (a.data()[i] != b.data()[i]) return false;
    return true;
}

}  // namespace sqr::testing
