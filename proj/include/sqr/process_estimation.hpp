#pragma once

#include "sqr/common.hpp"
#include "sqr/qr_core.hpp"
#include "sqr/series_basis.hpp"

#include <optional>
#include <vector>

namespace sqr {

/// Strictly increasing quantile indices inside (0,1).
struct QuantileGrid {
    std::vector<double> points;

    /// lo, lo + step, ..., hi (hi included when it lies on the lattice).
    static QuantileGrid regular(double lo = 0.10, double hi = 0.90, double step = 0.01);

    std::size_t size() const { return points.size(); }
    double operator[](std::size_t k) const { return points[k]; }
    /// Index of u in the grid, or -1.
    int find(double u, double tol = 1e-12) const;
    void validate() const;
};

struct ProcessOptions {
    double bandwidth_alpha = 0.05;
    /// Sweep the grid starting each fit from the previous optimal vertex.
    /// When false every point is solved cold by the interior point method.
    bool warm_start = true;
};

/// beta(u) over a grid with the matrices needed for inference.
struct CoefficientProcess {
    QuantileGrid grid;
    Matrix betas;                          // grid x m
    Matrix gram;                           // Sigma_hat = E_n[Z Z']
    std::vector<Matrix> jacobians;         // Powell J_hat(u), symmetric
    std::vector<Matrix> jacobian_inverses; // floored inverses of the above
    Vector bandwidths;                     // Hall-Sheather h on the quantile scale
    Vector residual_bandwidths;            // h on the residual scale (used by Powell)
    Vector certificates;
    Vector objectives;
    std::vector<std::vector<int>> bases;   // optimal vertices, usable as warm starts
    Eigen::Index n = 0;
    double bandwidth_alpha = 0.05;
    std::optional<BasisSpec> basis;

    Eigen::Index m() const { return betas.cols(); }
    Vector beta(std::size_t k) const { return betas.row(static_cast<Eigen::Index>(k)).transpose(); }

    /// Recomputes jacobian_inverses from jacobians.
    void refresh_inverses();
};

/// (1/n) Z'Z, exactly symmetric.
Matrix estimate_gram(const Dataset& data);

/// h = n^{-1/3} z_{1-alpha/2}^{2/3} [1.5 phi(q)^2 / (2 q^2 + 1)]^{1/3}, q = Phi^{-1}(u),
/// halved until [u - h, u + h] lies inside (0,1).
double hall_sheather_bandwidth(double u, Eigen::Index n, double alpha = 0.05);

/// Converts a quantile-scale bandwidth to the residual scale:
/// (Phi^{-1}(u+h) - Phi^{-1}(u-h)) * min(sd(r), IQR(r)/1.34).
double residual_bandwidth(double u, double h, const Vector& residuals);

/// Powell estimate (1/2h) E_n[1{|Y_i - Z_i'beta| <= h} Z_i Z_i'].
Matrix estimate_jacobian(const Dataset& data, const Vector& beta, double h);

/// Fits every grid point. The basis is stored for downstream loadings.
CoefficientProcess fit_process(const Dataset& data, const QuantileGrid& grid, const ProcessOptions& options = {},
                               const std::optional<BasisSpec>& basis = std::nullopt);

}  // namespace sqr
