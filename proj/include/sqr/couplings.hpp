#pragma once

#include "sqr/common.hpp"
#include "sqr/process_estimation.hpp"
#include "sqr/qr_core.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace sqr {

enum class CouplingMethod { Pivotal, Gaussian, WeightedBootstrap, GradientBootstrap };

std::string to_string(CouplingMethod method);
/// Accepts "pivotal", "gaussian", "weighted", "gradient".
CouplingMethod coupling_method_from_string(const std::string& name);

/// How the gradient bootstrap perturbation reaches the solver.
enum class GradientPath {
    LinearTerm,           // linear objective term handled by the solver
    AugmentedObservation  // one extra row (X_{n+1}, Y_{n+1}) with a large response
};

/// B draws of the scaled process sqrt(n)(beta_hat(u) - beta(u)) on the grid.
struct ProcessDraws {
    CouplingMethod method = CouplingMethod::Pivotal;
    std::uint64_t seed = 0;
    std::vector<Matrix> draws;  // B matrices, grid x m
    /// Largest certificate / bound ratio over all refits (bootstraps only).
    double max_certificate_ratio = 0.0;
    /// Draws that needed the retry stream (weighted bootstrap).
    int retries = 0;

    int B() const { return static_cast<int>(draws.size()); }
};

struct CouplingOptions {
    bool parallel = true;
    GradientPath path = GradientPath::LinearTerm;
    /// Test hooks: bootstrap weights all equal to one / perturbation forced to zero.
    bool unit_weights = false;
    bool zero_perturbation = false;
};

/// J^{-1}(u) n^{-1/2} sum_i Z_i (u - 1{U_i <= u}) with one uniform sample per draw.
ProcessDraws draw_pivotal(const CoefficientProcess& proc, const Matrix& z, int B, std::uint64_t seed,
                          const CouplingOptions& options = {});

/// J^{-1}(u) Sigma^{1/2} BB(u) with BB an m-vector of independent Brownian
/// bridges sampled exactly on the grid.
ProcessDraws draw_gaussian(const CoefficientProcess& proc, int B, std::uint64_t seed,
                           const CouplingOptions& options = {});

/// sqrt(n)(beta_b(u) - beta_hat(u)) with beta_b fitted under standard
/// exponential weights. A failed draw is retried once with fresh weights.
ProcessDraws draw_weighted_bootstrap(const Dataset& data, const CoefficientProcess& proc, int B, std::uint64_t seed,
                                     const CouplingOptions& options = {});

/// sqrt(n)(beta*(u) - beta_hat(u)) with beta* minimizing E_n rho_u - U*(u)'beta/sqrt(n).
ProcessDraws draw_gradient_bootstrap(const Dataset& data, const CoefficientProcess& proc, int B, std::uint64_t seed,
                                     const CouplingOptions& options = {});

/// The pivotal gradient n^{-1/2} sum_i Z_i (u - 1{U_i <= u}) on the grid (grid x m).
Matrix pivotal_gradient(const Matrix& z, const std::vector<double>& uniforms, const QuantileGrid& grid);

/// Uniforms U_1..U_n of draw b for the given method's stream.
std::vector<double> draw_uniforms(std::uint64_t seed, StreamDomain domain, std::uint64_t index, Eigen::Index n);

/// Result of one gradient-bootstrap refit at a single quantile.
struct GradientRefit {
    QrFit fit;
    /// Perturbed objective E_n rho_u + U*'beta/sqrt(n) at fit.beta.
    double objective = 0.0;
    /// Y_{n+1} - X_{n+1}'beta (augmented path only; +inf otherwise).
    double guard_residual = 0.0;
};

/// Solves min E_n rho_u(Y - Z'beta) + U*'beta/sqrt(n) at u through the selected path.
/// Its first-order condition matches sqrt(n) E_n[Z(u - 1{Y <= Z'beta})] to U*,
/// which is attainable, so the problem is always bounded. The solver's
/// perturbation argument is therefore -U*.
GradientRefit gradient_refit(const Dataset& data, double u, const Vector& ustar, GradientPath path,
                             const std::vector<int>* warm_basis = nullptr);

namespace reference {

/// Direct double loop over observations and grid points, no sorting and no threads.
ProcessDraws draw_pivotal(const CoefficientProcess& proc, const Matrix& z, int B, std::uint64_t seed);

/// Bridges from a Cholesky factor of the full grid covariance.
ProcessDraws draw_gaussian(const CoefficientProcess& proc, int B, std::uint64_t seed);

}  // namespace reference

}  // namespace sqr
