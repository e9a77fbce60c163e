#pragma once

#include "sqr/common.hpp"

#include <optional>
#include <vector>

namespace sqr {

/// Response, design and optional positive observation weights.
struct Dataset {
    Vector y;
    Matrix z;        // n x m, rows Z_i'
    Vector weights;  // empty means all ones

    Eigen::Index n() const { return y.size(); }
    Eigen::Index m() const { return z.cols(); }
    bool weighted() const { return weights.size() != 0; }
    double weight(Eigen::Index i) const { return weighted() ? weights(i) : 1.0; }

    /// Throws UserError unless n >= m, all entries finite and weights > 0.
    void validate() const;
};

/// Throws NumericalError naming a null-space combination of columns if z is
/// rank deficient.
void check_full_rank(const Matrix& z);

struct QrFit {
    Vector beta;
    double u = 0.5;
    /// (1/n) sum_i w_i rho_u(Y_i - Z_i'beta) - p'beta / sqrt(n)
    double objective = 0.0;
    int n_interpolated = 0;
    std::optional<Vector> perturbation;
    /// Rows interpolated by the vertex; reusable as a warm start.
    std::vector<int> basis;
    int ipm_iterations = 0;
    int pivots = 0;
};

struct SolveOptions {
    double gap_tolerance = 1e-10;
    int max_iterations = 200;
    /// Start the simplex phase from this vertex instead of running the
    /// interior point method. Ignored if the rows are singular.
    const std::vector<int>* warm_basis = nullptr;
};

/// rho_u(z) = (u - 1{z < 0}) z
double check_loss(double z, double u);

/// Mean perturbed check loss at beta.
double qr_objective(const Dataset& data, double u, const Vector& beta, const std::optional<Vector>& perturbation = {});

/// Minimizes (1/n) sum_i w_i rho_u(Y_i - Z_i'beta) - p'beta/sqrt(n) where p is
/// the optional perturbation. Returns an optimal vertex of the LP.
QrFit solve_qr(const Dataset& data, double u, const std::optional<Vector>& perturbation = {},
               const SolveOptions& options = {});

/// Enumerates every m-subset of rows, interpolates it exactly and keeps the
/// best objective. For tests; n <= 15 and m <= 3.
QrFit brute_force_oracle(const Dataset& data, double u, const std::optional<Vector>& perturbation = {});

/// sqrt(n) * || E_n[w_i Z_i (1{Y_i <= Z_i'beta} - u)] - p/sqrt(n) ||.
/// At an optimal vertex this is at most certificate_bound(data).
double certificate(const QrFit& fit, const Dataset& data);

/// m * max_i ||w_i Z_i|| / sqrt(n)
double certificate_bound(const Dataset& data);

}  // namespace sqr
