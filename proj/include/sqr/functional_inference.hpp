#pragma once

#include "sqr/common.hpp"
#include "sqr/couplings.hpp"
#include "sqr/process_estimation.hpp"
#include "sqr/series_basis.hpp"

#include <optional>
#include <string>
#include <vector>

namespace sqr {

enum class FunctionalKind { Value, Derivative, AverageDerivative, ConditionalAverageDerivative };

std::string to_string(FunctionalKind kind);
/// Accepts "value", "derivative", "average_derivative", "conditional_average_derivative".
FunctionalKind functional_kind_from_string(const std::string& name);

/// theta(u, w) = l(w)' beta(u) over I = {grid points} x {loadings}.
struct FunctionalSpec {
    FunctionalKind kind = FunctionalKind::Value;
    int k = 0;                       // differentiated coordinate
    std::vector<int> u_indices;      // positions in the process grid
    std::vector<Vector> loadings;    // l(w), one per w
    std::vector<double> w_labels;    // w value (or slice value) per loading; index for averages

    std::size_t size() const { return u_indices.size() * loadings.size(); }
    void validate(Eigen::Index m, std::size_t grid_size) const;
};

/// Every grid index 0..grid_size-1.
std::vector<int> all_grid_indices(std::size_t grid_size);

/// l(w) = Z(x) at each row of `points`.
FunctionalSpec value_functional(const BasisSpec& basis, const Matrix& points, std::vector<int> u_indices);
/// l(w) = dZ(x)/dx_k at each row of `points`.
FunctionalSpec derivative_functional(const BasisSpec& basis, const Matrix& points, int k, std::vector<int> u_indices);
/// Single loading sum_j mu_j dZ(x_j)/dx_k; empty weights mean the empirical measure of `sample`.
FunctionalSpec average_derivative_functional(const BasisSpec& basis, const Matrix& sample, int k,
                                             std::vector<int> u_indices, const std::vector<double>& weights = {});
/// One loading per slice value: the average derivative over rows with x_{column} equal to the value.
FunctionalSpec conditional_average_derivative_functional(const BasisSpec& basis, const Matrix& sample, int k,
                                                         int column, const std::vector<double>& values,
                                                         std::vector<int> u_indices);

/// sqrt(u(1-u) l' J^{-1}(u) Sigma J^{-1}(u) l / n) at grid index `k`.
double sigma_hat(const CoefficientProcess& proc, const Vector& ell, std::size_t k);

/// Point estimates, standard errors and coupled t-statistics over I.
/// Matrices are |U| x |W|; draws_t is B x |I| with column iu * |W| + iw.
struct TStatProcess {
    std::vector<double> u_values;
    std::vector<double> w_labels;
    Matrix theta_hat;
    Matrix sigma_hat;
    Matrix draws_t;
    Eigen::Index n = 0;
    CouplingMethod method = CouplingMethod::Pivotal;
    std::uint64_t seed = 0;
    bool has_draws() const { return draws_t.rows() > 0; }
};

/// Estimates and standard errors only (no draws).
TStatProcess functional_estimates(const CoefficientProcess& proc, const FunctionalSpec& spec);

/// t*_b(u, w) = l(w)' V_b(u) / (sqrt(n) sigma_hat(u, w)).
TStatProcess t_star_process(const CoefficientProcess& proc, const ProcessDraws& draws, const FunctionalSpec& spec);

enum class CriticalRule { NormalQuantile, CouplingQuantile };

struct ConfidenceBand {
    std::vector<double> u_values;
    std::vector<double> w_labels;
    Matrix theta_hat;
    Matrix sigma_hat;
    Matrix lower;
    Matrix upper;
    Matrix critical;           // critical value used at each point
    double k_n = 0.0;          // for pointwise coupling intervals: the largest pointwise value
    double delta_n = 0.0;
    double c_n = 0.0;          // k_n + delta_n for uniform bands, k_n otherwise
    double alpha = 0.10;
    bool uniform = false;
    std::string method;        // coupling name or "normal"
    int B = 0;
    std::uint64_t seed = 0;
};

/// theta_hat +/- k sigma_hat with k = Phi^{-1}(1 - alpha/2) or the (1 - alpha)
/// quantile of |t*(u,w)| over draws, point by point.
ConfidenceBand pointwise_interval(const TStatProcess& t, double alpha, CriticalRule rule);

/// 1/(4 (log n)^{3/4})
double delta_n(double n);

/// theta_hat +/- (k_n + delta) sigma_hat with k_n the (1 - alpha) quantile of
/// max_I |t*_b|. delta defaults to delta_n(n).
ConfidenceBand uniform_band(const TStatProcess& t, double alpha, std::optional<double> delta = std::nullopt);

/// Smallest order statistic whose empirical CDF reaches p.
double empirical_quantile(std::vector<double> values, double p);

}  // namespace sqr
