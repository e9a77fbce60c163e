#pragma once

#include "sqr/common.hpp"

#include "json.hpp"

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace sqr {

enum class BasisFamily { Linear, PowerPoly, CubicBSpline };

std::string to_string(BasisFamily family);
BasisFamily basis_family_from_string(const std::string& name);

/// Construction parameters. The first covariate is the series covariate W;
/// the next `extra_linear_covariates` columns (the V block) enter linearly.
struct BasisParams {
    BasisFamily family = BasisFamily::Linear;
    int degree = 6;
    bool orthogonal = true;  // PowerPoly only; false gives raw monomials in x
    std::vector<double> knot_quantiles{0.0, 0.25, 0.5, 0.75, 1.0};
    int extra_linear_covariates = 0;
    bool includes_intercept = true;
    // Tied quantile knots are separated by 1e-9 * range when set, rejected otherwise.
    bool nudge_tied_knots = true;
};

/// Series map x -> Z(x) in R^m. Immutable once built; evaluation is const
/// and thread safe.
///
/// Layout of Z(x): [series terms in W] followed by the V block.
///   Linear        (1, w)
///   PowerPoly     (1, p_1(w), ..., p_d(w)), p_j orthonormal under the
///                 construction sample on the normalized range [-1,1]
///   CubicBSpline  (1, B_1(w), ..., B_{K-1}(w)); B_0 is dropped because the
///                 full block sums to one
/// Without an intercept the constant term is omitted (B-splines keep B_0).
class BasisSpec {
public:
    BasisFamily family() const { return family_; }
    int size() const { return m_; }
    int dimension() const { return 1 + extra_linear_; }
    int extra_linear_covariates() const { return extra_linear_; }
    bool includes_intercept() const { return intercept_; }
    int degree() const { return degree_; }
    bool orthogonal() const { return orthogonal_; }
    /// Full knot vector with boundary knots repeated four times.
    const std::vector<double>& knots() const { return knots_; }
    const std::vector<double>& knot_quantiles() const { return knot_quantiles_; }
    /// Per-dimension [min, max] of the construction sample.
    const std::vector<std::pair<double, double>>& covariate_ranges() const { return ranges_; }
    /// max ||Z(x)|| over a 10,001-point grid of the W range with |v| at its range maxima.
    double zeta() const { return zeta_; }
    const std::vector<std::string>& warnings() const { return warnings_; }

    /// True when x lies outside the construction ranges (evaluation still succeeds).
    bool extrapolates(const Vector& x) const;

    nlohmann::json to_json() const;
    static BasisSpec from_json(const nlohmann::json& j);

private:
    friend BasisSpec make_basis(const BasisParams& params, const Matrix& covariates);
    friend Vector eval_basis(const BasisSpec& spec, const Vector& x);
    friend Vector eval_basis_derivative(const BasisSpec& spec, const Vector& x, int k);
    friend Vector eval_spline_block(const BasisSpec& spec, double w);

    void finalize();
    double normalized(double w) const;
    Vector series(double w) const;
    Vector series_derivative(double w) const;
    int spline_count() const { return static_cast<int>(knots_.size()) - 4; }

    BasisFamily family_ = BasisFamily::Linear;
    int degree_ = 1;
    bool orthogonal_ = false;
    bool intercept_ = true;
    int extra_linear_ = 0;
    int m_ = 0;
    std::vector<std::pair<double, double>> ranges_;
    std::vector<double> knots_;
    std::vector<double> knot_quantiles_;
    Matrix cheb_coef_;  // orthonormal polynomials in Chebyshev coordinates
    double zeta_ = 0.0;
    std::vector<std::string> warnings_;
};

/// Builds the basis from an n x d covariate sample (column 0 is W).
BasisSpec make_basis(const BasisParams& params, const Matrix& covariates);

Vector eval_basis(const BasisSpec& spec, const Vector& x);

/// dZ/dx_k at x. k = 0 differentiates the series block, k >= 1 selects V_k.
Vector eval_basis_derivative(const BasisSpec& spec, const Vector& x, int k);

/// All K cubic B-spline values at w (sums to one inside the knot range).
Vector eval_spline_block(const BasisSpec& spec, double w);

/// n x m matrix whose rows are Z(x_i).
Matrix design_matrix(const BasisSpec& spec, const Matrix& covariates);

/// sum_j mu_j dZ(x_j)/dx_k. Empty weights mean the empirical measure.
Vector loading_average_derivative(const BasisSpec& spec, const Matrix& covariates, int k,
                                  const std::vector<double>& weights = {});

/// Empirical measure restricted to rows with |x_{j,column} - value| <= tol,
/// renormalized to sum to one.
std::vector<double> slice_weights(const Matrix& covariates, int column, double value, double tol = 1e-12);

/// R type-7 sample quantile.
double sample_quantile(std::vector<double> values, double p);

}  // namespace sqr
