#pragma once

#include "sqr/common.hpp"
#include "sqr/couplings.hpp"
#include "sqr/functional_inference.hpp"
#include "sqr/monotonization.hpp"
#include "sqr/process_estimation.hpp"
#include "sqr/series_basis.hpp"

#include "json.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace sqr {

/// Y = g(W) + V'beta_v + sigma Phi^{-1}(U) with
/// g(w) = a0 + a1 w + a2 sin(2 pi w) + a3 cos(2 pi w) + a4 sin(4 pi w) + a5 cos(4 pi w),
/// W ~ Uniform[w_lo, w_hi], V_j ~ Uniform[0, 1], U ~ Uniform(0, 1) independent.
/// The defaults are a synthetic calibration whose population average
/// derivative over W is exactly -0.74.
struct DgpSpec {
    std::array<double, 6> g_coeffs{5.0, -0.74, 0.2, 0.0, 0.05, 0.05};
    std::vector<double> beta_v;
    double sigma = 0.5;
    double w_lo = 0.0;
    double w_hi = 0.5;
    Eigen::Index n = 500;
    /// Fixed V used when V is collapsed to a constant (length of beta_v, or empty for zeros).
    std::vector<double> v_fixed;
    bool collapse_v = true;

    void validate() const;
    double g(double w) const;
    double g_prime(double w) const;
    /// Conditional quantile g(w) + v'beta_v + sigma Phi^{-1}(u).
    double truth(double u, double w, const Vector& v = {}) const;

    nlohmann::json to_json() const;
    static DgpSpec from_json(const nlohmann::json& j);
};

struct SimSample {
    Matrix covariates;  // n x (1 + dim V); column 0 is W
    Vector y;
    Vector latent_u;
};

/// Draws W (and V) from the DGP's samplers and Y from the model.
SimSample generate_dgp(const DgpSpec& spec, std::uint64_t seed);

/// Draws Y for fixed covariates (rows as produced by generate_dgp).
SimSample generate_response(const DgpSpec& spec, const Matrix& covariates, std::uint64_t seed);

/// Population average derivative E[g'(W)] by Gauss-Legendre quadrature.
double true_average_derivative(const DgpSpec& spec);

/// (1/n) sum_j g'(W_j) over the given W sample.
double empirical_average_derivative(const DgpSpec& spec, const Matrix& covariates);

/// A named basis family in a study.
struct StudyBasis {
    std::string name;
    BasisParams params;
    /// Overrides the study's method list when non-empty.
    std::vector<CouplingMethod> methods;
    /// Report bias, RMSE and SE/SD only.
    bool estimation_only = false;
};

struct McConfig {
    DgpSpec dgp;
    std::vector<StudyBasis> bases;
    QuantileGrid grid = QuantileGrid::regular();
    std::vector<CouplingMethod> methods{CouplingMethod::Pivotal};
    int R = 100;
    int B_simulation = 1000;  // pivotal and gaussian
    int B_bootstrap = 199;    // weighted and gradient
    double alpha = 0.10;
    std::uint64_t seed = 1;
    double bandwidth_alpha = 0.05;
    bool parallel = true;
    /// Test hook: replace every band by (-inf, +inf).
    bool infinite_bands = false;
};

struct McRow {
    std::string basis;
    std::string method;
    double bias = 0.0;
    double rmse = 0.0;
    double se_sd = 0.0;
    double cover = 0.0;   // percent
    double length = 0.0;
    double stat = 0.0;    // average k_n
};

struct McReport {
    std::vector<McRow> rows;
    int R = 0;
    int failures = 0;
    std::vector<std::string> failure_messages;
    std::uint64_t seed = 0;
    double truth = 0.0;
    bool failed() const { return R > 0 && static_cast<double>(failures) > 0.05 * static_cast<double>(R); }

    std::string to_csv() const;
    nlohmann::json to_json(const McConfig& config) const;
};

/// Monte Carlo study of uniform bands for the average derivative in W over
/// the grid. W is drawn once and held fixed; each replication redraws Y.
McReport run_mc(const McConfig& config);

enum class GapFunctional { Value, Derivative };

/// theta_series(u, w) - theta_true(u, w) over grid x w_points, where
/// theta_series comes from a fit on a mega-sample of size mega_n.
GridFunction estimand_gap(const DgpSpec& dgp, const BasisParams& basis, const QuantileGrid& grid,
                          const std::vector<double>& w_points, Eigen::Index mega_n, std::uint64_t seed,
                          GapFunctional functional = GapFunctional::Value);

}  // namespace sqr
