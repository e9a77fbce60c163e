#include "sqr/process_estimation.hpp"

#include "sqr/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace sqr {

QuantileGrid QuantileGrid::regular(double lo, double hi, double step) {
    if (!(step > 0.0)) throw UserError("quantile grid: step must be positive");
    if (!(lo > 0.0 && hi < 1.0 && lo <= hi)) throw UserError("quantile grid: need 0 < lo <= hi < 1");
    QuantileGrid g;
    // Integer lattice so 0.10 + k*0.01 does not drift past hi.
    const auto count = static_cast<long>(std::floor((hi - lo) / step + 1e-9));
    for (long k = 0; k <= count; ++k) g.points.push_back(lo + static_cast<double>(k) * step);
    return g;
}

int QuantileGrid::find(double u, double tol) const {
    for (std::size_t k = 0; k < points.size(); ++k)
        if (std::abs(points[k] - u) <= tol) return static_cast<int>(k);
    return -1;
}

void QuantileGrid::validate() const {
    if (points.empty()) throw UserError("quantile grid is empty");
    for (std::size_t k = 0; k < points.size(); ++k) {
        if (!(points[k] > 0.0 && points[k] < 1.0)) throw UserError("quantile grid: points must lie in (0,1)");
        if (k > 0 && !(points[k] > points[k - 1])) throw UserError("quantile grid: points must be strictly increasing");
    }
}

void CoefficientProcess::refresh_inverses() {
    jacobian_inverses.clear();
    jacobian_inverses.reserve(jacobians.size());
    for (const Matrix& j : jacobians) jacobian_inverses.push_back(linalg::floored_inverse(j));
}

namespace {

Matrix cross_product_mean(const Matrix& z, double n) {
    Matrix g = z.transpose() * z;
    for (Eigen::Index j = 0; j < g.cols(); ++j)
        for (Eigen::Index i = j + 1; i < g.rows(); ++i) g(i, j) = g(j, i);
    return g / n;
}

double sample_sd(const Vector& r) {
    const double mean = r.mean();
    const double ss = (r.array() - mean).square().sum();
    return r.size() > 1 ? std::sqrt(ss / static_cast<double>(r.size() - 1)) : 0.0;
}

}  // namespace

Matrix estimate_gram(const Dataset& data) {
    if (data.n() < 1) throw UserError("estimate_gram: empty dataset");
    return cross_product_mean(data.z, static_cast<double>(data.n()));
}

double hall_sheather_bandwidth(double u, Eigen::Index n, double alpha) {
    if (!(u > 0.0 && u < 1.0)) throw UserError("hall_sheather_bandwidth: u must lie in (0,1)");
    if (n < 2) throw UserError("hall_sheather_bandwidth: n must be at least 2");
    if (!(alpha > 0.0 && alpha < 1.0)) throw UserError("hall_sheather_bandwidth: alpha must lie in (0,1)");
    const double q = normal_quantile(u);
    const double z = normal_quantile(1.0 - alpha / 2.0);
    const double bracket = 1.5 * std::pow(normal_pdf(q), 2) / (2.0 * q * q + 1.0);
    double h = std::pow(static_cast<double>(n), -1.0 / 3.0) * std::pow(z, 2.0 / 3.0) * std::cbrt(bracket);
    while (u - h <= 0.0 || u + h >= 1.0) h /= 2.0;
    return h;
}

double residual_bandwidth(double u, double h, const Vector& residuals) {
    std::vector<double> r(residuals.data(), residuals.data() + residuals.size());
    const double iqr = sample_quantile(r, 0.75) - sample_quantile(r, 0.25);
    double spread = std::min(sample_sd(residuals), iqr / 1.34);
    if (!(spread > 0.0)) spread = std::max(sample_sd(residuals), iqr / 1.34);
    return (normal_quantile(u + h) - normal_quantile(u - h)) * spread;
}

Matrix estimate_jacobian(const Dataset& data, const Vector& beta, double h) {
    if (!(h > 0.0)) throw UserError("estimate_jacobian: bandwidth must be positive");
    const Vector r = data.y - data.z * beta;
    std::vector<Eigen::Index> inside;
    for (Eigen::Index i = 0; i < data.n(); ++i)
        if (std::abs(r(i)) <= h) inside.push_back(i);
    if (inside.empty()) throw NumericalError("empty Powell window (bandwidth " + std::to_string(h) + " too small)");
    const double n = static_cast<double>(data.n());
    if (static_cast<Eigen::Index>(inside.size()) == data.n()) return cross_product_mean(data.z, n) / (2.0 * h);
    return cross_product_mean(data.z(inside, Eigen::all), n) / (2.0 * h);
}

CoefficientProcess fit_process(const Dataset& data, const QuantileGrid& grid, const ProcessOptions& options,
                               const std::optional<BasisSpec>& basis) {
    grid.validate();
    data.validate();
    if (basis && basis->size() != data.m())
        throw UserError("fit_process: basis has " + std::to_string(basis->size()) + " terms, design has " +
                        std::to_string(data.m()) + " columns");
    const auto g = static_cast<Eigen::Index>(grid.size());
    CoefficientProcess proc;
    proc.grid = grid;
    proc.n = data.n();
    proc.basis = basis;
    proc.bandwidth_alpha = options.bandwidth_alpha;
    proc.betas.resize(g, data.m());
    proc.certificates.resize(g);
    proc.objectives.resize(g);
    proc.bandwidths.resize(g);
    proc.residual_bandwidths.resize(g);
    proc.jacobians.assign(grid.size(), Matrix());
    proc.bases.assign(grid.size(), {});
    proc.gram = estimate_gram(data);

    std::vector<QrFit> fits(grid.size());
    if (options.warm_start) {
        for (std::size_t k = 0; k < grid.size(); ++k) {
            SolveOptions so;
            if (k > 0) so.warm_basis = &fits[k - 1].basis;
            fits[k] = solve_qr(data, grid[k], std::nullopt, so);
        }
    } else {
        for (std::size_t k = 0; k < grid.size(); ++k) fits[k] = solve_qr(data, grid[k]);
    }

    for (std::size_t k = 0; k < grid.size(); ++k) {
        const auto row = static_cast<Eigen::Index>(k);
        const QrFit& fit = fits[k];
        proc.betas.row(row) = fit.beta.transpose();
        proc.certificates(row) = certificate(fit, data);
        proc.objectives(row) = fit.objective;
        proc.bases[k] = fit.basis;
        const double h = hall_sheather_bandwidth(grid[k], data.n(), options.bandwidth_alpha);
        const double hr = residual_bandwidth(grid[k], h, data.y - data.z * fit.beta);
        proc.bandwidths(row) = h;
        proc.residual_bandwidths(row) = hr;
        proc.jacobians[k] = estimate_jacobian(data, fit.beta, hr);
    }
    proc.refresh_inverses();
    return proc;
}

}  // namespace sqr
