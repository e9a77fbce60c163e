#include "sqr/functional_inference.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace sqr {

std::string to_string(FunctionalKind kind) {
    switch (kind) {
    case FunctionalKind::Value: return "value";
    case FunctionalKind::Derivative: return "derivative";
    case FunctionalKind::AverageDerivative: return "average_derivative";
    case FunctionalKind::ConditionalAverageDerivative: return "conditional_average_derivative";
    }
    return "unknown";
}

FunctionalKind functional_kind_from_string(const std::string& name) {
    if (name == "value") return FunctionalKind::Value;
    if (name == "derivative") return FunctionalKind::Derivative;
    if (name == "average_derivative") return FunctionalKind::AverageDerivative;
    if (name == "conditional_average_derivative") return FunctionalKind::ConditionalAverageDerivative;
    throw UserError("unknown functional kind '" + name + "'");
}

void FunctionalSpec::validate(Eigen::Index m, std::size_t grid_size) const {
    if (u_indices.empty() || loadings.empty()) throw UserError("functional: index set is empty");
    if (w_labels.size() != loadings.size()) throw UserError("functional: one label per loading required");
    for (int k : u_indices)
        if (k < 0 || static_cast<std::size_t>(k) >= grid_size) throw UserError("functional: quantile index outside the grid");
    for (const Vector& l : loadings)
        if (l.size() != m) throw UserError("functional: loading length does not match the basis");
}

std::vector<int> all_grid_indices(std::size_t grid_size) {
    std::vector<int> idx(grid_size);
    std::iota(idx.begin(), idx.end(), 0);
    return idx;
}

FunctionalSpec value_functional(const BasisSpec& basis, const Matrix& points, std::vector<int> u_indices) {
    FunctionalSpec f;
    f.kind = FunctionalKind::Value;
    f.u_indices = std::move(u_indices);
    for (Eigen::Index j = 0; j < points.rows(); ++j) {
        f.loadings.push_back(eval_basis(basis, points.row(j).transpose()));
        f.w_labels.push_back(points(j, 0));
    }
    return f;
}

FunctionalSpec derivative_functional(const BasisSpec& basis, const Matrix& points, int k, std::vector<int> u_indices) {
    FunctionalSpec f;
    f.kind = FunctionalKind::Derivative;
    f.k = k;
    f.u_indices = std::move(u_indices);
    for (Eigen::Index j = 0; j < points.rows(); ++j) {
        f.loadings.push_back(eval_basis_derivative(basis, points.row(j).transpose(), k));
        f.w_labels.push_back(points(j, 0));
    }
    return f;
}

FunctionalSpec average_derivative_functional(const BasisSpec& basis, const Matrix& sample, int k,
                                             std::vector<int> u_indices, const std::vector<double>& weights) {
    FunctionalSpec f;
    f.kind = FunctionalKind::AverageDerivative;
    f.k = k;
    f.u_indices = std::move(u_indices);
    f.loadings.push_back(loading_average_derivative(basis, sample, k, weights));
    f.w_labels.push_back(0.0);
    return f;
}

FunctionalSpec conditional_average_derivative_functional(const BasisSpec& basis, const Matrix& sample, int k,
                                                         int column, const std::vector<double>& values,
                                                         std::vector<int> u_indices) {
    FunctionalSpec f;
    f.kind = FunctionalKind::ConditionalAverageDerivative;
    f.k = k;
    f.u_indices = std::move(u_indices);
    for (double v : values) {
        f.loadings.push_back(loading_average_derivative(basis, sample, k, slice_weights(sample, column, v)));
        f.w_labels.push_back(v);
    }
    return f;
}

double sigma_hat(const CoefficientProcess& proc, const Vector& ell, std::size_t k) {
    if (ell.size() != proc.m()) throw UserError("sigma_hat: loading length does not match the process");
    if (k >= proc.grid.size() || k >= proc.jacobian_inverses.size()) throw UserError("sigma_hat: grid index out of range");
    if (ell.isZero(0.0)) throw UserError("degenerate functional: zero loading");
    const double u = proc.grid[k];
    const Vector a = proc.jacobian_inverses[k] * ell;
    const double q = u * (1.0 - u) * a.dot(proc.gram * a) / static_cast<double>(proc.n);
    if (!(q > 0.0)) throw NumericalError("degenerate functional: non-positive variance");
    return std::sqrt(q);
}

TStatProcess functional_estimates(const CoefficientProcess& proc, const FunctionalSpec& spec) {
    spec.validate(proc.m(), proc.grid.size());
    const auto nu = static_cast<Eigen::Index>(spec.u_indices.size());
    const auto nw = static_cast<Eigen::Index>(spec.loadings.size());
    TStatProcess t;
    t.n = proc.n;
    t.w_labels = spec.w_labels;
    t.theta_hat.resize(nu, nw);
    t.sigma_hat.resize(nu, nw);
    for (Eigen::Index a = 0; a < nu; ++a) {
        const auto k = static_cast<std::size_t>(spec.u_indices[a]);
        t.u_values.push_back(proc.grid[k]);
        for (Eigen::Index w = 0; w < nw; ++w) {
            const Vector& ell = spec.loadings[w];
            t.theta_hat(a, w) = proc.betas.row(static_cast<Eigen::Index>(k)).dot(ell);
            t.sigma_hat(a, w) = sigma_hat(proc, ell, k);
        }
    }
    return t;
}

TStatProcess t_star_process(const CoefficientProcess& proc, const ProcessDraws& draws, const FunctionalSpec& spec) {
    TStatProcess t = functional_estimates(proc, spec);
    t.method = draws.method;
    t.seed = draws.seed;
    const auto nu = static_cast<Eigen::Index>(spec.u_indices.size());
    const auto nw = static_cast<Eigen::Index>(spec.loadings.size());
    const double root_n = std::sqrt(static_cast<double>(proc.n));
    t.draws_t.resize(draws.B(), nu * nw);
    for (int b = 0; b < draws.B(); ++b) {
        const Matrix& d = draws.draws[static_cast<std::size_t>(b)];
        if (d.rows() != static_cast<Eigen::Index>(proc.grid.size()) || d.cols() != proc.m())
            throw UserError("t_star_process: draws do not match the process grid");
        for (Eigen::Index a = 0; a < nu; ++a) {
            const Eigen::Index k = spec.u_indices[a];
            for (Eigen::Index w = 0; w < nw; ++w)
                t.draws_t(b, a * nw + w) = d.row(k).dot(spec.loadings[w]) / (root_n * t.sigma_hat(a, w));
        }
    }
    return t;
}

double empirical_quantile(std::vector<double> values, double p) {
    if (values.empty()) throw UserError("empirical_quantile: no values");
    if (!(p > 0.0 && p < 1.0)) throw UserError("empirical_quantile: p must lie in (0,1)");
    std::sort(values.begin(), values.end());
    const double count = static_cast<double>(values.size());
    // Smallest k with k/B >= p, guarding against p*B rounding up past an integer.
    auto k = static_cast<std::size_t>(std::ceil(p * count));
    while (k > 1 && static_cast<double>(k - 1) / count >= p) --k;
    while (static_cast<double>(k) / count < p) ++k;
    k = std::clamp<std::size_t>(k, 1, values.size());
    return values[k - 1];
}

double delta_n(double n) {
    if (!(n > 1.0)) throw UserError("delta_n: n must exceed 1");
    return 1.0 / (4.0 * std::pow(std::log(n), 0.75));
}

namespace {

ConfidenceBand band_shell(const TStatProcess& t, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw UserError("alpha must lie in (0,1)");
    ConfidenceBand band;
    band.u_values = t.u_values;
    band.w_labels = t.w_labels;
    band.theta_hat = t.theta_hat;
    band.sigma_hat = t.sigma_hat;
    band.alpha = alpha;
    band.B = static_cast<int>(t.draws_t.rows());
    band.seed = t.seed;
    return band;
}

void check_draws(const TStatProcess& t, double alpha) {
    if (!t.has_draws()) throw UserError("coupling critical values need draws");
    if (static_cast<double>(t.draws_t.rows()) * alpha < 1.0)
        throw UserError("B = " + std::to_string(t.draws_t.rows()) + " draws are too few for alpha = " +
                        std::to_string(alpha) + " (need B * alpha >= 1)");
}

void fill_envelopes(ConfidenceBand& band) {
    const Matrix half = band.critical.cwiseProduct(band.sigma_hat);
    band.lower = band.theta_hat - half;
    band.upper = band.theta_hat + half;
}

}  // namespace

ConfidenceBand pointwise_interval(const TStatProcess& t, double alpha, CriticalRule rule) {
    ConfidenceBand band = band_shell(t, alpha);
    const Eigen::Index nu = t.theta_hat.rows(), nw = t.theta_hat.cols();
    if (rule == CriticalRule::NormalQuantile) {
        band.k_n = normal_quantile(1.0 - alpha / 2.0);
        band.critical = Matrix::Constant(nu, nw, band.k_n);
        band.method = "normal";
    } else {
        check_draws(t, alpha);
        band.critical.resize(nu, nw);
        band.method = to_string(t.method);
        std::vector<double> col(static_cast<std::size_t>(t.draws_t.rows()));
        for (Eigen::Index a = 0; a < nu; ++a)
            for (Eigen::Index w = 0; w < nw; ++w) {
                for (Eigen::Index b = 0; b < t.draws_t.rows(); ++b) col[b] = std::abs(t.draws_t(b, a * nw + w));
                band.critical(a, w) = empirical_quantile(col, 1.0 - alpha);
            }
        band.k_n = band.critical.maxCoeff();
    }
    band.c_n = band.k_n;
    fill_envelopes(band);
    return band;
}

ConfidenceBand uniform_band(const TStatProcess& t, double alpha, std::optional<double> delta) {
    check_draws(t, alpha);
    ConfidenceBand band = band_shell(t, alpha);
    band.uniform = true;
    band.method = to_string(t.method);
    std::vector<double> maxima(static_cast<std::size_t>(t.draws_t.rows()));
    for (Eigen::Index b = 0; b < t.draws_t.rows(); ++b) maxima[b] = t.draws_t.row(b).cwiseAbs().maxCoeff();
    band.k_n = empirical_quantile(maxima, 1.0 - alpha);
    band.delta_n = delta ? *delta : delta_n(static_cast<double>(t.n));
    if (band.delta_n < 0.0) throw UserError("uniform_band: delta must be non-negative");
    band.c_n = band.k_n + band.delta_n;
    band.critical = Matrix::Constant(t.theta_hat.rows(), t.theta_hat.cols(), band.c_n);
    fill_envelopes(band);
    return band;
}

}  // namespace sqr
