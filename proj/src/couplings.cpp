#include "sqr/couplings.hpp"

#include "sqr/linalg.hpp"
#include "sqr/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace sqr {

std::string to_string(CouplingMethod method) {
    switch (method) {
    case CouplingMethod::Pivotal: return "pivotal";
    case CouplingMethod::Gaussian: return "gaussian";
    case CouplingMethod::WeightedBootstrap: return "weighted";
    case CouplingMethod::GradientBootstrap: return "gradient";
    }
    return "unknown";
}

CouplingMethod coupling_method_from_string(const std::string& name) {
    if (name == "pivotal") return CouplingMethod::Pivotal;
    if (name == "gaussian") return CouplingMethod::Gaussian;
    if (name == "weighted") return CouplingMethod::WeightedBootstrap;
    if (name == "gradient") return CouplingMethod::GradientBootstrap;
    throw UserError("unknown coupling method '" + name + "' (expected pivotal, gaussian, weighted or gradient)");
}

namespace {

void check_draw_count(int B) {
    if (B < 1) throw UserError("number of draws B must be at least 1");
}

void check_process(const CoefficientProcess& proc) {
    proc.grid.validate();
    if (proc.jacobian_inverses.size() != proc.grid.size())
        throw UserError("coefficient process has no jacobian inverses for its grid");
}

ProcessDraws empty_draws(CouplingMethod method, std::uint64_t seed, int B) {
    ProcessDraws out;
    out.method = method;
    out.seed = seed;
    out.draws.resize(static_cast<std::size_t>(B));
    return out;
}

// One block of m x grid standard normals per draw, bridge by bridge.
Matrix bridge_normals(std::uint64_t seed, std::size_t b, Eigen::Index g, Eigen::Index m) {
    Rng rng(stream_seed(seed, StreamDomain::GaussianDraw, b));
    Matrix e(g, m);
    for (Eigen::Index j = 0; j < m; ++j)
        for (Eigen::Index k = 0; k < g; ++k) e(k, j) = rng.standard_normal();
    return e;
}

}  // namespace

std::vector<double> draw_uniforms(std::uint64_t seed, StreamDomain domain, std::uint64_t index, Eigen::Index n) {
    Rng rng(stream_seed(seed, domain, index));
    std::vector<double> u(static_cast<std::size_t>(n));
    for (double& x : u) x = rng.uniform();
    return u;
}

Matrix pivotal_gradient(const Matrix& z, const std::vector<double>& uniforms, const QuantileGrid& grid) {
    const Eigen::Index n = z.rows();
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return uniforms[a] < uniforms[b]; });
    const Eigen::RowVectorXd total = z.colwise().sum();
    Eigen::RowVectorXd below = Eigen::RowVectorXd::Zero(z.cols());
    const double scale = 1.0 / std::sqrt(static_cast<double>(n));
    Matrix out(static_cast<Eigen::Index>(grid.size()), z.cols());
    std::size_t next = 0;
    for (std::size_t k = 0; k < grid.size(); ++k) {
        while (next < order.size() && uniforms[order[next]] <= grid[k]) below += z.row(order[next++]);
        out.row(static_cast<Eigen::Index>(k)) = (grid[k] * total - below) * scale;
    }
    return out;
}

ProcessDraws draw_pivotal(const CoefficientProcess& proc, const Matrix& z, int B, std::uint64_t seed,
                          const CouplingOptions& options) {
    check_draw_count(B);
    check_process(proc);
    if (z.cols() != proc.m()) throw UserError("draw_pivotal: design does not match the process");
    ProcessDraws out = empty_draws(CouplingMethod::Pivotal, seed, B);
    parallel_for(out.draws.size(), options.parallel, [&](std::size_t b) {
        const auto uniforms = draw_uniforms(seed, StreamDomain::PivotalDraw, b, z.rows());
        Matrix draw = pivotal_gradient(z, uniforms, proc.grid);
        for (std::size_t k = 0; k < proc.grid.size(); ++k) {
            const auto row = static_cast<Eigen::Index>(k);
            draw.row(row) = (proc.jacobian_inverses[k] * draw.row(row).transpose()).transpose();
        }
        out.draws[b] = std::move(draw);
    });
    return out;
}

ProcessDraws draw_gaussian(const CoefficientProcess& proc, int B, std::uint64_t seed, const CouplingOptions& options) {
    check_draw_count(B);
    check_process(proc);
    const Matrix root = linalg::sqrt_psd(proc.gram);
    const auto g = static_cast<Eigen::Index>(proc.grid.size());
    const Eigen::Index m = proc.m();
    // Exact sequential conditionals of the bridge: given BB(u_{k-1}) = x,
    // BB(u_k) ~ N(x (1-u_k)/(1-u_{k-1}), (u_k-u_{k-1})(1-u_k)/(1-u_{k-1})).
    Vector carry(g), sd(g);
    for (Eigen::Index k = 0; k < g; ++k) {
        const double u = proc.grid[k];
        if (k == 0) {
            carry(k) = 0.0;
            sd(k) = std::sqrt(u * (1.0 - u));
        } else {
            const double prev = proc.grid[k - 1];
            carry(k) = (1.0 - u) / (1.0 - prev);
            sd(k) = std::sqrt((u - prev) * (1.0 - u) / (1.0 - prev));
        }
    }
    ProcessDraws out = empty_draws(CouplingMethod::Gaussian, seed, B);
    parallel_for(out.draws.size(), options.parallel, [&](std::size_t b) {
        Matrix bridge = bridge_normals(seed, b, g, m);
        for (Eigen::Index j = 0; j < m; ++j) {
            double x = 0.0;
            for (Eigen::Index k = 0; k < g; ++k) {
                x = carry(k) * x + sd(k) * bridge(k, j);
                bridge(k, j) = x;
            }
        }
        Matrix draw(g, m);
        for (Eigen::Index k = 0; k < g; ++k)
            draw.row(k) = (proc.jacobian_inverses[k] * (root * bridge.row(k).transpose())).transpose();
        out.draws[b] = std::move(draw);
    });
    return out;
}

namespace {

// Refits the whole grid on `data`, warm-starting each point from the
// original vertex at the same quantile, and returns sqrt(n)(beta_b - beta_hat).
template <class Solve>
Matrix refit_grid(const CoefficientProcess& proc, const Dataset& cert_data, Solve&& solve, double& max_ratio) {
    const double root_n = std::sqrt(static_cast<double>(proc.n));
    const double bound = certificate_bound(cert_data);
    Matrix draw(static_cast<Eigen::Index>(proc.grid.size()), proc.m());
    for (std::size_t k = 0; k < proc.grid.size(); ++k) {
        const QrFit fit = solve(k);
        max_ratio = std::max(max_ratio, certificate(fit, cert_data) / bound);
        const auto row = static_cast<Eigen::Index>(k);
        draw.row(row) = root_n * (fit.beta.transpose() - proc.betas.row(row));
    }
    return draw;
}

Vector exponential_weights(std::uint64_t seed, StreamDomain domain, std::uint64_t index, Eigen::Index n) {
    Rng rng(stream_seed(seed, domain, index));
    Vector w(n);
    for (Eigen::Index i = 0; i < n; ++i) w(i) = rng.standard_exponential();
    return w;
}

void check_data(const Dataset& data, const CoefficientProcess& proc) {
    data.validate();
    if (data.n() != proc.n || data.m() != proc.m()) throw UserError("bootstrap: dataset does not match the fitted process");
    if (data.weighted()) throw UserError("bootstrap: the fitting sample must be unweighted");
}

}  // namespace

ProcessDraws draw_weighted_bootstrap(const Dataset& data, const CoefficientProcess& proc, int B, std::uint64_t seed,
                                     const CouplingOptions& options) {
    check_draw_count(B);
    proc.grid.validate();
    check_data(data, proc);
    ProcessDraws out = empty_draws(CouplingMethod::WeightedBootstrap, seed, B);
    std::vector<double> ratios(out.draws.size(), 0.0);
    std::vector<char> retried(out.draws.size(), 0);
    parallel_for(out.draws.size(), options.parallel, [&](std::size_t b) {
        auto attempt = [&](StreamDomain domain) {
            Dataset boot{data.y, data.z,
                         options.unit_weights ? Vector(Vector::Ones(data.n())) : exponential_weights(seed, domain, b, data.n())};
            return refit_grid(proc, boot, [&](std::size_t k) {
                SolveOptions so;
                so.warm_basis = &proc.bases[k];
                return solve_qr(boot, proc.grid[k], std::nullopt, so);
            }, ratios[b]);
        };
        try {
            out.draws[b] = attempt(StreamDomain::WeightedBootstrap);
        } catch (const NumericalError&) {
            retried[b] = 1;
            ratios[b] = 0.0;
            try {
                out.draws[b] = attempt(StreamDomain::Retry);
            } catch (const NumericalError& e) {
                throw NumericalError("weighted bootstrap draw " + std::to_string(b) + " failed twice: " + e.what());
            }
        }
    });
    for (std::size_t b = 0; b < out.draws.size(); ++b) {
        out.max_certificate_ratio = std::max(out.max_certificate_ratio, ratios[b]);
        out.retries += retried[b];
    }
    return out;
}

GradientRefit gradient_refit(const Dataset& data, double u, const Vector& ustar, GradientPath path,
                             const std::vector<int>* warm_basis) {
    GradientRefit out;
    SolveOptions so;
    so.warm_basis = warm_basis;
    const Vector p = -ustar;
    if (path == GradientPath::LinearTerm) {
        out.fit = solve_qr(data, u, p, so);
        out.objective = out.fit.objective;
        out.guard_residual = std::numeric_limits<double>::infinity();
        return out;
    }
    // Extra row X_{n+1} = -sqrt(n) U*/u with a response so large that it stays
    // above the fit; its check loss u (Y_{n+1} - X_{n+1}'beta) then contributes
    // sqrt(n) U*'beta to the sum.
    const Eigen::Index n = data.n();
    const double root_n = std::sqrt(static_cast<double>(n));
    Dataset aug;
    aug.y.resize(n + 1);
    aug.z.resize(n + 1, data.m());
    aug.y.head(n) = data.y;
    aug.z.topRows(n) = data.z;
    aug.y(n) = static_cast<double>(n) * data.y.cwiseAbs().maxCoeff();
    aug.z.row(n) = -(root_n / u) * ustar.transpose();
    out.fit = solve_qr(aug, u, std::nullopt, so);
    // An interpolated guard row binds even if rounding leaves a tiny positive residual.
    const bool interpolated = std::find(out.fit.basis.begin(), out.fit.basis.end(), static_cast<int>(n)) != out.fit.basis.end();
    out.guard_residual = interpolated ? 0.0 : aug.y(n) - aug.z.row(n).dot(out.fit.beta);
    if (!(out.guard_residual > 0.0))
        throw NumericalError("gradient bootstrap: augmented observation guard Y_{n+1} is binding (residual " +
                             std::to_string(out.guard_residual) + ")");
    out.objective = qr_objective(data, u, out.fit.beta, p);
    out.fit.objective = out.objective;
    out.fit.perturbation = p;
    return out;
}

ProcessDraws draw_gradient_bootstrap(const Dataset& data, const CoefficientProcess& proc, int B, std::uint64_t seed,
                                     const CouplingOptions& options) {
    check_draw_count(B);
    proc.grid.validate();
    check_data(data, proc);
    ProcessDraws out = empty_draws(CouplingMethod::GradientBootstrap, seed, B);
    std::vector<double> ratios(out.draws.size(), 0.0);
    parallel_for(out.draws.size(), options.parallel, [&](std::size_t b) {
        Matrix ustar = options.zero_perturbation
                           ? Matrix(Matrix::Zero(static_cast<Eigen::Index>(proc.grid.size()), data.m()))
                           : pivotal_gradient(data.z, draw_uniforms(seed, StreamDomain::GradientBootstrap, b, data.n()),
                                              proc.grid);
        out.draws[b] = refit_grid(proc, data, [&](std::size_t k) {
            const Vector p = ustar.row(static_cast<Eigen::Index>(k)).transpose();
            // Vertex indices of the original fit are valid rows of the augmented data too.
            return gradient_refit(data, proc.grid[k], p, options.path, &proc.bases[k]).fit;
        }, ratios[b]);
    });
    for (double r : ratios) out.max_certificate_ratio = std::max(out.max_certificate_ratio, r);
    return out;
}

namespace reference {

ProcessDraws draw_pivotal(const CoefficientProcess& proc, const Matrix& z, int B, std::uint64_t seed) {
    check_draw_count(B);
    check_process(proc);
    ProcessDraws out = empty_draws(CouplingMethod::Pivotal, seed, B);
    const double scale = 1.0 / std::sqrt(static_cast<double>(z.rows()));
    for (std::size_t b = 0; b < out.draws.size(); ++b) {
        const auto uniforms = draw_uniforms(seed, StreamDomain::PivotalDraw, b, z.rows());
        Matrix draw(static_cast<Eigen::Index>(proc.grid.size()), z.cols());
        for (std::size_t k = 0; k < proc.grid.size(); ++k) {
            const double u = proc.grid[k];
            Vector s = Vector::Zero(z.cols());
            for (Eigen::Index i = 0; i < z.rows(); ++i)
                s += (u - (uniforms[i] <= u ? 1.0 : 0.0)) * z.row(i).transpose();
            draw.row(static_cast<Eigen::Index>(k)) = (proc.jacobian_inverses[k] * (scale * s)).transpose();
        }
        out.draws[b] = std::move(draw);
    }
    return out;
}

ProcessDraws draw_gaussian(const CoefficientProcess& proc, int B, std::uint64_t seed) {
    check_draw_count(B);
    check_process(proc);
    const auto g = static_cast<Eigen::Index>(proc.grid.size());
    const Eigen::Index m = proc.m();
    Matrix cov(g, g);
    for (Eigen::Index a = 0; a < g; ++a)
        for (Eigen::Index c = 0; c < g; ++c) {
            const double u = proc.grid[a], v = proc.grid[c];
            cov(a, c) = std::min(u, v) - u * v;
        }
    const Matrix chol = cov.llt().matrixL();
    const Matrix root = linalg::sqrt_psd(proc.gram);
    ProcessDraws out = empty_draws(CouplingMethod::Gaussian, seed, B);
    for (std::size_t b = 0; b < out.draws.size(); ++b) {
        const Matrix bridge = chol * bridge_normals(seed, b, g, m);
        Matrix draw(g, m);
        for (Eigen::Index k = 0; k < g; ++k)
            draw.row(k) = (proc.jacobian_inverses[k] * (root * bridge.row(k).transpose())).transpose();
        out.draws[b] = std::move(draw);
    }
    return out;
}

}  // namespace reference

}  // namespace sqr
