#include "sqr/qr_core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace sqr {

namespace {

constexpr double kStepDamping = 0.99995;
constexpr double kDualTolerance = 1e-9;

// Row-scaled problem: weights are absorbed into (y, X) since w rho(r) = rho(w r)
// for w > 0; the perturbation enters in sum scale as c = sqrt(n) p.
struct Scaled {
    const Matrix* x;
    Matrix x_own;
    Vector y;
    Vector c;  // zero when unperturbed
    bool perturbed = false;
};

Scaled scale(const Dataset& data, const std::optional<Vector>& perturbation) {
    Scaled s;
    if (data.weighted()) {
        s.x_own = data.weights.asDiagonal() * data.z;
        s.x = &s.x_own;
        s.y = data.weights.cwiseProduct(data.y);
    } else {
        s.x = &data.z;
        s.y = data.y;
    }
    s.c = Vector::Zero(data.m());
    if (perturbation) {
        if (perturbation->size() != data.m()) throw UserError("perturbation length does not match the design");
        s.c = std::sqrt(static_cast<double>(data.n())) * *perturbation;
        s.perturbed = true;
    }
    return s;
}

// Frisch-Newton primal-dual interior point method (Portnoy-Koenker) for
//   max y'a  s.t.  X'a = (1-u) X'1 - c,  0 <= a <= 1,
// the dual of the check-loss problem. Returns beta (the LP dual variables).
struct IpmResult {
    Vector beta;
    int iterations = 0;
    double gap = 0.0;
    bool converged = false;
    bool usable = false;
    bool breakdown = false;  // iterates degenerated near the optimum
};

IpmResult frisch_newton(const Matrix& x_mat, const Vector& yv, const Vector& cpert, double u, double tol, int max_iter) {
    const Eigen::Index n = x_mat.rows();
    const Eigen::Index p = x_mat.cols();
    const Vector c = -yv;
    const Vector b = (1.0 - u) * x_mat.transpose() * Vector::Ones(n) - cpert;

    Vector xv = Vector::Constant(n, 1.0 - u);
    if (cpert.squaredNorm() > 0.0) {
        // Shift the start toward primal feasibility.
        Eigen::LLT<Matrix> gram(x_mat.transpose() * x_mat);
        xv -= x_mat * gram.solve(cpert);
        xv = xv.cwiseMax(1e-3).cwiseMin(1.0 - 1e-3);
    }

    Vector d = Vector::Ones(n);
    Eigen::LLT<Matrix> ada(x_mat.transpose() * x_mat);
    if (ada.info() != Eigen::Success) throw NumericalError("interior point: X'X is not positive definite");
    Vector y = ada.solve(x_mat.transpose() * c);
    Vector s = c - x_mat * y;
    Vector z(n), w(n);
    const double init_eps = 1e-6;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double extra = std::abs(s(i)) < init_eps ? init_eps : 0.0;
        z(i) = std::max(s(i), 0.0) + extra;
        w(i) = std::max(-s(i), 0.0) + extra;
    }
    s = Vector::Ones(n) - xv;
    double gap = z.dot(xv) + w.dot(s);
    const double gap_tol = tol * (1.0 + yv.cwiseAbs().sum());

    Vector dx(n), ds(n), dz(n), dw(n), dr(n), rhs(p), dy(p), uu(n);
    IpmResult result;
    while (gap > gap_tol && result.iterations < max_iter) {
        ++result.iterations;
        for (Eigen::Index i = 0; i < n; ++i) {
            d(i) = 1.0 / (z(i) / xv(i) + w(i) / s(i));
            ds(i) = z(i) - w(i);
            dz(i) = d(i) * ds(i);
        }
        dy = b - x_mat.transpose() * xv + x_mat.transpose() * dz;
        rhs = dy;
        ada.compute(x_mat.transpose() * d.asDiagonal() * x_mat);
        if (ada.info() != Eigen::Success || !d.allFinite()) {
            result.breakdown = true;
            break;
        }
        dy = ada.solve(dy);
        ds = x_mat * dy - ds;

        double deltap = std::numeric_limits<double>::max();
        double deltad = deltap;
        for (Eigen::Index i = 0; i < n; ++i) {
            dx(i) = d(i) * ds(i);
            ds(i) = -dx(i);
            dz(i) = -z(i) * (dx(i) / xv(i) + 1.0);
            dw(i) = -w(i) * (ds(i) / s(i) + 1.0);
            if (dx(i) < 0) deltap = std::min(deltap, -xv(i) / dx(i));
            if (ds(i) < 0) deltap = std::min(deltap, -s(i) / ds(i));
            if (dz(i) < 0) deltad = std::min(deltad, -z(i) / dz(i));
            if (dw(i) < 0) deltad = std::min(deltad, -w(i) / dw(i));
        }
        deltap = std::min(kStepDamping * deltap, 1.0);
        deltad = std::min(kStepDamping * deltad, 1.0);

        if (std::min(deltap, deltad) < 1.0) {
            // Mehrotra corrector.
            double mu = z.dot(xv) + w.dot(s);
            const double g = mu + deltap * dx.dot(z) + deltad * dz.dot(xv) + deltap * deltad * dx.dot(dz) +
                             deltap * ds.dot(w) + deltad * dw.dot(s) + deltap * deltad * ds.dot(dw);
            mu = mu * std::pow(g / mu, 3) / (2.0 * static_cast<double>(n));
            for (Eigen::Index i = 0; i < n; ++i)
                dr(i) = d(i) * (mu * (1.0 / s(i) - 1.0 / xv(i)) + dx(i) * dz(i) / xv(i) - ds(i) * dw(i) / s(i));
            dy = ada.solve(rhs + x_mat.transpose() * dr);
            uu = x_mat * dy;
            deltap = std::numeric_limits<double>::max();
            deltad = deltap;
            for (Eigen::Index i = 0; i < n; ++i) {
                const double dxdz = dx(i) * dz(i);
                const double dsdw = ds(i) * dw(i);
                dx(i) = d(i) * (uu(i) - z(i) + w(i)) - dr(i);
                ds(i) = -dx(i);
                dz(i) = -z(i) + (mu - z(i) * dx(i) - dxdz) / xv(i);
                dw(i) = -w(i) + (mu - w(i) * ds(i) - dsdw) / s(i);
                if (dx(i) < 0) deltap = std::min(deltap, -xv(i) / dx(i));
                if (ds(i) < 0) deltap = std::min(deltap, -s(i) / ds(i));
                if (dz(i) < 0) deltad = std::min(deltad, -z(i) / dz(i));
                if (dw(i) < 0) deltad = std::min(deltad, -w(i) / dw(i));
            }
            deltap = std::min(kStepDamping * deltap, 1.0);
            deltad = std::min(kStepDamping * deltad, 1.0);
        }
        if (!dy.allFinite() || !dx.allFinite() || !dz.allFinite() || !dw.allFinite()) {
            result.breakdown = true;
            break;
        }
        xv += deltap * dx;
        s += deltap * ds;
        y += deltad * dy;
        z += deltad * dz;
        w += deltad * dw;
        gap = z.dot(xv) + w.dot(s);
    }
    result.beta = -y;
    result.gap = gap;
    result.converged = gap <= gap_tol;
    // The simplex phase finishes at an exact vertex, so a loose gap still
    // gives a usable starting point.
    result.usable = y.allFinite() && (result.breakdown || gap <= 1e-6 * (1.0 + yv.cwiseAbs().sum()));
    return result;
}

// Picks m rows with the smallest |residual| that are linearly independent.
std::vector<int> crossover_basis(const Matrix& x_mat, const Vector& resid) {
    const Eigen::Index n = x_mat.rows();
    const Eigen::Index m = x_mat.cols();
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return std::abs(resid(a)) < std::abs(resid(b)); });
    std::vector<int> basis;
    Matrix q(m, m);  // orthonormal directions of accepted rows
    for (int i : order) {
        Vector v = x_mat.row(i).transpose();
        const double norm0 = v.norm();
        if (norm0 == 0.0) continue;
        const auto k = static_cast<Eigen::Index>(basis.size());
        for (int pass = 0; pass < 2; ++pass)
            for (Eigen::Index j = 0; j < k; ++j) v -= q.col(j).dot(v) * q.col(j);
        if (v.norm() <= 1e-8 * norm0) continue;
        q.col(k) = v / v.norm();
        basis.push_back(i);
        if (static_cast<Eigen::Index>(basis.size()) == m) break;
    }
    return basis;
}

std::string describe_null_space(const Matrix& z) {
    Eigen::FullPivLU<Matrix> lu(z);
    Matrix kernel = lu.kernel();
    std::ostringstream msg;
    msg << "design matrix is rank deficient (rank " << lu.rank() << " of " << z.cols() << " columns)";
    if (kernel.cols() > 0) {
        Vector v = kernel.col(0);
        v /= v.cwiseAbs().maxCoeff();
        msg << "; columns {";
        bool first = true;
        for (Eigen::Index j = 0; j < v.size(); ++j)
            if (std::abs(v(j)) > 1e-10) {
                msg << (first ? "" : ", ") << j;
                first = false;
            }
        msg << "} are linearly dependent";
    }
    return msg.str();
}

bool factor_basis(const Matrix& x_mat, const std::vector<int>& basis, Matrix& inverse) {
    const auto m = static_cast<Eigen::Index>(basis.size());
    if (m != x_mat.cols()) return false;
    Matrix xh(m, m);
    for (Eigen::Index k = 0; k < m; ++k) xh.row(k) = x_mat.row(basis[k]);
    Eigen::FullPivLU<Matrix> lu(xh);
    if (!lu.isInvertible()) return false;
    inverse = lu.inverse();
    return true;
}

// Primal simplex on the vertex set: each pivot releases the basic row whose
// multiplier leaves [u-1, u] and moves along the resulting edge to the
// minimizing breakpoint (a weighted-median line search).
struct SimplexResult {
    Vector beta;
    std::vector<int> basis;
    int pivots = 0;
};

SimplexResult simplex(const Scaled& prob, double u, std::vector<int> basis, int max_pivots) {
    const Matrix& x_mat = *prob.x;
    const Eigen::Index n = x_mat.rows();
    const Eigen::Index m = x_mat.cols();
    std::vector<char> in_basis(n, 0);
    for (int i : basis) in_basis[i] = 1;

    Matrix inv;
    Vector yh(m), beta(m), resid(n), sign(n), g(m), mult(m), q(n);
    std::vector<std::pair<double, int>> breaks;
    breaks.reserve(n);
    const auto later = [](const std::pair<double, int>& a, const std::pair<double, int>& b) { return a > b; };
    SimplexResult out;
    for (;;) {
        if (!factor_basis(x_mat, basis, inv)) throw NumericalError("simplex: basis became singular");
        for (Eigen::Index k = 0; k < m; ++k) yh(k) = prob.y(basis[k]);
        beta.noalias() = inv * yh;
        resid = prob.y;
        resid.noalias() -= x_mat * beta;
        for (Eigen::Index i = 0; i < n; ++i) sign(i) = in_basis[i] ? 0.0 : (resid(i) < 0.0 ? 1.0 - u : -u);
        for (int i : basis) resid(i) = 0.0;
        g.noalias() = x_mat.transpose() * sign;
        g -= prob.c;
        mult.noalias() = inv.transpose() * g;

        Eigen::Index leave = -1;
        double worst = kDualTolerance;
        for (Eigen::Index k = 0; k < m; ++k) {
            const double viol = std::max(mult(k) - u, (u - 1.0) - mult(k));
            if (viol > worst) {
                worst = viol;
                leave = k;
            }
        }
        if (leave < 0) break;
        if (out.pivots >= max_pivots)
            throw NumericalError("simplex: no optimal vertex after " + std::to_string(max_pivots) +
                                 " pivots (max dual infeasibility " + std::to_string(worst) + ")");

        // Edge direction d with X_h d = sigma e_leave; the objective along it
        // is convex piecewise linear with initial slope below zero.
        const double sigma = mult(leave) > u ? -1.0 : 1.0;
        double slope = sigma * mult(leave) + (sigma > 0 ? 1.0 - u : u);
        q.noalias() = x_mat * (sigma * inv.col(leave));
        breaks.clear();
        for (Eigen::Index i = 0; i < n; ++i) {
            if (in_basis[i] || q(i) == 0.0) continue;
            const double r = resid(i);
            if ((r > 0.0 && q(i) > 0.0) || (r < 0.0 && q(i) < 0.0) || (r == 0.0 && q(i) > 0.0))
                breaks.emplace_back(r / q(i), static_cast<int>(i));
        }
        std::make_heap(breaks.begin(), breaks.end(), later);
        // A slope within rounding of zero means the objective is flat from this
        // breakpoint on (the perturbation sits on the boundary of the set of
        // attainable subgradients); the breakpoint is then optimal.
        int enter = -1;
        double scale = std::abs(slope);
        auto end = breaks.end();
        while (end != breaks.begin()) {
            std::pop_heap(breaks.begin(), end, later);
            --end;
            const int i = end->second;
            slope += std::abs(q(i));
            scale += std::abs(q(i));
            if (slope >= -1e-12 * scale) {
                enter = i;
                break;
            }
        }
        if (enter < 0) throw NumericalError("simplex: objective unbounded below (perturbation too large)");
        in_basis[basis[leave]] = 0;
        in_basis[enter] = 1;
        basis[leave] = enter;
        ++out.pivots;
    }
    out.beta = beta;
    out.basis = std::move(basis);
    return out;
}

}  // namespace

void Dataset::validate() const {
    if (z.rows() != y.size()) throw UserError("dataset: Y has " + std::to_string(y.size()) + " rows, Z has " + std::to_string(z.rows()));
    if (m() < 1) throw UserError("dataset: design has no columns");
    if (n() < m()) throw UserError("dataset: n = " + std::to_string(n()) + " is smaller than m = " + std::to_string(m()));
    if (!y.allFinite() || !z.allFinite()) throw UserError("dataset: non-finite entries");
    if (weighted()) {
        if (weights.size() != n()) throw UserError("dataset: weight vector length mismatch");
        if (!weights.allFinite() || weights.minCoeff() <= 0.0) throw UserError("dataset: weights must be positive");
    }
}

void check_full_rank(const Matrix& z) {
    Eigen::ColPivHouseholderQR<Matrix> qr(z);
    qr.setThreshold(1e-10);
    if (qr.rank() < z.cols()) throw NumericalError(describe_null_space(z));
}

double check_loss(double z, double u) { return (u - (z < 0.0 ? 1.0 : 0.0)) * z; }

double qr_objective(const Dataset& data, double u, const Vector& beta, const std::optional<Vector>& perturbation) {
    const Vector r = data.y - data.z * beta;
    double total = 0.0;
    for (Eigen::Index i = 0; i < data.n(); ++i) total += data.weight(i) * check_loss(r(i), u);
    const double n = static_cast<double>(data.n());
    double value = total / n;
    if (perturbation) value -= perturbation->dot(beta) / std::sqrt(n);
    return value;
}

namespace {

QrFit finish(const Dataset& data, double u, const std::optional<Vector>& perturbation, Vector beta, std::vector<int> basis) {
    QrFit fit;
    fit.u = u;
    fit.beta = std::move(beta);
    fit.basis = std::move(basis);
    fit.perturbation = perturbation;
    fit.objective = qr_objective(data, u, fit.beta, perturbation);
    const double scale = std::max(1.0, data.y.cwiseAbs().maxCoeff());
    const Vector r = data.y - data.z * fit.beta;
    fit.n_interpolated = static_cast<int>((r.array().abs() <= 1e-9 * scale).count());
    return fit;
}

}  // namespace

QrFit solve_qr(const Dataset& data, double u, const std::optional<Vector>& perturbation, const SolveOptions& options) {
    if (!(u > 0.0 && u < 1.0)) throw UserError("solve_qr: quantile index must lie in (0,1)");
    data.validate();
    const Scaled prob = scale(data, perturbation);
    const Matrix& x_mat = *prob.x;
    const int max_pivots = std::max<int>(500, 20 * static_cast<int>(data.n()));

    std::vector<int> start;
    int ipm_iterations = 0;
    Matrix inv;
    if (options.warm_basis && factor_basis(x_mat, *options.warm_basis, inv)) {
        start = *options.warm_basis;
    } else {
        IpmResult ipm;
        try {
            ipm = frisch_newton(x_mat, prob.y, prob.c, u, options.gap_tolerance, options.max_iterations);
        } catch (const NumericalError&) {
            check_full_rank(data.z);
            throw;
        }
        if (!ipm.usable) {
            std::ostringstream msg;
            msg << "solve_qr: interior point did not converge in " << ipm.iterations << " iterations (duality gap "
                << ipm.gap << ")";
            throw NumericalError(msg.str());
        }
        ipm_iterations = ipm.iterations;
        start = crossover_basis(x_mat, prob.y - x_mat * ipm.beta);
        if (static_cast<Eigen::Index>(start.size()) < data.m()) {
            check_full_rank(data.z);
            throw NumericalError("solve_qr: could not assemble a nonsingular crossover basis");
        }
    }
    SimplexResult sx = simplex(prob, u, std::move(start), max_pivots);
    QrFit fit = finish(data, u, perturbation, std::move(sx.beta), std::move(sx.basis));
    fit.ipm_iterations = ipm_iterations;
    fit.pivots = sx.pivots;
    return fit;
}

QrFit brute_force_oracle(const Dataset& data, double u, const std::optional<Vector>& perturbation) {
    data.validate();
    const auto n = static_cast<int>(data.n());
    const auto m = static_cast<int>(data.m());
    if (n > 15 || m > 3) throw UserError("brute_force_oracle: limited to n <= 15 and m <= 3");

    double best = std::numeric_limits<double>::infinity();
    Vector best_beta;
    std::vector<int> best_basis;
    std::vector<int> subset(m);
    std::iota(subset.begin(), subset.end(), 0);
    Matrix zh(m, m);
    Vector yh(m);
    for (;;) {
        for (int k = 0; k < m; ++k) {
            zh.row(k) = data.z.row(subset[k]);
            yh(k) = data.y(subset[k]);
        }
        Eigen::FullPivLU<Matrix> lu(zh);
        if (lu.isInvertible()) {
            Vector beta = lu.solve(yh);
            const double value = qr_objective(data, u, beta, perturbation);
            if (value < best) {
                best = value;
                best_beta = beta;
                best_basis = subset;
            }
        }
        int k = m - 1;
        while (k >= 0 && subset[k] == n - m + k) --k;
        if (k < 0) break;
        ++subset[k];
        for (int j = k + 1; j < m; ++j) subset[j] = subset[j - 1] + 1;
    }
    if (best_basis.empty()) throw NumericalError("brute_force_oracle: every interpolation system is singular");
    return finish(data, u, perturbation, best_beta, best_basis);
}

double certificate(const QrFit& fit, const Dataset& data) {
    const double n = static_cast<double>(data.n());
    const Vector fitted = data.z * fit.beta;
    Vector grad = Vector::Zero(data.m());
    for (Eigen::Index i = 0; i < data.n(); ++i) {
        const double a = (data.y(i) <= fitted(i) ? 1.0 : 0.0) - fit.u;
        grad.noalias() += data.weight(i) * a * data.z.row(i).transpose();
    }
    grad /= n;
    if (fit.perturbation) grad -= *fit.perturbation / std::sqrt(n);
    return std::sqrt(n) * grad.norm();
}

double certificate_bound(const Dataset& data) {
    double zeta = 0.0;
    for (Eigen::Index i = 0; i < data.n(); ++i) zeta = std::max(zeta, data.weight(i) * data.z.row(i).norm());
    return static_cast<double>(data.m()) * zeta / std::sqrt(static_cast<double>(data.n()));
}

}  // namespace sqr
