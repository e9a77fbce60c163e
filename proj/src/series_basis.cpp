#include "sqr/series_basis.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace sqr {

namespace {

constexpr int kSplineOrder = 4;  // cubic
constexpr int kSplineDegree = 3;
constexpr int kZetaGrid = 10001;

// Chebyshev values T_0..T_d and derivatives dT_j/dt at t.
void chebyshev(double t, int d, Vector& value, Vector* deriv) {
    value.resize(d + 1);
    value(0) = 1.0;
    if (d >= 1) value(1) = t;
    for (int j = 2; j <= d; ++j) value(j) = 2.0 * t * value(j - 1) - value(j - 2);
    if (!deriv) return;
    // T_j' = j U_{j-1}, with U the second-kind polynomials.
    deriv->resize(d + 1);
    (*deriv)(0) = 0.0;
    double u_prev = 0.0, u_cur = 1.0;  // U_{-1}, U_0
    for (int j = 1; j <= d; ++j) {
        (*deriv)(j) = j * u_cur;
        const double next = 2.0 * t * u_cur - u_prev;
        u_prev = u_cur;
        u_cur = next;
    }
}

// Index i of the knot span [t_i, t_{i+1}) used for x, clamped to the valid
// spans so that points outside the range evaluate the boundary polynomial.
int find_span(const std::vector<double>& t, int count, double x) {
    const int lo = kSplineDegree;
    const int hi = count - 1;
    if (x >= t[hi + 1]) return hi;
    if (x <= t[lo]) return lo;
    auto it = std::upper_bound(t.begin() + lo, t.begin() + hi + 1, x);
    return static_cast<int>(it - t.begin()) - 1;
}

// Nonzero B-spline values of degree p on span i (Cox-de Boor triangle).
// out[j] = N_{i-p+j,p}(x), j = 0..p.
void basis_funs(const std::vector<double>& t, int i, double x, int p, double* out) {
    double left[kSplineOrder], right[kSplineOrder];
    out[0] = 1.0;
    for (int j = 1; j <= p; ++j) {
        left[j] = x - t[i + 1 - j];
        right[j] = t[i + j] - x;
        double saved = 0.0;
        for (int r = 0; r < j; ++r) {
            const double temp = out[r] / (right[r + 1] + left[j - r]);
            out[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        out[j] = saved;
    }
}

}  // namespace

std::string to_string(BasisFamily family) {
    switch (family) {
        case BasisFamily::Linear: return "linear";
        case BasisFamily::PowerPoly: return "power";
        case BasisFamily::CubicBSpline: return "cubic_bspline";
    }
    return "unknown";
}

BasisFamily basis_family_from_string(const std::string& name) {
    if (name == "linear") return BasisFamily::Linear;
    if (name == "power" || name == "power_poly") return BasisFamily::PowerPoly;
    if (name == "cubic_bspline" || name == "bspline") return BasisFamily::CubicBSpline;
    throw UserError("unknown basis family '" + name + "' (expected linear, power or cubic_bspline)");
}

double sample_quantile(std::vector<double> values, double p) {
    if (values.empty()) throw UserError("sample_quantile: empty sample");
    std::sort(values.begin(), values.end());
    const double h = (static_cast<double>(values.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

double BasisSpec::normalized(double w) const {
    const auto [lo, hi] = ranges_[0];
    return 2.0 * (w - lo) / (hi - lo) - 1.0;
}

Vector BasisSpec::series(double w) const {
    const int offset = intercept_ ? 1 : 0;
    switch (family_) {
        case BasisFamily::Linear: {
            Vector z(offset + 1);
            if (intercept_) z(0) = 1.0;
            z(offset) = w;
            return z;
        }
        case BasisFamily::PowerPoly: {
            if (!orthogonal_) {
                Vector z(degree_ + offset);
                if (intercept_) z(0) = 1.0;
                double pw = 1.0;
                for (int j = 1; j <= degree_; ++j) {
                    pw *= w;
                    z(offset + j - 1) = pw;
                }
                return z;
            }
            Vector cheb;
            chebyshev(normalized(w), degree_, cheb, nullptr);
            Vector all = cheb_coef_ * cheb;
            return intercept_ ? all : Vector(all.tail(degree_));
        }
        case BasisFamily::CubicBSpline: {
            Vector block = eval_spline_block(*this, w);
            if (intercept_) block(0) = 1.0;
            return block;
        }
    }
    return {};
}

Vector BasisSpec::series_derivative(double w) const {
    const int offset = intercept_ ? 1 : 0;
    switch (family_) {
        case BasisFamily::Linear: {
            Vector z = Vector::Zero(offset + 1);
            z(offset) = 1.0;
            return z;
        }
        case BasisFamily::PowerPoly: {
            if (!orthogonal_) {
                Vector z = Vector::Zero(degree_ + offset);
                double pw = 1.0;  // w^{j-1}
                for (int j = 1; j <= degree_; ++j) {
                    z(offset + j - 1) = j * pw;
                    pw *= w;
                }
                return z;
            }
            Vector cheb, dcheb;
            chebyshev(normalized(w), degree_, cheb, &dcheb);
            const auto [lo, hi] = ranges_[0];
            Vector all = cheb_coef_ * dcheb * (2.0 / (hi - lo));
            return intercept_ ? all : Vector(all.tail(degree_));
        }
        case BasisFamily::CubicBSpline: {
            const int count = spline_count();
            Vector d = Vector::Zero(count);
            const int span = find_span(knots_, count, w);
            double lower[kSplineOrder];
            basis_funs(knots_, span, w, kSplineDegree - 1, lower);
            // N'_{k,3} = 3 [N_{k,2}/(t_{k+3}-t_k) - N_{k+1,2}/(t_{k+4}-t_{k+1})], k = span-3+j
            for (int j = 0; j <= kSplineDegree; ++j) {
                const int k = span - kSplineDegree + j;
                double value = 0.0;
                if (j >= 1) value += lower[j - 1] / (knots_[k + 3] - knots_[k]);
                if (j <= kSplineDegree - 1) value -= lower[j] / (knots_[k + 4] - knots_[k + 1]);
                d(k) = kSplineDegree * value;
            }
            if (intercept_) d(0) = 0.0;
            return d;
        }
    }
    return {};
}

Vector eval_spline_block(const BasisSpec& spec, double w) {
    if (spec.family_ != BasisFamily::CubicBSpline) throw UserError("eval_spline_block: basis is not a B-spline");
    const int count = spec.spline_count();
    Vector block = Vector::Zero(count);
    const int span = find_span(spec.knots_, count, w);
    double values[kSplineOrder];
    basis_funs(spec.knots_, span, w, kSplineDegree, values);
    for (int j = 0; j <= kSplineDegree; ++j) block(span - kSplineDegree + j) = values[j];
    return block;
}

Vector eval_basis(const BasisSpec& spec, const Vector& x) {
    if (x.size() != spec.dimension())
        throw UserError("eval_basis: expected " + std::to_string(spec.dimension()) + " covariates, got " +
                        std::to_string(x.size()));
    Vector s = spec.series(x(0));
    Vector z(spec.m_);
    z.head(s.size()) = s;
    z.tail(spec.extra_linear_) = x.tail(spec.extra_linear_);
    return z;
}

Vector eval_basis_derivative(const BasisSpec& spec, const Vector& x, int k) {
    if (k < 0 || k >= spec.dimension())
        throw UserError("eval_basis_derivative: covariate index " + std::to_string(k) + " out of range [0, " +
                        std::to_string(spec.dimension()) + ")");
    if (x.size() != spec.dimension()) throw UserError("eval_basis_derivative: covariate dimension mismatch");
    Vector d = Vector::Zero(spec.m_);
    if (k == 0) {
        Vector s = spec.series_derivative(x(0));
        d.head(s.size()) = s;
    } else {
        d(spec.m_ - spec.extra_linear_ + k - 1) = 1.0;
    }
    return d;
}

bool BasisSpec::extrapolates(const Vector& x) const {
    for (int k = 0; k < dimension() && k < x.size(); ++k)
        if (x(k) < ranges_[k].first || x(k) > ranges_[k].second) return true;
    return false;
}

void BasisSpec::finalize() {
    switch (family_) {
        case BasisFamily::Linear: m_ = (intercept_ ? 1 : 0) + 1; break;
        case BasisFamily::PowerPoly: m_ = (intercept_ ? 1 : 0) + degree_; break;
        case BasisFamily::CubicBSpline: m_ = spline_count(); break;
    }
    m_ += extra_linear_;

    double v_norm2 = 0.0;
    for (int k = 1; k < dimension(); ++k) {
        const double a = std::max(std::abs(ranges_[k].first), std::abs(ranges_[k].second));
        v_norm2 += a * a;
    }
    const auto [lo, hi] = ranges_[0];
    double best = 0.0;
    for (int g = 0; g < kZetaGrid; ++g) {
        const double w = (g == kZetaGrid - 1) ? hi : lo + (hi - lo) * g / (kZetaGrid - 1.0);
        best = std::max(best, series(w).squaredNorm());
    }
    zeta_ = std::sqrt(best + v_norm2);
}

BasisSpec make_basis(const BasisParams& params, const Matrix& covariates) {
    const Eigen::Index n = covariates.rows();
    if (n == 0) throw UserError("make_basis: covariate sample is empty");
    if (params.extra_linear_covariates < 0) throw UserError("make_basis: negative V-block size");
    if (covariates.cols() != 1 + params.extra_linear_covariates)
        throw UserError("make_basis: sample has " + std::to_string(covariates.cols()) + " columns, basis expects " +
                        std::to_string(1 + params.extra_linear_covariates));
    if (!covariates.allFinite()) throw UserError("make_basis: covariate sample contains non-finite values");

    BasisSpec spec;
    spec.family_ = params.family;
    spec.intercept_ = params.includes_intercept;
    spec.extra_linear_ = params.extra_linear_covariates;
    for (Eigen::Index k = 0; k < covariates.cols(); ++k)
        spec.ranges_.emplace_back(covariates.col(k).minCoeff(), covariates.col(k).maxCoeff());

    const auto [lo, hi] = spec.ranges_[0];
    const std::vector<double> w(covariates.col(0).data(), covariates.col(0).data() + n);

    switch (params.family) {
        case BasisFamily::Linear:
            spec.degree_ = 1;
            break;
        case BasisFamily::PowerPoly: {
            if (params.degree < 1) throw UserError("make_basis: polynomial degree must be >= 1");
            spec.degree_ = params.degree;
            spec.orthogonal_ = params.orthogonal;
            if (!params.orthogonal) break;
            if (!(hi > lo)) throw UserError("make_basis: orthogonal polynomials need a non-degenerate covariate range");
            // Gram-Schmidt against the sample measure, done as a Cholesky
            // factorization of the Chebyshev Gram matrix.
            const int d = params.degree;
            Matrix gram = Matrix::Zero(d + 1, d + 1);
            Vector cheb;
            for (double wi : w) {
                chebyshev(spec.normalized(wi), d, cheb, nullptr);
                gram.selfadjointView<Eigen::Lower>().rankUpdate(cheb);
            }
            gram = Matrix(gram.selfadjointView<Eigen::Lower>()) / static_cast<double>(n);
            Eigen::LLT<Matrix> llt(gram);
            if (llt.info() != Eigen::Success)
                throw UserError("make_basis: sample has fewer than " + std::to_string(d + 1) +
                                " distinct covariate values; cannot orthogonalize degree " + std::to_string(d));
            Matrix lower = llt.matrixL();
            spec.cheb_coef_ = lower.triangularView<Eigen::Lower>().solve(Matrix::Identity(d + 1, d + 1));
            break;
        }
        case BasisFamily::CubicBSpline: {
            const auto& qs = params.knot_quantiles;
            if (qs.size() < 2) throw UserError("make_basis: need at least two knot quantiles");
            for (std::size_t i = 0; i < qs.size(); ++i) {
                if (qs[i] < 0.0 || qs[i] > 1.0) throw UserError("make_basis: knot quantiles must lie in [0,1]");
                if (i > 0 && !(qs[i] > qs[i - 1])) throw UserError("make_basis: knot quantiles must be increasing");
            }
            if (!(hi > lo)) throw UserError("make_basis: B-spline needs a non-degenerate covariate range");
            std::vector<double> breaks;
            for (double q : qs) breaks.push_back(sample_quantile(w, q));
            const double nudge = 1e-9 * (hi - lo);
            for (std::size_t i = 1; i < breaks.size(); ++i) {
                if (breaks[i] > breaks[i - 1]) continue;
                std::ostringstream msg;
                msg << "knots at quantiles " << qs[i - 1] << " and " << qs[i] << " coincide (value " << breaks[i] << ")";
                if (!params.nudge_tied_knots) throw UserError("make_basis: " + msg.str());
                breaks[i] = breaks[i - 1] + nudge;
                spec.warnings_.push_back(msg.str() + "; separated by " + std::to_string(nudge));
            }
            if (breaks.back() > hi + 1e-12 * (hi - lo) && qs.back() >= 1.0)
                throw UserError("make_basis: nudged knots leave the covariate range; sample too degenerate");
            spec.knots_.assign(kSplineDegree, breaks.front());
            spec.knots_.insert(spec.knots_.end(), breaks.begin(), breaks.end());
            spec.knots_.insert(spec.knots_.end(), kSplineDegree, breaks.back());
            spec.knot_quantiles_ = qs;
            spec.degree_ = kSplineDegree;
            break;
        }
    }
    spec.finalize();
    return spec;
}

Matrix design_matrix(const BasisSpec& spec, const Matrix& covariates) {
    if (covariates.cols() != spec.dimension()) throw UserError("design_matrix: covariate dimension mismatch");
    Matrix z(covariates.rows(), spec.size());
    for (Eigen::Index i = 0; i < covariates.rows(); ++i) z.row(i) = eval_basis(spec, covariates.row(i).transpose());
    return z;
}

Vector loading_average_derivative(const BasisSpec& spec, const Matrix& covariates, int k,
                                  const std::vector<double>& weights) {
    const Eigen::Index n = covariates.rows();
    if (n == 0) throw UserError("loading_average_derivative: empty sample");
    if (!weights.empty()) {
        if (static_cast<Eigen::Index>(weights.size()) != n)
            throw UserError("loading_average_derivative: weight count does not match the sample");
        double total = 0.0;
        for (double v : weights) {
            if (v < 0.0) throw UserError("loading_average_derivative: negative weight");
            total += v;
        }
        if (std::abs(total - 1.0) > 1e-10)
            throw UserError("loading_average_derivative: weights sum to " + std::to_string(total) + ", not 1");
    }
    Vector ell = Vector::Zero(spec.size());
    for (Eigen::Index j = 0; j < n; ++j) {
        const double mu = weights.empty() ? 1.0 / static_cast<double>(n) : weights[j];
        if (mu == 0.0) continue;
        ell += mu * eval_basis_derivative(spec, covariates.row(j).transpose(), k);
    }
    return ell;
}

std::vector<double> slice_weights(const Matrix& covariates, int column, double value, double tol) {
    if (column < 0 || column >= covariates.cols()) throw UserError("slice_weights: column out of range");
    std::vector<double> mu(covariates.rows(), 0.0);
    std::size_t count = 0;
    for (Eigen::Index j = 0; j < covariates.rows(); ++j)
        if (std::abs(covariates(j, column) - value) <= tol) {
            mu[j] = 1.0;
            ++count;
        }
    if (count == 0) throw UserError("slice_weights: no observation on the requested slice");
    for (double& v : mu) v /= static_cast<double>(count);
    return mu;
}

nlohmann::json BasisSpec::to_json() const {
    nlohmann::json j;
    j["family"] = to_string(family_);
    j["degree"] = degree_;
    j["orthogonal"] = orthogonal_;
    j["includes_intercept"] = intercept_;
    j["extra_linear_covariates"] = extra_linear_;
    j["m"] = m_;
    nlohmann::json ranges = nlohmann::json::array();
    for (const auto& [lo, hi] : ranges_) ranges.push_back({lo, hi});
    j["covariate_ranges"] = ranges;
    j["knots"] = knots_;
    j["knot_quantiles"] = knot_quantiles_;
    std::vector<double> coef(cheb_coef_.data(), cheb_coef_.data() + cheb_coef_.size());
    j["chebyshev_coefficients"] = {{"rows", cheb_coef_.rows()}, {"cols", cheb_coef_.cols()}, {"col_major", coef}};
    j["zeta"] = zeta_;
    j["warnings"] = warnings_;
    return j;
}

BasisSpec BasisSpec::from_json(const nlohmann::json& j) {
    BasisSpec spec;
    try {
        spec.family_ = basis_family_from_string(j.at("family").get<std::string>());
        spec.degree_ = j.at("degree").get<int>();
        spec.orthogonal_ = j.at("orthogonal").get<bool>();
        spec.intercept_ = j.at("includes_intercept").get<bool>();
        spec.extra_linear_ = j.at("extra_linear_covariates").get<int>();
        for (const auto& r : j.at("covariate_ranges")) spec.ranges_.emplace_back(r.at(0).get<double>(), r.at(1).get<double>());
        spec.knots_ = j.at("knots").get<std::vector<double>>();
        spec.knot_quantiles_ = j.at("knot_quantiles").get<std::vector<double>>();
        const auto& cc = j.at("chebyshev_coefficients");
        const auto coef = cc.at("col_major").get<std::vector<double>>();
        spec.cheb_coef_ = Eigen::Map<const Matrix>(coef.data(), cc.at("rows").get<Eigen::Index>(), cc.at("cols").get<Eigen::Index>());
        spec.warnings_ = j.at("warnings").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw UserError(std::string("basis block: ") + e.what());
    }
    spec.finalize();
    if (spec.m_ != j.at("m").get<int>()) throw UserError("basis block: stored m does not match the rebuilt basis");
    return spec;
}

}  // namespace sqr
