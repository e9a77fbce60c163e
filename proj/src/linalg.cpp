#include "sqr/linalg.hpp"

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>

namespace sqr {

double Rng::standard_normal() { return normal_quantile(uniform()); }

double Rng::standard_exponential() { return -std::log(uniform()); }

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double normal_pdf(double x) {
    static const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * M_PI);
    return inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw UserError("normal_quantile: p must lie in (0,1)");
    static const boost::math::normal_distribution<double> standard;
    return boost::math::quantile(standard, p);
}

namespace linalg {

Matrix symmetrize(const Matrix& a) {
    Matrix s = a;
    for (Eigen::Index j = 0; j < s.cols(); ++j)
        for (Eigen::Index i = j + 1; i < s.rows(); ++i) s(i, j) = s(j, i) = 0.5 * (a(i, j) + a(j, i));
    return s;
}

namespace {

Matrix from_eigen(const Eigen::SelfAdjointEigenSolver<Matrix>& es, const Vector& values) {
    const Matrix& v = es.eigenvectors();
    return symmetrize(v * values.asDiagonal() * v.transpose());
}

Eigen::SelfAdjointEigenSolver<Matrix> decompose(const Matrix& a) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(a));
    if (es.info() != Eigen::Success) throw NumericalError("symmetric eigendecomposition failed");
    return es;
}

}  // namespace

Matrix floored_inverse(const Matrix& a, double floor_rel) {
    auto es = decompose(a);
    const double m = static_cast<double>(a.rows());
    const double floor = std::max(floor_rel * a.trace() / m, std::numeric_limits<double>::min());
    Vector inv = es.eigenvalues().unaryExpr([floor](double l) { return 1.0 / std::max(l, floor); });
    return from_eigen(es, inv);
}

Matrix sqrt_psd(const Matrix& a) {
    auto es = decompose(a);
    Vector r = es.eigenvalues().unaryExpr([](double l) { return std::sqrt(std::max(l, 0.0)); });
    return from_eigen(es, r);
}

Matrix inv_sqrt_pd(const Matrix& a) {
    auto es = decompose(a);
    if (es.eigenvalues().minCoeff() <= 0.0) throw NumericalError("inv_sqrt_pd: matrix is not positive definite");
    Vector r = es.eigenvalues().unaryExpr([](double l) { return 1.0 / std::sqrt(l); });
    return from_eigen(es, r);
}

double min_eigenvalue(const Matrix& a) { return decompose(a).eigenvalues().minCoeff(); }

}  // namespace linalg
}  // namespace sqr
