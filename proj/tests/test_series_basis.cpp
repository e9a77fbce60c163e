#include "doctest.h"

#include "sqr/series_basis.hpp"
#include "test_util.hpp"

#include <cmath>

using namespace sqr;
using sqr::testing::uniform;

namespace {

Matrix uniform_sample(std::uint64_t seed, Eigen::Index n, double lo, double hi) {
    Rng rng(seed);
    Matrix x(n, 1);
    for (Eigen::Index i = 0; i < n; ++i) x(i, 0) = uniform(rng, lo, hi);
    return x;
}

Vector at(double w) { return Vector::Constant(1, w); }

BasisSpec spline_basis(std::uint64_t seed = 11) {
    BasisParams p;
    p.family = BasisFamily::CubicBSpline;
    return make_basis(p, uniform_sample(seed, 5001, 0.0, 1.0));
}

}  // namespace

TEST_CASE("linear basis is (1, x) with derivative (0, 1)") {
    BasisParams p;
    const BasisSpec spec = make_basis(p, uniform_sample(1, 20, -2.0, 2.0));
    CHECK(spec.size() == 2);
    const Vector z = eval_basis(spec, at(0.3));
    CHECK(z(0) == 1.0);
    CHECK(z(1) == 0.3);
    const Vector d = eval_basis_derivative(spec, at(1.7), 0);
    CHECK(d(0) == 0.0);
    CHECK(d(1) == 1.0);

    const Vector ell = loading_average_derivative(spec, uniform_sample(2, 50, 0.0, 1.0), 0);
    CHECK(ell(0) == 0.0);
    CHECK(ell(1) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("raw power polynomial values and derivatives") {
    BasisParams p;
    p.family = BasisFamily::PowerPoly;
    p.degree = 2;
    p.orthogonal = false;
    const BasisSpec spec = make_basis(p, uniform_sample(3, 10, -1.0, 1.0));
    CHECK(spec.size() == 3);
    const Vector z = eval_basis(spec, at(0.0));
    CHECK(z(0) == 1.0);
    CHECK(z(1) == 0.0);
    CHECK(z(2) == 0.0);
    const Vector d = eval_basis_derivative(spec, at(0.5), 0);
    CHECK(d(0) == 0.0);
    CHECK(d(1) == 1.0);
    CHECK(d(2) == 1.0);
}

TEST_CASE("orthogonal polynomials of degree 6 are orthonormal in L2 of the uniform law") {
    BasisParams p;
    p.family = BasisFamily::PowerPoly;
    p.degree = 6;
    const BasisSpec spec = make_basis(p, uniform_sample(4, 20000, -1.0, 1.0));
    REQUIRE(spec.size() == 7);
    CHECK(eval_basis(spec, at(0.123))(0) == doctest::Approx(1.0).epsilon(1e-12));

    // Midpoint rule on a fine grid of [-1, 1], density 1/2.
    const int grid = 20000;
    Matrix gram = Matrix::Zero(7, 7);
    for (int g = 0; g < grid; ++g) {
        const double x = -1.0 + (g + 0.5) * 2.0 / grid;
        const Vector z = eval_basis(spec, at(x));
        gram += z * z.transpose() / grid;
    }
    // Monte Carlo error of the construction sample is O(1/sqrt(20000)).
    CHECK((gram - Matrix::Identity(7, 7)).cwiseAbs().maxCoeff() < 0.06);

    // On the construction sample itself the Gram matrix is the identity up to rounding.
    const Matrix sample = uniform_sample(4, 20000, -1.0, 1.0);
    const Matrix z = design_matrix(spec, sample);
    const Matrix own = z.transpose() * z / static_cast<double>(z.rows());
    CHECK((own - Matrix::Identity(7, 7)).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("cubic B-spline with quantile knots") {
    const Matrix sample = uniform_sample(11, 5001, 0.0, 1.0);
    const BasisSpec spec = spline_basis();
    CHECK(spec.size() == 7);
    const auto& knots = spec.knots();
    REQUIRE(knots.size() == 11);
    const std::vector<double> w(sample.data(), sample.data() + sample.rows());
    const double qs[] = {0.0, 0.25, 0.5, 0.75, 1.0};
    for (int i = 0; i < 5; ++i) CHECK(knots[3 + i] == sample_quantile(w, qs[i]));
    for (int i = 3; i < 7; ++i) CHECK(knots[i + 1] > knots[i]);
    CHECK(eval_basis(spec, at(0.4))(0) == 1.0);
}

TEST_CASE("B-spline block is a partition of unity") {
    const BasisSpec spec = spline_basis();
    Rng rng(12);
    const auto [lo, hi] = spec.covariate_ranges()[0];
    double worst = 0.0;
    for (int t = 0; t < 1000; ++t) {
        const double w = uniform(rng, lo, hi);
        worst = std::max(worst, std::abs(eval_spline_block(spec, w).sum() - 1.0));
    }
    CHECK(worst < 1e-12);
}

TEST_CASE("basis derivatives agree with central differences") {
    BasisParams poly;
    poly.family = BasisFamily::PowerPoly;
    const Matrix sample = uniform_sample(13, 500, 0.0, 1.0);
    const BasisSpec specs[] = {spline_basis(), make_basis(poly, sample)};
    Rng rng(14);
    for (const BasisSpec& spec : specs) {
        const auto [lo, hi] = spec.covariate_ranges()[0];
        for (int t = 0; t < 20; ++t) {
            const double w = uniform(rng, lo + 0.01, hi - 0.01);
            const double step = 1e-5;
            const Vector fd = (eval_basis(spec, at(w + step)) - eval_basis(spec, at(w - step))) / (2.0 * step);
            const Vector d = eval_basis_derivative(spec, at(w), 0);
            for (Eigen::Index j = 0; j < d.size(); ++j)
                CHECK(std::abs(fd(j) - d(j)) <= 1e-6 * std::max(1.0, std::abs(d(j))));
        }
    }
}

TEST_CASE("zeta bounds the basis norm over the covariate range") {
    BasisParams poly;
    poly.family = BasisFamily::PowerPoly;
    const BasisSpec specs[] = {spline_basis(), make_basis(poly, uniform_sample(15, 300, 2.0, 3.0))};
    for (const BasisSpec& spec : specs) {
        const auto [lo, hi] = spec.covariate_ranges()[0];
        CHECK(std::isfinite(spec.zeta()));
        double worst = 0.0;
        for (int g = 0; g <= 10000; ++g) worst = std::max(worst, eval_basis(spec, at(lo + (hi - lo) * g / 10000.0)).norm());
        CHECK(worst <= spec.zeta());
    }
}

TEST_CASE("design Gram matrix is symmetric positive definite") {
    BasisParams poly;
    poly.family = BasisFamily::PowerPoly;
    poly.extra_linear_covariates = 1;
    Rng rng(16);
    Matrix x(200, 2);
    for (Eigen::Index i = 0; i < 200; ++i) {
        x(i, 0) = uniform(rng, 0.0, 1.0);
        x(i, 1) = uniform(rng, 0.0, 1.0);
    }
    const BasisSpec spec = make_basis(poly, x);
    CHECK(spec.size() == 8);
    const Matrix z = design_matrix(spec, x);
    Matrix g = z.transpose() * z / 200.0;
    g = (g + g.transpose()) / 2.0;
    Eigen::SelfAdjointEigenSolver<Matrix> eig(g);
    CHECK(eig.eigenvalues().minCoeff() > 0.0);
    // V enters linearly: its derivative selects its own column.
    const Vector d = eval_basis_derivative(spec, x.row(0).transpose(), 1);
    CHECK(d(7) == 1.0);
    CHECK(d.head(7).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("tied quantile knots are nudged or rejected") {
    Matrix x(20, 1);
    for (Eigen::Index i = 0; i < 20; ++i) x(i, 0) = i < 15 ? 0.0 : 1.0 + static_cast<double>(i);
    BasisParams p;
    p.family = BasisFamily::CubicBSpline;
    const BasisSpec spec = make_basis(p, x);
    CHECK_FALSE(spec.warnings().empty());
    for (int i = 3; i < 7; ++i) CHECK(spec.knots()[i + 1] > spec.knots()[i]);

    p.nudge_tied_knots = false;
    try {
        make_basis(p, x);
        FAIL("expected an error");
    } catch (const UserError& e) {
        CHECK(std::string(e.what()).find("quantiles 0 and 0.25") != std::string::npos);
    }
}

TEST_CASE("loading weights must sum to one and slices renormalize") {
    BasisParams p;
    Matrix x(4, 2);
    x << 0.1, 1.0, 0.2, 2.0, 0.3, 1.0, 0.4, 2.0;
    p.extra_linear_covariates = 1;
    const BasisSpec spec = make_basis(p, x);
    CHECK_THROWS_AS(loading_average_derivative(spec, x, 0, {0.5, 0.5, 0.5, 0.0}), UserError);
    const std::vector<double> mu = slice_weights(x, 1, 2.0);
    CHECK(mu == std::vector<double>{0.0, 0.5, 0.0, 0.5});
    const Vector ell = loading_average_derivative(spec, x, 0, mu);
    CHECK(ell(1) == 1.0);
    CHECK_THROWS_AS(eval_basis_derivative(spec, x.row(0).transpose(), 2), UserError);
}

TEST_CASE("basis JSON round trip reproduces evaluations") {
    BasisParams poly;
    poly.family = BasisFamily::PowerPoly;
    const BasisSpec specs[] = {spline_basis(), make_basis(poly, uniform_sample(17, 300, 0.0, 0.5))};
    for (const BasisSpec& spec : specs) {
        const BasisSpec back = BasisSpec::from_json(nlohmann::json::parse(spec.to_json().dump()));
        for (double w : {0.01, 0.2, 0.33, 0.49}) CHECK(eval_basis(back, at(w)) == eval_basis(spec, at(w)));
        CHECK(back.zeta() == spec.zeta());
    }
}
