// Acceptance checks. Prints one PASS/FAIL line per criterion; exits non-zero
// if any criterion fails. Pass criterion numbers as arguments to run a subset.

#include "sqr/couplings.hpp"
#include "sqr/functional_inference.hpp"
#include "sqr/monotonization.hpp"
#include "sqr/process_estimation.hpp"
#include "sqr/qr_core.hpp"
#include "sqr/sim_lab.hpp"
#include "test_util.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <set>
#include <sstream>
#include <string>

using namespace sqr;
using sqr::testing::bit_equal;
using sqr::testing::random_dataset;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fixed(double v, int digits = 3) {
    std::ostringstream s;
    s.setf(std::ios::fixed);
    s.precision(digits);
    s << v;
    return s.str();
}

std::string sci(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2e", v);
    return buf;
}

// 1. Solver against subset enumeration.
Outcome solver_oracle() {
    const auto start = Clock::now();
    Rng rng(1001);
    double worst = 0.0;
    int instances = 0;
    for (int t = 0; t < 200; ++t) {
        const Eigen::Index m = 1 + static_cast<Eigen::Index>(rng.next() % 2);
        const Eigen::Index n = m + 1 + static_cast<Eigen::Index>(rng.next() % static_cast<std::uint64_t>(12 - m));
        const double u = 0.1 * static_cast<double>(1 + rng.next() % 9);
        const Dataset d = random_dataset(10000 + static_cast<std::uint64_t>(t), n, m);
        worst = std::max(worst, std::abs(solve_qr(d, u).objective - brute_force_oracle(d, u).objective));
        ++instances;
    }
    const double elapsed = seconds_since(start);
    return {worst <= 1e-8 && elapsed < 10.0 && instances == 200,
            std::to_string(instances) + " instances, max |objective gap| " + sci(worst) + " (tol 1e-8), " +
                fixed(elapsed, 2) + " s (limit 10 s)"};
}

// 2. Subgradient certificate for unperturbed, weighted and perturbed fits.
Outcome certificates() {
    const QuantileGrid grid = QuantileGrid::regular();
    int violations[3] = {0, 0, 0};
    double worst[3] = {0.0, 0.0, 0.0};
    long fits = 0;
    for (int t = 0; t < 200; ++t) {
        const Dataset d = random_dataset(20000 + static_cast<std::uint64_t>(t), 200, 5);
        Dataset weighted = d;
        Rng rng(stream_seed(2002, StreamDomain::WeightedBootstrap, static_cast<std::uint64_t>(t)));
        weighted.weights.resize(d.n());
        for (Eigen::Index i = 0; i < d.n(); ++i) weighted.weights(i) = rng.standard_exponential();
        const Matrix ustar = pivotal_gradient(d.z, draw_uniforms(2003, StreamDomain::GradientBootstrap, t, d.n()), grid);

        const double bounds[3] = {certificate_bound(d), certificate_bound(weighted), certificate_bound(d)};
        QrFit prev[3];
        for (std::size_t k = 0; k < grid.size(); ++k) {
            for (int kind = 0; kind < 3; ++kind) {
                SolveOptions so;
                if (k > 0) so.warm_basis = &prev[kind].basis;
                const Dataset& data = kind == 1 ? weighted : d;
                std::optional<Vector> p;
                // The gradient bootstrap solves with perturbation -U*.
                if (kind == 2) p = Vector(-ustar.row(static_cast<Eigen::Index>(k)).transpose());
                prev[kind] = solve_qr(data, grid[k], p, so);
                const double ratio = certificate(prev[kind], data) / bounds[kind];
                worst[kind] = std::max(worst[kind], ratio);
                if (ratio > 1.0) ++violations[kind];
                ++fits;
            }
        }
    }
    const int total = violations[0] + violations[1] + violations[2];
    return {total == 0, std::to_string(fits) + " fits over " + std::to_string(grid.size()) +
                            " grid points; violations unperturbed/weighted/perturbed " + std::to_string(violations[0]) +
                            "/" + std::to_string(violations[1]) + "/" + std::to_string(violations[2]) +
                            "; max certificate/bound " + fixed(worst[0]) + "/" + fixed(worst[1]) + "/" + fixed(worst[2])};
}

// 3. Coupling covariance against E_n[ZZ'](u ^ u' - uu').
Outcome coupling_covariance() {
    const auto start = Clock::now();
    const Dataset d = random_dataset(3001, 300, 4);
    CoefficientProcess proc;
    proc.grid = QuantileGrid::regular();
    proc.n = d.n();
    proc.betas = Matrix::Zero(static_cast<Eigen::Index>(proc.grid.size()), 4);
    proc.gram = estimate_gram(d);
    // Unit Jacobians: the draws are then the gradient processes themselves.
    proc.jacobians.assign(proc.grid.size(), Matrix::Identity(4, 4));
    proc.jacobian_inverses = proc.jacobians;
    const int B = 10000;
    const ProcessDraws draws[2] = {draw_pivotal(proc, d.z, B, 3002), draw_gaussian(proc, B, 3003)};
    const double pairs[3][2] = {{0.2, 0.2}, {0.2, 0.8}, {0.5, 0.5}};
    double worst_z[2] = {0.0, 0.0};
    int outside = 0, checked = 0;
    for (int method = 0; method < 2; ++method)
        for (const auto& pr : pairs) {
            const int ka = proc.grid.find(pr[0]), kb = proc.grid.find(pr[1]);
            const Matrix target = proc.gram * (std::min(pr[0], pr[1]) - pr[0] * pr[1]);
            for (Eigen::Index i = 0; i < 4; ++i)
                for (Eigen::Index j = 0; j < 4; ++j) {
                    double sum = 0.0, sum2 = 0.0;
                    for (const Matrix& dr : draws[method].draws) {
                        const double p = dr(ka, i) * dr(kb, j);
                        sum += p;
                        sum2 += p * p;
                    }
                    const double mean = sum / B;
                    const double se = std::sqrt((sum2 / B - mean * mean) / B);
                    const double z = std::abs(mean - target(i, j)) / se;
                    worst_z[method] = std::max(worst_z[method], z);
                    outside += z > 3.0;
                    ++checked;
                }
        }
    const double elapsed = seconds_since(start);
    return {outside == 0 && elapsed < 60.0,
            std::to_string(checked) + " entries, " + std::to_string(outside) + " outside 3 SE; max |z| pivotal " +
                fixed(worst_z[0], 2) + ", gaussian " + fixed(worst_z[1], 2) + "; " + fixed(elapsed, 1) +
                " s (limit 60 s)"};
}

// 4. Gradient bootstrap: linear term versus augmented observation.
Outcome gradient_paths() {
    const QuantileGrid grid = QuantileGrid::regular();
    double worst = 0.0, min_guard = std::numeric_limits<double>::infinity();
    int binding = 0, solves = 0;
    std::string binding_at;
    for (int t = 0; t < 50; ++t) {
        const Dataset d = random_dataset(40000 + static_cast<std::uint64_t>(t), 50, 3);
        const Matrix ustar = pivotal_gradient(d.z, draw_uniforms(4001, StreamDomain::GradientBootstrap, t, d.n()), grid);
        for (std::size_t k = 0; k < grid.size(); ++k) {
            const Vector p = ustar.row(static_cast<Eigen::Index>(k)).transpose();
            const GradientRefit linear = gradient_refit(d, grid[k], p, GradientPath::LinearTerm);
            try {
                const GradientRefit aug = gradient_refit(d, grid[k], p, GradientPath::AugmentedObservation);
                worst = std::max(worst, std::abs(linear.objective - aug.objective));
                min_guard = std::min(min_guard, aug.guard_residual);
            } catch (const NumericalError&) {
                ++binding;
                binding_at += " (instance " + std::to_string(t) + ", u=" + fixed(grid[k], 2) + ")";
            }
            ++solves;
        }
    }
    return {worst <= 1e-7 && binding == 0,
            "50 instances x " + std::to_string(grid.size()) + " quantiles (" + std::to_string(solves) +
                " pairs), max |objective gap| " + sci(worst) + " (tol 1e-7), guard binding " + std::to_string(binding) +
                " times" + binding_at + ", min guard residual otherwise " + fixed(min_guard, 1)};
}

// 5. Desk-scale coverage study.
Outcome table_study() {
    const auto start = Clock::now();
    McConfig c;
    c.dgp.n = 500;
    StudyBasis linear;
    linear.name = "linear";
    linear.estimation_only = true;
    StudyBasis power;
    power.name = "power";
    power.params.family = BasisFamily::PowerPoly;
    power.params.degree = 6;
    StudyBasis spline;
    spline.name = "bspline";
    spline.params.family = BasisFamily::CubicBSpline;
    c.bases = {linear, power, spline};
    c.methods = {CouplingMethod::Pivotal, CouplingMethod::WeightedBootstrap};
    c.grid = QuantileGrid::regular();
    c.R = 100;
    c.B_simulation = 500;
    c.B_bootstrap = 199;
    c.alpha = 0.10;
    c.seed = 5005;
    const McReport r = run_mc(c);
    const double elapsed = seconds_since(start);
    std::cout << "  study (n=500, R=100, " << c.grid.size() << " quantiles, truth " << fixed(r.truth, 4)
              << ", failures " << r.failures << ")\n";
    std::istringstream table(r.to_csv());
    for (std::string line; std::getline(table, line);) std::cout << "    " << line << "\n";

    double linear_bias = 0.0;
    for (const McRow& row : r.rows)
        if (row.basis == "linear") linear_bias = row.bias;
    bool ok = r.failures == 0 && elapsed < 1800.0;
    std::string failures;
    for (const McRow& row : r.rows) {
        if (row.basis == "linear") continue;
        const std::string tag = row.basis + "/" + row.method;
        if (!(row.cover >= 82.0 && row.cover <= 98.0)) failures += " " + tag + " cover " + fixed(row.cover, 0) + ";";
        if (!(row.se_sd >= 0.8 && row.se_sd <= 1.25)) failures += " " + tag + " SE/SD " + fixed(row.se_sd) + ";";
        if (!(row.bias <= linear_bias)) failures += " " + tag + " bias " + fixed(row.bias) + " > linear;";
    }
    ok = ok && failures.empty();
    return {ok, "cover in [82, 98], SE/SD in [0.8, 1.25], flexible bias <= linear bias " + fixed(linear_bias) + "; " +
                    fixed(elapsed / 60.0, 1) + " min (target 30)" + (failures.empty() ? "" : "; out of range:" + failures)};
}

// 6. Monotonization axioms.
Outcome monotone_axioms() {
    struct Op {
        std::string name;
        std::function<Matrix(const Matrix&)> apply;
        bool two_axes;
    };
    auto one_axis = [](MonotoneKind kind) {
        MonotoneOperator op;
        op.kind = kind;
        op.lambda = 0.5;
        return [op](const Matrix& v) {
            std::vector<double> axis(static_cast<std::size_t>(v.rows()));
            for (std::size_t i = 0; i < axis.size(); ++i) axis[i] = static_cast<double>(i);
            return apply(op, GridFunction::one_axis(axis, v.col(0))).values;
        };
    };
    const auto two_axis = [](const Matrix& v) {
        GridFunction gf;
        for (Eigen::Index i = 0; i < v.rows(); ++i) gf.u_axis.push_back(static_cast<double>(i));
        for (Eigen::Index j = 0; j < v.cols(); ++j) gf.w_axis.push_back(static_cast<double>(j));
        gf.values = v;
        return rearrange_multi(gf).values;
    };
    const Op ops[] = {{"rearrangement", one_axis(MonotoneKind::Rearrangement), false},
                      {"isotonic", one_axis(MonotoneKind::Isotonic), false},
                      {"convex(0.5)", one_axis(MonotoneKind::Convex), false},
                      {"rearrangement-2d", two_axis, true}};

    Rng rng(6006);
    auto random_matrix = [&](Eigen::Index rows, Eigen::Index cols) {
        Matrix v(rows, cols);
        for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = rng.standard_normal();
        return v;
    };
    auto make_monotone = [](Matrix v) {
        for (Eigen::Index j = 0; j < v.cols(); ++j) std::sort(v.col(j).begin(), v.col(j).end());
        for (Eigen::Index i = 0; i < v.rows(); ++i) std::sort(v.row(i).begin(), v.row(i).end());
        return v;
    };

    std::string detail;
    bool ok = true;
    for (const Op& op : ops) {
        int neutral = 0, distance = 0, order = 0;
        for (int t = 0; t < 1000; ++t) {
            const Eigen::Index rows = 1 + static_cast<Eigen::Index>(rng.next() % 20);
            const Eigen::Index cols = op.two_axes ? 1 + static_cast<Eigen::Index>(rng.next() % 8) : 1;
            const Matrix mono = make_monotone(random_matrix(rows, cols));
            if (!bit_equal(op.apply(mono), mono)) ++neutral;

            const Matrix q = random_matrix(rows, cols), f = random_matrix(rows, cols);
            const double before = (q - f).cwiseAbs().maxCoeff();
            const double after = (op.apply(q) - op.apply(f)).cwiseAbs().maxCoeff();
            if (after > before * (1.0 + 1e-12) + 1e-15) ++distance;

            const Matrix above = q + random_matrix(rows, cols).cwiseAbs();
            if (((op.apply(above) - op.apply(q)).array() < -1e-12).any()) ++order;
        }
        ok = ok && neutral == 0 && distance == 0 && order == 0;
        detail += (detail.empty() ? "" : "; ") + op.name + " " + std::to_string(neutral) + "/" + std::to_string(distance) +
                  "/" + std::to_string(order);
    }
    return {ok, "violations neutrality/distance/order over 1000 trials each: " + detail};
}

// 7. Powell estimator sanity.
Outcome powell() {
    const double sigma = 2.0;
    const Eigen::Index n = 5000;
    Rng rng(7007);
    Dataset d;
    d.y.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) d.y(i) = sigma * rng.standard_normal();
    d.z = Matrix::Ones(n, 1);
    const CoefficientProcess proc = fit_process(d, QuantileGrid{{0.5}});
    const double f0 = 1.0 / (sigma * std::sqrt(2.0 * std::numbers::pi));
    const double rel = std::abs(proc.jacobians[0](0, 0) / f0 - 1.0);

    const Dataset wide = random_dataset(7008, 400, 4);
    const Vector beta = solve_qr(wide, 0.5).beta;
    const double h = 1.01 * (wide.y - wide.z * beta).cwiseAbs().maxCoeff();
    const bool exact = bit_equal(estimate_jacobian(wide, beta, h), estimate_gram(wide) / (2.0 * h));
    return {rel < 0.15 && exact, "J(0.5) = " + fixed(proc.jacobians[0](0, 0), 5) + " vs f(0) = " + fixed(f0, 5) +
                                     " (relative error " + fixed(100.0 * rel, 1) +
                                     "%, limit 15%); J = Sigma/(2h) bit-exact: " + (exact ? "yes" : "no")};
}

// 8. Determinism of the mc command across runs and thread counts.
Outcome determinism() {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "sqr_acceptance_determinism";
    fs::remove_all(dir);
    fs::create_directories(dir);
    std::ofstream(dir / "config.json") << R"({"mc": {
  "dgp": {"n": 200},
  "bases": [{"name": "linear", "basis": {"family": "linear"}, "estimation_only": true},
            {"name": "power", "basis": {"family": "power", "degree": 4}},
            {"name": "bspline", "basis": {"family": "cubic_bspline"}, "methods": ["pivotal", "gaussian", "weighted", "gradient"]}],
  "methods": ["pivotal", "gaussian"],
  "grid": {"lo": 0.1, "hi": 0.9, "step": 0.05},
  "R": 12, "B_simulation": 200, "B_bootstrap": 20, "seed": 8008}})";
    auto run = [&](const std::string& name, int threads) {
        const fs::path out = dir / name;
        const std::string cmd = std::string("\"") + SQR_CLI_PATH + "\" mc --config \"" + (dir / "config.json").string() +
                                "\" --out \"" + out.string() + "\" --threads " + std::to_string(threads) + " > \"" +
                                (dir / (name + ".log")).string() + "\" 2>&1";
        const int status = std::system(cmd.c_str());
        std::ifstream csv(out / "mc_report.csv", std::ios::binary), js(out / "mc_report.json", std::ios::binary);
        std::ostringstream a, b;
        a << csv.rdbuf();
        b << js.rdbuf();
        return std::make_tuple(status, a.str(), b.str());
    };
    const auto [s1, c1, j1] = run("run1", 1);
    const auto [s2, c2, j2] = run("run2", 1);
    const auto [s3, c3, j3] = run("run3", 4);
    const bool ran = s1 == 0 && s2 == 0 && s3 == 0 && !c1.empty() && !j1.empty();
    const bool same_runs = c1 == c2 && j1 == j2;
    const bool same_threads = c1 == c3 && j1 == j3;
    return {ran && same_runs && same_threads,
            std::string("exit codes ") + std::to_string(s1) + "/" + std::to_string(s2) + "/" + std::to_string(s3) +
                "; repeated run identical: " + (same_runs ? "yes" : "no") + "; 1 vs 4 threads identical: " +
                (same_threads ? "yes" : "no") + " (" + std::to_string(c1.size() + j1.size()) + " bytes compared)"};
}

}  // namespace

int main(int argc, char** argv) {
    const std::pair<int, Outcome (*)()> criteria[] = {{1, solver_oracle},     {2, certificates},  {3, coupling_covariance},
                                                      {4, gradient_paths},    {5, table_study},   {6, monotone_axioms},
                                                      {7, powell},            {8, determinism}};
    std::set<int> selected;
    for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
    int failed = 0;
    for (const auto& [id, run] : criteria) {
        if (!selected.empty() && !selected.count(id)) continue;
        Outcome o;
        try {
            o = run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        std::cout << "criterion " << id << ": " << (o.pass ? "PASS" : "FAIL") << " | " << o.detail << std::endl;
        failed += !o.pass;
    }
    return failed == 0 ? 0 : 1;
}
