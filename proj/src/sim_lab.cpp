#include "sqr/sim_lab.hpp"

#include "sqr/config.hpp"
#include "sqr/parallel.hpp"

#include <boost/math/quadrature/gauss.hpp>

#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace sqr {

namespace {

constexpr double kTwoPi = 2.0 * M_PI;

Vector fixed_v(const DgpSpec& spec) {
    Vector v = Vector::Zero(static_cast<Eigen::Index>(spec.beta_v.size()));
    for (std::size_t j = 0; j < spec.v_fixed.size() && j < spec.beta_v.size(); ++j) v(static_cast<Eigen::Index>(j)) = spec.v_fixed[j];
    return v;
}

double v_term(const DgpSpec& spec, const Vector& v) {
    double s = 0.0;
    for (std::size_t j = 0; j < spec.beta_v.size(); ++j) s += spec.beta_v[j] * v(static_cast<Eigen::Index>(j));
    return s;
}

}  // namespace

void DgpSpec::validate() const {
    if (!(sigma > 0.0)) throw UserError("dgp: sigma must be positive");
    if (!(w_hi > w_lo)) throw UserError("dgp: need w_lo < w_hi");
    if (n < 1) throw UserError("dgp: n must be positive");
    if (!v_fixed.empty() && v_fixed.size() != beta_v.size()) throw UserError("dgp: v_fixed must match beta_v");
}

double DgpSpec::g(double w) const {
    const auto& a = g_coeffs;
    return a[0] + a[1] * w + a[2] * std::sin(kTwoPi * w) + a[3] * std::cos(kTwoPi * w) + a[4] * std::sin(2 * kTwoPi * w) +
           a[5] * std::cos(2 * kTwoPi * w);
}

double DgpSpec::g_prime(double w) const {
    const auto& a = g_coeffs;
    return a[1] + kTwoPi * (a[2] * std::cos(kTwoPi * w) - a[3] * std::sin(kTwoPi * w)) +
           2 * kTwoPi * (a[4] * std::cos(2 * kTwoPi * w) - a[5] * std::sin(2 * kTwoPi * w));
}

double DgpSpec::truth(double u, double w, const Vector& v) const {
    const Vector vv = v.size() == 0 ? fixed_v(*this) : v;
    return g(w) + v_term(*this, vv) + sigma * normal_quantile(u);
}

nlohmann::json DgpSpec::to_json() const {
    return {{"g_coeffs", g_coeffs}, {"beta_v", beta_v},        {"sigma", sigma},
            {"w_range", {w_lo, w_hi}}, {"n", n}, {"v_fixed", v_fixed}, {"collapse_v", collapse_v}};
}

DgpSpec DgpSpec::from_json(const nlohmann::json& j) {
    require_known_keys(j, {"g_coeffs", "beta_v", "sigma", "w_range", "n", "v_fixed", "collapse_v"}, "dgp");
    DgpSpec s;
    const std::string where = "dgp";
    s.g_coeffs = get_or(j, "g_coeffs", s.g_coeffs, where);
    s.beta_v = get_or(j, "beta_v", s.beta_v, where);
    s.sigma = get_or(j, "sigma", s.sigma, where);
    const auto range = get_or(j, "w_range", std::vector<double>{s.w_lo, s.w_hi}, where);
    if (range.size() != 2) throw UserError("dgp.w_range: expected [lo, hi]");
    s.w_lo = range[0];
    s.w_hi = range[1];
    s.n = get_or<Eigen::Index>(j, "n", s.n, where);
    s.v_fixed = get_or(j, "v_fixed", s.v_fixed, where);
    s.collapse_v = get_or(j, "collapse_v", s.collapse_v, where);
    s.validate();
    return s;
}

SimSample generate_response(const DgpSpec& spec, const Matrix& covariates, std::uint64_t seed) {
    spec.validate();
    Rng rng(seed);
    SimSample s;
    s.covariates = covariates;
    s.y.resize(covariates.rows());
    s.latent_u.resize(covariates.rows());
    const Vector vbar = fixed_v(spec);
    for (Eigen::Index i = 0; i < covariates.rows(); ++i) {
        const double u = rng.uniform();
        s.latent_u(i) = u;
        double vt = 0.0;
        if (spec.collapse_v) vt = v_term(spec, vbar);
        else vt = v_term(spec, covariates.row(i).tail(covariates.cols() - 1).transpose());
        s.y(i) = spec.g(covariates(i, 0)) + vt + spec.sigma * normal_quantile(u);
    }
    return s;
}

SimSample generate_dgp(const DgpSpec& spec, std::uint64_t seed) {
    spec.validate();
    Rng rng(seed);
    const auto dv = static_cast<Eigen::Index>(spec.collapse_v ? 0 : spec.beta_v.size());
    Matrix x(spec.n, 1 + dv);
    for (Eigen::Index i = 0; i < spec.n; ++i) {
        x(i, 0) = spec.w_lo + (spec.w_hi - spec.w_lo) * rng.uniform();
        for (Eigen::Index j = 0; j < dv; ++j) x(i, 1 + j) = rng.uniform();
    }
    return generate_response(spec, x, splitmix64(seed ^ 0x5851F42D4C957F2DULL));
}

double true_average_derivative(const DgpSpec& spec) {
    spec.validate();
    const double integral =
        boost::math::quadrature::gauss<double, 30>::integrate([&](double w) { return spec.g_prime(w); }, spec.w_lo, spec.w_hi);
    return integral / (spec.w_hi - spec.w_lo);
}

double empirical_average_derivative(const DgpSpec& spec, const Matrix& covariates) {
    if (covariates.rows() == 0) throw UserError("empirical_average_derivative: empty sample");
    double s = 0.0;
    for (Eigen::Index i = 0; i < covariates.rows(); ++i) s += spec.g_prime(covariates(i, 0));
    return s / static_cast<double>(covariates.rows());
}

namespace {

struct MethodOutcome {
    bool covered = false;
    double length = 0.0;
    double stat = 0.0;
};

struct BasisOutcome {
    Vector theta;
    Vector sigma;
    std::vector<MethodOutcome> methods;
};

struct StudyUnit {
    std::string name;
    BasisSpec spec;
    Dataset design;  // y filled per replication
    FunctionalSpec functional;
    std::vector<CouplingMethod> methods;
};

std::string fmt(double v) {
    if (!std::isfinite(v)) return std::isnan(v) ? "NA" : (v > 0 ? "Inf" : "-Inf");
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

}  // namespace

std::string McReport::to_csv() const {
    std::ostringstream out;
    out << "basis,method,bias,rmse,se_sd,cover,length,stat\n";
    for (const McRow& r : rows)
        out << r.basis << ',' << r.method << ',' << fmt(r.bias) << ',' << fmt(r.rmse) << ',' << fmt(r.se_sd) << ','
            << fmt(r.cover) << ',' << fmt(r.length) << ',' << fmt(r.stat) << '\n';
    return out.str();
}

nlohmann::json McReport::to_json(const McConfig& config) const {
    nlohmann::json rj = nlohmann::json::array();
    auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
    for (const McRow& r : rows)
        rj.push_back({{"basis", r.basis}, {"method", r.method}, {"bias", num(r.bias)}, {"rmse", num(r.rmse)},
                      {"se_sd", num(r.se_sd)}, {"cover", num(r.cover)}, {"length", num(r.length)}, {"stat", num(r.stat)}});
    return {{"rows", rj},         {"replications", R},         {"failures", failures},
            {"failure_messages", failure_messages}, {"seed", seed}, {"truth", truth},
            {"failed", failed()}, {"config", mc_config_to_json(config)}};
}

McReport run_mc(const McConfig& config) {
    if (config.R < 10) throw UserError("run_mc: at least 10 replications are required");
    if (config.bases.empty()) throw UserError("run_mc: no bases configured");
    config.grid.validate();
    config.dgp.validate();

    const SimSample design = generate_dgp(config.dgp, stream_seed(config.seed, StreamDomain::McDesign, 0));
    const double truth = empirical_average_derivative(config.dgp, design.covariates);
    const auto dv = static_cast<int>(design.covariates.cols() - 1);

    std::vector<StudyUnit> units;
    for (const StudyBasis& sb : config.bases) {
        StudyUnit unit;
        unit.name = sb.name;
        BasisParams params = sb.params;
        params.extra_linear_covariates = dv;
        unit.spec = make_basis(params, design.covariates);
        unit.design.z = design_matrix(unit.spec, design.covariates);
        unit.functional =
            average_derivative_functional(unit.spec, design.covariates, 0, all_grid_indices(config.grid.size()));
        if (!sb.estimation_only) unit.methods = sb.methods.empty() ? config.methods : sb.methods;
        units.push_back(std::move(unit));
    }

    const auto R = static_cast<std::size_t>(config.R);
    const auto G = static_cast<Eigen::Index>(config.grid.size());
    std::vector<std::vector<BasisOutcome>> results(R);
    std::vector<std::string> errors(R);
    ProcessOptions popt;
    popt.bandwidth_alpha = config.bandwidth_alpha;

    parallel_for(R, config.parallel, [&](std::size_t r) {
        try {
            const std::uint64_t rep_seed = stream_seed(config.seed, StreamDomain::McReplication, r);
            const SimSample sample = generate_response(config.dgp, design.covariates, rep_seed);
            std::vector<BasisOutcome> out;
            for (const StudyUnit& unit : units) {
                Dataset data{sample.y, unit.design.z, {}};
                const CoefficientProcess proc = fit_process(data, config.grid, popt, unit.spec);
                const TStatProcess est = functional_estimates(proc, unit.functional);
                BasisOutcome bo;
                bo.theta = est.theta_hat.col(0);
                bo.sigma = est.sigma_hat.col(0);
                CouplingOptions copt;
                copt.parallel = false;
                for (std::size_t mi = 0; mi < unit.methods.size(); ++mi) {
                    const CouplingMethod method = unit.methods[mi];
                    const std::uint64_t draw_seed = splitmix64(rep_seed + 0x100 * (mi + 1));
                    ProcessDraws draws;
                    switch (method) {
                    case CouplingMethod::Pivotal: draws = draw_pivotal(proc, data.z, config.B_simulation, draw_seed, copt); break;
                    case CouplingMethod::Gaussian: draws = draw_gaussian(proc, config.B_simulation, draw_seed, copt); break;
                    case CouplingMethod::WeightedBootstrap:
                        draws = draw_weighted_bootstrap(data, proc, config.B_bootstrap, draw_seed, copt);
                        break;
                    case CouplingMethod::GradientBootstrap:
                        draws = draw_gradient_bootstrap(data, proc, config.B_bootstrap, draw_seed, copt);
                        break;
                    }
                    const ConfidenceBand band = uniform_band(t_star_process(proc, draws, unit.functional), config.alpha);
                    MethodOutcome mo;
                    mo.stat = band.k_n;
                    if (config.infinite_bands) {
                        mo.covered = true;
                        mo.length = std::numeric_limits<double>::infinity();
                    } else {
                        mo.covered = ((band.lower.array() <= truth) && (band.upper.array() >= truth)).all();
                        mo.length = (band.upper - band.lower).mean();
                    }
                    bo.methods.push_back(mo);
                }
                out.push_back(std::move(bo));
            }
            results[r] = std::move(out);
        } catch (const std::exception& e) {
            errors[r] = std::string("replication ") + std::to_string(r) + ": " + e.what();
        }
    });

    McReport report;
    report.R = config.R;
    report.seed = config.seed;
    report.truth = truth;
    std::vector<std::size_t> ok;
    for (std::size_t r = 0; r < R; ++r) {
        if (!errors[r].empty()) {
            ++report.failures;
            report.failure_messages.push_back(errors[r]);
        } else {
            ok.push_back(r);
        }
    }
    const double count = static_cast<double>(ok.size());
    for (std::size_t b = 0; b < units.size(); ++b) {
        double bias = 0.0, rmse = 0.0, se_sd = 0.0;
        for (Eigen::Index k = 0; k < G; ++k) {
            double mean = 0.0, msq = 0.0, sig = 0.0;
            for (std::size_t r : ok) {
                const double th = results[r][b].theta(k);
                mean += th;
                msq += (th - truth) * (th - truth);
                sig += results[r][b].sigma(k);
            }
            mean /= count;
            sig /= count;
            double var = 0.0;
            for (std::size_t r : ok) var += std::pow(results[r][b].theta(k) - mean, 2);
            var /= std::max(1.0, count - 1.0);
            bias += std::abs(mean - truth);
            rmse += std::sqrt(msq / count);
            se_sd += sig / std::sqrt(var);
        }
        const double g = static_cast<double>(G);
        McRow base;
        base.basis = units[b].name;
        base.bias = bias / g;
        base.rmse = rmse / g;
        base.se_sd = se_sd / g;
        if (units[b].methods.empty()) {
            base.method = "none";
            base.cover = base.length = base.stat = std::numeric_limits<double>::quiet_NaN();
            report.rows.push_back(base);
            continue;
        }
        for (std::size_t mi = 0; mi < units[b].methods.size(); ++mi) {
            McRow row = base;
            row.method = to_string(units[b].methods[mi]);
            double cover = 0.0, length = 0.0, stat = 0.0;
            for (std::size_t r : ok) {
                const MethodOutcome& mo = results[r][b].methods[mi];
                cover += mo.covered ? 1.0 : 0.0;
                length += mo.length;
                stat += mo.stat;
            }
            row.cover = 100.0 * cover / count;
            row.length = length / count;
            row.stat = stat / count;
            report.rows.push_back(row);
        }
    }
    return report;
}

GridFunction estimand_gap(const DgpSpec& dgp, const BasisParams& basis, const QuantileGrid& grid,
                          const std::vector<double>& w_points, Eigen::Index mega_n, std::uint64_t seed,
                          GapFunctional functional) {
    grid.validate();
    if (w_points.empty()) throw UserError("estimand_gap: no w points");
    if (mega_n < 1000) throw UserError("estimand_gap: mega sample is too small");
    DgpSpec spec = dgp;
    spec.n = mega_n;
    const SimSample mega = generate_dgp(spec, stream_seed(seed, StreamDomain::MegaSample, 0));
    BasisParams params = basis;
    params.extra_linear_covariates = static_cast<int>(mega.covariates.cols() - 1);
    const BasisSpec bs = make_basis(params, mega.covariates);
    const Dataset data{mega.y, design_matrix(bs, mega.covariates), {}};

    std::vector<QrFit> fits(grid.size());
    for (std::size_t k = 0; k < grid.size(); ++k) {
        SolveOptions so;
        if (k > 0) so.warm_basis = &fits[k - 1].basis;
        fits[k] = solve_qr(data, grid[k], std::nullopt, so);
    }

    GridFunction gap;
    gap.u_axis = grid.points;
    if (w_points.size() > 1) gap.w_axis = w_points;
    gap.values.resize(static_cast<Eigen::Index>(grid.size()), static_cast<Eigen::Index>(w_points.size()));
    const Eigen::Index dv = mega.covariates.cols() - 1;
    const Vector vpoint = dv > 0 ? Vector(Vector::Constant(dv, 0.5)) : Vector();
    for (std::size_t j = 0; j < w_points.size(); ++j) {
        Vector x(1 + dv);
        x(0) = w_points[j];
        if (dv > 0) x.tail(dv) = vpoint;
        const Vector ell = functional == GapFunctional::Value ? eval_basis(bs, x) : eval_basis_derivative(bs, x, 0);
        for (std::size_t k = 0; k < grid.size(); ++k) {
            const double series = fits[k].beta.dot(ell);
            const double target = functional == GapFunctional::Value ? dgp.truth(grid[k], w_points[j], vpoint)
                                                                     : dgp.g_prime(w_points[j]);
            gap.values(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) = series - target;
        }
    }
    return gap;
}

}  // namespace sqr
