#include "sqr/commands.hpp"

#include "sqr/config.hpp"
#include "sqr/couplings.hpp"
#include "sqr/functional_inference.hpp"
#include "sqr/io.hpp"
#include "sqr/monotonization.hpp"
#include "sqr/process_estimation.hpp"
#include "sqr/series_basis.hpp"
#include "sqr/sim_lab.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace sqr {

namespace {

json load_config(const CommandOptions& opt, const char* section) {
    if (opt.config.empty()) throw UserError("--config is required");
    const json root = load_json_file(opt.config);
    require_known_keys(root, {"fit", "band", "mc", "estimand_gap", "monotonize_table"}, "config");
    if (!root.contains(section)) throw UserError("config file has no '" + std::string(section) + "' section");
    return root.at(section);
}

std::string out_path(const CommandOptions& opt, const std::string& name) {
    return (std::filesystem::path(opt.out) / name).string();
}

struct Inputs {
    Vector y;
    Matrix x;
    std::vector<std::string> covariates;
};

Inputs select_columns(const Table& t, const std::string& response, std::vector<std::string> covariates) {
    Inputs in;
    in.y = t.columns[t.column(response)];
    if (covariates.empty())
        for (const auto& h : t.header)
            if (h != response) covariates.push_back(h);
    if (covariates.empty()) throw UserError("data has no covariate columns");
    in.x.resize(t.rows(), static_cast<Eigen::Index>(covariates.size()));
    for (std::size_t j = 0; j < covariates.size(); ++j) in.x.col(static_cast<Eigen::Index>(j)) = t.columns[t.column(covariates[j])];
    in.covariates = std::move(covariates);
    return in;
}

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw UserError("cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

}  // namespace

void cmd_fit(const CommandOptions& opt) {
    FitConfig fc = fit_config_from_json(load_config(opt, "fit"));
    if (opt.data.empty()) throw UserError("fit needs --data");
    const Table table = read_csv(opt.data);
    const Inputs in = select_columns(table, fc.response, fc.covariates);
    fc.covariates = in.covariates;
    fc.basis.extra_linear_covariates = static_cast<int>(in.x.cols()) - 1;
    const BasisSpec basis = make_basis(fc.basis, in.x);
    const Dataset data{in.y, design_matrix(basis, in.x), {}};
    if (data.n() < data.m())
        throw UserError("fit: n = " + std::to_string(data.n()) + " observations for m = " + std::to_string(data.m()) + " terms");
    const CoefficientProcess proc = fit_process(data, fc.grid, fc.process, basis);

    json echo = {{"fit", fit_config_to_json(fc)}, {"data", opt.data}};
    json artifact = process_to_json(proc, echo);
    json loadings = json::array();
    for (int k = 0; k < basis.dimension(); ++k) {
        const Vector l = loading_average_derivative(basis, in.x, k);
        loadings.push_back(std::vector<double>(l.data(), l.data() + l.size()));
    }
    artifact["average_derivative_loadings"] = loadings;
    // The pivotal coupling needs the design rows but not the responses.
    artifact["design"] = matrix_to_json(data.z);
    write_file_atomic(out_path(opt, "artifact.json"), artifact.dump(1) + "\n");

    const double bound = certificate_bound(data);
    std::ostringstream s;
    s << "n " << data.n() << "\nm " << data.m() << "\nbasis " << to_string(basis.family()) << "\n";
    s << "grid " << proc.grid.size() << " points in [" << proc.grid.points.front() << ", " << proc.grid.points.back()
      << "]\n";
    s << "certificate max " << proc.certificates.maxCoeff() << " (bound " << bound << ")\n";
    s << "bandwidth (quantile scale) " << proc.bandwidths.minCoeff() << " to " << proc.bandwidths.maxCoeff() << "\n";
    s << "bandwidth (residual scale) " << proc.residual_bandwidths.minCoeff() << " to "
      << proc.residual_bandwidths.maxCoeff() << "\n";
    for (const auto& w : basis.warnings()) s << "warning " << w << "\n";
    write_file_atomic(out_path(opt, "fit_summary.txt"), s.str());
}

namespace {

std::vector<int> quantile_indices(const CoefficientProcess& proc, const std::vector<double>& quantiles) {
    if (quantiles.empty()) return all_grid_indices(proc.grid.size());
    std::vector<int> idx;
    for (double u : quantiles) {
        const int k = proc.grid.find(u, 1e-9);
        if (k < 0) throw UserError("functional quantile " + format_double(u) + " is not on the fitted grid");
        idx.push_back(k);
    }
    return idx;
}

Matrix points_matrix(const std::vector<std::vector<double>>& pts, int dim) {
    Matrix x(static_cast<Eigen::Index>(pts.size()), dim);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        if (static_cast<int>(pts[i].size()) != dim)
            throw UserError("functional point " + std::to_string(i) + " has " + std::to_string(pts[i].size()) +
                            " coordinates, expected " + std::to_string(dim));
        for (int j = 0; j < dim; ++j) x(static_cast<Eigen::Index>(i), j) = pts[i][static_cast<std::size_t>(j)];
    }
    return x;
}

Inputs artifact_inputs(const json& artifact, const std::string& data_path) {
    const json& fit = artifact.at("config").at("fit");
    return select_columns(read_csv(data_path), fit.at("response").get<std::string>(),
                          fit.at("covariates").get<std::vector<std::string>>());
}

}  // namespace

void cmd_band(const CommandOptions& opt) {
    const BandConfig bc = band_config_from_json(load_config(opt, "band"));
    const std::string artifact_path = opt.artifact.empty() ? out_path(opt, "artifact.json") : opt.artifact;
    json artifact;
    try {
        artifact = json::parse(read_text(artifact_path));
    } catch (const json::parse_error& e) {
        throw UserError("artifact '" + artifact_path + "' is not valid JSON: " + e.what());
    }
    const CoefficientProcess proc = process_from_json(artifact);
    if (!proc.basis) throw UserError("artifact has no basis description");
    const BasisSpec& basis = *proc.basis;
    const std::uint64_t seed = opt.seed.value_or(1);

    const bool bootstrap = bc.method == CouplingMethod::WeightedBootstrap || bc.method == CouplingMethod::GradientBootstrap;
    const bool needs_data = bootstrap || bc.functional.kind == FunctionalKind::ConditionalAverageDerivative;
    std::optional<Inputs> in;
    if (needs_data) {
        if (opt.data.empty())
            throw UserError(bootstrap ? "method '" + to_string(bc.method) + "' refits the model and needs the fitting data (--data)"
                                      : "the conditional average derivative needs the covariate sample (--data)");
        in = artifact_inputs(artifact, opt.data);
        if (in->x.rows() != proc.n) throw UserError("--data has a different number of rows than the fitted sample");
    }

    const FunctionalConfig& fcfg = bc.functional;
    const std::vector<int> uidx = quantile_indices(proc, fcfg.quantiles);
    if (fcfg.k < 0 || fcfg.k >= basis.dimension()) throw UserError("functional.k is out of range");
    FunctionalSpec spec;
    switch (fcfg.kind) {
    case FunctionalKind::Value: spec = value_functional(basis, points_matrix(fcfg.points, basis.dimension()), uidx); break;
    case FunctionalKind::Derivative:
        spec = derivative_functional(basis, points_matrix(fcfg.points, basis.dimension()), fcfg.k, uidx);
        break;
    case FunctionalKind::AverageDerivative: {
        const auto l = artifact.at("average_derivative_loadings").at(static_cast<std::size_t>(fcfg.k)).get<std::vector<double>>();
        spec.kind = FunctionalKind::AverageDerivative;
        spec.k = fcfg.k;
        spec.u_indices = uidx;
        spec.loadings.push_back(Eigen::Map<const Vector>(l.data(), static_cast<Eigen::Index>(l.size())));
        spec.w_labels.push_back(0.0);
        break;
    }
    case FunctionalKind::ConditionalAverageDerivative:
        spec = conditional_average_derivative_functional(basis, in->x, fcfg.k, fcfg.slice_column, fcfg.slice_values, uidx);
        break;
    }

    const bool normal_only = !bc.uniform && bc.pointwise_rule == CriticalRule::NormalQuantile;
    const int B = bc.B.value_or(bootstrap ? 199 : 1000);
    TStatProcess t;
    ProcessDraws draws;
    if (normal_only) {
        t = functional_estimates(proc, spec);
    } else {
        CouplingOptions copt;
        copt.path = bc.gradient_path;
        switch (bc.method) {
        case CouplingMethod::Pivotal:
            draws = draw_pivotal(proc, matrix_from_json(artifact.at("design")), B, seed, copt);
            break;
        case CouplingMethod::Gaussian: draws = draw_gaussian(proc, B, seed, copt); break;
        case CouplingMethod::WeightedBootstrap:
            draws = draw_weighted_bootstrap(Dataset{in->y, design_matrix(basis, in->x), {}}, proc, B, seed, copt);
            break;
        case CouplingMethod::GradientBootstrap:
            draws = draw_gradient_bootstrap(Dataset{in->y, design_matrix(basis, in->x), {}}, proc, B, seed, copt);
            break;
        }
        t = t_star_process(proc, draws, spec);
    }
    const ConfidenceBand raw = bc.uniform ? uniform_band(t, bc.alpha, bc.delta) : pointwise_interval(t, bc.alpha, bc.pointwise_rule);
    ConfidenceBand band = raw;
    if (bc.monotonize.enabled) band = monotonize_band(raw, bc.monotonize.op, bc.monotonize.intersect);

    json header = band_header(band);
    header["functional"] = to_string(spec.kind);
    header["n"] = proc.n;
    json doc = {{"header", header}, {"config", band_config_to_json(bc)}, {"artifact", artifact_path},
                {"monotonized", bc.monotonize.enabled}};
    if (!normal_only) {
        doc["header"]["max_certificate_ratio"] = draws.max_certificate_ratio;
        doc["header"]["retries"] = draws.retries;
    }
    write_file_atomic(out_path(opt, "band.csv"), band_to_csv(band));
    if (bc.monotonize.enabled) write_file_atomic(out_path(opt, "band_raw.csv"), band_to_csv(raw));
    write_file_atomic(out_path(opt, "band.json"), doc.dump(1) + "\n");
    if (bc.dump_draws && !normal_only) {
        const double size = static_cast<double>(draws.B()) * static_cast<double>(proc.grid.size()) * static_cast<double>(proc.m());
        if (size > 5e6) throw UserError("dump_draws: " + format_double(size) + " values exceed the 5e6 dump limit");
        json d = json::array();
        for (const Matrix& m : draws.draws) d.push_back(matrix_to_json(m));
        write_file_atomic(out_path(opt, "draws.json"),
                          json{{"method", to_string(draws.method)}, {"seed", draws.seed}, {"draws", d}}.dump() + "\n");
    }
}

bool cmd_mc(const CommandOptions& opt) {
    McConfig mc = mc_config_from_json(load_config(opt, "mc"));
    if (opt.seed) mc.seed = *opt.seed;
    const McReport report = run_mc(mc);
    write_file_atomic(out_path(opt, "mc_report.csv"), report.to_csv());
    write_file_atomic(out_path(opt, "mc_report.json"), report.to_json(mc).dump(1) + "\n");
    return !report.failed();
}

void cmd_estimand_gap(const CommandOptions& opt) {
    const GapConfig gc = gap_config_from_json(load_config(opt, "estimand_gap"));
    const std::uint64_t seed = opt.seed.value_or(1);
    std::ostringstream csv;
    csv << "basis,u,w,gap\n";
    json summary = json::array();
    for (const StudyBasis& sb : gc.bases) {
        const GridFunction gap = estimand_gap(gc.dgp, sb.params, gc.grid, gc.w_points, gc.mega_n, seed, gc.functional);
        for (Eigen::Index a = 0; a < gap.values.rows(); ++a)
            for (Eigen::Index w = 0; w < gap.values.cols(); ++w)
                csv << sb.name << ',' << format_double(gap.u_axis[a]) << ',' << format_double(gc.w_points[w]) << ','
                    << format_double(gap.values(a, w)) << '\n';
        summary.push_back({{"basis", sb.name},
                           {"sup_abs_gap", gap.values.cwiseAbs().maxCoeff()},
                           {"rms_gap", std::sqrt(gap.values.squaredNorm() / static_cast<double>(gap.values.size()))}});
    }
    write_file_atomic(out_path(opt, "estimand_gap.csv"), csv.str());
    write_file_atomic(out_path(opt, "estimand_gap.json"),
                      json{{"summary", summary}, {"seed", seed}, {"config", gap_config_to_json(gc)}}.dump(1) + "\n");
}

void cmd_monotonize(const CommandOptions& opt) {
    const MonotonizeCommandConfig mc = monotonize_command_from_json(load_config(opt, "monotonize_table"));
    if (opt.data.empty()) throw UserError("monotonize needs --data (the table to monotonize)");
    Table table = read_csv(opt.data);
    const Vector& ucol = table.columns[table.column(mc.u_column)];
    const bool two = !mc.w_column.empty();
    std::vector<double> uaxis(ucol.data(), ucol.data() + ucol.size());
    std::vector<double> waxis;
    std::sort(uaxis.begin(), uaxis.end());
    uaxis.erase(std::unique(uaxis.begin(), uaxis.end()), uaxis.end());
    if (two) {
        const Vector& wc = table.columns[table.column(mc.w_column)];
        waxis.assign(wc.data(), wc.data() + wc.size());
        std::sort(waxis.begin(), waxis.end());
        waxis.erase(std::unique(waxis.begin(), waxis.end()), waxis.end());
    }
    const std::size_t nw = two ? waxis.size() : 1;
    if (uaxis.size() * nw != static_cast<std::size_t>(table.rows()))
        throw UserError("monotonize: rows do not form a complete grid over the axis columns");
    std::vector<std::pair<Eigen::Index, Eigen::Index>> cell(static_cast<std::size_t>(table.rows()));
    std::map<std::pair<Eigen::Index, Eigen::Index>, int> seen;
    for (Eigen::Index r = 0; r < table.rows(); ++r) {
        const auto a = std::lower_bound(uaxis.begin(), uaxis.end(), ucol(r)) - uaxis.begin();
        Eigen::Index w = 0;
        if (two) w = std::lower_bound(waxis.begin(), waxis.end(), table.columns[table.column(mc.w_column)](r)) - waxis.begin();
        cell[static_cast<std::size_t>(r)] = {a, w};
        if (++seen[{a, w}] > 1) throw UserError("monotonize: duplicate grid cell at row " + std::to_string(r + 1));
    }
    auto gather = [&](const std::string& name) {
        Matrix v(static_cast<Eigen::Index>(uaxis.size()), static_cast<Eigen::Index>(nw));
        const Vector& c = table.columns[table.column(name)];
        for (Eigen::Index r = 0; r < table.rows(); ++r) v(cell[r].first, cell[r].second) = c(r);
        return v;
    };
    auto scatter = [&](const std::string& name, const Matrix& v) {
        Vector& c = table.columns[table.column(name)];
        for (Eigen::Index r = 0; r < table.rows(); ++r) c(r) = v(cell[r].first, cell[r].second);
    };
    if (mc.monotonize.intersect) {
        if (mc.value_columns.size() != 2) throw UserError("monotonize: intersect needs value_columns [lower, upper]");
        ConfidenceBand band;
        band.u_values = uaxis;
        band.w_labels = two ? waxis : std::vector<double>{0.0};
        band.lower = gather(mc.value_columns[0]);
        band.upper = gather(mc.value_columns[1]);
        band.theta_hat = 0.5 * (band.lower + band.upper);
        const ConfidenceBand out = monotonize_band(band, mc.monotonize.op, true);
        scatter(mc.value_columns[0], out.lower);
        scatter(mc.value_columns[1], out.upper);
    } else {
        for (const std::string& name : mc.value_columns) {
            GridFunction gf;
            gf.u_axis = uaxis;
            gf.w_axis = waxis;
            gf.values = gather(name);
            scatter(name, apply(mc.monotonize.op, gf).values);
        }
    }
    std::ostringstream csv;
    for (std::size_t j = 0; j < table.header.size(); ++j) csv << (j ? "," : "") << table.header[j];
    csv << '\n';
    for (Eigen::Index r = 0; r < table.rows(); ++r) {
        for (std::size_t j = 0; j < table.columns.size(); ++j) csv << (j ? "," : "") << format_double(table.columns[j](r));
        csv << '\n';
    }
    write_file_atomic(out_path(opt, "monotonized.csv"), csv.str());
}

}  // namespace sqr
