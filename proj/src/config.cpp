#include "sqr/config.hpp"

#include <fstream>
#include <sstream>

namespace sqr {

void require_known_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!j.is_object()) throw UserError(where + ": expected a JSON object");
    for (const auto& item : j.items()) {
        bool known = false;
        for (const char* key : allowed) known = known || item.key() == key;
        if (!known) throw UserError(where + ": unknown key '" + item.key() + "'");
    }
}

json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UserError("cannot open config file '" + path + "'");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw UserError("config file '" + path + "' is not valid JSON: " + e.what());
    }
}

BasisParams basis_params_from_json(const json& j) {
    const std::string where = "basis";
    require_known_keys(j, {"family", "degree", "orthogonal", "knot_quantiles", "includes_intercept", "nudge_tied_knots"},
                       where);
    BasisParams p;
    p.family = basis_family_from_string(get_or<std::string>(j, "family", to_string(p.family), where));
    p.degree = get_or(j, "degree", p.degree, where);
    p.orthogonal = get_or(j, "orthogonal", p.orthogonal, where);
    p.knot_quantiles = get_or(j, "knot_quantiles", p.knot_quantiles, where);
    p.includes_intercept = get_or(j, "includes_intercept", p.includes_intercept, where);
    p.nudge_tied_knots = get_or(j, "nudge_tied_knots", p.nudge_tied_knots, where);
    return p;
}

json basis_params_to_json(const BasisParams& p) {
    return {{"family", to_string(p.family)},
            {"degree", p.degree},
            {"orthogonal", p.orthogonal},
            {"knot_quantiles", p.knot_quantiles},
            {"includes_intercept", p.includes_intercept},
            {"nudge_tied_knots", p.nudge_tied_knots}};
}

QuantileGrid grid_from_json(const json& j) {
    const std::string where = "grid";
    require_known_keys(j, {"lo", "hi", "step", "points"}, where);
    QuantileGrid g;
    if (j.contains("points")) {
        if (j.contains("lo") || j.contains("hi") || j.contains("step"))
            throw UserError("grid: give either points or lo/hi/step");
        g.points = get_or(j, "points", std::vector<double>{}, where);
    } else {
        g = QuantileGrid::regular(get_or(j, "lo", 0.10, where), get_or(j, "hi", 0.90, where), get_or(j, "step", 0.01, where));
    }
    g.validate();
    return g;
}

json grid_to_json(const QuantileGrid& g) { return {{"points", g.points}}; }

FunctionalConfig functional_from_json(const json& j) {
    const std::string where = "functional";
    require_known_keys(j, {"kind", "k", "points", "slice_column", "slice_values", "quantiles"}, where);
    FunctionalConfig f;
    f.kind = functional_kind_from_string(get_or<std::string>(j, "kind", to_string(f.kind), where));
    f.k = get_or(j, "k", f.k, where);
    f.points = get_or(j, "points", f.points, where);
    f.slice_column = get_or(j, "slice_column", f.slice_column, where);
    f.slice_values = get_or(j, "slice_values", f.slice_values, where);
    f.quantiles = get_or(j, "quantiles", f.quantiles, where);
    if ((f.kind == FunctionalKind::Value || f.kind == FunctionalKind::Derivative) && f.points.empty())
        throw UserError("functional: value and derivative functionals need evaluation points");
    if (f.kind == FunctionalKind::ConditionalAverageDerivative && f.slice_values.empty())
        throw UserError("functional: conditional average derivative needs slice_values");
    return f;
}

json functional_to_json(const FunctionalConfig& f) {
    return {{"kind", to_string(f.kind)},           {"k", f.k},
            {"points", f.points},                  {"slice_column", f.slice_column},
            {"slice_values", f.slice_values},      {"quantiles", f.quantiles}};
}

MonotonizeConfig monotonize_from_json(const json& j) {
    const std::string where = "monotonize";
    require_known_keys(j, {"enabled", "operator", "lambda", "mode", "u_first", "increasing_u", "increasing_w", "intersect"},
                       where);
    MonotonizeConfig m;
    m.enabled = get_or(j, "enabled", true, where);
    m.op.kind = monotone_kind_from_string(get_or<std::string>(j, "operator", "rearrange", where));
    m.op.lambda = get_or(j, "lambda", m.op.lambda, where);
    const std::string mode = get_or<std::string>(j, "mode", "average", where);
    if (mode == "average") m.op.mode = OrderMode::AverageOverOrders;
    else if (mode == "sequential") m.op.mode = OrderMode::SequentialFixedOrder;
    else throw UserError("monotonize.mode: expected average or sequential");
    m.op.u_first = get_or(j, "u_first", m.op.u_first, where);
    m.op.increasing_u = get_or(j, "increasing_u", m.op.increasing_u, where);
    m.op.increasing_w = get_or(j, "increasing_w", m.op.increasing_w, where);
    m.intersect = get_or(j, "intersect", m.intersect, where);
    return m;
}

json monotonize_to_json(const MonotonizeConfig& m) {
    return {{"enabled", m.enabled},
            {"operator", to_string(m.op.kind)},
            {"lambda", m.op.lambda},
            {"mode", m.op.mode == OrderMode::AverageOverOrders ? "average" : "sequential"},
            {"u_first", m.op.u_first},
            {"increasing_u", m.op.increasing_u},
            {"increasing_w", m.op.increasing_w},
            {"intersect", m.intersect}};
}

FitConfig fit_config_from_json(const json& j) {
    const std::string where = "fit";
    require_known_keys(j, {"response", "covariates", "basis", "grid", "bandwidth_alpha", "warm_start"}, where);
    FitConfig c;
    if (!j.contains("response")) throw UserError("fit: 'response' column is required");
    c.response = get_or<std::string>(j, "response", "", where);
    c.covariates = get_or(j, "covariates", c.covariates, where);
    if (j.contains("basis")) c.basis = basis_params_from_json(j.at("basis"));
    if (j.contains("grid")) c.grid = grid_from_json(j.at("grid"));
    c.process.bandwidth_alpha = get_or(j, "bandwidth_alpha", c.process.bandwidth_alpha, where);
    c.process.warm_start = get_or(j, "warm_start", c.process.warm_start, where);
    if (!(c.process.bandwidth_alpha > 0.0 && c.process.bandwidth_alpha < 1.0))
        throw UserError("fit.bandwidth_alpha must lie in (0,1)");
    return c;
}

json fit_config_to_json(const FitConfig& c) {
    return {{"response", c.response},
            {"covariates", c.covariates},
            {"basis", basis_params_to_json(c.basis)},
            {"grid", grid_to_json(c.grid)},
            {"bandwidth_alpha", c.process.bandwidth_alpha},
            {"warm_start", c.process.warm_start}};
}

namespace {

GradientPath gradient_path_from_string(const std::string& s) {
    if (s == "linear_term") return GradientPath::LinearTerm;
    if (s == "augmented_observation") return GradientPath::AugmentedObservation;
    throw UserError("gradient_path: expected linear_term or augmented_observation");
}

std::vector<CouplingMethod> methods_from_json(const json& j, const std::string& where) {
    std::vector<CouplingMethod> out;
    for (const auto& s : get_or(j, "methods", std::vector<std::string>{}, where)) out.push_back(coupling_method_from_string(s));
    return out;
}

json methods_to_json(const std::vector<CouplingMethod>& methods) {
    json a = json::array();
    for (CouplingMethod m : methods) a.push_back(to_string(m));
    return a;
}

std::vector<StudyBasis> bases_from_json(const json& j, const std::string& where) {
    if (!j.is_array() || j.empty()) throw UserError(where + ".bases: expected a non-empty array");
    std::vector<StudyBasis> out;
    for (const json& b : j) {
        require_known_keys(b, {"name", "basis", "methods", "estimation_only"}, where + ".bases[]");
        StudyBasis sb;
        sb.params = basis_params_from_json(b.value("basis", json::object()));
        sb.name = get_or<std::string>(b, "name", to_string(sb.params.family), where);
        sb.methods = methods_from_json(b, where);
        sb.estimation_only = get_or(b, "estimation_only", false, where);
        out.push_back(std::move(sb));
    }
    return out;
}

json bases_to_json(const std::vector<StudyBasis>& bases) {
    json a = json::array();
    for (const StudyBasis& b : bases)
        a.push_back({{"name", b.name},
                     {"basis", basis_params_to_json(b.params)},
                     {"methods", methods_to_json(b.methods)},
                     {"estimation_only", b.estimation_only}});
    return a;
}

}  // namespace

BandConfig band_config_from_json(const json& j) {
    const std::string where = "band";
    require_known_keys(j, {"method", "B", "alpha", "uniform", "pointwise_rule", "delta", "gradient_path", "functional",
                           "monotonize", "dump_draws"},
                       where);
    BandConfig c;
    c.method = coupling_method_from_string(get_or<std::string>(j, "method", "pivotal", where));
    if (j.contains("B") && !j.at("B").is_null()) c.B = get_or(j, "B", 0, where);
    c.alpha = get_or(j, "alpha", c.alpha, where);
    c.uniform = get_or(j, "uniform", c.uniform, where);
    const std::string rule = get_or<std::string>(j, "pointwise_rule", "coupling", where);
    if (rule == "coupling") c.pointwise_rule = CriticalRule::CouplingQuantile;
    else if (rule == "normal") c.pointwise_rule = CriticalRule::NormalQuantile;
    else throw UserError("band.pointwise_rule: expected coupling or normal");
    if (j.contains("delta") && !j.at("delta").is_null()) c.delta = get_or(j, "delta", 0.0, where);
    c.gradient_path = gradient_path_from_string(get_or<std::string>(j, "gradient_path", "linear_term", where));
    if (j.contains("functional")) c.functional = functional_from_json(j.at("functional"));
    if (j.contains("monotonize")) c.monotonize = monotonize_from_json(j.at("monotonize"));
    c.dump_draws = get_or(j, "dump_draws", c.dump_draws, where);
    if (!(c.alpha > 0.0 && c.alpha < 1.0)) throw UserError("band.alpha must lie in (0,1)");
    if (c.B && *c.B < 1) throw UserError("band.B must be positive");
    return c;
}

json band_config_to_json(const BandConfig& c) {
    json j = {{"method", to_string(c.method)},
              {"alpha", c.alpha},
              {"uniform", c.uniform},
              {"pointwise_rule", c.pointwise_rule == CriticalRule::CouplingQuantile ? "coupling" : "normal"},
              {"gradient_path", c.gradient_path == GradientPath::LinearTerm ? "linear_term" : "augmented_observation"},
              {"functional", functional_to_json(c.functional)},
              {"monotonize", monotonize_to_json(c.monotonize)},
              {"dump_draws", c.dump_draws}};
    j["B"] = c.B ? json(*c.B) : json(nullptr);
    j["delta"] = c.delta ? json(*c.delta) : json(nullptr);
    return j;
}

McConfig mc_config_from_json(const json& j) {
    const std::string where = "mc";
    require_known_keys(j, {"dgp", "bases", "grid", "methods", "R", "B_simulation", "B_bootstrap", "alpha", "seed",
                           "bandwidth_alpha", "infinite_bands"},
                       where);
    McConfig c;
    if (j.contains("dgp")) c.dgp = DgpSpec::from_json(j.at("dgp"));
    if (!j.contains("bases")) throw UserError("mc: 'bases' is required");
    c.bases = bases_from_json(j.at("bases"), where);
    if (j.contains("grid")) c.grid = grid_from_json(j.at("grid"));
    if (j.contains("methods")) c.methods = methods_from_json(j, where);
    c.R = get_or(j, "R", c.R, where);
    c.B_simulation = get_or(j, "B_simulation", c.B_simulation, where);
    c.B_bootstrap = get_or(j, "B_bootstrap", c.B_bootstrap, where);
    c.alpha = get_or(j, "alpha", c.alpha, where);
    c.seed = get_or(j, "seed", c.seed, where);
    c.bandwidth_alpha = get_or(j, "bandwidth_alpha", c.bandwidth_alpha, where);
    c.infinite_bands = get_or(j, "infinite_bands", c.infinite_bands, where);
    if (!(c.alpha > 0.0 && c.alpha < 1.0)) throw UserError("mc.alpha must lie in (0,1)");
    if (c.R < 10) throw UserError("mc.R must be at least 10");
    if (c.B_simulation < 1 || c.B_bootstrap < 1) throw UserError("mc: draw counts must be positive");
    return c;
}

json mc_config_to_json(const McConfig& c) {
    return {{"dgp", c.dgp.to_json()},
            {"bases", bases_to_json(c.bases)},
            {"grid", grid_to_json(c.grid)},
            {"methods", methods_to_json(c.methods)},
            {"R", c.R},
            {"B_simulation", c.B_simulation},
            {"B_bootstrap", c.B_bootstrap},
            {"alpha", c.alpha},
            {"seed", c.seed},
            {"bandwidth_alpha", c.bandwidth_alpha},
            {"infinite_bands", c.infinite_bands}};
}

GapConfig gap_config_from_json(const json& j) {
    const std::string where = "estimand_gap";
    require_known_keys(j, {"dgp", "bases", "grid", "w_points", "mega_n", "functional"}, where);
    GapConfig c;
    if (j.contains("dgp")) c.dgp = DgpSpec::from_json(j.at("dgp"));
    if (!j.contains("bases")) throw UserError("estimand_gap: 'bases' is required");
    c.bases = bases_from_json(j.at("bases"), where);
    if (j.contains("grid")) c.grid = grid_from_json(j.at("grid"));
    c.w_points = get_or(j, "w_points", c.w_points, where);
    if (c.w_points.empty())
        for (int k = 0; k <= 10; ++k) c.w_points.push_back(c.dgp.w_lo + (c.dgp.w_hi - c.dgp.w_lo) * k / 10.0);
    c.mega_n = get_or<Eigen::Index>(j, "mega_n", c.mega_n, where);
    const std::string f = get_or<std::string>(j, "functional", "value", where);
    if (f == "value") c.functional = GapFunctional::Value;
    else if (f == "derivative") c.functional = GapFunctional::Derivative;
    else throw UserError("estimand_gap.functional: expected value or derivative");
    return c;
}

json gap_config_to_json(const GapConfig& c) {
    return {{"dgp", c.dgp.to_json()},
            {"bases", bases_to_json(c.bases)},
            {"grid", grid_to_json(c.grid)},
            {"w_points", c.w_points},
            {"mega_n", c.mega_n},
            {"functional", c.functional == GapFunctional::Value ? "value" : "derivative"}};
}

MonotonizeCommandConfig monotonize_command_from_json(const json& j) {
    const std::string where = "monotonize_table";
    require_known_keys(j, {"monotonize", "u_column", "w_column", "value_columns"}, where);
    MonotonizeCommandConfig c;
    if (j.contains("monotonize")) c.monotonize = monotonize_from_json(j.at("monotonize"));
    c.monotonize.enabled = true;
    c.u_column = get_or(j, "u_column", c.u_column, where);
    c.w_column = get_or(j, "w_column", c.w_column, where);
    c.value_columns = get_or(j, "value_columns", c.value_columns, where);
    if (c.value_columns.empty()) throw UserError("monotonize_table: value_columns is required");
    return c;
}

}  // namespace sqr
