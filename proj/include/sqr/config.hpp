#pragma once

#include "sqr/common.hpp"
#include "sqr/couplings.hpp"
#include "sqr/functional_inference.hpp"
#include "sqr/monotonization.hpp"
#include "sqr/process_estimation.hpp"
#include "sqr/series_basis.hpp"
#include "sqr/sim_lab.hpp"

#include "json.hpp"

#include <initializer_list>
#include <optional>
#include <string>
#include <vector>

namespace sqr {

using nlohmann::json;

/// Throws UserError naming the first key of `j` not in `allowed`.
void require_known_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where);

/// Typed read of an optional member; throws UserError on a type mismatch.
template <class T>
T get_or(const json& j, const char* key, T fallback, const std::string& where) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw UserError(where + "." + key + ": wrong type");
    }
}

json load_json_file(const std::string& path);

BasisParams basis_params_from_json(const json& j);
json basis_params_to_json(const BasisParams& p);

QuantileGrid grid_from_json(const json& j);
json grid_to_json(const QuantileGrid& g);

/// Functional block: which functional, at which points, over which quantiles.
struct FunctionalConfig {
    FunctionalKind kind = FunctionalKind::AverageDerivative;
    int k = 0;
    std::vector<std::vector<double>> points;  // Value / Derivative evaluation points
    int slice_column = 1;                     // ConditionalAverageDerivative
    std::vector<double> slice_values;
    std::vector<double> quantiles;            // empty means the whole grid
};

FunctionalConfig functional_from_json(const json& j);
json functional_to_json(const FunctionalConfig& f);

struct MonotonizeConfig {
    bool enabled = false;
    MonotoneOperator op;
    bool intersect = false;
};

MonotonizeConfig monotonize_from_json(const json& j);
json monotonize_to_json(const MonotonizeConfig& m);

/// `fit` command configuration.
struct FitConfig {
    std::string response;
    std::vector<std::string> covariates;  // empty: all other columns, first is W
    BasisParams basis;
    QuantileGrid grid = QuantileGrid::regular();
    ProcessOptions process;
};

FitConfig fit_config_from_json(const json& j);
json fit_config_to_json(const FitConfig& c);

/// `band` command configuration.
struct BandConfig {
    CouplingMethod method = CouplingMethod::Pivotal;
    std::optional<int> B;  // default 1000 simulation / 199 bootstrap
    double alpha = 0.10;
    bool uniform = true;
    CriticalRule pointwise_rule = CriticalRule::CouplingQuantile;
    std::optional<double> delta;
    GradientPath gradient_path = GradientPath::LinearTerm;
    FunctionalConfig functional;
    MonotonizeConfig monotonize;
    bool dump_draws = false;
};

BandConfig band_config_from_json(const json& j);
json band_config_to_json(const BandConfig& c);

McConfig mc_config_from_json(const json& j);
json mc_config_to_json(const McConfig& c);

/// `estimand-gap` command configuration.
struct GapConfig {
    DgpSpec dgp;
    std::vector<StudyBasis> bases;
    QuantileGrid grid = QuantileGrid::regular(0.1, 0.9, 0.1);
    std::vector<double> w_points;
    Eigen::Index mega_n = 100000;
    GapFunctional functional = GapFunctional::Value;
};

GapConfig gap_config_from_json(const json& j);
json gap_config_to_json(const GapConfig& c);

/// `monotonize` command configuration (operator on a CSV table).
struct MonotonizeCommandConfig {
    MonotonizeConfig monotonize;
    std::string u_column = "u";
    std::string w_column;  // empty: one axis
    std::vector<std::string> value_columns;
};

MonotonizeCommandConfig monotonize_command_from_json(const json& j);

}  // namespace sqr
