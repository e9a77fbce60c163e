#pragma once

#include "sqr/common.hpp"
#include "sqr/couplings.hpp"
#include "sqr/functional_inference.hpp"
#include "sqr/process_estimation.hpp"

#include "json.hpp"

#include <string>
#include <vector>

namespace sqr {

/// Numeric CSV table: comma separated, header row, '.' decimals.
struct Table {
    std::vector<std::string> header;
    std::vector<Vector> columns;

    Eigen::Index rows() const { return columns.empty() ? 0 : columns.front().size(); }
    /// Column index by name; throws UserError naming the missing column.
    std::size_t column(const std::string& name) const;
};

/// Parses CSV text. Errors cite the data row (1-based, header excluded) and column.
Table parse_csv(const std::string& text, const std::string& source = "input");
Table read_csv(const std::string& path);

/// Shortest text that reads back to the same double.
std::string format_double(double v);

/// Writes via a temporary file in the same directory and renames it into place.
void write_file_atomic(const std::string& path, const std::string& content);

constexpr int kArtifactVersion = 1;

/// Row-major matrix block {"rows", "cols", "data"}.
nlohmann::json matrix_to_json(const Matrix& a);
Matrix matrix_from_json(const nlohmann::json& j);

/// Serialized coefficient process with the configuration echo.
nlohmann::json process_to_json(const CoefficientProcess& proc, const nlohmann::json& config_echo);
CoefficientProcess process_from_json(const nlohmann::json& j);

/// One row per (u, w): u, w, theta_hat, sigma_hat, lower, upper, critical.
std::string band_to_csv(const ConfidenceBand& band);
/// Header record for a band (alpha, k_n, delta_n, c_n, method, B, seed).
nlohmann::json band_header(const ConfidenceBand& band);

}  // namespace sqr
