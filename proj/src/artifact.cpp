#include "sqr/io.hpp"

#include <sstream>

namespace sqr {

using nlohmann::json;

json matrix_to_json(const Matrix& a) {
    std::vector<double> data;
    data.reserve(static_cast<std::size_t>(a.size()));
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j) data.push_back(a(i, j));
    return {{"rows", a.rows()}, {"cols", a.cols()}, {"data", data}};
}

Matrix matrix_from_json(const json& j) {
    const auto rows = j.at("rows").get<Eigen::Index>();
    const auto cols = j.at("cols").get<Eigen::Index>();
    const auto data = j.at("data").get<std::vector<double>>();
    if (rows < 0 || cols < 0 || static_cast<Eigen::Index>(data.size()) != rows * cols)
        throw UserError("artifact: matrix block has inconsistent dimensions");
    Matrix a(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j2 = 0; j2 < cols; ++j2) a(i, j2) = data[static_cast<std::size_t>(i * cols + j2)];
    return a;
}

namespace {

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

Vector from_std(const std::vector<double>& v) {
    return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

json process_to_json(const CoefficientProcess& proc, const json& config_echo) {
    json jac = json::array();
    for (const Matrix& j : proc.jacobians) jac.push_back(matrix_to_json(j));
    return {{"format", "sqr-coefficient-process"},
            {"version", kArtifactVersion},
            {"config", config_echo},
            {"n", proc.n},
            {"m", proc.m()},
            {"grid", proc.grid.points},
            {"betas", matrix_to_json(proc.betas)},
            {"gram", matrix_to_json(proc.gram)},
            {"jacobians", jac},
            {"bandwidths", to_std(proc.bandwidths)},
            {"residual_bandwidths", to_std(proc.residual_bandwidths)},
            {"bandwidth_alpha", proc.bandwidth_alpha},
            {"certificates", to_std(proc.certificates)},
            {"objectives", to_std(proc.objectives)},
            {"bases", proc.bases},
            {"basis", proc.basis ? proc.basis->to_json() : json(nullptr)}};
}

CoefficientProcess process_from_json(const json& j) {
    CoefficientProcess proc;
    try {
        if (j.at("format").get<std::string>() != "sqr-coefficient-process") throw UserError("artifact: unknown format");
        const int version = j.at("version").get<int>();
        if (version != kArtifactVersion)
            throw UserError("artifact: version " + std::to_string(version) + " is not supported (expected " +
                            std::to_string(kArtifactVersion) + ")");
        proc.n = j.at("n").get<Eigen::Index>();
        proc.grid.points = j.at("grid").get<std::vector<double>>();
        proc.grid.validate();
        proc.betas = matrix_from_json(j.at("betas"));
        proc.gram = matrix_from_json(j.at("gram"));
        for (const json& m : j.at("jacobians")) proc.jacobians.push_back(matrix_from_json(m));
        proc.bandwidths = from_std(j.at("bandwidths").get<std::vector<double>>());
        proc.residual_bandwidths = from_std(j.at("residual_bandwidths").get<std::vector<double>>());
        proc.bandwidth_alpha = j.at("bandwidth_alpha").get<double>();
        proc.certificates = from_std(j.at("certificates").get<std::vector<double>>());
        proc.objectives = from_std(j.at("objectives").get<std::vector<double>>());
        proc.bases = j.at("bases").get<std::vector<std::vector<int>>>();
        if (!j.at("basis").is_null()) proc.basis = BasisSpec::from_json(j.at("basis"));
    } catch (const json::exception& e) {
        throw UserError(std::string("artifact: ") + e.what());
    }
    const auto g = static_cast<Eigen::Index>(proc.grid.size());
    if (proc.betas.rows() != g || proc.jacobians.size() != proc.grid.size() || proc.gram.rows() != proc.m())
        throw UserError("artifact: blocks do not match the grid");
    proc.refresh_inverses();
    return proc;
}

std::string band_to_csv(const ConfidenceBand& band) {
    std::ostringstream out;
    out << "u,w,theta_hat,sigma_hat,lower,upper,critical\n";
    for (Eigen::Index a = 0; a < band.theta_hat.rows(); ++a)
        for (Eigen::Index w = 0; w < band.theta_hat.cols(); ++w)
            out << format_double(band.u_values[a]) << ',' << format_double(band.w_labels[w]) << ','
                << format_double(band.theta_hat(a, w)) << ',' << format_double(band.sigma_hat(a, w)) << ','
                << format_double(band.lower(a, w)) << ',' << format_double(band.upper(a, w)) << ','
                << format_double(band.critical(a, w)) << '\n';
    return out.str();
}

json band_header(const ConfidenceBand& band) {
    return {{"alpha", band.alpha},     {"k_n", band.k_n},   {"delta_n", band.delta_n},
            {"c_n", band.c_n},         {"c_n_unadjusted", band.k_n},
            {"uniform", band.uniform}, {"method", band.method}, {"B", band.B}, {"seed", band.seed}};
}

}  // namespace sqr
