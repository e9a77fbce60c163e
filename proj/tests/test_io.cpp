#include "doctest.h"

#include "sqr/commands.hpp"
#include "sqr/config.hpp"
#include "sqr/io.hpp"
#include "sqr/sim_lab.hpp"
#include "test_util.hpp"

#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

using namespace sqr;
using sqr::testing::bit_equal;

namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("sqr_test_io_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream(path, std::ios::binary) << text;
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

}  // namespace

TEST_CASE("CSV parsing") {
    const Table t = parse_csv("y,w\n1,2\n3.5,-4e-1\n\n+5,6\n");
    CHECK(t.header == std::vector<std::string>{"y", "w"});
    CHECK(t.rows() == 3);
    CHECK(t.columns[1](1) == -0.4);
    CHECK(t.columns[0](2) == 5.0);
    CHECK(t.column("w") == 1);
    CHECK_THROWS_AS(t.column("v"), UserError);

    std::string text = "y,w\n";
    for (int r = 1; r <= 10; ++r) text += r == 7 ? "1,abc\n" : "1,2\n";
    try {
        parse_csv(text, "data.csv");
        FAIL("expected a parse error");
    } catch (const UserError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("row 7") != std::string::npos);
        CHECK(msg.find("column 'w'") != std::string::npos);
        CHECK(msg.find("'abc'") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_csv(""), UserError);
    CHECK_THROWS_AS(parse_csv("y,w\n1\n"), UserError);
    CHECK_THROWS_AS(parse_csv("y\nnan\n"), UserError);
    CHECK_THROWS_AS(read_csv("/nonexistent/file.csv"), UserError);
}

TEST_CASE("shortest round-trip formatting") {
    Rng rng(101);
    for (int t = 0; t < 1000; ++t) {
        const double v = rng.standard_normal() * std::pow(10.0, static_cast<double>(rng.next() % 20) - 10.0);
        const std::string s = format_double(v);
        CHECK(std::stod(s) == v);
    }
    CHECK(format_double(0.1) == "0.1");
    CHECK(format_double(-2.0) == "-2");
}

TEST_CASE("atomic writes replace the target") {
    const fs::path dir = scratch_dir("atomic");
    const fs::path target = dir / "sub" / "out.txt";
    write_file_atomic(target.string(), "first");
    write_file_atomic(target.string(), "second");
    CHECK(read_text(target) == "second");
    int files = 0;
    for (const auto& entry : fs::directory_iterator(dir / "sub")) files += entry.is_regular_file();
    CHECK(files == 1);
}

TEST_CASE("artifact round trip is exact") {
    DgpSpec spec;
    spec.n = 300;
    const SimSample s = generate_dgp(spec, 102);
    BasisParams p;
    p.family = BasisFamily::CubicBSpline;
    const BasisSpec basis = make_basis(p, s.covariates);
    const Dataset data{s.y, design_matrix(basis, s.covariates), {}};
    const CoefficientProcess proc = fit_process(data, QuantileGrid::regular(0.1, 0.9, 0.05), {}, basis);
    const std::string text = process_to_json(proc, {{"note", "test"}}).dump(1);
    const CoefficientProcess back = process_from_json(nlohmann::json::parse(text));
    CHECK(bit_equal(back.betas, proc.betas));
    CHECK(bit_equal(back.gram, proc.gram));
    for (std::size_t k = 0; k < proc.grid.size(); ++k) {
        CHECK(bit_equal(back.jacobians[k], proc.jacobians[k]));
        CHECK(bit_equal(back.jacobian_inverses[k], proc.jacobian_inverses[k]));
    }
    CHECK(back.grid.points == proc.grid.points);
    CHECK(back.bases == proc.bases);
    CHECK(back.bandwidths == proc.bandwidths);
    REQUIRE(back.basis.has_value());
    CHECK(back.basis->size() == basis.size());

    nlohmann::json wrong = nlohmann::json::parse(text);
    wrong["version"] = 99;
    CHECK_THROWS_AS(process_from_json(wrong), UserError);
    wrong = nlohmann::json::parse(text);
    wrong["betas"]["rows"] = 3;
    CHECK_THROWS_AS(process_from_json(wrong), UserError);

    const Matrix a = Matrix::Random(3, 4);
    CHECK(bit_equal(matrix_from_json(matrix_to_json(a)), a));
}

TEST_CASE("configuration parsing") {
    using nlohmann::json;
    CHECK_THROWS_AS(require_known_keys(json{{"a", 1}, {"b", 2}}, {"a"}, "x"), UserError);
    try {
        basis_params_from_json(json{{"family", "power"}, {"degre", 3}});
        FAIL("expected an unknown-key error");
    } catch (const UserError& e) {
        CHECK(std::string(e.what()).find("'degre'") != std::string::npos);
    }
    CHECK_THROWS_AS(basis_params_from_json(json{{"degree", "six"}}), UserError);
    CHECK(basis_params_from_json(json{{"family", "cubic_bspline"}}).family == BasisFamily::CubicBSpline);

    CHECK(grid_from_json(json::object()).size() == 81);
    CHECK(grid_from_json(json{{"points", {0.25, 0.5}}}).size() == 2);
    CHECK_THROWS_AS(grid_from_json(json{{"points", {0.5}}, {"lo", 0.1}}), UserError);

    const FitConfig fc = fit_config_from_json(json{{"response", "y"}, {"basis", {{"family", "linear"}}}});
    CHECK(fc.response == "y");
    CHECK(fit_config_from_json(fit_config_to_json(fc)).grid.points == fc.grid.points);
    CHECK_THROWS_AS(fit_config_from_json(json::object()), UserError);

    const BandConfig bc = band_config_from_json(json{{"method", "gaussian"}, {"B", 300}, {"alpha", 0.05}});
    CHECK(bc.method == CouplingMethod::Gaussian);
    CHECK(*bc.B == 300);
    CHECK(band_config_from_json(band_config_to_json(bc)).alpha == 0.05);
    CHECK_THROWS_AS(band_config_from_json(json{{"alpha", 1.5}}), UserError);
    CHECK_THROWS_AS(band_config_from_json(json{{"method", "jackknife"}}), UserError);

    const json mc = {{"bases", {{{"name", "lin"}}}}, {"R", 10}, {"methods", {"pivotal", "weighted"}}};
    const McConfig c = mc_config_from_json(mc);
    CHECK(c.methods.size() == 2);
    CHECK(mc_config_to_json(mc_config_from_json(mc_config_to_json(c))) == mc_config_to_json(c));
    CHECK_THROWS_AS(mc_config_from_json(json{{"bases", {{{"name", "lin"}}}}, {"R", 5}}), UserError);
    CHECK_THROWS_AS(mc_config_from_json(json{{"bases", {{{"nam", "lin"}}}}}), UserError);
}

TEST_CASE("fit command matches an in-process fit bit for bit") {
    const fs::path dir = scratch_dir("fit");
    DgpSpec spec;
    spec.n = 250;
    const SimSample s = generate_dgp(spec, 103);
    std::string csv = "y,w\n";
    for (Eigen::Index i = 0; i < spec.n; ++i) csv += format_double(s.y(i)) + "," + format_double(s.covariates(i, 0)) + "\n";
    write_text(dir / "data.csv", csv);
    write_text(dir / "config.json",
               R"({"fit": {"response": "y", "basis": {"family": "cubic_bspline"}, "grid": {"lo": 0.1, "hi": 0.9, "step": 0.1}}})");
    CommandOptions opt;
    opt.config = (dir / "config.json").string();
    opt.data = (dir / "data.csv").string();
    opt.out = (dir / "out").string();
    cmd_fit(opt);
    const CoefficientProcess loaded = process_from_json(nlohmann::json::parse(read_text(dir / "out" / "artifact.json")));

    BasisParams p;
    p.family = BasisFamily::CubicBSpline;
    const BasisSpec basis = make_basis(p, s.covariates);
    const Dataset data{s.y, design_matrix(basis, s.covariates), {}};
    const CoefficientProcess direct = fit_process(data, QuantileGrid::regular(0.1, 0.9, 0.1), {}, basis);
    CHECK(bit_equal(loaded.betas, direct.betas));
    CHECK(bit_equal(loaded.gram, direct.gram));
    for (std::size_t k = 0; k < direct.grid.size(); ++k) CHECK(bit_equal(loaded.jacobians[k], direct.jacobians[k]));
    CHECK(fs::exists(dir / "out" / "fit_summary.txt"));

    // Intercept-only fit: a constant covariate entering linearly without a separate intercept.
    write_text(dir / "three.csv", "y,one\n3,1\n1,1\n2,1\n");
    write_text(dir / "median.json",
               R"({"fit": {"response": "y", "basis": {"family": "linear", "includes_intercept": false}, "grid": {"points": [0.5]}}})");
    opt.config = (dir / "median.json").string();
    opt.data = (dir / "three.csv").string();
    cmd_fit(opt);
    const CoefficientProcess median = process_from_json(nlohmann::json::parse(read_text(dir / "out" / "artifact.json")));
    CHECK(median.betas(0, 0) == doctest::Approx(2.0).epsilon(1e-12));

    // With an intercept the constant column is collinear.
    write_text(dir / "collinear.json", R"({"fit": {"response": "y", "basis": {"family": "linear"}, "grid": {"points": [0.5]}}})");
    opt.config = (dir / "collinear.json").string();
    CHECK_THROWS_AS(cmd_fit(opt), NumericalError);

    write_text(dir / "bad.json", R"({"fit": {"response": "y"}, "extra": {}})");
    opt.config = (dir / "bad.json").string();
    CHECK_THROWS_AS(cmd_fit(opt), UserError);
}
