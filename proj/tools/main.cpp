#include "sqr/commands.hpp"
#include "sqr/common.hpp"
#include "sqr/parallel.hpp"

#include "CLI11.hpp"

#include <cstdlib>
#include <iostream>

namespace {

constexpr int kExitUser = 1;
constexpr int kExitNumerical = 2;

int threads_from_env() {
    const char* env = std::getenv("SQR_THREADS");
    if (env == nullptr || *env == '\0') return 0;
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (*end != '\0' || v < 1) throw sqr::UserError("SQR_THREADS must be a positive integer");
    return static_cast<int>(v);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Series quantile regression: fits, coupled confidence bands and Monte Carlo studies"};
    app.require_subcommand(1);

    sqr::CommandOptions opt;
    std::uint64_t seed = 0;
    int threads = 0;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", opt.config, "JSON configuration file")->required();
        cmd->add_option("--out", opt.out, "Output directory")->capture_default_str();
        cmd->add_option("--seed", seed, "Root random seed");
        cmd->add_option("--threads", threads, "Worker threads (default: SQR_THREADS or all cores)")->check(CLI::PositiveNumber);
    };

    auto* fit = app.add_subcommand("fit", "Fit the quantile coefficient process");
    add_common(fit);
    fit->add_option("--data", opt.data, "CSV with a header row")->required();

    auto* band = app.add_subcommand("band", "Confidence band for a functional of a fitted process");
    add_common(band);
    band->add_option("--data", opt.data, "Fitting data (needed by the bootstrap methods)");
    band->add_option("--artifact", opt.artifact, "Artifact written by fit (default <out>/artifact.json)");

    auto* mc = app.add_subcommand("mc", "Monte Carlo study of band coverage");
    add_common(mc);

    auto* gap = app.add_subcommand("estimand-gap", "Series approximation error on a large simulated sample");
    add_common(gap);

    auto* mono = app.add_subcommand("monotonize", "Monotonize columns of a gridded CSV table");
    add_common(mono);
    mono->add_option("--data", opt.data, "CSV table")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        const int env_threads = threads_from_env();
        sqr::set_thread_count(threads > 0 ? threads : env_threads);
        for (auto* cmd : app.get_subcommands())
            if (cmd->count("--seed") > 0) opt.seed = seed;

        if (fit->parsed()) sqr::cmd_fit(opt);
        else if (band->parsed()) sqr::cmd_band(opt);
        else if (gap->parsed()) sqr::cmd_estimand_gap(opt);
        else if (mono->parsed()) sqr::cmd_monotonize(opt);
        else if (mc->parsed() && !sqr::cmd_mc(opt)) {
            std::cerr << "error: more than 5% of the replications failed (see mc_report.json)\n";
            return kExitNumerical;
        }
    } catch (const sqr::UserError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUser;
    } catch (const sqr::NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUser;
    }
    return 0;
}
