#pragma once

#include <cstdint>
#include <optional>
#include <string>

namespace sqr {

/// Flags shared by every command.
struct CommandOptions {
    std::string config;
    std::string data;
    std::string out = ".";
    std::string artifact;  // band: defaults to <out>/artifact.json
    std::optional<std::uint64_t> seed;
};

/// Fits the coefficient process and writes artifact.json and fit_summary.txt.
void cmd_fit(const CommandOptions& opt);
/// Builds a band from an artifact; writes band.csv and band.json.
void cmd_band(const CommandOptions& opt);
/// Runs a Monte Carlo study; writes mc_report.csv and mc_report.json.
/// Returns false when more than 5% of the replications failed.
bool cmd_mc(const CommandOptions& opt);
/// Writes estimand_gap.csv and estimand_gap.json.
void cmd_estimand_gap(const CommandOptions& opt);
/// Monotonizes columns of a CSV table; writes monotonized.csv.
void cmd_monotonize(const CommandOptions& opt);

}  // namespace sqr
