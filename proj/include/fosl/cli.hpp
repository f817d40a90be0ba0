#pragma once

#include <optional>
#include <string>

#include <json.hpp>

#include "fosl/config.hpp"
#include "fosl/locate.hpp"
#include "fosl/simulate.hpp"

namespace fosl::cli {

enum ExitCode : int { kConclusive = 0, kError = 1, kInconclusive = 2 };

/// Everything a run depends on. Its digest is embedded in every output.
struct Manifest {
    std::string command;
    std::string scenario;       // none, a1, a2 or a scenario file
    std::string data;           // measured CSV or contest directory
    std::string bench;          // empty: built-in bench
    std::string filter_config;  // empty: defaults
    std::string out;
    std::optional<double> noise_tve;
    std::optional<double> noise_fe;
    std::optional<std::uint64_t> seed;
    std::optional<double> window;
    std::optional<double> duration;

    /// Referenced input paths must exist.
    void validate() const;
    nlohmann::json to_json() const;
    std::string digest() const;
};

/// Bench, injection and noise resolved from the manifest (scenario file or
/// name, then command-line overrides).
struct ResolvedScenario {
    sim::TestBench bench;
    config::Scenario scenario;
};
ResolvedScenario resolve_scenario(const Manifest& m);

sim::TestBench resolve_bench(const Manifest& m);
pb::LocateConfig resolve_locate_config(const Manifest& m, double noise_tve);

/// Measured CSV (with an optional JSON sidecar of the same stem) or a
/// directory holding either measured.csv or the four contest files.
pmu::PhasorTrace load_measurements(const std::string& path);

/// Writes measured.csv/.json, truth.csv/.json and manifest.json into m.out.
void run_simulate(const Manifest& m);

struct LocateOutcome {
    pb::LocateReport report;
    nlohmann::json json;
    int exit_code = kError;
};

/// Runs the pipeline and writes report.json plus the CSV traces into m.out
/// (when set).
LocateOutcome run_locate(const Manifest& m);

nlohmann::json report_to_json(const pb::LocateReport& rep, const pb::LocateConfig& cfg,
                              const nlohmann::json& manifest, const std::string& digest);
int exit_code(const pb::LocateReport& rep);

struct Summary {
    std::string text;
    int exit_code = kError;
};
/// Human-readable summary of a report document; throws ParseError when the
/// document lacks the expected fields.
Summary summarize(const nlohmann::json& report, const std::string& source = "report");
Summary summarize_file(const std::string& path);

}  // namespace fosl::cli
