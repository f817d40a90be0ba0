#include <iostream>

#include <CLI11.hpp>

#include "fosl/cli.hpp"

int main(int argc, char** argv) {
    using namespace fosl;
    CLI::App app{"Forced-oscillation source location from PMU data"};
    app.require_subcommand(1);

    cli::Manifest m;
    std::string report_path;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--bench", m.bench, "Bench parameter file (INI); built-in bench when omitted");
        sub->add_option("--noise-tve", m.noise_tve, "PMU noise as total vector error, 0.01 for 1 %");
        sub->add_option("--noise-fe", m.noise_fe, "PMU frequency error (Hz)");
        sub->add_option("--seed", m.seed, "Noise seed");
        sub->add_option("--out", m.out, "Output directory");
        sub->add_option("--duration", m.duration, "Simulated seconds");
    };

    auto* sim = app.add_subcommand("simulate", "Run a scenario on the bench and write PMU and truth traces");
    sim->add_option("--scenario", m.scenario, "none, a1, a2 or a scenario file")->required();
    common(sim);

    auto* loc = app.add_subcommand("locate", "Rank the source unit and name the control loop");
    auto* data = loc->add_option("--data", m.data, "Measured CSV or dataset directory");
    loc->add_option("--scenario", m.scenario, "Simulate this scenario instead of reading --data")->excludes(data);
    loc->add_option("--filter-config", m.filter_config, "Locate/filter settings (INI)");
    loc->add_option("--window", m.window, "Residual-energy window (s); 0 for the cumulative sum");
    common(loc);

    auto* rep = app.add_subcommand("report", "Summarize a report.json");
    rep->add_option("report", report_path, "Report file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : cli::kError;
    }

    try {
        if (*sim) {
            m.command = "simulate";
            cli::run_simulate(m);
            std::cout << "wrote " << m.out << "\n";
            return 0;
        }
        if (*loc) {
            m.command = "locate";
            if (m.data.empty() && m.scenario.empty()) throw InvalidArgument("cli", "locate needs --data or --scenario");
            const auto outcome = cli::run_locate(m);
            std::cout << cli::summarize(outcome.json).text;
            if (!outcome.report.complete())
                std::cerr << "error in stage " << outcome.report.failed_stage << ": " << outcome.report.error << "\n";
            return outcome.exit_code;
        }
        const auto s = cli::summarize_file(report_path);
        std::cout << s.text;
        return s.exit_code;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return cli::kError;
    }
}
