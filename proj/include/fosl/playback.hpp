#pragma once

#include <string>
#include <vector>

#include "fosl/estimate.hpp"
#include "fosl/models.hpp"
#include "fosl/phasor_trace.hpp"

namespace fosl::pb {

/// Current injections of every unit simulated under normal operation with
/// the terminal voltage forced to the measurement.
struct PlaybackResult {
    std::vector<double> time;
    std::vector<std::string> names;
    std::vector<std::vector<Complex>> currents;  // system base, one trace per unit
    std::vector<std::vector<double>> efd;        // empty traces for renewables
    std::vector<std::vector<double>> pmech;

    std::size_t index(const std::string& name) const;
};

/// `init_error` scales the initial dynamic states by (1 + init_error); the
/// references still come from the dispatch, so a perturbed start settles.
PlaybackResult event_playback(const std::vector<models::MachineModel>& units, const pmu::PhasorTrace& measured,
                              double system_mva = 100.0, double init_error = 0.0);

/// I_j = I_T - sum over i != j of I_i.
std::vector<Complex> current_injection(std::size_t j, const std::vector<Complex>& line_current,
                                       const PlaybackResult& playback);

/// Sliding sum of y^2 over the last `window` + 1 samples.
std::vector<double> residual_energy(const std::vector<double>& y_max, std::size_t window);
/// Running sum of y^2 from the first sample.
std::vector<double> cumulative_residual_energy(const std::vector<double>& y_max);

struct Hypothesis {
    std::string unit;
    std::vector<double> energy;
    int channel = 0;
    double final_energy() const { return energy.empty() ? 0.0 : energy.back(); }
};

struct RankingReport {
    std::vector<Hypothesis> hypotheses;
    std::string identified;
    std::size_t index = 0;
    /// Second-lowest over lowest final energy.
    double margin = 0.0;
    std::vector<std::string> warnings;
};

/// Argmin over final energies. Exact ties go to the lowest index with a warning.
RankingReport identify_source(const std::vector<Hypothesis>& hypotheses, double warn_margin = 1.1);

/// One DSE per synchronous unit driven by its reconstructed current. The
/// parallel variant distributes hypotheses over OpenMP threads; both return
/// identical results.
std::vector<est::DseResult> dse_fanout(const std::vector<models::MachineModel>& units,
                                       const std::vector<std::size_t>& hypotheses, const pmu::PhasorTrace& measured,
                                       const std::string& branch, const PlaybackResult& playback,
                                       const std::vector<est::DseConfig>& configs, bool parallel = true);

}  // namespace fosl::pb
