#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fosl/energy.hpp"
#include "fosl/playback.hpp"

namespace fosl::pb {

struct LocateConfig {
    std::string branch = "6132-6102";
    double system_mva = 100.0;
    /// Sliding window of the residual energy (s); 0 selects the cumulative sum.
    double window = 5.0;
    /// Measurement samples per filter step.
    int decimation = 10;
    /// Per-quadrature noise std assumed by the filters (p.u.).
    double noise_sigma = 0.0;
    double init_error = 0.0;
    double input_smoothing = 0.2;
    /// Per-step relaxation of the P_mech estimate (1 = plain least squares).
    double pmech_gain = 0.1;
    /// Moving-average span removed from P_mech and delta before integration (s).
    double detrend = 10.0;
    /// Onset detector on the summed residual power of all hypotheses,
    /// averaged over `onset_window`: baseline span starting at
    /// `baseline_start`, sustain span and threshold factor.
    double onset_window = 0.25;
    double baseline_start = 1.25;
    double baseline = 0.75;
    double sustain = 1.0;
    double onset_factor = 3.0;
    double relaxed_ratio = 10.0;
    double warn_margin = 1.1;
    bool parallel = true;
    /// Sigma-point spread and multipliers on the per-unit Q and R.
    double ukf_alpha = 1.0;
    double ukf_beta = 2.0;
    double ukf_kappa = 0.0;
    double q_scale = 1.0;
    double r_scale = 1.0;
    /// Replaces the per-unit defaults when set.
    std::optional<est::FilterConfig> filter;

    void validate() const;
};

struct LocateReport {
    std::vector<std::string> hypotheses;
    RankingReport ranking;
    std::vector<est::DseResult> estimates;
    bool fo_detected = false;
    double onset_time = 0.0;
    energy::EnergyTrace energy;
    energy::LoopVerdict verdict;
    std::vector<std::string> warnings;
    /// Set when a stage failed; results of earlier stages are kept.
    std::string failed_stage;
    std::string error;

    bool complete() const { return failed_stage.empty(); }
    bool conclusive() const { return complete() && fo_detected && verdict.loop != energy::Loop::Inconclusive; }
};

/// Playback, injection reconstruction, DSE fan-out over the synchronous units,
/// residual-energy ranking, and the control-loop verdict for the winner.
LocateReport locate(const std::vector<models::MachineModel>& units, const pmu::PhasorTrace& measured,
                    const LocateConfig& cfg);

/// Field and mechanical energies of one DSE result, trends taken from
/// `window_begin` on.
energy::EnergyTrace estimate_energies(const est::DseResult& dse, const models::GenrouParams& p,
                                      std::size_t window_begin, double detrend);

}  // namespace fosl::pb
