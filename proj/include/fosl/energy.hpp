#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "fosl/models.hpp"

namespace fosl::energy {

struct TrendFit {
    double slope = 0.0;
    /// 95 % half-width from the slope's standard error.
    double half_width = 0.0;
    std::size_t samples = 0;

    bool positive() const { return slope > half_width; }
    bool negative() const { return slope < -half_width; }
};

struct EnergyTrace {
    std::vector<double> time;
    std::vector<double> w_field;
    std::vector<double> w_mech;
    std::vector<double> w_e;       // optional
    std::vector<double> w_g;       // optional
    std::vector<double> w_branch;  // optional
    TrendFit field_trend;
    TrendFit mech_trend;
    std::size_t window_begin = 0;  // first sample of the trend window

    void validate() const;
};

enum class Loop { Excitation, Mechanical, Inconclusive };
enum class VerdictRule { StrictSign, RelaxedMagnitude, None };

std::string to_string(Loop loop);
std::string to_string(VerdictRule rule);

struct LoopVerdict {
    Loop loop = Loop::Inconclusive;
    VerdictRule rule = VerdictRule::None;
    double field_slope = 0.0;
    double mech_slope = 0.0;
    /// Larger over smaller final |W|.
    double magnitude_ratio = 1.0;
    /// Both energies grow; reported, never turned into a verdict.
    bool both_positive = false;
};

/// Subtracts a centered moving average spanning `window` samples (truncated at
/// the ends). A window of 0 or 1 returns the input unchanged.
std::vector<double> detrend(const std::vector<double>& x, std::size_t window);

/// Cumulative trapezoid of P d(theta) + Q dV / V over the detrended inputs.
/// The divisor V is the raw magnitude.
std::vector<double> branch_energy(const std::vector<double>& p, const std::vector<double>& q,
                                  const std::vector<double>& theta, const std::vector<double>& v,
                                  std::size_t detrend_window = 0);

/// Per-unit angle unwrapping of a phasor's argument.
std::vector<double> unwrap(const std::vector<double>& angle);

/// Field-loop constants in machine p.u.
struct FieldParams {
    double td0_p = 0.0;
    double xd = 0.0;
    double xd_p = 0.0;

    static FieldParams from(const models::GenrouParams& p) { return {p.td0_p, p.xd, p.xd_p}; }
    void validate() const;
};

double w_field_step(double prev, double efd, double xad_ifd, double dt, const FieldParams& p);
std::vector<double> w_field(const std::vector<double>& efd, const std::vector<double>& xad_ifd, double dt,
                            const FieldParams& p);

double w_mech_step(double prev, double pm, double pm_prev, double delta, double delta_prev);
std::vector<double> w_mech(const std::vector<double>& pmech, const std::vector<double>& delta,
                           std::size_t detrend_window = 0);

/// Machine trajectory for the generator energy split. Currents, P_mech and
/// E_fd are machine base.
struct GeneratorTrace {
    std::vector<double> time;
    std::vector<models::MachineState> states;
    std::vector<double> efd;
    std::vector<double> pmech;
    std::vector<double> id;
    std::vector<double> iq;
};

struct GeneratorEnergy {
    std::vector<double> w_e;
    std::vector<double> w_g;
};

/// W_e and W_g with D = 0. Time derivatives of E'q and E'd are central
/// differences of the state trace; the kinetic term uses the speed in rad/s
/// so that it matches the swing equation, H omega_b omega^2.
GeneratorEnergy generator_energy_components(const GeneratorTrace& trace, const models::GenrouParams& p);

/// Ordinary least squares over samples [begin, end).
TrendFit trend_slope(const std::vector<double>& time, const std::vector<double>& series, std::size_t begin,
                     std::size_t end);
inline TrendFit trend_slope(const std::vector<double>& time, const std::vector<double>& series) {
    return trend_slope(time, series, 0, series.size());
}

/// Strict rule: opposite slopes, the positive one beyond its half-width.
/// Relaxed rule: final magnitudes at least `relaxed_ratio` apart.
LoopVerdict loop_verdict(const TrendFit& field, const TrendFit& mech, double field_final, double mech_final,
                         double relaxed_ratio = 10.0);
LoopVerdict loop_verdict(const EnergyTrace& trace, double relaxed_ratio = 10.0);

/// First index at or after `baseline_end` where `series` rises above factor
/// x its mean over [baseline_begin, baseline_end) and stays there for
/// `sustain` samples. Returns series.size() when no onset is found.
std::size_t detect_onset(const std::vector<double>& series, std::size_t baseline_begin, std::size_t baseline_end,
                         std::size_t sustain, double factor = 3.0);

}  // namespace fosl::energy
