#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "fosl/common.hpp"
#include "fosl/models.hpp"
#include "fosl/phasor_trace.hpp"

namespace fosl::est {

/// x_k = fs(x_{k-1}, u_{k-1}, d_{k-1}),  z_k = hs(x_k, u_k).
struct SystemModel {
    std::function<Vec(const Vec& x, const Vec& u, const Vec& d)> fs;
    std::function<Vec(const Vec& x, const Vec& u)> hs;
};

struct FilterConfig {
    double alpha = 1.0;
    double beta = 2.0;
    double kappa = 0.0;
    Mat q;  // n x n process noise
    Mat r;  // m x m measurement noise
    /// n x p unknown-input distribution. Left empty, it is recomputed every
    /// step as the finite-difference sensitivity of fs with respect to d.
    Mat g;
    double sensitivity_step = 1e-4;
    /// Projection bounds on the state (CUKF). Empty means unbounded; use
    /// +-infinity for single-sided bounds.
    Vec lower, upper;
    /// Bounds applied to the unknown-input estimate.
    Vec input_lower, input_upper;
    /// Per-input relaxation toward the previous estimate:
    /// d = d_prev + gain (d_ls - d_prev). Inputs with gain 1 are then re-solved
    /// with the relaxed ones held fixed. Empty means gain 1 everywhere.
    Vec input_gain;
    double floor = 1e-10;
    double rank_tol = 1e-8;
    /// Runs the biased stage with the previous input estimate instead of
    /// zero, so stage two solves for an increment.
    bool bias_at_previous_input = false;

    void validate(Eigen::Index n, Eigen::Index m, Eigen::Index p) const;
    bool has_bounds() const { return lower.size() > 0 || upper.size() > 0; }
};

struct FilterState {
    Vec x;
    Mat p;
    Vec d;  // last unknown-input estimate
    Vec y;  // innovation
};

struct SigmaPoints {
    Mat points;  // n x (2n+1), column 0 is the mean
    Vec wm;
    Vec wc;
};

/// Symmetrizes and lifts eigenvalues below `floor` back to `floor` when the
/// Cholesky factorization fails.
Mat repair_psd(const Mat& p, double floor);

SigmaPoints sigma_points(const Vec& x, const Mat& p, const FilterConfig& cfg);

/// Clamps every point (and any vector) component into the configured bounds.
void project(Mat& points, const FilterConfig& cfg);
void project(Vec& x, const FilterConfig& cfg);

struct UnscentedMoments {
    Vec mean;
    Mat cov;
    Mat spread;  // centered propagated points, one column per sigma point
};

/// Unscented transform of a point set through `f`; `noise` is added to cov.
UnscentedMoments unscented_transform(const SigmaPoints& sp, const std::function<Vec(const Vec&)>& f,
                                     const Mat* noise = nullptr);

struct Prediction {
    Vec x;      // predicted mean
    Mat p;      // predicted covariance (with Q)
    Vec z;      // predicted measurement
    Mat pz;     // innovation covariance (with R)
    Mat pxz;    // state/measurement cross-covariance
    SigmaPoints redrawn;
    Mat z_spread;
};

/// Propagation plus measurement prediction, the shared part of every stage.
Prediction predict(const SystemModel& model, const FilterState& s, const Vec& u_prev, const Vec& u, const Vec& d,
                   const FilterConfig& cfg);

/// Classical prediction/correction with d = 0.
FilterState ukf_step(const SystemModel& model, const FilterState& s, const Vec& u_prev, const Vec& u, const Vec& z,
                     const FilterConfig& cfg);

struct InputEstimate {
    Vec d;
    Mat h;         // m x n statistical linearization of hs
    Mat g;         // n x p distribution matrix used this step
    Mat r_tilde;   // H Pb H' + R
    Vec z_tilde;   // z - zb
    Mat cov;       // covariance of the estimate
};

struct UiDiagnostics {
    Prediction biased;
    InputEstimate input;
    Prediction unbiased;
};

/// Three stages: biased estimation (d = 0), weighted least-squares recovery
/// of d from the biased innovation, unbiased estimation with d applied.
FilterState ukfui_step(const SystemModel& model, const FilterState& s, const Vec& u_prev, const Vec& u, const Vec& z,
                       const FilterConfig& cfg, UiDiagnostics* diag = nullptr);

/// Stage two on its own, given the biased prediction made with `d_base`
/// (empty means zero).
InputEstimate estimate_input(const Prediction& biased, const Mat& g, const Vec& z, const Vec& d_prev,
                             const FilterConfig& cfg, const Vec& d_base = Vec());

/// H Pb H' + R summed over the redrawn biased sigma points rather than from
/// the matrix product.
Mat accumulated_r_tilde(const Prediction& biased, const Mat& h, const Mat& r);

// ---------------------------------------------------------------------------
// Generator estimation: x = [delta omega E'd E'q Psi'd Psi'q], d = [P_mech E_fd],
// z = [V_re V_im], u = [I_re I_im]. All quantities on the system base except E_fd.

struct ResidualRecord {
    std::vector<double> time;
    std::vector<Eigen::Vector2d> innovation;
    int y_max_channel = 0;

    /// Channel with the largest sample variance; sets y_max_channel.
    int select_channel();
    std::vector<double> y_max() const;
};

struct DseConfig {
    FilterConfig filter;
    /// Samples per filter step; measurements are averaged over each block.
    int decimation = 1;
    /// Relative perturbation applied to the initial state (<= 0.03).
    double init_error = 0.0;
    /// Centered Hann window (s) applied to the reported input traces; 0 keeps
    /// the raw per-step estimate.
    double input_smoothing = 0.2;
};

/// Q, R, bounds and input limits tuned for one machine and filter step.
DseConfig default_dse_config(const models::MachineModel& unit, double filter_step, double noise_sigma = 0.0);

struct DseResult {
    std::string unit;
    ResidualRecord residuals;
    std::vector<double> time;
    std::vector<models::MachineState> states;
    std::vector<double> pmech_raw, efd_raw;  // per-step estimates
    std::vector<double> pmech, efd;          // smoothed
    std::vector<double> xad_ifd;
};

/// Runs the UKF-UI over a generator given its terminal voltage and current
/// injection (true or reconstructed). Controllers are not part of fs.
DseResult dse_generator(const models::MachineModel& unit, const std::vector<double>& time,
                        const std::vector<Complex>& voltage, const std::vector<Complex>& current,
                        const models::MachineState& init, const DseConfig& cfg);

/// Machine state consistent with the first sample, optionally scaled by
/// (1 + init_error) on every non-zero component.
models::MachineState initial_machine_state(const models::MachineModel& unit, Complex voltage, Complex current,
                                           double init_error = 0.0);

/// Zero-phase centered Hann smoothing with a window of `width` samples.
std::vector<double> hann_smooth(const std::vector<double>& x, int width);

}  // namespace fosl::est
