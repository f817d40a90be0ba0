#pragma once

#include <array>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "fosl/common.hpp"

namespace fosl::models {

// Round-rotor machine constants, named after the nomenclature table:
// reactances in machine p.u., time constants in seconds.
struct GenrouParams {
    double xd = 1.8;
    double xq = 1.75;
    double xd_p = 0.3;
    double xq_p = 0.55;
    double xd_pp = 0.25;
    double xq_pp = 0.25;
    double xl = 0.15;
    double td0_p = 6.0;
    double tq0_p = 0.6;
    double td0_pp = 0.05;
    double tq0_pp = 0.05;
    double h = 4.0;
    double d = 0.0;
    double s10 = 0.0;
    double s12 = 0.0;
    double mva_base = 100.0;
    double f_base = 60.0;
    /// Power base used by every value crossing the module boundary.
    double system_mva = 100.0;

    void validate() const;

    /// Multiplies a machine-base current or power to get system base.
    double to_system() const { return mva_base / system_mva; }
    double omega_base() const { return 2.0 * kPi * f_base; }
};

/// Order matches x = [delta omega E'd E'q Psi'd Psi'q].
enum StateIndex : int { kDelta = 0, kOmega, kEdp, kEqp, kPsiKd, kPsiKq, kMachineStates };

using MachineVector = Eigen::Matrix<double, kMachineStates, 1>;

struct MachineState {
    double delta = 0.0;   // rad, network frame
    double omega = 0.0;   // speed deviation, p.u.
    double ed_p = 0.0;    // E'd
    double eq_p = 0.0;    // E'q
    double psi_kd = 0.0;  // Psi'd, d-axis damper flux
    double psi_kq = 0.0;  // Psi'q, q-axis damper flux

    MachineVector as_vector() const;
    static MachineState from_vector(const Eigen::Ref<const Vec>& v);
};

/// Stator and field quantities. Currents and power are system base.
struct MachineOutputs {
    double id = 0.0;
    double iq = 0.0;
    Complex current;  // I_re + j I_im injected into the bus
    double pe = 0.0;
    double xad_ifd = 0.0;  // machine base, same scale as E_fd
};

struct SubtransientFlux {
    double d = 0.0;
    double q = 0.0;
    double magnitude() const { return std::hypot(d, q); }
};

/// Two-point quadratic saturation S(psi) = B (psi - A)^2 / psi for psi > A.
struct SaturationCurve {
    double a = 0.0;
    double b = 0.0;
    static SaturationCurve fit(double s10, double s12);
    double operator()(double flux) const;
};

double saturation(double flux_magnitude, const GenrouParams& params);

SubtransientFlux subtransient_flux(const MachineState& s, const GenrouParams& p);

/// Stator algebra (R_a = 0, speed factor taken as 1): current injected for a
/// given terminal voltage. Affine in `v_terminal`.
Complex genrou_current(const MachineState& s, Complex v_terminal, const GenrouParams& p);

/// Inverse stator algebra: terminal voltage produced by a given injection.
Complex genrou_terminal_voltage(const MachineState& s, Complex current, const GenrouParams& p);

struct GenrouEvaluation {
    MachineVector derivative;
    MachineOutputs outputs;
};

/// `pmech` is system base; `efd` is machine base (field quantities do not
/// depend on the power base).
GenrouEvaluation genrou_derivatives(const MachineState& s, double efd, double pmech, Complex v_terminal,
                                    const GenrouParams& p);

/// Same dynamics but driven by an injected current (the estimator's view).
GenrouEvaluation genrou_derivatives_from_current(const MachineState& s, double efd, double pmech,
                                                 Complex current, const GenrouParams& p);

// ---------------------------------------------------------------------------
// Controllers. Block diagrams follow the usual library models; all internal
// quantities are on the machine base.

struct SexsParams {
    double k = 100.0;
    double ta_tb = 0.1;
    double tb = 10.0;
    double te = 0.05;
    double emin = 0.0;
    double emax = 5.0;
};

struct Tgov1Params {
    double r = 0.05;
    double t1 = 0.5;
    double vmax = 1.0;
    double vmin = 0.0;
    double t2 = 2.1;
    double t3 = 7.0;
    double dt = 0.0;
};

struct GastParams {
    double r = 0.05;
    double t1 = 0.4;
    double t2 = 0.1;
    double t3 = 3.0;
    double at = 1.0;
    double kt = 2.0;
    double vmax = 1.0;
    double vmin = 0.0;
    double dturb = 0.0;
};

struct HygovParams {
    double r = 0.05;
    double r_temp = 0.3;
    double tr = 5.0;
    double tf = 0.05;
    double tg = 0.5;
    double velm = 0.2;
    double gmax = 1.0;
    double gmin = 0.0;
    double tw = 1.0;
    double at = 1.2;
    double dturb = 0.5;
    double qnl = 0.08;
};

/// Current-source lag standing in for converter-interfaced units.
struct RenewParams {
    double t_lag = 0.02;
};

using ControllerParams = std::variant<std::monostate, SexsParams, Tgov1Params, GastParams, HygovParams, RenewParams>;

std::string controller_name(const ControllerParams& p);
void validate(const ControllerParams& p);

/// Internal state plus the reference setpoint (V_ref for exciters, P_ref for
/// governors, the complex power order for renewables).
struct ControllerState {
    ControllerParams params;
    std::vector<double> x;
    double ref = 0.0;
    double ref_im = 0.0;
};

struct ControllerInputs {
    double v_mag = 1.0;
    double omega = 0.0;
    double pe = 0.0;
    Complex v_terminal{1.0, 0.0};
    /// Forced-oscillation hooks: replace the SEXS field voltage or the HYGOV
    /// gate position while set. Limits still apply.
    std::optional<double> efd_override;
    std::optional<double> gate_override;
};

std::size_t controller_size(const ControllerParams& p);

/// Exciters return E_fd, governors P_mech (machine base), renewables I_re.
double controller_output(const ControllerState& c, const ControllerInputs& in);

/// Time derivative of the internal state. Limits with anti-windup: a state
/// sitting on a limit gets a zero derivative when pushed outward.
std::vector<double> controller_derivative(const ControllerState& c, const ControllerInputs& in);

/// Projects the internal state back onto its declared limits.
void controller_clamp(ControllerState& c);

struct ControllerStep {
    ControllerState state;
    double output = 0.0;
};

/// One classical 4-stage step with inputs held over `dt`.
ControllerStep controller_step(const ControllerState& c, const ControllerInputs& in, double dt);

/// Builds the equilibrium state that holds `output0` (E_fd0 or P_m0 in machine
/// base) for the given steady inputs.
ControllerState init_controller(const ControllerParams& p, double output0, const ControllerInputs& in);

/// Gate position of a HYGOV state; throws if the state is not HYGOV.
double hygov_gate(const ControllerState& c);

// ---------------------------------------------------------------------------

enum class UnitKind { Synchronous, Renewable };

struct MachineModel {
    std::string name;
    UnitKind kind = UnitKind::Synchronous;
    GenrouParams genrou;
    ControllerParams exciter;
    ControllerParams governor;
    RenewParams renewable;
    double p_mw = 0.0;
    double q_mvar = 0.0;
};

struct InitialCondition {
    MachineState machine;
    ControllerState exciter;
    ControllerState governor;
    double efd0 = 0.0;  // machine base
    double pm0 = 0.0;   // system base
};

/// Steady state for a dispatch (P in MW, Q in Mvar) at terminal voltage `v`.
/// Throws InvalidArgument when the required E_fd falls outside the exciter limits.
InitialCondition init_from_powerflow(double p_mw, double q_mvar, Complex v, const GenrouParams& params,
                                     const ControllerParams& exciter, const ControllerParams& governor);

}  // namespace fosl::models
