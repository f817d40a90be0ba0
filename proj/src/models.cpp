#include "fosl/models.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace fosl::models {

namespace {

void require(bool ok, const std::string& what) {
    if (!ok) throw InvalidArgument("models", what);
}

struct AxisConstants {
    double k1d, k2d, k3d, k1q, k2q, k3q;
};

AxisConstants axis_constants(const GenrouParams& p) {
    const double dd = p.xd_p - p.xl;
    const double dq = p.xq_p - p.xl;
    return {(p.xd_pp - p.xl) / dd, (p.xd_p - p.xd_pp) / dd, (p.xd_p - p.xd_pp) / (dd * dd),
            (p.xq_pp - p.xl) / dq, (p.xq_p - p.xq_pp) / dq, (p.xq_p - p.xq_pp) / (dq * dq)};
}

bool all_finite(const MachineState& s) {
    return std::isfinite(s.delta) && std::isfinite(s.omega) && std::isfinite(s.ed_p) && std::isfinite(s.eq_p) &&
           std::isfinite(s.psi_kd) && std::isfinite(s.psi_kq);
}

// Core of both derivative entry points. Currents arrive in machine base,
// machine frame.
GenrouEvaluation evaluate(const MachineState& s, double efd, double pmech_sys, double id, double iq, double vd,
                          double vq, const GenrouParams& p) {
    const auto k = axis_constants(p);
    const SubtransientFlux psi = subtransient_flux(s, p);
    const double flux = psi.magnitude();
    if (!std::isfinite(flux)) throw DivergenceError("models", "subtransient flux magnitude is not finite");
    const double se = saturation(flux, p);

    // Field and q-axis rotor circuit currents in reactance-scaled form.
    const double xad_ifd = s.eq_p + (p.xd - p.xd_p) * (id - k.k3d * (s.psi_kd + (p.xd_p - p.xl) * id - s.eq_p)) +
                           psi.d * se;
    const double xaq_ilq = s.ed_p - (p.xq - p.xq_p) * (iq - k.k3q * (s.psi_kq + (p.xq_p - p.xl) * iq + s.ed_p)) -
                           psi.q * se * (p.xq - p.xl) / (p.xd - p.xl);

    const double pe = vd * id + vq * iq;
    const double pm = pmech_sys / p.to_system();

    GenrouEvaluation out;
    out.derivative[kDelta] = p.omega_base() * s.omega;
    out.derivative[kOmega] = (pm - pe - p.d * s.omega) / (2.0 * p.h);
    out.derivative[kEdp] = -xaq_ilq / p.tq0_p;
    out.derivative[kEqp] = (efd - xad_ifd) / p.td0_p;
    out.derivative[kPsiKd] = (s.eq_p - s.psi_kd - (p.xd_p - p.xl) * id) / p.td0_pp;
    out.derivative[kPsiKq] = (-s.ed_p - s.psi_kq - (p.xq_p - p.xl) * iq) / p.tq0_pp;

    const double scale = p.to_system();
    out.outputs.id = id * scale;
    out.outputs.iq = iq * scale;
    out.outputs.current = to_network_frame({id, iq}, s.delta) * scale;
    out.outputs.pe = pe * scale;
    out.outputs.xad_ifd = xad_ifd;
    return out;
}

}  // namespace

void GenrouParams::validate() const {
    require(xd > xd_p && xd_p > xd_pp && xd_pp > xl && xl >= 0.0, "require Xd > Xd_p > Xd_pp > Xl >= 0");
    require(xq > xq_p && xq_p > xq_pp && xq_pp > xl, "require Xq > Xq_p > Xq_pp > Xl");
    require(td0_p > 0 && tq0_p > 0 && td0_pp > 0 && tq0_pp > 0, "open-circuit time constants must be positive");
    require(h > 0, "inertia constant H must be positive");
    require(d >= 0, "damping D must be non-negative");
    require(s10 >= 0 && s12 >= 0, "saturation factors must be non-negative");
    require(s10 == 0.0 || s12 >= 1.2 * s10, "saturation requires S12 >= 1.2 S10 so the curve is monotone from zero");
    require(mva_base > 0 && system_mva > 0 && f_base > 0, "bases must be positive");
}

MachineVector MachineState::as_vector() const {
    MachineVector v;
    v << delta, omega, ed_p, eq_p, psi_kd, psi_kq;
    return v;
}

MachineState MachineState::from_vector(const Eigen::Ref<const Vec>& v) {
    if (v.size() < kMachineStates) throw InvalidArgument("models", "machine state vector needs 6 entries");
    return {v[kDelta], v[kOmega], v[kEdp], v[kEqp], v[kPsiKd], v[kPsiKq]};
}

SaturationCurve SaturationCurve::fit(double s10, double s12) {
    SaturationCurve c;
    if (s10 == 0.0 && s12 == 0.0) return c;
    if (s10 == 0.0) {
        c.a = 1.0;
        c.b = 1.2 * s12 / (0.2 * 0.2);
        return c;
    }
    // (1.2 - A) / (1 - A) = sqrt(1.2 S12 / S10)
    const double r = std::sqrt(1.2 * s12 / s10);
    c.a = (r - 1.2) / (r - 1.0);
    c.b = s10 / ((1.0 - c.a) * (1.0 - c.a));
    return c;
}

double SaturationCurve::operator()(double flux) const {
    if (b == 0.0 || flux <= a) return 0.0;
    const double e = flux - a;
    return b * e * e / flux;
}

double saturation(double flux_magnitude, const GenrouParams& params) {
    if (flux_magnitude < 0.0) throw InvalidArgument("models", "saturation flux magnitude must be non-negative");
    return SaturationCurve::fit(params.s10, params.s12)(flux_magnitude);
}

SubtransientFlux subtransient_flux(const MachineState& s, const GenrouParams& p) {
    const auto k = axis_constants(p);
    return {k.k1d * s.eq_p + k.k2d * s.psi_kd, -k.k1q * s.ed_p + k.k2q * s.psi_kq};
}

Complex genrou_current(const MachineState& s, Complex v_terminal, const GenrouParams& p) {
    const SubtransientFlux psi = subtransient_flux(s, p);
    const Complex vdq = to_machine_frame(v_terminal, s.delta);
    const double id = (psi.d - vdq.imag()) / p.xd_pp;
    const double iq = (vdq.real() + psi.q) / p.xq_pp;
    return to_network_frame({id, iq}, s.delta) * p.to_system();
}

Complex genrou_terminal_voltage(const MachineState& s, Complex current, const GenrouParams& p) {
    const SubtransientFlux psi = subtransient_flux(s, p);
    const Complex idq = to_machine_frame(current / p.to_system(), s.delta);
    const double vd = p.xq_pp * idq.imag() - psi.q;
    const double vq = psi.d - p.xd_pp * idq.real();
    return to_network_frame({vd, vq}, s.delta);
}

GenrouEvaluation genrou_derivatives(const MachineState& s, double efd, double pmech, Complex v_terminal,
                                    const GenrouParams& p) {
    if (!all_finite(s) || !std::isfinite(efd) || !std::isfinite(pmech) || !std::isfinite(v_terminal.real()) ||
        !std::isfinite(v_terminal.imag()))
        throw InvalidArgument("models", "non-finite input to GENROU derivatives");
    if (std::abs(v_terminal) <= 0.0) throw InvalidArgument("models", "terminal voltage magnitude must be positive");
    const SubtransientFlux psi = subtransient_flux(s, p);
    const Complex vdq = to_machine_frame(v_terminal, s.delta);
    const double id = (psi.d - vdq.imag()) / p.xd_pp;
    const double iq = (vdq.real() + psi.q) / p.xq_pp;
    return evaluate(s, efd, pmech, id, iq, vdq.real(), vdq.imag(), p);
}

GenrouEvaluation genrou_derivatives_from_current(const MachineState& s, double efd, double pmech,
                                                 Complex current, const GenrouParams& p) {
    if (!all_finite(s) || !std::isfinite(efd) || !std::isfinite(pmech) || !std::isfinite(current.real()) ||
        !std::isfinite(current.imag()))
        throw InvalidArgument("models", "non-finite input to GENROU derivatives");
    const SubtransientFlux psi = subtransient_flux(s, p);
    const Complex idq = to_machine_frame(current / p.to_system(), s.delta);
    const double id = idq.real();
    const double iq = idq.imag();
    const double vd = p.xq_pp * iq - psi.q;
    const double vq = psi.d - p.xd_pp * id;
    return evaluate(s, efd, pmech, id, iq, vd, vq, p);
}

// ---------------------------------------------------------------------------

std::string controller_name(const ControllerParams& p) {
    struct Visitor {
        std::string operator()(std::monostate) const { return "NONE"; }
        std::string operator()(const SexsParams&) const { return "SEXS"; }
        std::string operator()(const Tgov1Params&) const { return "TGOV1"; }
        std::string operator()(const GastParams&) const { return "GAST"; }
        std::string operator()(const HygovParams&) const { return "HYGOV"; }
        std::string operator()(const RenewParams&) const { return "RENEW"; }
    };
    return std::visit(Visitor{}, p);
}

void validate(const ControllerParams& p) {
    struct Visitor {
        void operator()(std::monostate) const {}
        void operator()(const SexsParams& s) const {
            require(s.k > 0 && s.ta_tb > 0 && s.tb > 0 && s.te > 0, "SEXS gains and time constants must be positive");
            require(s.emin < s.emax, "SEXS requires E_min < E_max");
        }
        void operator()(const Tgov1Params& g) const {
            require(g.r > 0 && g.t1 > 0 && g.t3 > 0 && g.t2 >= 0, "TGOV1 constants must be positive");
            require(g.vmin < g.vmax, "TGOV1 requires Vmin < Vmax");
        }
        void operator()(const GastParams& g) const {
            require(g.r > 0 && g.t1 > 0 && g.t2 > 0 && g.t3 > 0 && g.at > 0, "GAST constants must be positive");
            require(g.vmin < g.vmax, "GAST requires Vmin < Vmax");
        }
        void operator()(const HygovParams& g) const {
            require(g.r > 0 && g.r_temp > 0 && g.tr > 0 && g.tf > 0 && g.tg > 0 && g.tw > 0 && g.at > 0,
                    "HYGOV constants must be positive");
            require(g.velm > 0, "HYGOV gate velocity limit must be positive");
            require(0.0 <= g.gmin && g.gmin < g.gmax && g.gmax <= 1.0, "HYGOV gate limits must lie in [0, 1]");
        }
        void operator()(const RenewParams& r) const { require(r.t_lag > 0, "renewable lag must be positive"); }
    };
    std::visit(Visitor{}, p);
}

std::size_t controller_size(const ControllerParams& p) {
    struct Visitor {
        std::size_t operator()(std::monostate) const { return 0; }
        std::size_t operator()(const SexsParams&) const { return 2; }
        std::size_t operator()(const Tgov1Params&) const { return 2; }
        std::size_t operator()(const GastParams&) const { return 3; }
        std::size_t operator()(const HygovParams&) const { return 4; }
        std::size_t operator()(const RenewParams&) const { return 2; }
    };
    return std::visit(Visitor{}, p);
}

namespace {

// Zero the derivative of a state that sits on a limit and is pushed outward.
double windup(double value, double derivative, double lo, double hi) {
    if (value >= hi && derivative > 0.0) return 0.0;
    if (value <= lo && derivative < 0.0) return 0.0;
    return derivative;
}

enum HygovIndex { kXf = 0, kXr, kGate, kFlow };

double hygov_desired_gate(const HygovParams& g, const std::vector<double>& x) {
    return std::clamp(x[kXr] + x[kXf] / g.r_temp, g.gmin, g.gmax);
}

double hygov_power(const HygovParams& g, const std::vector<double>& x, double gate, double omega) {
    const double ratio = x[kFlow] / gate;
    const double head = ratio * ratio;
    return g.at * head * (x[kFlow] - g.qnl) - g.dturb * gate * omega;
}

double gate_of(const HygovParams& g, const std::vector<double>& x, const ControllerInputs& in) {
    return std::clamp(in.gate_override.value_or(x[kGate]), g.gmin, g.gmax);
}

}  // namespace

double controller_output(const ControllerState& c, const ControllerInputs& in) {
    const auto& x = c.x;
    struct Visitor {
        const std::vector<double>& x;
        const ControllerInputs& in;
        double operator()(std::monostate) const { return 0.0; }
        double operator()(const SexsParams& s) const {
            return std::clamp(in.efd_override.value_or(x[1]), s.emin, s.emax);
        }
        double operator()(const Tgov1Params& g) const {
            return x[1] + (g.t2 / g.t3) * (x[0] - x[1]) - g.dt * in.omega;
        }
        double operator()(const GastParams& g) const { return x[1] - g.dturb * in.omega; }
        double operator()(const HygovParams& g) const { return hygov_power(g, x, gate_of(g, x, in), in.omega); }
        double operator()(const RenewParams&) const { return x[0]; }
    };
    return std::visit(Visitor{x, in}, c.params);
}

std::vector<double> controller_derivative(const ControllerState& c, const ControllerInputs& in) {
    const auto& x = c.x;
    std::vector<double> dx(x.size(), 0.0);
    struct Visitor {
        const ControllerState& c;
        const ControllerInputs& in;
        std::vector<double>& dx;
        void operator()(std::monostate) const {}
        void operator()(const SexsParams& s) const {
            const auto& x = c.x;
            const double err = c.ref - in.v_mag;
            dx[0] = (err - x[0]) / s.tb;
            const double lead_lag = x[0] + s.ta_tb * (err - x[0]);
            dx[1] = in.efd_override ? 0.0 : windup(x[1], (s.k * lead_lag - x[1]) / s.te, s.emin, s.emax);
        }
        void operator()(const Tgov1Params& g) const {
            const auto& x = c.x;
            dx[0] = windup(x[0], ((c.ref - in.omega) / g.r - x[0]) / g.t1, g.vmin, g.vmax);
            dx[1] = (x[0] - x[1]) / g.t3;
        }
        void operator()(const GastParams& g) const {
            const auto& x = c.x;
            const double governor = (c.ref - in.omega) / g.r;
            const double load_limit = g.at + g.kt * (g.at - x[2]);
            dx[0] = windup(x[0], (std::min(governor, load_limit) - x[0]) / g.t1, g.vmin, g.vmax);
            dx[1] = (x[0] - x[1]) / g.t2;
            dx[2] = (x[1] - x[2]) / g.t3;
        }
        void operator()(const HygovParams& g) const {
            const auto& x = c.x;
            const double desired = hygov_desired_gate(g, x);
            const double err = c.ref - in.omega - g.r * desired;
            dx[kXf] = (err - x[kXf]) / g.tf;
            const double raw_desired = x[kXr] + x[kXf] / g.r_temp;
            dx[kXr] = windup(raw_desired, x[kXf] / (g.r_temp * g.tr), g.gmin, g.gmax);
            const double gate_rate = std::clamp((desired - x[kGate]) / g.tg, -g.velm, g.velm);
            dx[kGate] = in.gate_override ? 0.0 : windup(x[kGate], gate_rate, g.gmin, g.gmax);
            const double gate = gate_of(g, x, in);
            const double ratio = x[kFlow] / gate;
            dx[kFlow] = (1.0 - ratio * ratio) / g.tw;
        }
        void operator()(const RenewParams& r) const {
            const auto& x = c.x;
            const Complex order = std::conj(Complex(c.ref, c.ref_im) / in.v_terminal);
            dx[0] = (order.real() - x[0]) / r.t_lag;
            dx[1] = (order.imag() - x[1]) / r.t_lag;
        }
    };
    std::visit(Visitor{c, in, dx}, c.params);
    return dx;
}

void controller_clamp(ControllerState& c) {
    auto& x = c.x;
    struct Visitor {
        std::vector<double>& x;
        void operator()(std::monostate) const {}
        void operator()(const SexsParams& s) const { x[1] = std::clamp(x[1], s.emin, s.emax); }
        void operator()(const Tgov1Params& g) const { x[0] = std::clamp(x[0], g.vmin, g.vmax); }
        void operator()(const GastParams& g) const { x[0] = std::clamp(x[0], g.vmin, g.vmax); }
        void operator()(const HygovParams& g) const { x[kGate] = std::clamp(x[kGate], g.gmin, g.gmax); }
        void operator()(const RenewParams&) const {}
    };
    std::visit(Visitor{x}, c.params);
}

ControllerStep controller_step(const ControllerState& c, const ControllerInputs& in, double dt) {
    if (!(dt > 0.0)) throw InvalidArgument("models", "controller step requires dt > 0");
    if (!std::isfinite(in.v_mag) || !std::isfinite(in.omega) || !std::isfinite(in.pe))
        throw InvalidArgument("models", "non-finite controller input");
    const std::size_t n = c.x.size();
    auto shifted = [&](const std::vector<double>& k, double h) {
        ControllerState s = c;
        for (std::size_t i = 0; i < n; ++i) s.x[i] = c.x[i] + h * k[i];
        return s;
    };
    const auto k1 = controller_derivative(c, in);
    const auto k2 = controller_derivative(shifted(k1, dt / 2), in);
    const auto k3 = controller_derivative(shifted(k2, dt / 2), in);
    const auto k4 = controller_derivative(shifted(k3, dt), in);
    ControllerStep out{c, 0.0};
    for (std::size_t i = 0; i < n; ++i) out.state.x[i] += dt / 6.0 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
    controller_clamp(out.state);
    out.output = controller_output(out.state, in);
    return out;
}

ControllerState init_controller(const ControllerParams& p, double output0, const ControllerInputs& in) {
    validate(p);
    ControllerState c{p, std::vector<double>(controller_size(p), 0.0), 0.0, 0.0};
    struct Visitor {
        ControllerState& c;
        double y0;
        const ControllerInputs& in;
        void operator()(std::monostate) const {}
        void operator()(const SexsParams& s) const {
            if (y0 < s.emin || y0 > s.emax) {
                std::ostringstream os;
                os << "infeasible operating point: E_fd0 = " << y0 << " outside [" << s.emin << ", " << s.emax << "]";
                throw InvalidArgument("models", os.str());
            }
            c.x[0] = y0 / s.k;
            c.x[1] = y0;
            c.ref = in.v_mag + y0 / s.k;
        }
        void operator()(const Tgov1Params& g) const {
            c.x[0] = c.x[1] = y0;
            c.ref = g.r * y0 + in.omega;
        }
        void operator()(const GastParams& g) const {
            c.x[0] = c.x[1] = c.x[2] = y0;
            c.ref = g.r * y0 + in.omega;
        }
        void operator()(const HygovParams& g) const {
            const double gate = y0 / g.at + g.qnl;
            if (gate < g.gmin || gate > g.gmax)
                throw InvalidArgument("models", "infeasible operating point: HYGOV gate outside its limits");
            c.x[kXf] = 0.0;
            c.x[kXr] = gate;
            c.x[kGate] = gate;
            c.x[kFlow] = gate;
            c.ref = g.r * gate + in.omega;
        }
        void operator()(const RenewParams&) const {}
    };
    std::visit(Visitor{c, output0, in}, p);
    return c;
}

double hygov_gate(const ControllerState& c) {
    const auto* g = std::get_if<HygovParams>(&c.params);
    if (g == nullptr) throw InvalidArgument("models", "controller is not HYGOV");
    return std::clamp(c.x[kGate], g->gmin, g->gmax);
}

// ---------------------------------------------------------------------------

InitialCondition init_from_powerflow(double p_mw, double q_mvar, Complex v, const GenrouParams& params,
                                     const ControllerParams& exciter, const ControllerParams& governor) {
    params.validate();
    if (!(std::abs(v) > 0.0)) throw InvalidArgument("models", "terminal voltage magnitude must be positive");
    const GenrouParams& p = params;
    const double scale = p.to_system();
    const Complex s_sys(p_mw / p.system_mva, q_mvar / p.system_mva);
    const Complex i_m = std::conj(s_sys / v) / scale;
    const double c_q = (p.xq - p.xl) / (p.xd - p.xl);

    // q-axis steady state: -psi''q (1 + c S) - (Xq - X''q) Iq = 0, solved for delta.
    auto residual = [&](double delta) {
        const Complex vdq = to_machine_frame(v, delta);
        const Complex idq = to_machine_frame(i_m, delta);
        const double psi_q = p.xq_pp * idq.imag() - vdq.real();
        const double psi_d = vdq.imag() + p.xd_pp * idq.real();
        const double se = saturation(std::hypot(psi_d, psi_q), p);
        return -psi_q * (1.0 + c_q * se) - (p.xq - p.xq_pp) * idq.imag();
    };
    double delta = std::arg(v + Complex(0.0, p.xq) * i_m) + 0.0;
    // Damped secant-Newton; the unsaturated guess is already close.
    for (int it = 0; it < 100; ++it) {
        const double f = residual(delta);
        if (std::abs(f) < 1e-15) break;
        const double h = 1e-7;
        const double df = (residual(delta + h) - residual(delta - h)) / (2 * h);
        if (df == 0.0 || !std::isfinite(df)) throw NumericalError("models", "rotor angle initialization stalled");
        double step = f / df;
        step = std::clamp(step, -0.2, 0.2);
        delta -= step;
        if (std::abs(step) < 1e-15) break;
    }
    if (std::abs(residual(delta)) > 1e-10) throw NumericalError("models", "rotor angle initialization did not converge");

    const Complex vdq = to_machine_frame(v, delta);
    const Complex idq = to_machine_frame(i_m, delta);
    const double id = idq.real();
    const double iq = idq.imag();
    const double psi_q = p.xq_pp * iq - vdq.real();
    const double psi_d = vdq.imag() + p.xd_pp * id;
    const double se = saturation(std::hypot(psi_d, psi_q), p);

    InitialCondition ic;
    MachineState& s = ic.machine;
    s.delta = delta;
    s.omega = 0.0;
    s.ed_p = -psi_q - (p.xq_p - p.xq_pp) * iq;
    s.psi_kq = -s.ed_p - (p.xq_p - p.xl) * iq;
    s.eq_p = psi_d + (p.xd_p - p.xd_pp) * id;
    s.psi_kd = s.eq_p - (p.xd_p - p.xl) * id;
    ic.efd0 = s.eq_p + (p.xd - p.xd_p) * id + se * psi_d;
    const double pm_machine = vdq.real() * id + vdq.imag() * iq;
    ic.pm0 = pm_machine * scale;

    ControllerInputs in;
    in.v_mag = std::abs(v);
    in.v_terminal = v;
    in.omega = 0.0;
    in.pe = pm_machine;
    ic.exciter = init_controller(exciter, ic.efd0, in);
    ic.governor = init_controller(governor, pm_machine, in);
    return ic;
}

}  // namespace fosl::models
