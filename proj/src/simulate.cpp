#include "fosl/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace fosl::sim {

using models::ControllerInputs;
using models::MachineState;
using models::UnitKind;

namespace {

void require(bool ok, const std::string& what) {
    if (!ok) throw InvalidArgument("simulate", what);
}

bool has(const models::ControllerParams& p) { return !std::holds_alternative<std::monostate>(p); }

double frac(double x) { return x - std::floor(x); }

}  // namespace

void TestBench::validate() const {
    require(ts > 0.0, "time step must be positive");
    require(line_x > 0.0, "line reactance must be positive");
    require(!units.empty(), "bench has no units");
    require(std::abs(bus_voltage) > 0.0, "bus voltage must be non-zero");
    for (std::size_t i = 0; i < units.size(); ++i) {
        const auto& u = units[i];
        require(!u.name.empty(), "unit name must not be empty");
        for (std::size_t j = 0; j < i; ++j) require(units[j].name != u.name, "duplicate unit name '" + u.name + "'");
        if (u.kind == UnitKind::Synchronous) {
            u.genrou.validate();
            models::validate(u.exciter);
            models::validate(u.governor);
        } else {
            models::validate(models::ControllerParams{u.renewable});
        }
    }
}

std::size_t TestBench::unit_index(const std::string& name) const {
    for (std::size_t i = 0; i < units.size(); ++i)
        if (units[i].name == name) return i;
    throw InvalidArgument("simulate", "unknown unit '" + name + "'");
}

void FoInjection::validate() const {
    if (const auto* e = std::get_if<EfdModulation>(&kind)) {
        require(e->a1 >= 0 && e->a2 >= 0, "modulation amplitudes must be non-negative");
        require(e->f1 > 0 && e->f2 > 0, "modulation frequencies must be positive");
        require(e->duration > 0 && e->start >= 0, "injection window must be positive");
    } else if (const auto* g = std::get_if<GateSquare>(&kind)) {
        require(g->ag >= 0 && g->g0 > 0, "gate amplitude must be non-negative and g0 positive");
        require(g->f_start > 0 && g->f_max > 0, "gate frequencies must be positive");
        require(g->t_peak > 0 && g->t_end > g->t_peak, "gate ramp requires 0 < t_peak < t_end");
        require(g->duration > 0 && g->start >= 0, "injection window must be positive");
    }
}

const UnitTrace& GroundTruthTrace::unit(const std::string& name) const {
    for (const auto& u : units)
        if (u.name == name) return u;
    throw InvalidArgument("simulate", "trace has no unit '" + name + "'");
}

double efd_modulation(double t, const EfdModulation& p) {
    return p.efd0 + p.a1 * std::sin(2 * kPi * p.f1 * t) * (1.0 + p.a2 * std::sin(2 * kPi * p.f2 * t));
}

double gate_frequency(double t, const GateSquare& p) {
    if (t <= 0.0) return p.f_start;
    if (t < p.t_peak) return p.f_start + (p.f_max - p.f_start) * t / p.t_peak;
    if (t < p.t_end) return p.f_max - (p.f_max - p.f_start) * (t - p.t_peak) / (p.t_end - p.t_peak);
    return p.f_start;
}

double gate_phase(double t, const GateSquare& p) {
    if (t <= 0.0) return 0.0;
    const double rise = p.f_max - p.f_start;
    const double up = std::min(t, p.t_peak);
    double phase = p.f_start * up + rise * up * up / (2 * p.t_peak);
    if (t <= p.t_peak) return phase;
    const double fall_len = p.t_end - p.t_peak;
    const double down = std::min(t, p.t_end) - p.t_peak;
    phase += p.f_max * down - rise * down * down / (2 * fall_len);
    if (t <= p.t_end) return phase;
    return phase + p.f_start * (t - p.t_end);
}

double gate_square(double t, const GateSquare& p) {
    const bool high = frac(gate_phase(t, p)) < 0.5;
    return p.g0 * (high ? 1.0 + p.ag / 2 : 1.0 - p.ag / 2);
}

// ---------------------------------------------------------------------------

BenchSimulator::BenchSimulator(TestBench bench) : bench_(std::move(bench)) {
    bench_.validate();
    const Complex v = bench_.bus_voltage;
    Complex total(0.0, 0.0);
    init_.resize(bench_.units.size());
    initial_.resize(bench_.units.size());
    layout_.resize(bench_.units.size());
    for (std::size_t i = 0; i < bench_.units.size(); ++i) {
        auto& u = bench_.units[i];
        u.genrou.system_mva = bench_.system_mva;
        u.genrou.f_base = bench_.f_base;
        const Complex s(u.p_mw / bench_.system_mva, u.q_mvar / bench_.system_mva);
        total += std::conj(s / v);
        UnitState& st = initial_[i];
        Layout& lay = layout_[i];
        lay.offset = size_;
        if (u.kind == UnitKind::Synchronous) {
            init_[i] = models::init_from_powerflow(u.p_mw, u.q_mvar, v, u.genrou, u.exciter, u.governor);
            st.machine = init_[i].machine;
            st.exciter = init_[i].exciter;
            st.governor = init_[i].governor;
            st.efd_fixed = init_[i].efd0;
            st.pm_fixed = init_[i].pm0 / u.genrou.to_system();
            lay.exciter = st.exciter.x.size();
            lay.governor = st.governor.x.size();
            size_ += models::kMachineStates + lay.exciter + lay.governor;
        } else {
            const Complex i0 = std::conj(s / v);
            st.source = models::ControllerState{u.renewable, {i0.real(), i0.imag()}, s.real(), s.imag()};
            lay.exciter = lay.governor = 0;
            size_ += 2;
        }
    }
    if (!bench_.infinite_bus) bench_.infinite_bus = v - Complex(0.0, bench_.line_x) * total;
}

Vec BenchSimulator::pack(const std::vector<UnitState>& states) const {
    Vec x(static_cast<Eigen::Index>(size_));
    for (std::size_t i = 0; i < states.size(); ++i) {
        const auto& lay = layout_[i];
        auto o = static_cast<Eigen::Index>(lay.offset);
        if (bench_.units[i].kind == UnitKind::Synchronous) {
            x.segment<models::kMachineStates>(o) = states[i].machine.as_vector();
            o += models::kMachineStates;
            for (double v : states[i].exciter.x) x[o++] = v;
            for (double v : states[i].governor.x) x[o++] = v;
        } else {
            x[o] = states[i].source.x[0];
            x[o + 1] = states[i].source.x[1];
        }
    }
    return x;
}

std::vector<UnitState> BenchSimulator::unpack(const Vec& x, const std::vector<UnitState>& like) const {
    std::vector<UnitState> out = like;
    for (std::size_t i = 0; i < out.size(); ++i) {
        const auto& lay = layout_[i];
        auto o = static_cast<Eigen::Index>(lay.offset);
        if (bench_.units[i].kind == UnitKind::Synchronous) {
            out[i].machine = MachineState::from_vector(x.segment<models::kMachineStates>(o));
            o += models::kMachineStates;
            for (auto& v : out[i].exciter.x) v = x[o++];
            for (auto& v : out[i].governor.x) v = x[o++];
        } else {
            out[i].source.x[0] = x[o];
            out[i].source.x[1] = x[o + 1];
        }
    }
    return out;
}

ControllerInputs BenchSimulator::overrides(std::size_t unit, double t, const FoInjection& injection) const {
    ControllerInputs in;
    if (!injection.active() || bench_.units[unit].name != injection.unit) return in;
    if (const auto* e = std::get_if<EfdModulation>(&injection.kind)) {
        if (t >= e->start && t < e->start + e->duration) in.efd_override = efd_modulation(t - e->start, *e);
    } else if (const auto* g = std::get_if<GateSquare>(&injection.kind)) {
        if (t >= g->start && t < g->start + g->duration) in.gate_override = gate_square(t - g->start, *g);
    }
    return in;
}

BusSolution BenchSimulator::solve_bus(const std::vector<UnitState>& states, double t,
                                      const FoInjection& injection) const {
    const std::size_t n = states.size();
    const Complex vinf = *bench_.infinite_bus;
    const Complex line_y = 1.0 / Complex(0.0, bench_.line_x);

    // Every injection is affine in the bus voltage, so three evaluations pin
    // the 2x2 real system exactly.
    auto mismatch = [&](Complex v) {
        Complex f = -(v - vinf) * line_y;
        for (std::size_t i = 0; i < n; ++i) {
            if (bench_.units[i].kind == UnitKind::Synchronous)
                f += models::genrou_current(states[i].machine, v, bench_.units[i].genrou);
            else
                f += Complex(states[i].source.x[0], states[i].source.x[1]);
        }
        return f;
    };
    const Complex f0 = mismatch({0.0, 0.0});
    const Complex fr = mismatch({1.0, 0.0}) - f0;
    const Complex fi = mismatch({0.0, 1.0}) - f0;
    Eigen::Matrix2d a;
    a << fr.real(), fi.real(), fr.imag(), fi.imag();
    const double det = a.determinant();
    if (!(std::abs(det) > 1e-14)) throw NumericalError("simulate", "network admittance matrix is singular");
    const Eigen::Vector2d sol = a.inverse() * Eigen::Vector2d(-f0.real(), -f0.imag());

    BusSolution bus;
    bus.voltage = {sol[0], sol[1]};
    bus.line_current = (bus.voltage - vinf) * line_y;
    bus.injections.resize(n);
    bus.outputs.resize(n);
    bus.efd.assign(n, 0.0);
    bus.pmech.assign(n, 0.0);
    Complex sum(0.0, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& u = bench_.units[i];
        if (u.kind == UnitKind::Synchronous) {
            ControllerInputs in = overrides(i, t, injection);
            in.v_terminal = bus.voltage;
            in.v_mag = std::abs(bus.voltage);
            in.omega = states[i].machine.omega;
            const double efd = has(u.exciter) ? models::controller_output(states[i].exciter, in)
                                              : in.efd_override.value_or(states[i].efd_fixed);
            const double pm = has(u.governor) ? models::controller_output(states[i].governor, in)
                                              : states[i].pm_fixed;
            const auto eval = models::genrou_derivatives(states[i].machine, efd, pm * u.genrou.to_system(),
                                                         bus.voltage, u.genrou);
            bus.outputs[i] = eval.outputs;
            bus.injections[i] = eval.outputs.current;
            bus.efd[i] = efd;
            bus.pmech[i] = pm * u.genrou.to_system();
        } else {
            bus.injections[i] = Complex(states[i].source.x[0], states[i].source.x[1]);
            bus.outputs[i].current = bus.injections[i];
            bus.outputs[i].pe = std::real(bus.voltage * std::conj(bus.injections[i]));
        }
        sum += bus.injections[i];
    }
    bus.kirchhoff_residual = std::abs(sum - bus.line_current);
    return bus;
}

Vec BenchSimulator::derivative(const Vec& x, const std::vector<UnitState>& like, double t,
                               const FoInjection& injection) const {
    const auto states = unpack(x, like);
    const BusSolution bus = solve_bus(states, t, injection);
    Vec dx(static_cast<Eigen::Index>(size_));
    for (std::size_t i = 0; i < states.size(); ++i) {
        const auto& u = bench_.units[i];
        const auto& lay = layout_[i];
        auto o = static_cast<Eigen::Index>(lay.offset);
        ControllerInputs in = overrides(i, t, injection);
        in.v_terminal = bus.voltage;
        in.v_mag = std::abs(bus.voltage);
        if (u.kind == UnitKind::Synchronous) {
            const auto eval = models::genrou_derivatives(states[i].machine, bus.efd[i], bus.pmech[i], bus.voltage,
                                                         u.genrou);
            dx.segment<models::kMachineStates>(o) = eval.derivative;
            o += models::kMachineStates;
            in.omega = states[i].machine.omega;
            in.pe = eval.outputs.pe / u.genrou.to_system();
            for (double v : models::controller_derivative(states[i].exciter, in)) dx[o++] = v;
            for (double v : models::controller_derivative(states[i].governor, in)) dx[o++] = v;
        } else {
            const auto d = models::controller_derivative(states[i].source, in);
            dx[o] = d[0];
            dx[o + 1] = d[1];
        }
    }
    return dx;
}

void BenchSimulator::enforce_overrides(std::vector<UnitState>& states, double t,
                                       const FoInjection& injection) const {
    for (std::size_t i = 0; i < states.size(); ++i) {
        if (bench_.units[i].kind != UnitKind::Synchronous) continue;
        models::controller_clamp(states[i].exciter);
        models::controller_clamp(states[i].governor);
        const ControllerInputs in = overrides(i, t, injection);
        if (in.efd_override && std::holds_alternative<models::SexsParams>(states[i].exciter.params))
            states[i].exciter.x[1] = models::controller_output(states[i].exciter, in);
        if (in.gate_override) {
            if (const auto* g = std::get_if<models::HygovParams>(&states[i].governor.params))
                states[i].governor.x[2] = std::clamp(*in.gate_override, g->gmin, g->gmax);
        }
    }
}

std::vector<UnitState> BenchSimulator::step(const std::vector<UnitState>& states, double t,
                                            const FoInjection& injection) const {
    const double h = bench_.ts;
    const Vec x = pack(states);
    const Vec k1 = derivative(x, states, t, injection);
    const Vec k2 = derivative(x + 0.5 * h * k1, states, t + 0.5 * h, injection);
    const Vec k3 = derivative(x + 0.5 * h * k2, states, t + 0.5 * h, injection);
    const Vec k4 = derivative(x + h * k3, states, t + h, injection);
    const Vec next = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!next.allFinite()) {
        std::ostringstream os;
        os << "non-finite state at t = " << t + h;
        throw DivergenceError("simulate", os.str());
    }
    auto out = unpack(next, states);
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (bench_.units[i].kind == UnitKind::Synchronous && std::abs(out[i].machine.omega) >= 0.2) {
            std::ostringstream os;
            os << "unit " << bench_.units[i].name << " speed deviation left (-0.2, 0.2) at t = " << t + h;
            throw DivergenceError("simulate", os.str());
        }
    }
    enforce_overrides(out, t + h, injection);
    return out;
}

// ---------------------------------------------------------------------------

ScenarioResult run_scenario(const TestBench& bench, const FoInjection& injection, double duration,
                            std::uint64_t seed) {
    injection.validate();
    if (!(duration > 0.0)) throw InvalidArgument("simulate", "duration must be positive");
    BenchSimulator sim(bench);
    if (injection.active()) sim.bench().unit_index(injection.unit);
    const auto& b = sim.bench();
    const auto steps = static_cast<std::size_t>(std::llround(duration / b.ts)) + 1;

    ScenarioResult out;
    out.seed = seed;
    GroundTruthTrace& truth = out.truth;
    truth.time.reserve(steps);
    truth.bus_voltage.reserve(steps);
    truth.line_current.reserve(steps);
    truth.units.resize(b.units.size());
    for (std::size_t i = 0; i < b.units.size(); ++i) {
        auto& ut = truth.units[i];
        ut.name = b.units[i].name;
        ut.kind = b.units[i].kind;
        ut.states.reserve(steps);
        ut.outputs.reserve(steps);
        ut.efd.reserve(steps);
        ut.pmech.reserve(steps);
        ut.current.reserve(steps);
    }

    std::vector<UnitState> states = sim.initial_state();
    for (std::size_t k = 0; k < steps; ++k) {
        const double t = static_cast<double>(k) * b.ts;
        const BusSolution bus = sim.solve_bus(states, t, injection);
        truth.time.push_back(t);
        truth.bus_voltage.push_back(bus.voltage);
        truth.line_current.push_back(bus.line_current);
        truth.max_kirchhoff_residual = std::max(truth.max_kirchhoff_residual, bus.kirchhoff_residual);
        for (std::size_t i = 0; i < b.units.size(); ++i) {
            auto& ut = truth.units[i];
            ut.states.push_back(states[i].machine);
            ut.outputs.push_back(bus.outputs[i]);
            ut.efd.push_back(bus.efd[i]);
            ut.pmech.push_back(bus.pmech[i]);
            ut.current.push_back(bus.injections[i]);
            if (std::holds_alternative<models::HygovParams>(states[i].governor.params))
                ut.gate.push_back(models::hygov_gate(states[i].governor));
        }
        if (k + 1 < steps) states = sim.step(states, t, injection);
    }

    pmu::PhasorTrace& m = out.measured;
    m.time = truth.time;
    m.voltage = truth.bus_voltage;
    m.branch_names = {b.measured_branch};
    m.branch_currents = {truth.line_current};
    m.valid.assign(steps, 1);
    m.reporting_rate = 1.0 / b.ts;
    m.power_base_mva = b.system_mva;
    m.nominal_frequency = b.f_base;
    m.frequency.resize(steps);
    double prev = std::arg(m.voltage[0]);
    m.frequency[0] = b.f_base;
    for (std::size_t k = 1; k < steps; ++k) {
        double ang = std::arg(m.voltage[k]);
        double diff = std::remainder(ang - prev, 2 * kPi);
        m.frequency[k] = b.f_base + diff / (2 * kPi * b.ts);
        prev = ang;
    }
    return out;
}

// ---------------------------------------------------------------------------

TestBench default_bench() {
    using namespace models;
    TestBench b;
    b.line_x = 0.05;
    b.bus_voltage = std::polar(1.02, 0.0);
    b.ts = 1e-3;

    MachineModel bio;
    bio.name = "B";
    bio.genrou = GenrouParams{1.8, 1.75, 0.3, 0.55, 0.25, 0.25, 0.15, 6.0, 0.6, 0.04, 0.06, 4.0, 0.0,
                              0.05, 0.3, 60.0, 60.0, 100.0};
    bio.exciter = SexsParams{};
    bio.governor = Tgov1Params{};
    bio.p_mw = 40.0;
    bio.q_mvar = 10.0;

    MachineModel gas;
    gas.name = "G";
    gas.genrou = GenrouParams{1.9, 1.8, 0.28, 0.5, 0.22, 0.22, 0.14, 7.0, 0.7, 0.035, 0.05, 5.0, 0.0,
                              0.08, 0.35, 120.0, 60.0, 100.0};
    gas.exciter = SexsParams{};
    gas.governor = GastParams{};
    gas.p_mw = 80.0;
    gas.q_mvar = 20.0;

    MachineModel hydro;
    hydro.name = "H";
    hydro.genrou = GenrouParams{2.33, 2.2, 0.3, 0.55, 0.25, 0.25, 0.15, 5.0, 0.5, 0.05, 0.05, 3.5, 0.0,
                                0.1, 0.4, 100.0, 60.0, 100.0};
    hydro.exciter = SexsParams{};
    HygovParams hy;
    hy.at = 1.106584;
    hy.tg = 0.05;
    hy.tw = 0.3;
    hydro.governor = hy;
    hydro.p_mw = 57.85;
    hydro.q_mvar = 17.38;

    MachineModel wind;
    wind.name = "W";
    wind.kind = UnitKind::Renewable;
    wind.p_mw = 30.0;
    wind.q_mvar = 2.0;

    MachineModel solar;
    solar.name = "S";
    solar.kind = UnitKind::Renewable;
    solar.p_mw = 20.0;
    solar.q_mvar = 0.0;

    b.units = {bio, gas, hydro, wind, solar};
    return b;
}

}  // namespace fosl::sim
