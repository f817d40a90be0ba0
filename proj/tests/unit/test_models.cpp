#include <gtest/gtest.h>

#include "fosl/models.hpp"
#include "fosl/simulate.hpp"

using namespace fosl;
using namespace fosl::models;

namespace {

const MachineModel& unit(const sim::TestBench& b, const std::string& name) { return b.units[b.unit_index(name)]; }

}  // namespace

TEST(Genrou, HydroFieldVoltageAtDispatch) {
    const auto b = sim::default_bench();
    const auto& h = unit(b, "H");
    const auto ic = init_from_powerflow(h.p_mw, h.q_mvar, b.bus_voltage, h.genrou, h.exciter, h.governor);
    EXPECT_NEAR(ic.efd0, 2.105, 0.02 * 2.105);
    EXPECT_NEAR(ic.pm0, h.p_mw / b.system_mva, 1e-9);
}

TEST(Genrou, EquilibriumHasZeroDerivative) {
    const auto b = sim::default_bench();
    for (const auto& u : b.units) {
        if (u.kind != UnitKind::Synchronous) continue;
        const auto ic = init_from_powerflow(u.p_mw, u.q_mvar, b.bus_voltage, u.genrou, u.exciter, u.governor);
        const auto ev = genrou_derivatives(ic.machine, ic.efd0, ic.pm0, b.bus_voltage, u.genrou);
        EXPECT_LT(ev.derivative.cwiseAbs().maxCoeff(), 1e-10) << u.name;
        const Complex s = b.bus_voltage * std::conj(ev.outputs.current) * b.system_mva;
        EXPECT_NEAR(s.real(), u.p_mw, 1e-8) << u.name;
        EXPECT_NEAR(s.imag(), u.q_mvar, 1e-8) << u.name;
        EXPECT_NEAR(ev.outputs.xad_ifd, ic.efd0, 1e-9) << u.name;
    }
}

TEST(Genrou, StatorAlgebraRoundTrip) {
    const auto b = sim::default_bench();
    const auto& g = unit(b, "G").genrou;
    MachineState s;
    s.delta = 0.7;
    s.ed_p = 0.3;
    s.eq_p = 1.05;
    s.psi_kd = 0.95;
    s.psi_kq = -0.4;
    const Complex v(1.01, 0.05);
    const Complex i = genrou_current(s, v, g);
    EXPECT_LT(std::abs(genrou_terminal_voltage(s, i, g) - v), 1e-12);
}

TEST(Genrou, SaturationCurvePassesThroughBothPoints) {
    const auto c = SaturationCurve::fit(0.1, 0.4);
    EXPECT_NEAR(c(1.0), 0.1, 1e-12);
    EXPECT_NEAR(c(1.2), 0.4, 1e-12);
    EXPECT_EQ(SaturationCurve::fit(0.0, 0.0)(1.5), 0.0);
}

TEST(Genrou, RejectsInconsistentReactances) {
    GenrouParams p;
    p.xd_p = 2.0;
    EXPECT_THROW(p.validate(), InvalidArgument);
}

TEST(Controllers, InitializedStateIsStationary) {
    const auto b = sim::default_bench();
    for (const auto& u : b.units) {
        if (u.kind != UnitKind::Synchronous) continue;
        const auto ic = init_from_powerflow(u.p_mw, u.q_mvar, b.bus_voltage, u.genrou, u.exciter, u.governor);
        ControllerInputs in;
        in.v_mag = std::abs(b.bus_voltage);
        for (const auto* c : {&ic.exciter, &ic.governor}) {
            for (double d : controller_derivative(*c, in)) EXPECT_NEAR(d, 0.0, 1e-9) << u.name;
        }
        EXPECT_NEAR(controller_output(ic.exciter, in), ic.efd0, 1e-9) << u.name;
        EXPECT_NEAR(controller_output(ic.governor, in), ic.pm0 / u.genrou.to_system(), 1e-9) << u.name;
    }
}

TEST(Controllers, ExciterLimitsHold) {
    SexsParams p;
    ControllerInputs in;
    in.v_mag = 1.0;
    auto c = init_controller(p, 2.0, in);
    in.v_mag = 0.5;  // large error drives the output to its ceiling
    for (int k = 0; k < 5000; ++k) c = controller_step(c, in, 1e-3).state;
    EXPECT_LE(controller_output(c, in), p.emax + 1e-12);
    EXPECT_GE(controller_output(c, in), p.emax - 1e-6);
}

TEST(Controllers, HygovGateOverrideIsClamped) {
    HygovParams p;
    ControllerInputs in;
    auto c = init_controller(p, 0.5, in);
    in.gate_override = 5.0;
    const double pm_high = controller_output(c, in);
    in.gate_override = p.gmax;
    EXPECT_DOUBLE_EQ(pm_high, controller_output(c, in));
}

TEST(Controllers, InfeasibleDispatchIsRejected) {
    const auto b = sim::default_bench();
    const auto& h = unit(b, "H");
    EXPECT_THROW(init_from_powerflow(h.p_mw, 400.0, b.bus_voltage, h.genrou, h.exciter, h.governor), InvalidArgument);
}
