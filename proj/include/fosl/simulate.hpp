#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "fosl/models.hpp"
#include "fosl/phasor_trace.hpp"

namespace fosl::sim {

/// Units sharing one bus, tied to an infinite bus through a reactance.
struct TestBench {
    std::vector<models::MachineModel> units;
    double line_x = 0.05;                 // system p.u.
    Complex bus_voltage{1.0, 0.0};        // power-flow solution at the point of connection
    std::optional<Complex> infinite_bus;  // derived from the dispatch when unset
    double ts = 1e-3;
    double system_mva = 100.0;
    double f_base = 60.0;
    std::string bus_name = "6132";
    std::string measured_branch = "6132-6102";

    void validate() const;
    std::size_t unit_index(const std::string& name) const;
};

/// Field-voltage modulation:
///   E_fd = E_fd0 + a1 sin(2 pi f1 t) [1 + a2 sin(2 pi f2 t)]
/// with t measured from `start`.
struct EfdModulation {
    double efd0 = 2.105;
    double a1 = 0.5;
    double f1 = 0.75;
    double a2 = 0.1;
    double f2 = 0.025;
    double start = 2.0;
    double duration = 100.0;
};

/// 50 % duty square wave on the HYGOV gate with a piecewise-linear frequency
/// ramp f_start -> f_max at t_peak -> f_start at t_end (t from `start`).
struct GateSquare {
    double g0 = 0.60278;
    double ag = 0.1;
    double f_start = 0.05;
    double f_max = 0.2;
    double t_peak = 50.0;
    double t_end = 100.0;
    double start = 2.0;
    double duration = 100.0;
};

struct FoInjection {
    std::string unit = "H";
    std::variant<std::monostate, EfdModulation, GateSquare> kind;

    bool active() const { return !std::holds_alternative<std::monostate>(kind); }
    void validate() const;
};

double efd_modulation(double t, const EfdModulation& p);

/// Instantaneous gate frequency f_g(t) (Hz).
double gate_frequency(double t, const GateSquare& p);
/// Accumulated phase, the integral of f_g from 0 to t (cycles).
double gate_phase(double t, const GateSquare& p);
/// High while frac(phase) < 0.5.
double gate_square(double t, const GateSquare& p);

struct UnitState {
    models::MachineState machine;
    models::ControllerState exciter;
    models::ControllerState governor;
    /// Lagged current of a renewable unit (RENEW controller state).
    models::ControllerState source;
    double efd_fixed = 0.0;  // used when no exciter is attached
    double pm_fixed = 0.0;   // machine base, used when no governor is attached
};

struct BusSolution {
    Complex voltage;
    Complex line_current;  // bus -> infinite bus
    std::vector<Complex> injections;
    std::vector<models::MachineOutputs> outputs;
    std::vector<double> efd;
    std::vector<double> pmech;  // system base
    double kirchhoff_residual = 0.0;
};

/// Per-unit ground truth. Renewable units carry zero machine states.
struct UnitTrace {
    std::string name;
    models::UnitKind kind = models::UnitKind::Synchronous;
    std::vector<models::MachineState> states;
    std::vector<models::MachineOutputs> outputs;
    std::vector<double> efd;
    std::vector<double> pmech;  // system base
    std::vector<Complex> current;
    std::vector<double> gate;   // HYGOV only, empty otherwise
};

struct GroundTruthTrace {
    std::vector<double> time;
    std::vector<Complex> bus_voltage;
    std::vector<Complex> line_current;
    std::vector<UnitTrace> units;
    double max_kirchhoff_residual = 0.0;

    std::size_t size() const { return time.size(); }
    const UnitTrace& unit(const std::string& name) const;
};

/// Fixed-step simulation of the bench: classical 4-stage explicit integration
/// with the bus voltage solved algebraically at every stage.
class BenchSimulator {
public:
    explicit BenchSimulator(TestBench bench);

    const TestBench& bench() const { return bench_; }
    const std::vector<UnitState>& initial_state() const { return initial_; }
    const std::vector<models::InitialCondition>& initial_conditions() const { return init_; }

    BusSolution solve_bus(const std::vector<UnitState>& states, double t, const FoInjection& injection) const;

    /// Advances every unit by one time step from `t`.
    std::vector<UnitState> step(const std::vector<UnitState>& states, double t, const FoInjection& injection) const;

private:
    struct Layout {
        std::size_t offset;
        std::size_t exciter;
        std::size_t governor;
    };

    Vec pack(const std::vector<UnitState>& states) const;
    std::vector<UnitState> unpack(const Vec& x, const std::vector<UnitState>& like) const;
    Vec derivative(const Vec& x, const std::vector<UnitState>& like, double t, const FoInjection& injection) const;
    models::ControllerInputs overrides(std::size_t unit, double t, const FoInjection& injection) const;
    void enforce_overrides(std::vector<UnitState>& states, double t, const FoInjection& injection) const;

    TestBench bench_;
    std::vector<models::InitialCondition> init_;
    std::vector<UnitState> initial_;
    std::vector<Layout> layout_;
    std::size_t size_ = 0;
};

struct ScenarioResult {
    GroundTruthTrace truth;
    pmu::PhasorTrace measured;
    std::uint64_t seed = 0;
};

/// Runs `duration` seconds and records truth plus the noiseless PMU view
/// (bus voltage, measured branch current, frequency).
ScenarioResult run_scenario(const TestBench& bench, const FoInjection& injection, double duration,
                            std::uint64_t seed = 0);

/// Reference bench: units B, G, H, W, S with the dispatches of the study bus.
TestBench default_bench();

}  // namespace fosl::sim
