#include "fosl/playback.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>
#include <sstream>

#include <omp.h>

namespace fosl::pb {

using models::ControllerInputs;
using models::UnitKind;

std::size_t PlaybackResult::index(const std::string& name) const {
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw InvalidArgument("playback", "no playback trace for unit '" + name + "'");
    return static_cast<std::size_t>(it - names.begin());
}

namespace {

struct UnitPlayer {
    const models::MachineModel& unit;
    models::ControllerState exciter, governor, source;
    std::size_t ne = 0, ng = 0;

    Vec derivative(const Vec& x, Complex v) const {
        Vec dx(x.size());
        ControllerInputs in;
        in.v_terminal = v;
        in.v_mag = std::abs(v);
        if (unit.kind == UnitKind::Renewable) {
            models::ControllerState c = source;
            c.x = {x[0], x[1]};
            const auto d = models::controller_derivative(c, in);
            dx << d[0], d[1];
            return dx;
        }
        const auto ms = models::MachineState::from_vector(x.head<models::kMachineStates>());
        models::ControllerState ex = exciter, gov = governor;
        unpack(x, ex, gov);
        in.omega = ms.omega;
        const double efd = models::controller_output(ex, in);
        const double pm = models::controller_output(gov, in);
        const auto eval =
            models::genrou_derivatives(ms, efd, pm * unit.genrou.to_system(), v, unit.genrou);
        in.pe = eval.outputs.pe / unit.genrou.to_system();
        dx.head<models::kMachineStates>() = eval.derivative;
        Eigen::Index o = models::kMachineStates;
        for (double d : models::controller_derivative(ex, in)) dx[o++] = d;
        for (double d : models::controller_derivative(gov, in)) dx[o++] = d;
        return dx;
    }

    void unpack(const Vec& x, models::ControllerState& ex, models::ControllerState& gov) const {
        Eigen::Index o = models::kMachineStates;
        for (auto& v : ex.x) v = x[o++];
        for (auto& v : gov.x) v = x[o++];
    }

    void clamp(Vec& x) const {
        if (unit.kind == UnitKind::Renewable) return;
        models::ControllerState ex = exciter, gov = governor;
        unpack(x, ex, gov);
        models::controller_clamp(ex);
        models::controller_clamp(gov);
        Eigen::Index o = models::kMachineStates;
        for (double v : ex.x) x[o++] = v;
        for (double v : gov.x) x[o++] = v;
    }
};

}  // namespace

PlaybackResult event_playback(const std::vector<models::MachineModel>& units, const pmu::PhasorTrace& measured,
                              double system_mva, double init_error) {
    measured.validate();
    if (measured.gap_count() > 0)
        throw InvalidArgument("playback", "measurement trace has gaps; playback needs a continuous voltage record");
    if (init_error < 0.0 || init_error > 0.03) throw InvalidArgument("playback", "initial error must lie in [0, 0.03]");
    const std::size_t n = measured.size();
    const double h = measured.step();
    if (n < 2 || !(h > 0.0)) throw InvalidArgument("playback", "measurement trace is too short");

    // Operating point taken as the mean voltage over the first half second.
    const std::size_t n0 = std::clamp<std::size_t>(static_cast<std::size_t>(0.5 / h), 1, n);
    const Complex v0 = std::accumulate(measured.voltage.begin(), measured.voltage.begin() + static_cast<long>(n0),
                                       Complex(0.0, 0.0)) /
                       static_cast<double>(n0);

    PlaybackResult out;
    out.time = measured.time;
    out.names.resize(units.size());
    out.currents.assign(units.size(), std::vector<Complex>(n));
    out.efd.resize(units.size());
    out.pmech.resize(units.size());

    std::vector<std::exception_ptr> errors(units.size());
#pragma omp parallel for schedule(dynamic)
    for (std::size_t u = 0; u < units.size(); ++u) {
        try {
            models::MachineModel unit = units[u];
            unit.genrou.system_mva = system_mva;
            out.names[u] = unit.name;
            UnitPlayer pl{unit, {}, {}, {}};
            Vec x;
            if (unit.kind == UnitKind::Renewable) {
                const Complex s(unit.p_mw / system_mva, unit.q_mvar / system_mva);
                const Complex i0 = std::conj(s / v0) * (1.0 + init_error);
                pl.source = models::ControllerState{unit.renewable, {i0.real(), i0.imag()}, s.real(), s.imag()};
                x.resize(2);
                x << i0.real(), i0.imag();
            } else {
                const auto ic =
                    models::init_from_powerflow(unit.p_mw, unit.q_mvar, v0, unit.genrou, unit.exciter, unit.governor);
                pl.exciter = ic.exciter;
                pl.governor = ic.governor;
                pl.ne = ic.exciter.x.size();
                pl.ng = ic.governor.x.size();
                x.resize(static_cast<Eigen::Index>(models::kMachineStates + pl.ne + pl.ng));
                x.head<models::kMachineStates>() = ic.machine.as_vector() * (1.0 + init_error);
                Eigen::Index o = models::kMachineStates;
                for (double v : ic.exciter.x) x[o++] = v;
                for (double v : ic.governor.x) x[o++] = v;
                out.efd[u].resize(n);
                out.pmech[u].resize(n);
            }

            auto emit = [&](std::size_t k) {
                const Complex v = measured.voltage[k];
                if (unit.kind == UnitKind::Renewable) {
                    out.currents[u][k] = Complex(x[0], x[1]);
                    return;
                }
                const auto ms = models::MachineState::from_vector(x.head<models::kMachineStates>());
                models::ControllerState ex = pl.exciter, gov = pl.governor;
                pl.unpack(x, ex, gov);
                ControllerInputs in;
                in.v_terminal = v;
                in.v_mag = std::abs(v);
                in.omega = ms.omega;
                out.currents[u][k] = models::genrou_current(ms, v, unit.genrou);
                out.efd[u][k] = models::controller_output(ex, in);
                out.pmech[u][k] = models::controller_output(gov, in) * unit.genrou.to_system();
            };

            emit(0);
            for (std::size_t k = 1; k < n; ++k) {
                const Complex va = measured.voltage[k - 1];
                const Complex vb = measured.voltage[k];
                const Complex vm = 0.5 * (va + vb);
                const Vec k1 = pl.derivative(x, va);
                const Vec k2 = pl.derivative(x + 0.5 * h * k1, vm);
                const Vec k3 = pl.derivative(x + 0.5 * h * k2, vm);
                const Vec k4 = pl.derivative(x + h * k3, vb);
                x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
                pl.clamp(x);
                if (!x.allFinite() ||
                    (unit.kind == UnitKind::Synchronous && std::abs(x[models::kOmega]) >= 0.2)) {
                    std::ostringstream os;
                    os << "unit " << unit.name << " diverged during playback at t = " << measured.time[k];
                    throw DivergenceError("playback", os.str());
                }
                emit(k);
            }
        } catch (...) {
            errors[u] = std::current_exception();
        }
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
    return out;
}

std::vector<Complex> current_injection(std::size_t j, const std::vector<Complex>& line_current,
                                       const PlaybackResult& playback) {
    if (j >= playback.currents.size()) throw InvalidArgument("playback", "unit index out of range");
    for (const auto& c : playback.currents)
        if (c.size() != line_current.size())
            throw InvalidArgument("playback", "playback and measured current traces are misaligned");
    std::vector<Complex> out = line_current;
    for (std::size_t i = 0; i < playback.currents.size(); ++i) {
        if (i == j) continue;
        for (std::size_t k = 0; k < out.size(); ++k) out[k] -= playback.currents[i][k];
    }
    return out;
}

std::vector<double> residual_energy(const std::vector<double>& y_max, std::size_t window) {
    if (window < 1) throw InvalidArgument("playback", "window must be at least one sample");
    if (window >= y_max.size()) throw InvalidArgument("playback", "window exceeds the residual record");
    std::vector<double> out(y_max.size());
    // Direct summation per output keeps the result free of running-sum drift.
    for (std::size_t k = 0; k < y_max.size(); ++k) {
        const std::size_t first = k >= window ? k - window : 0;
        double acc = 0.0;
        for (std::size_t i = first; i <= k; ++i) acc += y_max[i] * y_max[i];
        out[k] = acc;
    }
    return out;
}

std::vector<double> cumulative_residual_energy(const std::vector<double>& y_max) {
    std::vector<double> out(y_max.size());
    double acc = 0.0;
    for (std::size_t k = 0; k < y_max.size(); ++k) {
        acc += y_max[k] * y_max[k];
        out[k] = acc;
    }
    return out;
}

RankingReport identify_source(const std::vector<Hypothesis>& hypotheses, double warn_margin) {
    if (hypotheses.size() < 2) throw InvalidArgument("playback", "ranking needs at least two hypotheses");
    RankingReport r;
    r.hypotheses = hypotheses;
    std::size_t best = 0;
    for (std::size_t i = 1; i < hypotheses.size(); ++i)
        if (hypotheses[i].final_energy() < hypotheses[best].final_energy()) best = i;
    double second = std::numeric_limits<double>::infinity();
    bool tie = false;
    for (std::size_t i = 0; i < hypotheses.size(); ++i) {
        if (i == best) continue;
        const double e = hypotheses[i].final_energy();
        if (e == hypotheses[best].final_energy()) tie = true;
        second = std::min(second, e);
    }
    r.index = best;
    r.identified = hypotheses[best].unit;
    const double lowest = hypotheses[best].final_energy();
    r.margin = lowest > 0.0 ? second / lowest : (second > 0.0 ? std::numeric_limits<double>::infinity() : 1.0);
    if (tie) r.warnings.push_back("tied residual energies; picked the lowest unit index, ranking is inconclusive");
    else if (r.margin < warn_margin) {
        std::ostringstream os;
        os << "low ranking margin " << r.margin << " (below " << warn_margin << ")";
        r.warnings.push_back(os.str());
    }
    return r;
}

std::vector<est::DseResult> dse_fanout(const std::vector<models::MachineModel>& units,
                                       const std::vector<std::size_t>& hypotheses, const pmu::PhasorTrace& measured,
                                       const std::string& branch, const PlaybackResult& playback,
                                       const std::vector<est::DseConfig>& configs, bool parallel) {
    if (configs.size() != hypotheses.size()) throw InvalidArgument("playback", "one DSE configuration per hypothesis");
    const auto& it = measured.current(branch);
    std::vector<est::DseResult> out(hypotheses.size());
    std::vector<std::exception_ptr> errors(hypotheses.size());
    const auto n = static_cast<long>(hypotheses.size());
#pragma omp parallel for schedule(dynamic) if (parallel)
    for (long h = 0; h < n; ++h) {
        const auto hi = static_cast<std::size_t>(h);
        try {
            const std::size_t j = hypotheses[hi];
            models::MachineModel unit = units.at(j);
            unit.genrou.system_mva = measured.power_base_mva;
            const auto current = current_injection(playback.index(unit.name), it, playback);
            const std::size_t n0 =
                std::clamp<std::size_t>(static_cast<std::size_t>(0.5 / measured.step()), 1, current.size());
            Complex v0(0.0, 0.0), i0(0.0, 0.0);
            for (std::size_t k = 0; k < n0; ++k) {
                v0 += measured.voltage[k];
                i0 += current[k];
            }
            const auto init = est::initial_machine_state(unit, v0 / static_cast<double>(n0),
                                                         i0 / static_cast<double>(n0), configs[hi].init_error);
            out[hi] = est::dse_generator(unit, measured.time, measured.voltage, current, init, configs[hi]);
        } catch (...) {
            errors[hi] = std::current_exception();
        }
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
    return out;
}

}  // namespace fosl::pb
