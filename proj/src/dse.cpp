#include <algorithm>
#include <cmath>
#include <limits>

#include "fosl/estimate.hpp"

namespace fosl::est {

using models::MachineState;

int ResidualRecord::select_channel() {
    double best = -1.0;
    y_max_channel = 0;
    for (int c = 0; c < 2; ++c) {
        double mean = 0.0;
        for (const auto& y : innovation) mean += y[c];
        mean /= std::max<std::size_t>(innovation.size(), 1);
        double var = 0.0;
        for (const auto& y : innovation) var += (y[c] - mean) * (y[c] - mean);
        if (var > best) {
            best = var;
            y_max_channel = c;
        }
    }
    return y_max_channel;
}

std::vector<double> ResidualRecord::y_max() const {
    std::vector<double> out(innovation.size());
    for (std::size_t k = 0; k < innovation.size(); ++k) out[k] = innovation[k][y_max_channel];
    return out;
}

std::vector<double> hann_smooth(const std::vector<double>& x, int width) {
    if (width <= 1 || x.size() < 2) return x;
    if (width % 2 == 0) ++width;
    const int half = width / 2;
    std::vector<double> w(static_cast<std::size_t>(width));
    for (int i = 0; i < width; ++i) {
        const double s = std::sin(kPi * (i + 1) / (width + 1));
        w[static_cast<std::size_t>(i)] = s * s;
    }
    const auto n = static_cast<long>(x.size());
    std::vector<double> out(x.size());
    for (long k = 0; k < n; ++k) {
        double acc = 0.0, norm = 0.0;
        for (int i = -half; i <= half; ++i) {
            const long j = k + i;
            if (j < 0 || j >= n) continue;
            const double wi = w[static_cast<std::size_t>(i + half)];
            acc += wi * x[static_cast<std::size_t>(j)];
            norm += wi;
        }
        out[static_cast<std::size_t>(k)] = acc / norm;
    }
    return out;
}

MachineState initial_machine_state(const models::MachineModel& unit, Complex voltage, Complex current,
                                   double init_error) {
    if (init_error < 0.0 || init_error > 0.03)
        throw InvalidArgument("estimate", "initial-state error must lie in [0, 0.03]");
    const Complex s = voltage * std::conj(current) * unit.genrou.system_mva;
    const auto ic = models::init_from_powerflow(s.real(), s.imag(), voltage, unit.genrou, std::monostate{},
                                                std::monostate{});
    MachineState m = ic.machine;
    if (init_error > 0.0) {
        Vec v = m.as_vector();
        v *= 1.0 + init_error;
        m = MachineState::from_vector(v);
    }
    return m;
}

DseConfig default_dse_config(const models::MachineModel& unit, double filter_step, double noise_sigma) {
    DseConfig c;
    FilterConfig& f = c.filter;
    const double scale = filter_step / 1e-3;
    Vec q(6);
    q << 1e-6, 1e-8, 1e-6, 1e-6, 1e-6, 1e-6;
    f.q = (q * scale).asDiagonal();
    const double sr = std::max(noise_sigma, 1e-4);
    f.r = Mat::Identity(2, 2) * sr * sr;
    const double inf = std::numeric_limits<double>::infinity();
    f.lower = Vec::Constant(6, -inf);
    f.upper = Vec::Constant(6, inf);
    f.lower[models::kOmega] = -0.2;
    f.upper[models::kOmega] = 0.2;
    f.input_gain = Vec(2);
    f.input_gain << 0.1, 1.0;
    f.bias_at_previous_input = true;
    (void)unit;
    return c;
}

DseResult dse_generator(const models::MachineModel& unit, const std::vector<double>& time,
                        const std::vector<Complex>& voltage, const std::vector<Complex>& current,
                        const MachineState& init, const DseConfig& cfg) {
    if (unit.kind != models::UnitKind::Synchronous)
        throw InvalidArgument("estimate", "unit '" + unit.name + "' has no synchronous machine to estimate");
    if (time.size() != voltage.size() || time.size() != current.size())
        throw InvalidArgument("estimate", "voltage, current and time traces are misaligned");
    if (cfg.decimation < 1) throw InvalidArgument("estimate", "decimation must be at least 1");
    const auto m = static_cast<std::size_t>(cfg.decimation);
    if (time.size() < 2 * m) throw InvalidArgument("estimate", "trace is too short for the filter step");
    const models::GenrouParams& gp = unit.genrou;
    gp.validate();

    // Block averages centred on each block's mid time.
    const std::size_t blocks = time.size() / m;
    std::vector<double> t(blocks);
    std::vector<Complex> v(blocks), i(blocks);
    for (std::size_t b = 0; b < blocks; ++b) {
        double ts = 0.0;
        Complex vs(0.0, 0.0), is(0.0, 0.0);
        for (std::size_t k = b * m; k < (b + 1) * m; ++k) {
            ts += time[k];
            vs += voltage[k];
            is += current[k];
        }
        t[b] = ts / static_cast<double>(m);
        v[b] = vs / static_cast<double>(m);
        i[b] = is / static_cast<double>(m);
    }
    const double h = t[1] - t[0];
    if (!(h > 0.0)) throw InvalidArgument("estimate", "time grid is not increasing");
    for (std::size_t b = 1; b < blocks; ++b)
        if (std::abs((t[b] - t[b - 1]) - h) > 1e-6 * h)
            throw InvalidArgument("estimate", "time grid is not uniform");

    SystemModel model;
    model.fs = [&gp, h](const Vec& x, const Vec& u, const Vec& d) {
        const Complex i0(u[0], u[1]);
        const Complex i1(u[2], u[3]);
        auto f = [&](const Vec& s, double tau) {
            const Complex cur = i0 + (i1 - i0) * (tau / h);
            return Vec(models::genrou_derivatives_from_current(MachineState::from_vector(s), d[1], d[0], cur, gp)
                           .derivative);
        };
        const Vec k1 = f(x, 0.0);
        const Vec k2 = f(x + 0.5 * h * k1, 0.5 * h);
        const Vec k3 = f(x + 0.5 * h * k2, 0.5 * h);
        const Vec k4 = f(x + h * k3, h);
        return Vec(x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
    };
    model.hs = [&gp](const Vec& x, const Vec& u) {
        const Complex vt = models::genrou_terminal_voltage(MachineState::from_vector(x), Complex(u[0], u[1]), gp);
        Vec z(2);
        z << vt.real(), vt.imag();
        return z;
    };

    FilterConfig fc = cfg.filter;
    fc.validate(6, 2, 2);

    const auto eval0 = models::genrou_derivatives_from_current(init, 0.0, 0.0, i[0], gp);
    FilterState s;
    s.x = init.as_vector();
    s.p = Mat::Zero(6, 6);
    for (int k = 0; k < 6; ++k) {
        const double floor = k == models::kOmega ? 1e-4 : 1e-3;
        const double e = std::max(0.03 * std::abs(s.x[k]), floor);
        s.p(k, k) = e * e;
    }
    s.d = Vec(2);
    s.d << eval0.outputs.pe, eval0.outputs.xad_ifd;
    s.y = Vec::Zero(2);

    DseResult out;
    out.unit = unit.name;
    out.time = t;
    out.states.reserve(blocks);
    out.pmech_raw.reserve(blocks);
    out.efd_raw.reserve(blocks);
    out.residuals.time = t;
    out.residuals.innovation.reserve(blocks);

    auto record = [&](const FilterState& st, std::size_t b) {
        const MachineState ms = MachineState::from_vector(st.x);
        out.states.push_back(ms);
        out.pmech_raw.push_back(st.d[0]);
        out.efd_raw.push_back(st.d[1]);
        out.residuals.innovation.emplace_back(st.y[0], st.y[1]);
        out.xad_ifd.push_back(models::genrou_derivatives_from_current(ms, st.d[1], st.d[0], i[b], gp).outputs.xad_ifd);
    };
    record(s, 0);
    Vec u_prev(4), u(2), z(2);
    for (std::size_t b = 1; b < blocks; ++b) {
        u_prev << i[b - 1].real(), i[b - 1].imag(), i[b].real(), i[b].imag();
        u << i[b].real(), i[b].imag();
        z << v[b].real(), v[b].imag();
        s = ukfui_step(model, s, u_prev, u, z, fc);
        record(s, b);
    }
    out.residuals.select_channel();

    // The estimate from step k belongs to the interval [t_{k-1}, t_k]; the
    // value on the grid is the mean of the two intervals meeting there.
    auto on_grid = [](const std::vector<double>& raw) {
        std::vector<double> g(raw.size());
        for (std::size_t k = 0; k + 1 < raw.size(); ++k) g[k] = 0.5 * (raw[k] + raw[k + 1]);
        g.back() = raw.back();
        return g;
    };
    const int width = static_cast<int>(std::lround(cfg.input_smoothing / h));
    out.pmech = hann_smooth(on_grid(out.pmech_raw), width);
    out.efd = hann_smooth(on_grid(out.efd_raw), width);
    return out;
}

}  // namespace fosl::est
