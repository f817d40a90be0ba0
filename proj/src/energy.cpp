#include "fosl/energy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <boost/math/distributions/students_t.hpp>

namespace fosl::energy {

namespace {

void require_same_length(std::size_t n, std::size_t m, const char* what) {
    if (n != m) throw InvalidArgument("energy", std::string(what) + " traces are misaligned");
}

}  // namespace

void EnergyTrace::validate() const {
    const std::size_t n = time.size();
    require_same_length(n, w_field.size(), "field energy");
    require_same_length(n, w_mech.size(), "mechanical energy");
    if (!w_e.empty()) require_same_length(n, w_e.size(), "W_e");
    if (!w_g.empty()) require_same_length(n, w_g.size(), "W_g");
    if (!w_branch.empty()) require_same_length(n, w_branch.size(), "branch energy");
}

std::string to_string(Loop loop) {
    switch (loop) {
        case Loop::Excitation: return "excitation";
        case Loop::Mechanical: return "mechanical";
        case Loop::Inconclusive: break;
    }
    return "inconclusive";
}

std::string to_string(VerdictRule rule) {
    switch (rule) {
        case VerdictRule::StrictSign: return "strict-sign";
        case VerdictRule::RelaxedMagnitude: return "relaxed-magnitude";
        case VerdictRule::None: break;
    }
    return "none";
}

std::vector<double> detrend(const std::vector<double>& x, std::size_t window) {
    if (window <= 1 || x.empty()) return x;
    const std::size_t n = x.size();
    const std::size_t half = window / 2;
    std::vector<double> prefix(n + 1, 0.0);
    for (std::size_t k = 0; k < n; ++k) prefix[k + 1] = prefix[k] + x[k];
    std::vector<double> out(n);
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t lo = k >= half ? k - half : 0;
        const std::size_t hi = std::min(n, k + half + 1);
        out[k] = x[k] - (prefix[hi] - prefix[lo]) / static_cast<double>(hi - lo);
    }
    return out;
}

std::vector<double> unwrap(const std::vector<double>& angle) {
    std::vector<double> out(angle.size());
    double offset = 0.0;
    for (std::size_t k = 0; k < angle.size(); ++k) {
        if (k > 0) {
            const double jump = angle[k] - angle[k - 1];
            if (jump > kPi) offset -= 2.0 * kPi;
            else if (jump < -kPi) offset += 2.0 * kPi;
        }
        out[k] = angle[k] + offset;
    }
    return out;
}

std::vector<double> branch_energy(const std::vector<double>& p, const std::vector<double>& q,
                                  const std::vector<double>& theta, const std::vector<double>& v,
                                  std::size_t detrend_window) {
    const std::size_t n = p.size();
    require_same_length(n, q.size(), "reactive power");
    require_same_length(n, theta.size(), "angle");
    require_same_length(n, v.size(), "voltage");
    for (double vk : v)
        if (!(vk > 0.0)) throw InvalidArgument("energy", "voltage magnitude must be positive");
    const auto ph = detrend(p, detrend_window);
    const auto qh = detrend(q, detrend_window);
    const auto th = detrend(theta, detrend_window);
    const auto vh = detrend(v, detrend_window);
    std::vector<double> w(n, 0.0);
    for (std::size_t k = 1; k < n; ++k) {
        const double dp = 0.5 * (ph[k] + ph[k - 1]) * (th[k] - th[k - 1]);
        const double dq = 0.5 * (qh[k] / v[k] + qh[k - 1] / v[k - 1]) * (vh[k] - vh[k - 1]);
        w[k] = w[k - 1] + dp + dq;
    }
    return w;
}

void FieldParams::validate() const {
    if (!(td0_p > 0.0)) throw InvalidArgument("energy", "T'd0 must be positive");
    if (!(xd > xd_p)) throw InvalidArgument("energy", "X_d must exceed X'_d");
}

double w_field_step(double prev, double efd, double xad_ifd, double dt, const FieldParams& p) {
    p.validate();
    if (!(dt > 0.0)) throw InvalidArgument("energy", "time step must be positive");
    return prev + dt / p.td0_p / (p.xd - p.xd_p) * (efd * xad_ifd - xad_ifd * xad_ifd);
}

std::vector<double> w_field(const std::vector<double>& efd, const std::vector<double>& xad_ifd, double dt,
                            const FieldParams& p) {
    require_same_length(efd.size(), xad_ifd.size(), "field");
    std::vector<double> w(efd.size(), 0.0);
    for (std::size_t k = 1; k < efd.size(); ++k) w[k] = w_field_step(w[k - 1], efd[k], xad_ifd[k], dt, p);
    return w;
}

double w_mech_step(double prev, double pm, double pm_prev, double delta, double delta_prev) {
    return prev + (pm + pm_prev) * (delta - delta_prev) * 0.5;
}

std::vector<double> w_mech(const std::vector<double>& pmech, const std::vector<double>& delta,
                           std::size_t detrend_window) {
    require_same_length(pmech.size(), delta.size(), "mechanical");
    const auto pm = detrend(pmech, detrend_window);
    const auto d = detrend(delta, detrend_window);
    std::vector<double> w(pm.size(), 0.0);
    for (std::size_t k = 1; k < pm.size(); ++k) w[k] = w_mech_step(w[k - 1], pm[k], pm[k - 1], d[k], d[k - 1]);
    return w;
}

GeneratorEnergy generator_energy_components(const GeneratorTrace& tr, const models::GenrouParams& p) {
    const std::size_t n = tr.time.size();
    require_same_length(n, tr.states.size(), "state");
    require_same_length(n, tr.efd.size(), "E_fd");
    require_same_length(n, tr.pmech.size(), "P_mech");
    require_same_length(n, tr.id.size(), "I_d");
    require_same_length(n, tr.iq.size(), "I_q");
    if (n < 3) throw InvalidArgument("energy", "generator trace needs at least three samples");
    p.validate();
    if (!(p.xq > p.xq_p)) throw InvalidArgument("energy", "X_q must exceed X'_q");
    FieldParams{p.td0_p, p.xd, p.xd_p}.validate();

    auto rate = [&](auto get) {
        std::vector<double> r(n);
        for (std::size_t k = 0; k < n; ++k) {
            const std::size_t a = k == 0 ? 0 : k - 1;
            const std::size_t b = k + 1 == n ? k : k + 1;
            r[k] = (get(tr.states[b]) - get(tr.states[a])) / (tr.time[b] - tr.time[a]);
        }
        return r;
    };
    const auto eq_dot = rate([](const models::MachineState& s) { return s.eq_p; });
    const auto ed_dot = rate([](const models::MachineState& s) { return s.ed_p; });

    const double xdd = p.xd - p.xd_p;
    const double xqd = p.xq - p.xq_p;
    auto quadratic = [&](std::size_t k) {
        const auto& s = tr.states[k];
        return 0.5 * (s.eq_p * s.eq_p / xdd + s.ed_p * s.ed_p / xqd + p.xd_p * tr.id[k] * tr.id[k] +
                      p.xq_p * tr.iq[k] * tr.iq[k]);
    };

    GeneratorEnergy out;
    out.w_e.resize(n);
    out.w_g.resize(n);
    double field = 0.0, rotor = 0.0, mech = 0.0;
    const double q0 = quadratic(0);
    const double w0 = tr.states[0].omega;
    const double kinetic0 = p.h * p.omega_base() * w0 * w0;
    for (std::size_t k = 0; k < n; ++k) {
        if (k > 0) {
            const auto& a = tr.states[k - 1];
            const auto& b = tr.states[k];
            const double fa = tr.efd[k - 1] - p.td0_p * eq_dot[k - 1];
            const double fb = tr.efd[k] - p.td0_p * eq_dot[k];
            field += 0.5 * (fa + fb) * (b.eq_p - a.eq_p) / xdd;
            rotor += p.tq0_p / xqd * 0.5 * (ed_dot[k - 1] + ed_dot[k]) * (b.ed_p - a.ed_p);
            mech += 0.5 * (tr.pmech[k - 1] + tr.pmech[k]) * (b.delta - a.delta);
        }
        out.w_e[k] = field - rotor - (quadratic(k) - q0);
        const double w = tr.states[k].omega;
        out.w_g[k] = mech - (p.h * p.omega_base() * w * w - kinetic0);
    }
    return out;
}

TrendFit trend_slope(const std::vector<double>& time, const std::vector<double>& series, std::size_t begin,
                     std::size_t end) {
    require_same_length(time.size(), series.size(), "trend");
    if (end > series.size() || begin > end) throw InvalidArgument("energy", "trend window is out of range");
    const std::size_t n = end - begin;
    if (n < 10) throw InvalidArgument("energy", "trend window needs at least 10 samples");
    double tm = 0.0, ym = 0.0;
    for (std::size_t k = begin; k < end; ++k) {
        tm += time[k];
        ym += series[k];
    }
    tm /= static_cast<double>(n);
    ym /= static_cast<double>(n);
    double stt = 0.0, sty = 0.0;
    for (std::size_t k = begin; k < end; ++k) {
        stt += (time[k] - tm) * (time[k] - tm);
        sty += (time[k] - tm) * (series[k] - ym);
    }
    if (!(stt > 0.0)) throw InvalidArgument("energy", "trend window has no time spread");
    TrendFit fit;
    fit.samples = n;
    fit.slope = sty / stt;
    const double intercept = ym - fit.slope * tm;
    double sse = 0.0;
    for (std::size_t k = begin; k < end; ++k) {
        const double r = series[k] - (intercept + fit.slope * time[k]);
        sse += r * r;
    }
    const double dof = static_cast<double>(n - 2);
    const double se = std::sqrt(sse / dof / stt);
    const boost::math::students_t dist(dof);
    fit.half_width = boost::math::quantile(boost::math::complement(dist, 0.025)) * se;
    return fit;
}

LoopVerdict loop_verdict(const TrendFit& field, const TrendFit& mech, double field_final, double mech_final,
                         double relaxed_ratio) {
    LoopVerdict v;
    v.field_slope = field.slope;
    v.mech_slope = mech.slope;
    const double af = std::abs(field_final), am = std::abs(mech_final);
    const double lo = std::min(af, am), hi = std::max(af, am);
    v.magnitude_ratio = lo > 0.0 ? hi / lo : (hi > 0.0 ? std::numeric_limits<double>::infinity() : 1.0);
    v.both_positive = field.positive() && mech.positive();

    const bool opposite = (field.slope > 0.0 && mech.slope < 0.0) || (field.slope < 0.0 && mech.slope > 0.0);
    if (opposite) {
        if (field.positive()) {
            v.loop = Loop::Excitation;
            v.rule = VerdictRule::StrictSign;
            return v;
        }
        if (mech.positive()) {
            v.loop = Loop::Mechanical;
            v.rule = VerdictRule::StrictSign;
            return v;
        }
    }
    if (v.magnitude_ratio >= relaxed_ratio && af != am) {
        v.loop = af > am ? Loop::Excitation : Loop::Mechanical;
        v.rule = VerdictRule::RelaxedMagnitude;
    }
    return v;
}

LoopVerdict loop_verdict(const EnergyTrace& trace, double relaxed_ratio) {
    trace.validate();
    if (trace.time.empty()) throw InvalidArgument("energy", "empty energy trace");
    return loop_verdict(trace.field_trend, trace.mech_trend, trace.w_field.back(), trace.w_mech.back(),
                        relaxed_ratio);
}

std::size_t detect_onset(const std::vector<double>& series, std::size_t baseline_begin, std::size_t baseline_end,
                         std::size_t sustain, double factor) {
    if (baseline_begin >= baseline_end || baseline_end > series.size())
        throw InvalidArgument("energy", "baseline window is out of range");
    if (sustain == 0) sustain = 1;
    double base = 0.0;
    for (std::size_t k = baseline_begin; k < baseline_end; ++k) base += series[k];
    base /= static_cast<double>(baseline_end - baseline_begin);
    const double threshold = factor * base;
    std::size_t run = 0;
    for (std::size_t k = baseline_end; k < series.size(); ++k) {
        run = series[k] > threshold ? run + 1 : 0;
        if (run >= sustain) return k + 1 - sustain;
    }
    return series.size();
}

}  // namespace fosl::energy
