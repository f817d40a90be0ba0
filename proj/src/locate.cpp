#include "fosl/locate.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace fosl::pb {

void LocateConfig::validate() const {
    auto fail = [](const std::string& what) { throw InvalidArgument("locate", what); };
    if (!(window >= 0.0)) fail("window must be non-negative");
    if (decimation < 1) fail("decimation must be at least 1");
    if (!(noise_sigma >= 0.0)) fail("noise sigma must be non-negative");
    if (init_error < 0.0 || init_error > 0.03) fail("initial error must lie in [0, 0.03]");
    if (!(detrend >= 0.0) || !(input_smoothing >= 0.0)) fail("smoothing spans must be non-negative");
    if (!(baseline > 0.0) || !(baseline_start >= 0.0) || !(sustain > 0.0) || !(onset_window > 0.0) ||
        !(onset_factor > 1.0))
        fail("onset detector settings are invalid");
    if (!(pmech_gain > 0.0 && pmech_gain <= 1.0)) fail("P_mech gain must lie in (0, 1]");
    if (!(relaxed_ratio > 1.0)) fail("relaxed ratio must exceed 1");
    if (!(ukf_alpha > 0.0) || !(q_scale > 0.0) || !(r_scale > 0.0)) fail("filter scales must be positive");
}

energy::EnergyTrace estimate_energies(const est::DseResult& dse, const models::GenrouParams& p,
                                      std::size_t window_begin, double detrend) {
    energy::EnergyTrace e;
    e.time = dse.time;
    const std::size_t n = dse.time.size();
    if (n < 2) throw InvalidArgument("energy", "estimate is too short");
    const double dt = dse.time[1] - dse.time[0];
    e.w_field = energy::w_field(dse.efd, dse.xad_ifd, dt, energy::FieldParams::from(p));
    std::vector<double> delta(n);
    for (std::size_t k = 0; k < n; ++k) delta[k] = dse.states[k].delta;
    const auto span = static_cast<std::size_t>(std::lround(detrend / dt));
    e.w_mech = energy::w_mech(dse.pmech, delta, span);
    e.window_begin = std::min(window_begin, n > 10 ? n - 10 : 0);
    e.field_trend = energy::trend_slope(e.time, e.w_field, e.window_begin, n);
    e.mech_trend = energy::trend_slope(e.time, e.w_mech, e.window_begin, n);
    return e;
}

LocateReport locate(const std::vector<models::MachineModel>& units, const pmu::PhasorTrace& measured,
                    const LocateConfig& cfg) {
    cfg.validate();
    LocateReport rep;
    std::string stage = "playback";
    try {
        measured.validate();
        const auto pbr = event_playback(units, measured, cfg.system_mva, cfg.init_error);

        stage = "estimate";
        std::vector<std::size_t> hyp;
        std::vector<est::DseConfig> cfgs;
        const double filter_step = measured.step() * cfg.decimation;
        for (std::size_t u = 0; u < units.size(); ++u) {
            if (units[u].kind != models::UnitKind::Synchronous) continue;
            hyp.push_back(u);
            rep.hypotheses.push_back(units[u].name);
            auto c = est::default_dse_config(units[u], filter_step,
                                             cfg.noise_sigma / std::sqrt(static_cast<double>(cfg.decimation)));
            c.filter.input_gain[0] = cfg.pmech_gain;
            c.filter.alpha = cfg.ukf_alpha;
            c.filter.beta = cfg.ukf_beta;
            c.filter.kappa = cfg.ukf_kappa;
            c.filter.q *= cfg.q_scale;
            c.filter.r *= cfg.r_scale;
            if (cfg.filter) c.filter = *cfg.filter;
            c.decimation = cfg.decimation;
            c.init_error = cfg.init_error;
            c.input_smoothing = cfg.input_smoothing;
            cfgs.push_back(std::move(c));
        }
        if (hyp.size() < 2) throw InvalidArgument("locate", "at least two synchronous units are needed to rank");
        rep.estimates = dse_fanout(units, hyp, measured, cfg.branch, pbr, cfgs, cfg.parallel);

        stage = "ranking";
        const double h = filter_step;
        const auto window = static_cast<std::size_t>(std::lround(cfg.window / h));
        std::vector<Hypothesis> hs;
        for (auto& d : rep.estimates) {
            Hypothesis hy;
            hy.unit = d.unit;
            hy.channel = d.residuals.y_max_channel;
            const auto y = d.residuals.y_max();
            hy.energy = window == 0 ? cumulative_residual_energy(y) : residual_energy(y, window);
            hs.push_back(std::move(hy));
        }
        rep.ranking = identify_source(hs, cfg.warn_margin);
        for (const auto& w : rep.ranking.warnings) rep.warnings.push_back(w);

        stage = "energy";
        const auto& best = rep.estimates[rep.ranking.index];
        std::vector<double> total(best.time.size(), 0.0);
        for (const auto& d : rep.estimates) {
            const auto y = d.residuals.y_max();
            for (std::size_t k = 0; k < y.size(); ++k) total[k] += y[k] * y[k];
        }
        const auto span = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(cfg.onset_window / h)));
        std::vector<double> power(total.size());
        double acc = 0.0;
        for (std::size_t k = 0; k < total.size(); ++k) {
            acc += total[k];
            if (k >= span) acc -= total[k - span];
            power[k] = acc / static_cast<double>(std::min(k + 1, span));
        }
        const auto b0 = static_cast<std::size_t>(std::lround(cfg.baseline_start / h));
        const auto b1 = b0 + std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(cfg.baseline / h)));
        const auto sustain = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(cfg.sustain / h)));
        std::size_t onset = power.size();
        if (b1 < power.size()) onset = energy::detect_onset(power, b0, b1, sustain, cfg.onset_factor);
        rep.fo_detected = onset < power.size();
        if (!rep.fo_detected) {
            rep.warnings.push_back("no FO detected: the residual energy never rose above the pre-event baseline");
            onset = 0;
        }
        rep.onset_time = best.time[onset];
        const auto& unit = units[hyp[rep.ranking.index]];
        rep.energy = estimate_energies(best, unit.genrou, onset, cfg.detrend);
        rep.verdict = energy::loop_verdict(rep.energy, cfg.relaxed_ratio);
        if (rep.verdict.both_positive)
            rep.warnings.push_back("both loop energies grow; the verdict rule does not cover this case");
    } catch (const Error& err) {
        rep.failed_stage = stage;
        rep.error = err.what();
    }
    return rep;
}

}  // namespace fosl::pb
