// Runs acceptance criteria 1-9 and prints one PASS/FAIL line per criterion.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "fosl/energy.hpp"
#include "fosl/estimate.hpp"
#include "fosl/locate.hpp"
#include "fosl/playback.hpp"
#include "fosl/pmuio.hpp"
#include "fosl/simulate.hpp"
#include "linear_testbed.hpp"
#include "properties.hpp"

using namespace fosl;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail << " [" << what << "]";
        }
    }
};

constexpr int kSeeds = 5;
constexpr double kDuration = 100.0;
constexpr double kRuntimeLimit = 600.0;

struct ScenarioRuns {
    std::vector<pb::LocateReport> reports;
    std::vector<double> runtimes;
};

ScenarioRuns run_noisy(const sim::FoInjection& inj) {
    const auto bench = sim::default_bench();
    ScenarioRuns out;
    for (int s = 1; s <= kSeeds; ++s) {
        const auto t0 = Clock::now();
        const auto run = sim::run_scenario(bench, inj, kDuration);
        const pmu::NoiseSpec noise{0.01, 0.0005, static_cast<std::uint64_t>(s)};
        pb::LocateConfig cfg;
        cfg.noise_sigma = noise.sigma();
        out.reports.push_back(pb::locate(bench.units, pmu::add_noise(run.measured, noise), cfg));
        out.runtimes.push_back(seconds_since(t0));
    }
    return out;
}

void describe(Outcome& o, const ScenarioRuns& runs) {
    for (std::size_t i = 0; i < runs.reports.size(); ++i) {
        const auto& r = runs.reports[i];
        o.detail << " seed" << i + 1 << "=" << (r.complete() ? r.ranking.identified : "error") << "/"
                 << energy::to_string(r.verdict.loop) << "/m" << r.ranking.margin;
    }
}

double mean_margin(const ScenarioRuns& runs) {
    double m = 0.0;
    for (const auto& r : runs.reports) m += r.ranking.margin;
    return m / static_cast<double>(runs.reports.size());
}

double max_runtime(const ScenarioRuns& runs) {
    double m = 0.0;
    for (double t : runs.runtimes) m = std::max(m, t);
    return m;
}

ScenarioRuns& a1_runs() {
    static ScenarioRuns runs = [] {
        sim::FoInjection inj;
        inj.kind = sim::EfdModulation{};
        return run_noisy(inj);
    }();
    return runs;
}

ScenarioRuns& a2_runs() {
    static ScenarioRuns runs = [] {
        sim::FoInjection inj;
        inj.kind = sim::GateSquare{};
        return run_noisy(inj);
    }();
    return runs;
}

Outcome criterion1() {
    Outcome o;
    const auto& runs = a1_runs();
    for (const auto& r : runs.reports) {
        o.require(r.complete(), "pipeline error: " + r.error);
        o.require(r.ranking.identified == "H", "identified " + r.ranking.identified);
        o.require(r.verdict.loop == energy::Loop::Excitation, "loop " + energy::to_string(r.verdict.loop));
        o.require(r.verdict.field_slope > 0.0 && r.verdict.mech_slope < 0.0, "slope signs");
    }
    o.require(max_runtime(runs) < kRuntimeLimit, "runtime");
    describe(o, runs);
    o.detail << " max_runtime=" << max_runtime(runs) << "s";
    return o;
}

Outcome criterion2() {
    Outcome o;
    const auto& runs = a2_runs();
    for (const auto& r : runs.reports) {
        o.require(r.complete(), "pipeline error: " + r.error);
        o.require(r.ranking.identified == "H", "identified " + r.ranking.identified);
        o.require(r.verdict.loop == energy::Loop::Mechanical, "loop " + energy::to_string(r.verdict.loop));
    }
    const double m1 = mean_margin(a1_runs()), m2 = mean_margin(runs);
    o.require(m2 > m1, "margin not above A1");
    o.require(max_runtime(runs) < kRuntimeLimit, "runtime");
    describe(o, runs);
    o.detail << " mean_margin A1=" << m1 << " A2=" << m2 << " max_runtime=" << max_runtime(runs) << "s";
    return o;
}

Outcome criterion3() {
    using fosl::testing::LinearTestbed;
    Outcome o;
    const auto tb = LinearTestbed::make();
    const auto model = tb.model();

    const auto run = fosl::testing::simulate_linear(tb, 300, 0.0, 7);
    est::FilterState s;
    s.x = Vec::Constant(3, 0.3);
    s.p = Mat::Identity(3, 3) * 0.5;
    s.d = Vec::Zero(1);
    fosl::testing::KalmanOracle kf{s.x, s.p, Vec()};
    double kf_err = 0.0;
    for (std::size_t k = 1; k < run.z.size(); ++k) {
        s = est::ukf_step(model, s, run.u[k - 1], run.u[k], run.z[k], tb.filter());
        kf.step(tb, run.u[k - 1], run.u[k], run.z[k]);
        kf_err = std::max({kf_err, (s.x - kf.x).cwiseAbs().maxCoeff(), (s.p - kf.p).cwiseAbs().maxCoeff()});
    }
    o.require(kf_err < 1e-8, "UKF vs Kalman");

    auto ui = tb.filter();
    ui.g = Mat::Zero(3, 1);
    const auto run2 = fosl::testing::simulate_linear(tb, 200, 0.4, 11);
    est::FilterState a;
    a.x = Vec::Zero(3);
    a.p = Mat::Identity(3, 3) * 0.1;
    a.d = Vec::Zero(1);
    est::FilterState b = a;
    double ui_err = 0.0;
    for (std::size_t k = 1; k < run2.z.size(); ++k) {
        a = est::ukfui_step(model, a, run2.u[k - 1], run2.u[k], run2.z[k], ui);
        b = est::ukf_step(model, b, run2.u[k - 1], run2.u[k], run2.z[k], tb.filter());
        ui_err = std::max({ui_err, (a.x - b.x).cwiseAbs().maxCoeff(), (a.p - b.p).cwiseAbs().maxCoeff()});
    }
    o.require(ui_err < 1e-9, "UKF-UI with G = 0 vs UKF");

    auto cfg = tb.filter();
    cfg.g = tb.g;
    const auto run3 = fosl::testing::simulate_linear(tb, 600, 0.5, 3, 0.1);
    est::FilterState c;
    c.x = Vec::Zero(3);
    c.p = Mat::Identity(3, 3) * 0.1;
    c.d = Vec::Zero(1);
    double sum = 0.0;
    int n = 0;
    for (std::size_t k = 1; k < run3.z.size(); ++k) {
        c = est::ukfui_step(model, c, run3.u[k - 1], run3.u[k], run3.z[k], cfg);
        if (k >= 300) {
            sum += c.d[0];
            ++n;
        }
    }
    const double d_rel = std::abs(sum / n - 0.5) / 0.5;
    o.require(d_rel < 0.02, "unknown input recovery");
    o.detail << " ukf_vs_kf=" << kf_err << " ui_vs_ukf=" << ui_err << " input_rel_err=" << d_rel;
    return o;
}

double efd_rmse(const sim::ScenarioResult& run, const std::vector<Complex>& v, const std::vector<Complex>& i,
                double sigma) {
    const auto bench = sim::default_bench();
    const auto& unit = bench.units[bench.unit_index("H")];
    const auto& truth = run.truth.unit("H");
    const int dec = 10;
    auto cfg = est::default_dse_config(unit, dec * bench.ts, sigma / std::sqrt(double(dec)));
    cfg.decimation = dec;
    const auto res = est::dse_generator(unit, run.truth.time, v, i, truth.states[0], cfg);
    double se = 0.0;
    int cnt = 0;
    for (std::size_t k = 0; k < res.time.size(); ++k) {
        if (res.time[k] < 5.0) continue;
        double block = 0.0;
        for (int j = 0; j < dec; ++j) block += truth.efd[k * dec + static_cast<std::size_t>(j)];
        se += std::pow(res.efd[k] - block / dec, 2);
        ++cnt;
    }
    return std::sqrt(se / cnt);
}

Outcome criterion4() {
    Outcome o;
    const auto bench = sim::default_bench();
    sim::FoInjection inj;
    const sim::EfdModulation mod;
    inj.kind = mod;
    const auto run = sim::run_scenario(bench, inj, kDuration);
    const auto& h = run.truth.unit("H");
    const double clean = efd_rmse(run, run.truth.bus_voltage, h.current, 0.0);
    o.require(clean < 0.02 * mod.a1, "noiseless RMSE");

    pmu::PhasorTrace view = run.measured;
    view.branch_names = {"H"};
    view.branch_currents = {h.current};
    double noisy = 0.0;
    const int seeds = 10;
    for (int s = 1; s <= seeds; ++s) {
        const pmu::NoiseSpec spec{0.01, 0.0005, static_cast<std::uint64_t>(s)};
        const auto n = pmu::add_noise(view, spec);
        noisy += efd_rmse(run, n.voltage, n.branch_currents[0], spec.sigma());
    }
    noisy /= seeds;
    o.require(noisy < 0.1 * mod.a1, "noisy RMSE");
    o.require(noisy > clean, "noise should degrade the estimate");
    o.detail << " rmse_noiseless=" << clean << " rmse_noisy_mean=" << noisy << " a1=" << mod.a1;
    return o;
}

Outcome criterion5() {
    Outcome o;
    auto error = [](std::size_t n) {
        const double w = 2.0 * kPi * 0.5, span = 3.3;
        std::vector<double> p(n), q(n, 0.0), theta(n), v(n, 1.0);
        for (std::size_t k = 0; k < n; ++k) {
            const double t = span * static_cast<double>(k) / static_cast<double>(n - 1);
            p[k] = std::sin(w * t);
            theta[k] = -std::cos(w * t) / w;
        }
        const double exact = span / 2.0 - std::sin(2.0 * w * span) / (4.0 * w);
        return std::abs(energy::branch_energy(p, q, theta, v).back() - exact);
    };
    const double branch_ratio = error(201) / error(401);
    o.require(branch_ratio > 3.5 && branch_ratio < 4.5, "branch energy order");

    auto mech_error = [](std::size_t n) {
        std::vector<double> pm(n), d(n);
        for (std::size_t k = 0; k < n; ++k) {
            const double s = 2.0 * kPi * static_cast<double>(k) / static_cast<double>(n - 1);
            pm[k] = std::cos(s);
            d[k] = std::sin(s) + 0.3 * std::sin(2.0 * s);
        }
        return std::abs(energy::w_mech(pm, d).back() - kPi);
    };
    const double mech_ratio = mech_error(201) / mech_error(401);
    o.require(mech_ratio > 3.5 && mech_ratio < 4.5, "mechanical energy order");

    const energy::FieldParams fp{5.0, 1.8, 0.3};
    const double dt = 1e-3, efd = 2.0, xad = 1.7;
    const std::vector<double> e(11, efd), x(11, xad);
    const double step = dt / fp.td0_p / (fp.xd - fp.xd_p) * (efd * xad - xad * xad);
    const auto wf = energy::w_field(e, x, dt, fp);
    double field_err = 0.0;
    for (std::size_t k = 0; k < wf.size(); ++k) field_err = std::max(field_err, std::abs(wf[k] - step * double(k)));
    o.require(field_err <= 1e-15, "field increment");
    o.detail << " branch_ratio=" << branch_ratio << " mech_ratio=" << mech_ratio << " field_err=" << field_err;
    return o;
}

Outcome criterion6() {
    Outcome o;
    const auto bench = sim::default_bench();
    const auto run = sim::run_scenario(bench, {}, kDuration);
    double worst = 0.0;
    for (const auto& u : run.truth.units) {
        if (u.kind != models::UnitKind::Synchronous) continue;
        const auto& p = bench.units[bench.unit_index(u.name)].genrou;
        energy::GeneratorTrace g;
        g.time = run.truth.time;
        g.states = u.states;
        g.efd = u.efd;
        for (std::size_t k = 0; k < u.pmech.size(); ++k) {
            g.pmech.push_back(u.pmech[k] / p.to_system());
            g.id.push_back(u.outputs[k].id);
            g.iq.push_back(u.outputs[k].iq);
        }
        const auto e = energy::generator_energy_components(g, p);
        for (std::size_t k = 0; k < e.w_e.size(); ++k) worst = std::max(worst, std::abs(e.w_e[k] + e.w_g[k]));
    }
    o.require(worst < 1e-4, "W_e + W_g drift");
    o.detail << " max_drift=" << worst;
    return o;
}

Outcome criterion7() {
    Outcome o;
    pmu::PhasorTrace t;
    const std::size_t n = 100000;
    for (std::size_t k = 0; k < n; ++k) {
        t.time.push_back(0.001 * static_cast<double>(k));
        t.voltage.emplace_back(1.02, 0.1);
        t.frequency.push_back(60.0);
        t.valid.push_back(1);
    }
    t.branch_names = {"6132-6102"};
    t.branch_currents = {std::vector<Complex>(n, Complex(2.0, -0.4))};
    for (double tve : {0.001, 0.01, 0.05}) {
        const auto noisy = pmu::add_noise(t, {tve, 0.0005, 42});
        const double v = pmu::three_sigma_tve(noisy.voltage, t.voltage);
        const double i = pmu::three_sigma_tve(noisy.branch_currents[0], t.branch_currents[0]);
        o.require(std::abs(v / tve - 1.0) <= 0.1 && std::abs(i / tve - 1.0) <= 0.1, "TVE calibration");
        o.detail << " tve" << tve << "=" << v << "/" << i;
    }
    std::vector<double> fo(1000);
    for (std::size_t k = 0; k < fo.size(); ++k) fo[k] = (k % 2 ? 1.0 : -1.0) * std::sqrt(10.0);
    const double snr = pmu::snr_fo(fo, 1.0);
    o.require(std::abs(snr - 20.0) < 1e-9, "SNR");
    o.detail << " snr=" << snr;
    return o;
}

Outcome criterion8() {
    Outcome o;
    pb::PlaybackResult p;
    p.time.resize(1);
    for (int i = 0; i < 5; ++i) {
        p.names.push_back("U" + std::to_string(i));
        p.currents.push_back({i == 0 ? Complex(9.0, 9.0) : Complex(1.0, 0.0)});
    }
    const auto example = pb::current_injection(0, {Complex(5.0, 0.0)}, p);
    o.require(example.front() == Complex(1.0, 0.0), "Kirchhoff example");

    const auto bench = sim::default_bench();
    const auto run = sim::run_scenario(bench, {}, 10.0);
    const auto pbr = pb::event_playback(bench.units, run.measured, bench.system_mva);
    const auto& it = run.measured.current(bench.measured_branch);
    double worst = 0.0, identity = 0.0;
    for (const auto& u : run.truth.units) {
        const auto ij = pb::current_injection(pbr.index(u.name), it, pbr);
        for (std::size_t k = 0; k < ij.size(); ++k) worst = std::max(worst, std::abs(ij[k] - u.current[k]));
    }
    for (std::size_t k = 0; k < it.size(); k += 10) {
        Complex sum(0.0, 0.0);
        for (const auto& c : pbr.currents) sum += c[k];
        for (std::size_t j = 0; j < pbr.currents.size(); ++j)
            identity = std::max(identity, std::abs(pb::current_injection(j, it, pbr)[k] - (it[k] - sum + pbr.currents[j][k])));
    }
    o.require(identity < 1e-12, "injection identity");
    o.require(worst < 1e-6, "no-FO round trip");
    o.detail << " identity_err=" << identity << " round_trip_err=" << worst;
    return o;
}

Outcome criterion9() {
    Outcome o;
    const auto t0 = Clock::now();
    const std::vector<std::pair<std::string, std::function<fosl::testing::PropertyResult()>>> suites{
        {"sigma_point_round_trip", [] { return fosl::testing::sigma_point_round_trip(); }},
        {"psd_repair", [] { return fosl::testing::psd_repair(); }},
        {"verdict_antisymmetry", [] { return fosl::testing::verdict_antisymmetry(); }},
        {"ranking_scale_invariance", [] { return fosl::testing::ranking_scale_invariance(); }},
        {"parser_totality", [] { return fosl::testing::parser_totality(); }},
    };
    for (const auto& [name, run] : suites) {
        const auto r = run();
        o.require(r.ok, name + ": " + r.detail);
        o.detail << " " << name << "=" << r.cases;
    }
    const double elapsed = seconds_since(t0);
    o.require(elapsed < 60.0, "runtime");
    o.detail << " elapsed=" << elapsed << "s";
    return o;
}

}  // namespace

int main() {
    const std::vector<std::function<Outcome()>> criteria{criterion1, criterion2, criterion3, criterion4, criterion5,
                                                         criterion6, criterion7, criterion8, criterion9};
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i]();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail << " [exception: " << e.what() << "]";
        }
        if (!o.pass) ++failed;
        std::printf("criterion %zu: %s%s\n", i + 1, o.pass ? "PASS" : "FAIL", o.detail.str().c_str());
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
