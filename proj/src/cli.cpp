#include "fosl/cli.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace fosl::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

template <class T>
json optional_json(const std::optional<T>& v) {
    return v ? json(*v) : json(nullptr);
}

json trend_json(const energy::TrendFit& t) {
    return {{"slope", t.slope}, {"half_width", t.half_width}, {"samples", t.samples}};
}

json config_json(const pb::LocateConfig& c) {
    return {{"branch", c.branch},
            {"system_mva", c.system_mva},
            {"window_s", c.window},
            {"decimation", c.decimation},
            {"noise_sigma", c.noise_sigma},
            {"init_error", c.init_error},
            {"input_smoothing_s", c.input_smoothing},
            {"pmech_gain", c.pmech_gain},
            {"detrend_s", c.detrend},
            {"onset_window_s", c.onset_window},
            {"baseline_start_s", c.baseline_start},
            {"baseline_s", c.baseline},
            {"sustain_s", c.sustain},
            {"onset_factor", c.onset_factor},
            {"relaxed_ratio", c.relaxed_ratio},
            {"warn_margin", c.warn_margin},
            {"parallel", c.parallel},
            {"ukf", {{"alpha", c.ukf_alpha},
                     {"beta", c.ukf_beta},
                     {"kappa", c.ukf_kappa},
                     {"q_scale", c.q_scale},
                     {"r_scale", c.r_scale}}}};
}

std::string join(const fs::path& dir, const std::string& name) { return (dir / name).string(); }

void write_json(const std::string& path, const json& j) { pmu::write_text_atomic(path, j.dump(2) + "\n"); }

void write_truth(const sim::GroundTruthTrace& truth, const std::string& path) {
    std::vector<std::string> names{"time", "V_re", "V_im", "I_line_re", "I_line_im"};
    std::vector<std::vector<double>> cols(5);
    cols[0] = truth.time;
    for (std::size_t k = 0; k < truth.size(); ++k) {
        cols[1].push_back(truth.bus_voltage[k].real());
        cols[2].push_back(truth.bus_voltage[k].imag());
        cols[3].push_back(truth.line_current[k].real());
        cols[4].push_back(truth.line_current[k].imag());
    }
    for (const auto& u : truth.units) {
        auto add = [&](const std::string& what, std::vector<double> v) {
            names.push_back(what + ":" + u.name);
            cols.push_back(std::move(v));
        };
        std::vector<double> re, im;
        for (const auto& c : u.current) {
            re.push_back(c.real());
            im.push_back(c.imag());
        }
        add("I_re", re);
        add("I_im", im);
        if (u.kind != models::UnitKind::Synchronous) continue;
        std::vector<double> delta, omega, xad;
        for (const auto& s : u.states) {
            delta.push_back(s.delta);
            omega.push_back(s.omega);
        }
        for (const auto& o : u.outputs) xad.push_back(o.xad_ifd);
        add("delta", delta);
        add("omega", omega);
        add("efd", u.efd);
        add("pmech", u.pmech);
        add("xad_ifd", xad);
    }
    pmu::write_columns(path, names, cols);
}

void write_locate_traces(const pb::LocateReport& rep, const fs::path& dir) {
    if (!rep.ranking.hypotheses.empty() && !rep.estimates.empty()) {
        std::vector<std::string> names{"time"};
        std::vector<std::vector<double>> cols{rep.estimates.front().time};
        for (const auto& h : rep.ranking.hypotheses) {
            names.push_back("E:" + h.unit);
            cols.push_back(h.energy);
        }
        pmu::write_columns(join(dir, "residual_energy.csv"), names, cols);
    }
    if (!rep.estimates.empty()) {
        std::vector<std::string> names{"time"};
        std::vector<std::vector<double>> cols{rep.estimates.front().time};
        for (const auto& d : rep.estimates) {
            names.push_back("efd:" + d.unit);
            cols.push_back(d.efd);
            names.push_back("pmech:" + d.unit);
            cols.push_back(d.pmech);
            names.push_back("y_max:" + d.unit);
            cols.push_back(d.residuals.y_max());
        }
        pmu::write_columns(join(dir, "estimates.csv"), names, cols);
    }
    if (!rep.energy.time.empty())
        pmu::write_columns(join(dir, "energy.csv"), {"time", "w_field", "w_mech"},
                           {rep.energy.time, rep.energy.w_field, rep.energy.w_mech});
}

std::string fixed(double x, int digits) {
    std::ostringstream os;
    os << std::setprecision(digits) << x;
    return os.str();
}

}  // namespace

void Manifest::validate() const {
    auto need = [](const std::string& p, const std::string& what) {
        if (!p.empty() && !fs::exists(p)) throw InvalidArgument("cli", what + " '" + p + "' does not exist");
    };
    need(bench, "bench file");
    need(filter_config, "filter config");
    need(data, "dataset");
    if (!scenario.empty() && scenario.find(".ini") != std::string::npos) need(scenario, "scenario file");
    if (noise_tve && !(*noise_tve >= 0.0)) throw InvalidArgument("cli", "noise TVE must be non-negative");
    if (noise_fe && !(*noise_fe >= 0.0)) throw InvalidArgument("cli", "noise FE must be non-negative");
    if (window && !(*window >= 0.0)) throw InvalidArgument("cli", "window must be non-negative");
    if (duration && !(*duration > 0.0)) throw InvalidArgument("cli", "duration must be positive");
}

json Manifest::to_json() const {
    return {{"command", command},
            {"scenario", scenario},
            {"data", data},
            {"bench", bench},
            {"filter_config", filter_config},
            {"out", out},
            {"noise_tve", optional_json(noise_tve)},
            {"noise_fe", optional_json(noise_fe)},
            {"seed", optional_json(seed)},
            {"window", optional_json(window)},
            {"duration", optional_json(duration)}};
}

std::string Manifest::digest() const { return config::digest(to_json().dump()); }

sim::TestBench resolve_bench(const Manifest& m) {
    return m.bench.empty() ? sim::default_bench() : config::load_bench(m.bench);
}

ResolvedScenario resolve_scenario(const Manifest& m) {
    ResolvedScenario r;
    const std::string name = m.scenario.empty() ? "none" : m.scenario;
    if (name.find(".ini") != std::string::npos) {
        r.scenario = config::load_scenario(name);
    } else {
        r.scenario = config::named_scenario(name);
    }
    if (!m.bench.empty())
        r.bench = config::load_bench(m.bench);
    else if (!r.scenario.bench.empty())
        r.bench = config::load_bench(r.scenario.bench);
    else
        r.bench = sim::default_bench();
    if (m.noise_tve) r.scenario.noise.tve = *m.noise_tve;
    if (m.noise_fe) r.scenario.noise.fe = *m.noise_fe;
    if (m.seed) r.scenario.noise.seed = *m.seed;
    if (m.duration) r.scenario.duration = *m.duration;
    r.scenario.noise.validate();
    return r;
}

pb::LocateConfig resolve_locate_config(const Manifest& m, double noise_tve) {
    pb::LocateConfig cfg;
    if (!m.filter_config.empty()) config::load_locate_config(m.filter_config, cfg);
    if (m.window) cfg.window = *m.window;
    if (noise_tve > 0.0) cfg.noise_sigma = pmu::NoiseSpec{noise_tve, 0.0, 0}.sigma();
    cfg.validate();
    return cfg;
}

pmu::PhasorTrace load_measurements(const std::string& path) {
    const fs::path p(path);
    if (fs::is_directory(p)) {
        if (fs::exists(p / "measured.csv")) return load_measurements((p / "measured.csv").string());
        pmu::ContestFiles f{join(p, "voltage_magnitude.csv"), join(p, "voltage_angle.csv"),
                            join(p, "current_magnitude.csv"), join(p, "current_angle.csv")};
        return pmu::parse_contest_dataset(f);
    }
    pmu::PhasorTrace t = pmu::read_csv(path);
    fs::path side = p;
    side.replace_extension(".json");
    if (fs::exists(side)) pmu::read_sidecar(side.string(), t);
    return t;
}

void run_simulate(const Manifest& m) {
    m.validate();
    if (m.out.empty()) throw InvalidArgument("cli", "simulate needs --out");
    const auto r = resolve_scenario(m);
    fs::create_directories(m.out);
    const std::string dg = m.digest();
    auto res = sim::run_scenario(r.bench, r.scenario.injection, r.scenario.duration, r.scenario.noise.seed);
    pmu::PhasorTrace measured = res.measured;
    if (r.scenario.noise.tve > 0.0 || r.scenario.noise.fe > 0.0) measured = pmu::add_noise(measured, r.scenario.noise);

    const fs::path dir(m.out);
    pmu::write_csv(measured, join(dir, "measured.csv"));
    pmu::write_sidecar(measured, join(dir, "measured.json"), dg);
    write_truth(res.truth, join(dir, "truth.csv"));
    write_json(join(dir, "truth.json"), {{"manifest_digest", dg},
                                         {"samples", res.truth.size()},
                                         {"max_kirchhoff_residual", res.truth.max_kirchhoff_residual},
                                         {"units", {{"current", "p.u. system base"},
                                                    {"efd", "p.u. machine base"},
                                                    {"pmech", "p.u. system base"},
                                                    {"delta", "rad"},
                                                    {"omega", "p.u. deviation"}}}});
    json man = m.to_json();
    man["manifest_digest"] = dg;
    man["resolved"] = {{"injection_unit", r.scenario.injection.unit},
                       {"duration", r.scenario.duration},
                       {"noise", {{"tve", r.scenario.noise.tve},
                                  {"fe", r.scenario.noise.fe},
                                  {"seed", r.scenario.noise.seed}}}};
    write_json(join(dir, "manifest.json"), man);
}

int exit_code(const pb::LocateReport& rep) {
    if (!rep.complete()) return kError;
    return rep.conclusive() ? kConclusive : kInconclusive;
}

json report_to_json(const pb::LocateReport& rep, const pb::LocateConfig& cfg, const json& manifest,
                    const std::string& digest) {
    json j;
    j["manifest"] = manifest;
    j["manifest_digest"] = digest;
    j["status"] = !rep.complete() ? "error" : rep.conclusive() ? "conclusive" : "inconclusive";
    j["failed_stage"] = rep.failed_stage;
    j["error"] = rep.error;
    j["hypotheses"] = rep.hypotheses;
    json hs = json::array();
    for (const auto& h : rep.ranking.hypotheses)
        hs.push_back({{"unit", h.unit}, {"channel", h.channel}, {"final_energy", h.final_energy()}});
    j["ranking"] = {{"identified", rep.ranking.identified}, {"margin", rep.ranking.margin}, {"energies", hs}};
    j["fo_detected"] = rep.fo_detected;
    j["onset_time"] = rep.onset_time;
    const auto& e = rep.energy;
    j["energy"] = {{"field", trend_json(e.field_trend)},
                   {"mech", trend_json(e.mech_trend)},
                   {"field_final", e.w_field.empty() ? 0.0 : e.w_field.back()},
                   {"mech_final", e.w_mech.empty() ? 0.0 : e.w_mech.back()},
                   {"window_begin", e.time.empty() ? 0.0 : e.time[e.window_begin]}};
    const auto& v = rep.verdict;
    j["verdict"] = {{"loop", energy::to_string(v.loop)},
                    {"rule", energy::to_string(v.rule)},
                    {"field_slope", v.field_slope},
                    {"mech_slope", v.mech_slope},
                    {"magnitude_ratio", v.magnitude_ratio},
                    {"both_positive", v.both_positive}};
    j["warnings"] = rep.warnings;
    j["config"] = config_json(cfg);
    return j;
}

LocateOutcome run_locate(const Manifest& m) {
    m.validate();
    LocateOutcome out;
    const std::string dg = m.digest();
    sim::TestBench bench;
    pmu::PhasorTrace measured;
    double tve = m.noise_tve.value_or(0.0);
    if (!m.data.empty()) {
        bench = resolve_bench(m);
        measured = load_measurements(m.data);
    } else {
        const auto r = resolve_scenario(m);
        bench = r.bench;
        tve = r.scenario.noise.tve;
        measured = sim::run_scenario(r.bench, r.scenario.injection, r.scenario.duration, r.scenario.noise.seed).measured;
        if (r.scenario.noise.tve > 0.0 || r.scenario.noise.fe > 0.0)
            measured = pmu::add_noise(measured, r.scenario.noise);
    }
    auto cfg = resolve_locate_config(m, tve);
    if (m.filter_config.empty()) cfg.branch = bench.measured_branch;
    cfg.system_mva = bench.system_mva;
    out.report = pb::locate(bench.units, measured, cfg);
    out.exit_code = exit_code(out.report);
    out.json = report_to_json(out.report, cfg, m.to_json(), dg);
    if (!m.out.empty()) {
        fs::create_directories(m.out);
        const fs::path dir(m.out);
        write_locate_traces(out.report, dir);
        write_json(join(dir, "report.json"), out.json);
    }
    return out;
}

Summary summarize(const json& r, const std::string& source) {
    Summary s;
    std::ostringstream os;
    try {
        const std::string status = r.at("status").get<std::string>();
        os << "status: " << status << "\n";
        if (status == "error")
            os << "failed stage: " << r.at("failed_stage").get<std::string>() << " ("
               << r.at("error").get<std::string>() << ")\n";
        const auto& rk = r.at("ranking");
        if (!rk.at("identified").get<std::string>().empty()) {
            os << "identified unit: " << rk.at("identified").get<std::string>() << " (margin "
               << fixed(rk.at("margin").get<double>(), 4) << ")\n";
            for (const auto& h : rk.at("energies"))
                os << "  residual energy " << h.at("unit").get<std::string>() << ": "
                   << fixed(h.at("final_energy").get<double>(), 4) << "\n";
        }
        if (r.at("fo_detected").get<bool>())
            os << "onset: " << fixed(r.at("onset_time").get<double>(), 4) << " s\n";
        else
            os << "no FO detected\n";
        const auto& v = r.at("verdict");
        os << "control loop: " << v.at("loop").get<std::string>() << " (rule " << v.at("rule").get<std::string>()
           << ")\n";
        os << "  W_field slope: " << fixed(v.at("field_slope").get<double>(), 4)
           << " +- " << fixed(r.at("energy").at("field").at("half_width").get<double>(), 2) << "\n";
        os << "  W_mech slope:  " << fixed(v.at("mech_slope").get<double>(), 4)
           << " +- " << fixed(r.at("energy").at("mech").at("half_width").get<double>(), 2) << "\n";
        for (const auto& w : r.at("warnings")) os << "warning: " << w.get<std::string>() << "\n";
        s.exit_code = status == "conclusive" ? kConclusive : status == "inconclusive" ? kInconclusive : kError;
    } catch (const json::exception& e) {
        throw ParseError(source, 0, std::string("malformed report: ") + e.what());
    }
    s.text = os.str();
    return s;
}

Summary summarize_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(path, 0, "cannot open report");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ParseError(path, 0, std::string("malformed report: ") + e.what());
    }
    return summarize(j, path);
}

}  // namespace fosl::cli
