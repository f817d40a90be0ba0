#include "fosl/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <openssl/evp.h>

namespace fosl::config {

namespace pt = boost::property_tree;
using models::ControllerParams;

namespace {

// Line of every "section.key" so semantic errors can point into the file.
std::map<std::string, long> key_lines(const std::string& path) {
    std::ifstream in(path);
    std::map<std::string, long> lines;
    std::string line, section;
    long n = 0;
    while (std::getline(in, line)) {
        ++n;
        boost::trim(line);
        if (line.empty() || line[0] == ';' || line[0] == '#') continue;
        if (line.front() == '[' && line.back() == ']') {
            section = boost::trim_copy(line.substr(1, line.size() - 2));
            lines[section] = n;
            continue;
        }
        const auto eq = line.find('=');
        if (eq != std::string::npos) lines[section + "." + boost::trim_copy(line.substr(0, eq))] = n;
    }
    return lines;
}

class Document {
public:
    explicit Document(const std::string& path) : path_(path) {
        std::ifstream in(path);
        if (!in) throw ParseError(path, 0, "cannot open file");
        try {
            pt::read_ini(in, tree_);
        } catch (const pt::ini_parser_error& e) {
            throw ParseError(path, static_cast<long>(e.line()), e.message());
        }
        lines_ = key_lines(path);
    }

    bool has_section(const std::string& s) const { return tree_.get_child_optional(pt::ptree::path_type(s, '\0')).has_value(); }

    const pt::ptree& section(const std::string& s) const {
        auto c = tree_.get_child_optional(pt::ptree::path_type(s, '\0'));
        if (!c) throw ParseError(path_, 0, "missing section [" + s + "]");
        return *c;
    }

    std::vector<std::string> sections() const {
        std::vector<std::string> out;
        for (const auto& kv : tree_) out.push_back(kv.first);
        return out;
    }

    [[noreturn]] void fail(const std::string& sec, const std::string& key, const std::string& what) const {
        auto it = lines_.find(key.empty() ? sec : sec + "." + key);
        throw ParseError(path_, it == lines_.end() ? 0 : it->second, what);
    }

    std::string text(const std::string& sec, const std::string& key) const {
        auto v = section(sec).get_optional<std::string>(pt::ptree::path_type(key, '\0'));
        if (!v) fail(sec, "", "[" + sec + "] lacks required key '" + key + "'");
        return boost::trim_copy(*v);
    }

    std::string text_or(const std::string& sec, const std::string& key, const std::string& fallback) const {
        auto v = section(sec).get_optional<std::string>(pt::ptree::path_type(key, '\0'));
        return v ? boost::trim_copy(*v) : fallback;
    }

    double number(const std::string& sec, const std::string& key, const std::string& raw) const {
        try {
            std::size_t used = 0;
            const double x = std::stod(raw, &used);
            if (used != raw.size() || !std::isfinite(x)) throw std::invalid_argument(raw);
            return x;
        } catch (const std::exception&) {
            fail(sec, key, "'" + key + "' is not a finite number: '" + raw + "'");
        }
    }

    // Reads every key of `sec` into the matching slot; unknown keys fail.
    void bind(const std::string& sec, const std::map<std::string, double*>& slots,
              const std::set<std::string>& other = {}) const {
        for (const auto& kv : section(sec)) {
            const std::string& key = kv.first;
            if (other.count(key)) continue;
            auto it = slots.find(key);
            if (it == slots.end()) fail(sec, key, "unknown key '" + key + "' in [" + sec + "]");
            *it->second = number(sec, key, boost::trim_copy(kv.second.data()));
        }
    }

    const std::string& path() const { return path_; }

private:
    std::string path_;
    pt::ptree tree_;
    std::map<std::string, long> lines_;
};

std::map<std::string, double*> genrou_slots(models::GenrouParams& g) {
    return {{"Xd", &g.xd},         {"Xq", &g.xq},         {"Xd_p", &g.xd_p},       {"Xq_p", &g.xq_p},
            {"Xd_pp", &g.xd_pp},   {"Xq_pp", &g.xq_pp},   {"Xl", &g.xl},           {"Td0_p", &g.td0_p},
            {"Tq0_p", &g.tq0_p},   {"Td0_pp", &g.td0_pp}, {"Tq0_pp", &g.tq0_pp},   {"H", &g.h},
            {"D", &g.d},           {"S10", &g.s10},       {"S12", &g.s12},         {"mva_base", &g.mva_base},
            {"f_base", &g.f_base}};
}

std::map<std::string, double*> sexs_slots(models::SexsParams& p) {
    return {{"K", &p.k}, {"TA_TB", &p.ta_tb}, {"TB", &p.tb}, {"TE", &p.te}, {"Emin", &p.emin}, {"Emax", &p.emax}};
}

std::map<std::string, double*> tgov1_slots(models::Tgov1Params& p) {
    return {{"R", &p.r},   {"T1", &p.t1}, {"Vmax", &p.vmax}, {"Vmin", &p.vmin},
            {"T2", &p.t2}, {"T3", &p.t3}, {"Dt", &p.dt}};
}

std::map<std::string, double*> gast_slots(models::GastParams& p) {
    return {{"R", &p.r},   {"T1", &p.t1}, {"T2", &p.t2},     {"T3", &p.t3},     {"AT", &p.at},
            {"KT", &p.kt}, {"Vmax", &p.vmax}, {"Vmin", &p.vmin}, {"Dturb", &p.dturb}};
}

std::map<std::string, double*> hygov_slots(models::HygovParams& p) {
    return {{"R", &p.r},       {"r", &p.r_temp}, {"Tr", &p.tr},     {"Tf", &p.tf},
            {"Tg", &p.tg},     {"VELM", &p.velm}, {"Gmax", &p.gmax}, {"Gmin", &p.gmin},
            {"Tw", &p.tw},     {"At", &p.at},     {"Dturb", &p.dturb}, {"qNL", &p.qnl}};
}

ControllerParams load_controller(const Document& doc, const std::string& sec) {
    const std::string model = boost::to_upper_copy(doc.text(sec, "model"));
    const std::set<std::string> skip{"model"};
    if (model == "SEXS") {
        models::SexsParams p;
        doc.bind(sec, sexs_slots(p), skip);
        return p;
    }
    if (model == "TGOV1") {
        models::Tgov1Params p;
        doc.bind(sec, tgov1_slots(p), skip);
        return p;
    }
    if (model == "GAST") {
        models::GastParams p;
        doc.bind(sec, gast_slots(p), skip);
        return p;
    }
    if (model == "HYGOV") {
        models::HygovParams p;
        doc.bind(sec, hygov_slots(p), skip);
        return p;
    }
    doc.fail(sec, "model", "unknown controller model '" + model + "' in [" + sec + "]");
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> parts;
    boost::split(parts, s, boost::is_any_of(", \t"), boost::token_compress_on);
    parts.erase(std::remove_if(parts.begin(), parts.end(), [](const std::string& x) { return x.empty(); }),
                parts.end());
    return parts;
}

std::string fmt(double x) { return pmu::format_double(x); }

void write_slots(std::ostream& os, const std::vector<std::pair<std::string, double>>& kv) {
    for (const auto& [k, v] : kv) os << k << " = " << fmt(v) << "\n";
}

void write_controller(std::ostream& os, const std::string& sec, const ControllerParams& c) {
    os << "\n[" << sec << "]\nmodel = " << models::controller_name(c) << "\n";
    std::visit(
        [&](const auto& p) {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, models::SexsParams>)
                write_slots(os, {{"K", p.k}, {"TA_TB", p.ta_tb}, {"TB", p.tb}, {"TE", p.te}, {"Emin", p.emin},
                                 {"Emax", p.emax}});
            else if constexpr (std::is_same_v<T, models::Tgov1Params>)
                write_slots(os, {{"R", p.r}, {"T1", p.t1}, {"Vmax", p.vmax}, {"Vmin", p.vmin}, {"T2", p.t2},
                                 {"T3", p.t3}, {"Dt", p.dt}});
            else if constexpr (std::is_same_v<T, models::GastParams>)
                write_slots(os, {{"R", p.r}, {"T1", p.t1}, {"T2", p.t2}, {"T3", p.t3}, {"AT", p.at},
                                 {"KT", p.kt}, {"Vmax", p.vmax}, {"Vmin", p.vmin}, {"Dturb", p.dturb}});
            else if constexpr (std::is_same_v<T, models::HygovParams>)
                write_slots(os, {{"R", p.r}, {"r", p.r_temp}, {"Tr", p.tr}, {"Tf", p.tf}, {"Tg", p.tg},
                                 {"VELM", p.velm}, {"Gmax", p.gmax}, {"Gmin", p.gmin}, {"Tw", p.tw},
                                 {"At", p.at}, {"Dturb", p.dturb}, {"qNL", p.qnl}});
        },
        c);
}

}  // namespace

sim::TestBench load_bench(const std::string& path) {
    const Document doc(path);
    sim::TestBench b;
    double v_mag = std::abs(b.bus_voltage), v_ang = 0.0;
    std::string units;
    const std::set<std::string> text_keys{"units", "bus", "branch"};
    doc.bind("bench",
             {{"line_x", &b.line_x},
              {"system_mva", &b.system_mva},
              {"f_base", &b.f_base},
              {"ts", &b.ts},
              {"v_mag", &v_mag},
              {"v_ang", &v_ang}},
             text_keys);
    b.bus_voltage = std::polar(v_mag, v_ang * kPi / 180.0);
    b.bus_name = doc.text_or("bench", "bus", b.bus_name);
    b.measured_branch = doc.text_or("bench", "branch", b.measured_branch);

    for (const auto& name : split_list(doc.text("bench", "units"))) {
        models::MachineModel u;
        u.name = name;
        const std::string model = boost::to_upper_copy(doc.text(name, "model"));
        if (model == "GENROU") {
            u.kind = models::UnitKind::Synchronous;
            auto slots = genrou_slots(u.genrou);
            slots["P"] = &u.p_mw;
            slots["Q"] = &u.q_mvar;
            doc.bind(name, slots, {"model", "exciter", "governor"});
            u.genrou.system_mva = b.system_mva;
            const auto exc = doc.text_or(name, "exciter", "");
            const auto gov = doc.text_or(name, "governor", "");
            if (!exc.empty()) u.exciter = load_controller(doc, exc);
            if (!gov.empty()) u.governor = load_controller(doc, gov);
            if (!exc.empty() && !std::holds_alternative<models::SexsParams>(u.exciter))
                doc.fail(name, "exciter", "exciter of '" + name + "' must be SEXS");
            if (!gov.empty() && std::holds_alternative<models::SexsParams>(u.governor))
                doc.fail(name, "governor", "governor of '" + name + "' cannot be an exciter model");
        } else if (model == "RENEW") {
            u.kind = models::UnitKind::Renewable;
            doc.bind(name, {{"P", &u.p_mw}, {"Q", &u.q_mvar}, {"T_lag", &u.renewable.t_lag}}, {"model"});
        } else {
            doc.fail(name, "model", "unknown unit model '" + model + "' in [" + name + "]");
        }
        b.units.push_back(std::move(u));
    }
    try {
        b.validate();
    } catch (const Error& e) {
        throw ParseError(path, 0, e.what());
    }
    return b;
}

void save_bench(const sim::TestBench& bench, const std::string& path) {
    std::ostringstream os;
    os << "[bench]\n";
    os << "units = ";
    for (std::size_t i = 0; i < bench.units.size(); ++i) os << (i ? ", " : "") << bench.units[i].name;
    os << "\nbus = " << bench.bus_name << "\nbranch = " << bench.measured_branch << "\n";
    write_slots(os, {{"line_x", bench.line_x},
                     {"system_mva", bench.system_mva},
                     {"f_base", bench.f_base},
                     {"ts", bench.ts},
                     {"v_mag", std::abs(bench.bus_voltage)},
                     {"v_ang", std::arg(bench.bus_voltage) * 180.0 / kPi}});
    for (const auto& u : bench.units) {
        os << "\n[" << u.name << "]\n";
        if (u.kind == models::UnitKind::Renewable) {
            os << "model = RENEW\n";
            write_slots(os, {{"P", u.p_mw}, {"Q", u.q_mvar}, {"T_lag", u.renewable.t_lag}});
            continue;
        }
        os << "model = GENROU\n";
        const bool exc = !std::holds_alternative<std::monostate>(u.exciter);
        const bool gov = !std::holds_alternative<std::monostate>(u.governor);
        if (exc) os << "exciter = " << u.name << "_exciter\n";
        if (gov) os << "governor = " << u.name << "_governor\n";
        const auto& g = u.genrou;
        write_slots(os, {{"P", u.p_mw},       {"Q", u.q_mvar},       {"mva_base", g.mva_base}, {"f_base", g.f_base},
                         {"Xd", g.xd},        {"Xq", g.xq},          {"Xd_p", g.xd_p},         {"Xq_p", g.xq_p},
                         {"Xd_pp", g.xd_pp},  {"Xq_pp", g.xq_pp},    {"Xl", g.xl},             {"Td0_p", g.td0_p},
                         {"Tq0_p", g.tq0_p},  {"Td0_pp", g.td0_pp},  {"Tq0_pp", g.tq0_pp},     {"H", g.h},
                         {"D", g.d},          {"S10", g.s10},        {"S12", g.s12}});
        if (exc) write_controller(os, u.name + "_exciter", u.exciter);
        if (gov) write_controller(os, u.name + "_governor", u.governor);
    }
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw Error("config", "cannot write '" + tmp + "'");
        out << os.str();
        if (!out) throw Error("config", "write to '" + tmp + "' failed");
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) throw Error("config", "cannot move '" + tmp + "' into place");
}

Scenario named_scenario(const std::string& name) {
    Scenario s;
    const std::string n = boost::to_lower_copy(name);
    if (n == "a1")
        s.injection.kind = sim::EfdModulation{};
    else if (n == "a2")
        s.injection.kind = sim::GateSquare{};
    else if (n != "none")
        throw InvalidArgument("config", "unknown scenario '" + name + "' (expected none, a1 or a2)");
    return s;
}

Scenario load_scenario(const std::string& path) {
    const Document doc(path);
    Scenario s = named_scenario(doc.text_or("scenario", "injection", "none"));
    s.bench = doc.text_or("scenario", "bench", "");
    if (!s.bench.empty() && s.bench.front() != '/') {
        const auto slash = path.find_last_of('/');
        if (slash != std::string::npos) s.bench = path.substr(0, slash + 1) + s.bench;
    }
    double seed = 0.0;
    s.injection.unit = doc.text_or("scenario", "unit", s.injection.unit);
    doc.bind("scenario",
             {{"duration", &s.duration}, {"seed", &seed}, {"noise_tve", &s.noise.tve}, {"noise_fe", &s.noise.fe}},
             {"injection", "bench", "unit"});
    if (seed < 0.0 || seed != std::floor(seed)) doc.fail("scenario", "seed", "seed must be a non-negative integer");
    s.noise.seed = static_cast<std::uint64_t>(seed);
    if (doc.has_section("injection")) {
        if (auto* e = std::get_if<sim::EfdModulation>(&s.injection.kind)) {
            doc.bind("injection", {{"efd0", &e->efd0}, {"a1", &e->a1}, {"f1", &e->f1}, {"a2", &e->a2},
                                   {"f2", &e->f2}, {"start", &e->start}, {"duration", &e->duration}});
        } else if (auto* g = std::get_if<sim::GateSquare>(&s.injection.kind)) {
            doc.bind("injection", {{"g0", &g->g0}, {"ag", &g->ag}, {"f_start", &g->f_start},
                                   {"f_max", &g->f_max}, {"t_peak", &g->t_peak}, {"t_end", &g->t_end},
                                   {"start", &g->start}, {"duration", &g->duration}});
        } else {
            doc.fail("injection", "", "[injection] given for a scenario without injection");
        }
    }
    try {
        s.injection.validate();
        s.noise.validate();
    } catch (const Error& e) {
        throw ParseError(path, 0, e.what());
    }
    if (!(s.duration > 0.0)) doc.fail("scenario", "duration", "duration must be positive");
    return s;
}

void load_locate_config(const std::string& path, pb::LocateConfig& cfg) {
    const Document doc(path);
    if (doc.has_section("locate")) {
        double decimation = cfg.decimation;
        double parallel = cfg.parallel ? 1.0 : 0.0;
        doc.bind("locate",
                 {{"window", &cfg.window},
                  {"decimation", &decimation},
                  {"system_mva", &cfg.system_mva},
                  {"noise_sigma", &cfg.noise_sigma},
                  {"init_error", &cfg.init_error},
                  {"input_smoothing", &cfg.input_smoothing},
                  {"pmech_gain", &cfg.pmech_gain},
                  {"detrend", &cfg.detrend},
                  {"onset_window", &cfg.onset_window},
                  {"baseline_start", &cfg.baseline_start},
                  {"baseline", &cfg.baseline},
                  {"sustain", &cfg.sustain},
                  {"onset_factor", &cfg.onset_factor},
                  {"relaxed_ratio", &cfg.relaxed_ratio},
                  {"warn_margin", &cfg.warn_margin},
                  {"parallel", &parallel}},
                 {"branch"});
        if (decimation < 1.0 || decimation != std::floor(decimation))
            doc.fail("locate", "decimation", "decimation must be a positive integer");
        cfg.decimation = static_cast<int>(decimation);
        cfg.parallel = parallel != 0.0;
        cfg.branch = doc.text_or("locate", "branch", cfg.branch);
    }
    if (doc.has_section("ukf"))
        doc.bind("ukf", {{"alpha", &cfg.ukf_alpha},
                         {"beta", &cfg.ukf_beta},
                         {"kappa", &cfg.ukf_kappa},
                         {"q_scale", &cfg.q_scale},
                         {"r_scale", &cfg.r_scale}});
    for (const auto& s : doc.sections())
        if (s != "locate" && s != "ukf") doc.fail(s, "", "unknown section [" + s + "]");
    try {
        cfg.validate();
    } catch (const Error& e) {
        throw ParseError(path, 0, e.what());
    }
}

std::string digest(const std::string& text) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(text.data(), text.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw Error("config", "digest computation failed");
    std::ostringstream os;
    os << std::hex << std::setfill('0');
    for (unsigned int i = 0; i < len; ++i) os << std::setw(2) << static_cast<int>(md[i]);
    return os.str();
}

}  // namespace fosl::config
