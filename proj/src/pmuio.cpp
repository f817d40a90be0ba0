#include "fosl/pmuio.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include <json.hpp>

namespace fosl::pmu {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return {};
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& line, char delim) {
    std::vector<std::string> out;
    if (delim == ' ') {
        std::istringstream is(line);
        std::string tok;
        while (is >> tok) out.push_back(tok);
        return out;
    }
    std::string cur;
    for (char c : line) {
        if (c == delim) {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(trim(cur));
    return out;
}

bool parse_number(const std::string& s, double& out) {
    if (s.empty()) {
        out = kNaN;
        return true;
    }
    const char* first = s.data();
    const char* last = s.data() + s.size();
    if (*first == '+') ++first;
    const auto r = std::from_chars(first, last, out);
    return r.ec == std::errc() && r.ptr == last;
}

std::vector<double> unwrap_angles(const std::vector<double>& a) {
    std::vector<double> out(a.size());
    double offset = 0.0;
    double prev = kNaN;
    for (std::size_t k = 0; k < a.size(); ++k) {
        if (std::isnan(a[k])) {
            out[k] = kNaN;
            continue;
        }
        if (!std::isnan(prev)) {
            const double jump = a[k] + offset - prev;
            offset -= 2.0 * kPi * std::round(jump / (2.0 * kPi));
        }
        out[k] = a[k] + offset;
        prev = out[k];
    }
    return out;
}

std::size_t column(const Table& t, const std::string& name, const std::string& file) {
    const auto it = std::find(t.header.begin(), t.header.end(), name);
    if (it == t.header.end()) throw ParseError(file, 1, "missing channel '" + name + "'");
    return static_cast<std::size_t>(it - t.header.begin());
}

}  // namespace

void NoiseSpec::validate() const {
    if (!(tve >= 0.0) || !std::isfinite(tve)) throw InvalidArgument("pmuio", "TVE must be a non-negative number");
    if (!(fe >= 0.0) || !std::isfinite(fe)) throw InvalidArgument("pmuio", "FE must be a non-negative number");
}

double NoiseSpec::sigma() const { return tve / (3.0 * std::sqrt(2.0)); }

PhasorTrace add_noise(const PhasorTrace& trace, const NoiseSpec& spec) {
    spec.validate();
    PhasorTrace out = trace;
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double s = spec.sigma();
    auto perturb = [&](std::vector<Complex>& x) {
        if (s == 0.0) return;
        for (auto& p : x) {
            const double re = normal(rng);
            const double im = normal(rng);
            p += Complex(re, im) * (s * std::abs(p));
        }
    };
    perturb(out.voltage);
    for (auto& b : out.branch_currents) perturb(b);
    if (spec.fe > 0.0)
        for (auto& f : out.frequency) f += normal(rng) * spec.fe / 3.0;
    return out;
}

double snr_fo(const std::vector<double>& fo_signal, double sigma_v) {
    if (!(sigma_v > 0.0)) throw InvalidArgument("pmuio", "noise standard deviation must be positive");
    if (fo_signal.empty()) throw InvalidArgument("pmuio", "FO signal is empty");
    double mean = 0.0;
    for (double x : fo_signal) mean += x;
    mean /= static_cast<double>(fo_signal.size());
    double var = 0.0;
    for (double x : fo_signal) var += (x - mean) * (x - mean);
    var /= static_cast<double>(fo_signal.size());
    if (var == 0.0) return -std::numeric_limits<double>::infinity();
    return 20.0 * std::log10(var / (sigma_v * sigma_v));
}

namespace {

std::vector<double> vector_errors(const std::vector<Complex>& noisy, const std::vector<Complex>& clean) {
    if (noisy.size() != clean.size()) throw InvalidArgument("pmuio", "noisy and clean traces are misaligned");
    if (noisy.empty()) throw InvalidArgument("pmuio", "empty traces");
    std::vector<double> e(noisy.size());
    for (std::size_t k = 0; k < noisy.size(); ++k) {
        const double m = std::abs(clean[k]);
        if (!(m > 0.0)) throw InvalidArgument("pmuio", "clean phasor has zero magnitude");
        e[k] = std::abs(noisy[k] - clean[k]) / m;
    }
    return e;
}

}  // namespace

double three_sigma_tve(const std::vector<Complex>& noisy, const std::vector<Complex>& clean) {
    double sum = 0.0;
    const auto e = vector_errors(noisy, clean);
    for (double x : e) sum += x * x;
    return 3.0 * std::sqrt(sum / static_cast<double>(e.size()));
}

double empirical_tve(const std::vector<Complex>& noisy, const std::vector<Complex>& clean, double percentile) {
    if (!(percentile > 0.0 && percentile <= 100.0)) throw InvalidArgument("pmuio", "percentile must lie in (0, 100]");
    auto e = vector_errors(noisy, clean);
    std::sort(e.begin(), e.end());
    // Nearest-rank percentile.
    const auto rank = static_cast<std::size_t>(std::ceil(percentile / 100.0 * static_cast<double>(e.size())));
    return e[std::clamp<std::size_t>(rank, 1, e.size()) - 1];
}

char detect_delimiter(const std::string& header_line) {
    for (char c : {',', '\t', ';'})
        if (header_line.find(c) != std::string::npos) return c;
    return ' ';
}

Table read_table(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(path, 0, "cannot open file");
    Table t;
    std::string line;
    long lineno = 0;
    char delim = ',';
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        if (t.header.empty()) {
            delim = detect_delimiter(line);
            t.header = split(line, delim);
            for (auto& h : t.header) h = trim(h);
            if (t.header.size() < 2) throw ParseError(path, lineno, "header needs a time column and one channel");
            continue;
        }
        const auto cells = split(line, delim);
        if (cells.size() != t.header.size()) {
            std::ostringstream os;
            os << "expected " << t.header.size() << " fields, found " << cells.size();
            throw ParseError(path, lineno, os.str());
        }
        std::vector<double> row(cells.size());
        for (std::size_t c = 0; c < cells.size(); ++c) {
            std::string cell = cells[c];
            std::transform(cell.begin(), cell.end(), cell.begin(), [](unsigned char ch) { return std::tolower(ch); });
            if (cell == "nan") {
                row[c] = kNaN;
                continue;
            }
            if (!parse_number(cells[c], row[c])) throw ParseError(path, lineno, "unparseable value '" + cells[c] + "'");
        }
        if (std::isnan(row[0])) throw ParseError(path, lineno, "missing timestamp");
        t.rows.push_back(std::move(row));
    }
    if (t.header.empty()) throw ParseError(path, 0, "file is empty");
    if (t.rows.empty()) throw ParseError(path, 0, "file has no data rows");
    return t;
}

PhasorTrace parse_contest_dataset(const ContestFiles& files, const ContestOptions& options) {
    if (!(options.voltage_base_kv > 0.0) || !(options.current_base_ka > 0.0))
        throw InvalidArgument("pmuio", "voltage and current bases must be positive");
    const Table vm = read_table(files.voltage_magnitude);
    const Table va = read_table(files.voltage_angle);
    const Table im = read_table(files.current_magnitude);
    const Table ia = read_table(files.current_angle);

    const std::size_t n = vm.rows.size();
    auto same_rows = [&](const Table& t, const std::string& f) {
        if (t.rows.size() != n) {
            std::ostringstream os;
            os << "has " << t.rows.size() << " rows, voltage magnitudes have " << n;
            throw ParseError(f, 0, os.str());
        }
        for (std::size_t k = 0; k < n; ++k)
            if (t.rows[k][0] != vm.rows[k][0])
                throw ParseError(f, static_cast<long>(k + 2), "timestamp differs from the voltage magnitude file");
    };
    same_rows(va, files.voltage_angle);
    same_rows(im, files.current_magnitude);
    same_rows(ia, files.current_angle);

    const std::string bus = options.bus.empty() ? vm.header[1] : options.bus;
    const std::size_t cvm = column(vm, bus, files.voltage_magnitude);
    const std::size_t cva = column(va, bus, files.voltage_angle);
    const double to_rad = options.angles_in_degrees ? kPi / 180.0 : 1.0;

    PhasorTrace tr;
    tr.power_base_mva = options.power_base_mva;
    tr.voltage_base_kv = options.voltage_base_kv;
    tr.current_base_ka = options.current_base_ka;
    tr.nominal_frequency = options.nominal_frequency;
    tr.time.resize(n);
    tr.voltage.resize(n);
    tr.frequency.resize(n);
    tr.valid.assign(n, 1);

    std::vector<double> vang(n);
    for (std::size_t k = 0; k < n; ++k) {
        tr.time[k] = vm.rows[k][0];
        vang[k] = va.rows[k][cva] * to_rad;
    }
    vang = unwrap_angles(vang);
    for (std::size_t k = 0; k < n; ++k) {
        const double mag = vm.rows[k][cvm] / options.voltage_base_kv;
        if (std::isnan(mag) || std::isnan(vang[k])) {
            tr.valid[k] = 0;
            tr.voltage[k] = Complex(kNaN, kNaN);
        } else {
            tr.voltage[k] = std::polar(mag, vang[k]);
        }
    }

    for (std::size_t c = 1; c < im.header.size(); ++c) {
        const std::string& name = im.header[c];
        const std::size_t ca = column(ia, name, files.current_angle);
        std::vector<double> ang(n);
        for (std::size_t k = 0; k < n; ++k) ang[k] = ia.rows[k][ca] * to_rad;
        ang = unwrap_angles(ang);
        std::vector<Complex> cur(n);
        for (std::size_t k = 0; k < n; ++k) {
            const double mag = im.rows[k][c] / options.current_base_ka;
            if (std::isnan(mag) || std::isnan(ang[k])) {
                tr.valid[k] = 0;
                cur[k] = Complex(kNaN, kNaN);
            } else {
                cur[k] = std::polar(mag, ang[k]);
            }
        }
        tr.branch_names.push_back(name);
        tr.branch_currents.push_back(std::move(cur));
    }
    if (tr.branch_names.empty()) throw ParseError(files.current_magnitude, 1, "no branch current channels");

    // Frequency from the angle slope, one-sided at the ends.
    for (std::size_t k = 0; k < n; ++k) {
        if (n < 2) {
            tr.frequency[k] = options.nominal_frequency;
            continue;
        }
        const std::size_t a = k == 0 ? 0 : k - 1;
        const std::size_t b = k + 1 == n ? k : k + 1;
        const double slope = (vang[b] - vang[a]) / (tr.time[b] - tr.time[a]);
        tr.frequency[k] = std::isnan(slope) ? kNaN : options.nominal_frequency + slope / (2.0 * kPi);
    }
    if (n > 1) tr.reporting_rate = 1.0 / (tr.time[1] - tr.time[0]);
    tr.validate();
    return tr;
}

std::string format_double(double x) {
    if (std::isnan(x)) return "nan";
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, r.ptr);
}

void write_text_atomic(const std::string& path, const std::string& text) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw Error("pmuio", "cannot write '" + path + "'");
        out << text;
        out.flush();
        if (!out) throw Error("pmuio", "write failed for '" + path + "'");
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        std::remove(tmp.c_str());
        throw Error("pmuio", "cannot move '" + tmp + "' onto '" + path + "'");
    }
}

void write_columns(const std::string& path, const std::vector<std::string>& names,
                   const std::vector<std::vector<double>>& columns) {
    if (names.size() != columns.size() || names.empty())
        throw InvalidArgument("pmuio", "column names and data do not match");
    const std::size_t n = columns[0].size();
    for (const auto& c : columns)
        if (c.size() != n) throw InvalidArgument("pmuio", "columns have different lengths");
    std::ostringstream out;
    for (std::size_t c = 0; c < names.size(); ++c) out << (c ? "," : "") << names[c];
    out << '\n';
    for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t c = 0; c < columns.size(); ++c) out << (c ? "," : "") << format_double(columns[c][k]);
        out << '\n';
    }
    write_text_atomic(path, out.str());
}

void write_csv(const PhasorTrace& trace, const std::string& path) {
    trace.validate();
    std::ostringstream out;
    out << "time,V_re,V_im";
    for (const auto& b : trace.branch_names) out << ",I_re:" << b << ",I_im:" << b;
    out << ",f,valid\n";
    for (std::size_t k = 0; k < trace.size(); ++k) {
        out << format_double(trace.time[k]) << ',' << format_double(trace.voltage[k].real()) << ','
            << format_double(trace.voltage[k].imag());
        for (const auto& c : trace.branch_currents)
            out << ',' << format_double(c[k].real()) << ',' << format_double(c[k].imag());
        out << ',' << format_double(trace.frequency[k]) << ',' << int(trace.valid[k]) << '\n';
    }
    write_text_atomic(path, out.str());
}

PhasorTrace read_csv(const std::string& path) {
    const Table t = read_table(path);
    auto col = [&](const std::string& name) { return column(t, name, path); };
    const std::size_t cvr = col("V_re"), cvi = col("V_im"), cf = col("f");
    const auto vit = std::find(t.header.begin(), t.header.end(), "valid");
    PhasorTrace tr;
    for (std::size_t c = 0; c < t.header.size(); ++c) {
        const std::string& h = t.header[c];
        if (h.rfind("I_re:", 0) == 0) tr.branch_names.push_back(h.substr(5));
    }
    if (tr.branch_names.empty()) throw ParseError(path, 1, "no branch current columns");
    std::vector<std::pair<std::size_t, std::size_t>> bc;
    for (const auto& b : tr.branch_names) bc.emplace_back(col("I_re:" + b), col("I_im:" + b));
    tr.branch_currents.assign(tr.branch_names.size(), {});
    for (const auto& row : t.rows) {
        tr.time.push_back(row[0]);
        tr.voltage.emplace_back(row[cvr], row[cvi]);
        for (std::size_t b = 0; b < bc.size(); ++b) tr.branch_currents[b].emplace_back(row[bc[b].first], row[bc[b].second]);
        tr.frequency.push_back(row[cf]);
        bool ok = true;
        if (vit != t.header.end()) ok = row[static_cast<std::size_t>(vit - t.header.begin())] != 0.0;
        if (std::isnan(row[cvr]) || std::isnan(row[cvi])) ok = false;
        tr.valid.push_back(ok ? 1 : 0);
    }
    if (tr.size() > 1) tr.reporting_rate = 1.0 / (tr.time[1] - tr.time[0]);
    try {
        tr.validate();
    } catch (const InvalidArgument& e) {
        throw ParseError(path, 0, e.what());
    }
    return tr;
}

void write_sidecar(const PhasorTrace& trace, const std::string& path, const std::string& manifest_digest) {
    nlohmann::json j;
    j["power_base_mva"] = trace.power_base_mva;
    j["voltage_base_kv"] = trace.voltage_base_kv;
    j["current_base_ka"] = trace.current_base_ka;
    j["nominal_frequency_hz"] = trace.nominal_frequency;
    j["reporting_rate_hz"] = trace.reporting_rate;
    j["resampled"] = trace.resampled;
    j["branches"] = trace.branch_names;
    j["samples"] = trace.size();
    j["gaps"] = trace.gap_count();
    j["units"] = {{"voltage", "p.u."}, {"current", "p.u."}, {"frequency", "Hz"}, {"time", "s"}};
    j["manifest_digest"] = manifest_digest;
    write_text_atomic(path, j.dump(2) + "\n");
}

void read_sidecar(const std::string& path, PhasorTrace& trace) {
    std::ifstream in(path);
    if (!in) throw ParseError(path, 0, "cannot open file");
    nlohmann::json j;
    try {
        in >> j;
        trace.power_base_mva = j.value("power_base_mva", trace.power_base_mva);
        trace.voltage_base_kv = j.value("voltage_base_kv", trace.voltage_base_kv);
        trace.current_base_ka = j.value("current_base_ka", trace.current_base_ka);
        trace.nominal_frequency = j.value("nominal_frequency_hz", trace.nominal_frequency);
        trace.resampled = j.value("resampled", trace.resampled);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path, 0, e.what());
    }
}

PhasorTrace resample_zoh(const PhasorTrace& trace, double step) {
    trace.validate();
    if (!(step > 0.0)) throw InvalidArgument("pmuio", "resampling step must be positive");
    if (trace.size() < 2) throw InvalidArgument("pmuio", "trace is too short to resample");
    const double h = trace.step();
    if (step > h * (1.0 + 1e-9)) throw InvalidArgument("pmuio", "zero-order hold only refines the grid");
    const double t0 = trace.time.front();
    const double span = trace.time.back() + h - t0;
    const auto n = static_cast<std::size_t>(std::floor(span / step + 1e-9));
    PhasorTrace out = trace;
    out.time.resize(n);
    out.voltage.resize(n);
    out.frequency.resize(n);
    out.valid.resize(n);
    for (auto& b : out.branch_currents) b.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double t = t0 + static_cast<double>(k) * step;
        const auto src = std::min(trace.size() - 1, static_cast<std::size_t>(std::floor((t - t0) / h + 1e-9)));
        out.time[k] = t;
        out.voltage[k] = trace.voltage[src];
        out.frequency[k] = trace.frequency[src];
        out.valid[k] = trace.valid[src];
        for (std::size_t b = 0; b < trace.branch_currents.size(); ++b)
            out.branch_currents[b][k] = trace.branch_currents[b][src];
    }
    out.reporting_rate = 1.0 / step;
    out.resampled = true;
    return out;
}

}  // namespace fosl::pmu
