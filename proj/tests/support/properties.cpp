#include "properties.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "fosl/cli.hpp"
#include "fosl/config.hpp"
#include "fosl/energy.hpp"
#include "fosl/estimate.hpp"
#include "fosl/playback.hpp"
#include "fosl/pmuio.hpp"

namespace fosl::testing {

namespace {

Mat random_spd(std::mt19937_64& rng, Eigen::Index n) {
    std::normal_distribution<double> g(0.0, 1.0);
    std::uniform_real_distribution<double> e(-4.0, 1.0);
    Mat a(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) a(i, j) = g(rng);
    const Eigen::HouseholderQR<Mat> qr(a);
    const Mat q = qr.householderQ();
    Vec ev(n);
    for (Eigen::Index i = 0; i < n; ++i) ev[i] = std::pow(10.0, e(rng));
    return q * ev.asDiagonal() * q.transpose();
}

PropertyResult fail(PropertyResult r, const std::string& why) {
    r.ok = false;
    r.detail = why;
    return r;
}

std::string tmp_path(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / "fosl-properties";
    std::filesystem::create_directories(dir);
    return (dir / name).string();
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
}

std::string mutate(const std::string& base, std::mt19937_64& rng) {
    static const std::string alphabet = "0123456789.,;\t -+eEnaNi\r\n\"#[]=xyz\xff";
    std::string s = base;
    std::uniform_int_distribution<int> ops(1, 12);
    std::uniform_int_distribution<int> kind(0, 4);
    std::uniform_int_distribution<std::size_t> ch(0, alphabet.size() - 1);
    const int count = ops(rng);
    for (int i = 0; i < count; ++i) {
        std::uniform_int_distribution<std::size_t> pos(0, s.empty() ? 0 : s.size() - 1);
        switch (kind(rng)) {
            case 0:
                if (!s.empty()) s[pos(rng)] = alphabet[ch(rng)];
                break;
            case 1:
                s.insert(s.begin() + static_cast<long>(s.empty() ? 0 : pos(rng)), alphabet[ch(rng)]);
                break;
            case 2:
                if (!s.empty()) s.erase(pos(rng), 1);
                break;
            case 3:
                if (!s.empty()) s.resize(pos(rng));
                break;
            default: {
                std::uniform_int_distribution<int> len(0, 40);
                std::uniform_int_distribution<int> byte(0, 255);
                std::string junk;
                for (int k = len(rng); k > 0; --k) junk += static_cast<char>(byte(rng));
                s.insert(s.empty() ? 0 : pos(rng), junk);
            }
        }
    }
    return s;
}

// Runs `f`; success or a library error both count as total behavior.
template <class F>
bool total(F&& f, std::string& why) {
    try {
        f();
        return true;
    } catch (const fosl::Error&) {
        return true;
    } catch (const std::exception& e) {
        why = e.what();
        return false;
    }
}

}  // namespace

PropertyResult sigma_point_round_trip(int cases) {
    PropertyResult r;
    std::mt19937_64 rng(101);
    std::uniform_int_distribution<int> dim(1, 8);
    std::uniform_real_distribution<double> alpha(0.3, 1.0), kappa(0.0, 3.0);
    std::normal_distribution<double> g(0.0, 1.0);
    for (int c = 0; c < cases; ++c, ++r.cases) {
        const int n = dim(rng);
        Vec x(n);
        for (int i = 0; i < n; ++i) x[i] = 10.0 * g(rng);
        const Mat p = random_spd(rng, n);
        est::FilterConfig cfg;
        cfg.alpha = alpha(rng);
        cfg.kappa = kappa(rng);
        const auto sp = est::sigma_points(x, p, cfg);
        const Vec mean = sp.points * sp.wm;
        const Mat dev = sp.points.colwise() - x;
        Mat cov = dev * sp.wc.asDiagonal() * dev.transpose();
        if ((mean - x).norm() > 1e-9 * (1.0 + x.norm())) return fail(r, "weighted mean differs from x");
        if ((cov - p).norm() > 1e-9 * (1.0 + p.norm())) return fail(r, "weighted covariance differs from P");
    }
    return r;
}

PropertyResult psd_repair(int cases) {
    PropertyResult r;
    std::mt19937_64 rng(202);
    std::uniform_int_distribution<int> dim(1, 8);
    std::normal_distribution<double> g(0.0, 1.0);
    const double floor = 1e-10;
    for (int c = 0; c < cases; ++c, ++r.cases) {
        const int n = dim(rng);
        Mat a(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) a(i, j) = g(rng);
        const Mat s = 0.5 * (a + a.transpose());
        const Mat fixed = est::repair_psd(s, floor);
        if ((fixed - fixed.transpose()).norm() > 1e-12 * (1.0 + fixed.norm())) return fail(r, "repair is not symmetric");
        Eigen::LLT<Mat> llt(fixed);
        if (llt.info() != Eigen::Success) return fail(r, "repaired matrix has no Cholesky factor");
        Eigen::SelfAdjointEigenSolver<Mat> es(fixed);
        if (es.eigenvalues().minCoeff() < floor * (1.0 - 1e-6) - 1e-14) return fail(r, "eigenvalue below floor");
        // An already positive definite input is left alone.
        const Mat spd = random_spd(rng, n);
        if ((est::repair_psd(spd, floor) - spd).norm() > 1e-12 * spd.norm()) return fail(r, "SPD input was modified");
    }
    return r;
}

PropertyResult verdict_antisymmetry(int cases) {
    PropertyResult r;
    std::mt19937_64 rng(303);
    std::normal_distribution<double> g(0.0, 1.0);
    std::uniform_real_distribution<double> hw(0.0, 1.0);
    std::uniform_real_distribution<double> mag(-4.0, 2.0);
    for (int c = 0; c < cases; ++c, ++r.cases) {
        energy::TrendFit a{g(rng), hw(rng), 100};
        energy::TrendFit b{g(rng), hw(rng), 100};
        const double fa = std::copysign(std::pow(10.0, mag(rng)), g(rng));
        const double fb = std::copysign(std::pow(10.0, mag(rng)), g(rng));
        const auto v1 = energy::loop_verdict(a, b, fa, fb);
        const auto v2 = energy::loop_verdict(b, a, fb, fa);
        using energy::Loop;
        const Loop swapped = v1.loop == Loop::Excitation   ? Loop::Mechanical
                             : v1.loop == Loop::Mechanical ? Loop::Excitation
                                                           : Loop::Inconclusive;
        if (v2.loop != swapped || v2.rule != v1.rule) return fail(r, "swapping the traces did not swap the loop");
        if (v1.rule == energy::VerdictRule::StrictSign && !((a.slope > 0) != (b.slope > 0)))
            return fail(r, "strict rule fired on equal-sign slopes");
    }
    return r;
}

PropertyResult ranking_scale_invariance(int cases) {
    PropertyResult r;
    std::mt19937_64 rng(404);
    std::uniform_int_distribution<int> hyps(2, 6), len(20, 200);
    std::normal_distribution<double> g(0.0, 1.0);
    std::uniform_real_distribution<double> scale_exp(-6.0, 6.0), amp(-3.0, 1.0);
    for (int c = 0; c < cases; ++c, ++r.cases) {
        const int h = hyps(rng);
        const int n = len(rng);
        const std::size_t window = static_cast<std::size_t>(std::uniform_int_distribution<int>(1, n - 1)(rng));
        const double k = std::pow(10.0, scale_exp(rng));
        std::vector<pb::Hypothesis> base, scaled;
        for (int i = 0; i < h; ++i) {
            const double a = std::pow(10.0, amp(rng));
            std::vector<double> y(static_cast<std::size_t>(n)), ys(y.size());
            for (std::size_t t = 0; t < y.size(); ++t) {
                y[t] = a * g(rng);
                ys[t] = k * y[t];
            }
            base.push_back({"U" + std::to_string(i), pb::residual_energy(y, window), 0});
            scaled.push_back({"U" + std::to_string(i), pb::residual_energy(ys, window), 0});
        }
        const auto r1 = pb::identify_source(base);
        const auto r2 = pb::identify_source(scaled);
        if (r1.identified != r2.identified) return fail(r, "scaling changed the identified unit");
        if (std::abs(r1.margin - r2.margin) > 1e-9 * r1.margin) return fail(r, "scaling changed the margin");
    }
    return r;
}

PropertyResult parser_totality(int cases) {
    PropertyResult r;
    std::mt19937_64 rng(505);

    pmu::PhasorTrace t;
    for (int k = 0; k < 6; ++k) {
        t.time.push_back(0.01 * k);
        t.voltage.emplace_back(1.0, 0.01 * k);
        t.frequency.push_back(60.0);
        t.valid.push_back(1);
    }
    t.branch_names = {"6132-6102"};
    t.branch_currents = {std::vector<Complex>(6, Complex(0.5, -0.1))};
    const std::string csv_path = tmp_path("seed.csv");
    pmu::write_csv(t, csv_path);
    std::ifstream in(csv_path);
    const std::string csv((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    const std::string bench_path = tmp_path("seed.ini");
    config::save_bench(sim::default_bench(), bench_path);
    std::ifstream bin(bench_path);
    const std::string bench((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());

    const std::string mag = "time,6132\n0,1.02\n0.01,1.021\n0.02,1.019\n";
    const std::string ang = "time,6132\n0,0\n0.01,0.5\n0.02,1.0\n";
    const std::string imag = "time,6132-6102\n0,2.2\n0.01,2.21\n0.02,2.19\n";
    const std::string iang = "time,6132-6102\n0,-12\n0.01,-11.5\n0.02,-11\n";
    const std::string report = R"({"status":"conclusive","failed_stage":"","error":"","ranking":{"identified":"H","margin":2.0,"energies":[{"unit":"H","final_energy":1.0}]},"fo_detected":true,"onset_time":2.0,"verdict":{"loop":"excitation","rule":"strict-sign","field_slope":1.0,"mech_slope":-1.0},"energy":{"field":{"half_width":0.1},"mech":{"half_width":0.1}},"warnings":[]})";

    std::string why;
    for (int c = 0; c < cases; ++c, ++r.cases) {
        const std::string p = tmp_path("case.csv");
        write_file(p, mutate(csv, rng));
        if (!total([&] { pmu::read_csv(p); }, why)) return fail(r, "read_csv: " + why);
        if (!total([&] { pmu::read_table(p); }, why)) return fail(r, "read_table: " + why);

        const std::string files[4] = {tmp_path("vm.csv"), tmp_path("va.csv"), tmp_path("im.csv"), tmp_path("ia.csv")};
        write_file(files[0], mutate(mag, rng));
        write_file(files[1], mutate(ang, rng));
        write_file(files[2], mutate(imag, rng));
        write_file(files[3], mutate(iang, rng));
        if (!total([&] { pmu::parse_contest_dataset({files[0], files[1], files[2], files[3]}); }, why))
            return fail(r, "parse_contest_dataset: " + why);

        const std::string ini = tmp_path("case.ini");
        write_file(ini, mutate(bench, rng));
        if (!total([&] { config::load_bench(ini); }, why)) return fail(r, "load_bench: " + why);
        if (!total([&] { config::load_scenario(ini); }, why)) return fail(r, "load_scenario: " + why);

        const std::string rep = tmp_path("report.json");
        write_file(rep, mutate(report, rng));
        if (!total([&] { cli::summarize_file(rep); }, why)) return fail(r, "summarize_file: " + why);
    }
    return r;
}

}  // namespace fosl::testing
