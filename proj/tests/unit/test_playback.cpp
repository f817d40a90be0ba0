#include <gtest/gtest.h>

#include <random>

#include "fosl/locate.hpp"
#include "fosl/playback.hpp"
#include "fosl/simulate.hpp"
#include "properties.hpp"

using namespace fosl;

namespace {

pb::PlaybackResult constant_playback(const std::vector<Complex>& per_unit, std::size_t n) {
    pb::PlaybackResult p;
    for (std::size_t i = 0; i < per_unit.size(); ++i) {
        p.names.push_back("U" + std::to_string(i));
        p.currents.emplace_back(n, per_unit[i]);
    }
    p.time.resize(n);
    return p;
}

}  // namespace

TEST(Injection, KirchhoffExample) {
    const auto p = constant_playback({{9.0, 9.0}, {1, 0}, {1, 0}, {1, 0}, {1, 0}}, 3);
    const std::vector<Complex> it(3, Complex(5.0, 0.0));
    for (const auto& c : pb::current_injection(0, it, p)) EXPECT_EQ(c, Complex(1.0, 0.0));
}

TEST(Injection, SumIdentityIsExact) {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> g(0.0, 1.0);
    const std::size_t units = 5, n = 64;
    pb::PlaybackResult p;
    p.time.resize(n);
    for (std::size_t u = 0; u < units; ++u) {
        std::vector<Complex> c(n);
        for (auto& x : c) x = Complex(g(rng), g(rng));
        p.currents.push_back(c);
        p.names.push_back("U" + std::to_string(u));
    }
    std::vector<Complex> it(n);
    for (auto& x : it) x = Complex(g(rng), g(rng));
    for (std::size_t k = 0; k < n; ++k) {
        Complex lhs(0.0, 0.0), sum(0.0, 0.0);
        for (std::size_t j = 0; j < units; ++j) lhs += pb::current_injection(j, it, p)[k];
        for (std::size_t i = 0; i < units; ++i) sum += p.currents[i][k];
        const Complex rhs = static_cast<double>(units) * it[k] - static_cast<double>(units - 1) * sum;
        EXPECT_NEAR(std::abs(lhs - rhs), 0.0, 1e-12 * (1.0 + std::abs(rhs)));
    }
}

TEST(Injection, RejectsMisalignedTraces) {
    const auto p = constant_playback({{1, 0}, {1, 0}}, 4);
    EXPECT_THROW(pb::current_injection(0, std::vector<Complex>(3), p), InvalidArgument);
    EXPECT_THROW(pb::current_injection(5, std::vector<Complex>(4), p), InvalidArgument);
}

TEST(Playback, QuiescentRoundTrip) {
    const auto b = sim::default_bench();
    const auto r = sim::run_scenario(b, {}, 5.0);
    const auto p = pb::event_playback(b.units, r.measured, b.system_mva);
    for (const auto& u : r.truth.units) {
        const auto& c = p.currents[p.index(u.name)];
        double worst = 0.0;
        for (std::size_t k = 0; k < c.size(); ++k) worst = std::max(worst, std::abs(c[k] - u.current[k]));
        EXPECT_LT(worst, 1e-6) << u.name;
        const auto ij = pb::current_injection(p.index(u.name), r.measured.current(b.measured_branch), p);
        double wj = 0.0;
        for (std::size_t k = 0; k < ij.size(); ++k) wj = std::max(wj, std::abs(ij[k] - u.current[k]));
        EXPECT_LT(wj, 1e-6) << u.name;
    }
}

TEST(Playback, PerturbedStartSettles) {
    const auto b = sim::default_bench();
    const auto r = sim::run_scenario(b, {}, 30.0);
    const auto p = pb::event_playback(b.units, r.measured, b.system_mva, 0.03);
    const auto& truth = r.truth.unit("G").current;
    const auto& c = p.currents[p.index("G")];
    EXPECT_LT(std::abs(c.back() - truth.back()), std::abs(c.front() - truth.front()));
}

TEST(Playback, SourceUnitDeviatesMost) {
    const auto b = sim::default_bench();
    sim::FoInjection inj;
    inj.kind = sim::EfdModulation{};
    const auto r = sim::run_scenario(b, inj, 10.0);
    const auto p = pb::event_playback(b.units, r.measured, b.system_mva);
    std::string worst_unit;
    double worst = -1.0;
    for (const auto& u : r.truth.units) {
        const auto& c = p.currents[p.index(u.name)];
        double e = 0.0;
        for (std::size_t k = 0; k < c.size(); ++k) e += std::norm(c[k] - u.current[k]);
        if (e > worst) {
            worst = e;
            worst_unit = u.name;
        }
    }
    EXPECT_EQ(worst_unit, "H");
}

TEST(Playback, GapsAreRejected) {
    const auto b = sim::default_bench();
    auto r = sim::run_scenario(b, {}, 1.0);
    r.measured.valid[10] = 0;
    EXPECT_THROW(pb::event_playback(b.units, r.measured, b.system_mva), InvalidArgument);
}

TEST(ResidualEnergy, ClosedForms) {
    const std::vector<double> zero(20, 0.0);
    for (double e : pb::residual_energy(zero, 5)) EXPECT_EQ(e, 0.0);
    const std::vector<double> c(20, 0.5);
    const auto e = pb::residual_energy(c, 5);
    EXPECT_DOUBLE_EQ(e.back(), 6 * 0.25);
    EXPECT_THROW(pb::residual_energy(c, 0), InvalidArgument);
    EXPECT_THROW(pb::residual_energy(c, 20), InvalidArgument);
}

TEST(ResidualEnergy, CumulativeIsMonotone) {
    std::mt19937_64 rng(9);
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<double> y(300);
    for (auto& v : y) v = g(rng);
    const auto e = pb::cumulative_residual_energy(y);
    for (std::size_t k = 1; k < e.size(); ++k) EXPECT_LE(e[k - 1], e[k]);
}

TEST(Ranking, ArgminAndMargin) {
    std::vector<pb::Hypothesis> h{{"H", {1.0}, 0}, {"G", {5.0}, 0}, {"B", {7.0}, 0}};
    const auto r = pb::identify_source(h);
    EXPECT_EQ(r.identified, "H");
    EXPECT_DOUBLE_EQ(r.margin, 5.0);
    EXPECT_TRUE(r.warnings.empty());
}

TEST(Ranking, TiesPickLowestIndexWithWarning) {
    std::vector<pb::Hypothesis> h{{"B", {2.0}, 0}, {"G", {2.0}, 0}, {"H", {3.0}, 0}};
    const auto r = pb::identify_source(h);
    EXPECT_EQ(r.identified, "B");
    ASSERT_EQ(r.warnings.size(), 1u);
    EXPECT_THROW(pb::identify_source({h[0]}), InvalidArgument);
}

TEST(Properties, RankingScaleInvariance) {
    const auto r = fosl::testing::ranking_scale_invariance();
    EXPECT_TRUE(r.ok) << r.detail;
}

TEST(Fanout, ParallelMatchesSerial) {
    const auto b = sim::default_bench();
    sim::FoInjection inj;
    inj.kind = sim::EfdModulation{};
    const auto r = sim::run_scenario(b, inj, 4.0);
    const auto p = pb::event_playback(b.units, r.measured, b.system_mva);
    std::vector<std::size_t> hyp{0, 1, 2};
    std::vector<est::DseConfig> cfgs;
    for (auto h : hyp) {
        auto c = est::default_dse_config(b.units[h], 1e-2);
        c.decimation = 10;
        cfgs.push_back(c);
    }
    const auto serial = pb::dse_fanout(b.units, hyp, r.measured, b.measured_branch, p, cfgs, false);
    const auto parallel = pb::dse_fanout(b.units, hyp, r.measured, b.measured_branch, p, cfgs, true);
    ASSERT_EQ(serial.size(), parallel.size());
    for (std::size_t i = 0; i < serial.size(); ++i) {
        EXPECT_EQ(serial[i].unit, parallel[i].unit);
        EXPECT_EQ(serial[i].efd_raw, parallel[i].efd_raw);
        EXPECT_EQ(serial[i].residuals.y_max(), parallel[i].residuals.y_max());
    }
}

TEST(Locate, NoiselessScenariosOnSourceUnit) {
    const auto b = sim::default_bench();
    sim::FoInjection inj;
    inj.kind = sim::EfdModulation{};
    const auto r = sim::run_scenario(b, inj, 30.0);
    const auto rep = pb::locate(b.units, r.measured, {});
    ASSERT_TRUE(rep.complete()) << rep.error;
    EXPECT_EQ(rep.ranking.identified, "H");
    EXPECT_TRUE(rep.fo_detected);
    EXPECT_NEAR(rep.onset_time, 2.0, 0.1);
    EXPECT_EQ(rep.verdict.loop, energy::Loop::Excitation);
    EXPECT_TRUE(rep.conclusive());
}

TEST(Locate, QuiescentHasNoOnset) {
    const auto b = sim::default_bench();
    const auto r = sim::run_scenario(b, {}, 20.0);
    const auto rep = pb::locate(b.units, r.measured, {});
    ASSERT_TRUE(rep.complete()) << rep.error;
    EXPECT_FALSE(rep.fo_detected);
    EXPECT_FALSE(rep.conclusive());
}

TEST(Locate, StageFailureKeepsEarlierResults) {
    const auto b = sim::default_bench();
    const auto r = sim::run_scenario(b, {}, 2.0);
    pb::LocateConfig cfg;
    cfg.window = 50.0;  // longer than the record
    const auto rep = pb::locate(b.units, r.measured, cfg);
    EXPECT_FALSE(rep.complete());
    EXPECT_EQ(rep.failed_stage, "ranking");
    EXPECT_EQ(rep.estimates.size(), 3u);
}

TEST(Locate, IsDeterministic) {
    const auto b = sim::default_bench();
    sim::FoInjection inj;
    inj.kind = sim::GateSquare{};
    const auto r = sim::run_scenario(b, inj, 12.0);
    const auto a = pb::locate(b.units, r.measured, {});
    const auto c = pb::locate(b.units, r.measured, {});
    ASSERT_EQ(a.ranking.hypotheses.size(), c.ranking.hypotheses.size());
    for (std::size_t i = 0; i < a.ranking.hypotheses.size(); ++i)
        EXPECT_EQ(a.ranking.hypotheses[i].energy, c.ranking.hypotheses[i].energy);
    EXPECT_EQ(a.energy.w_field, c.energy.w_field);
}
