#pragma once

#include <cstdint>
#include <string>

#include "fosl/locate.hpp"
#include "fosl/pmuio.hpp"
#include "fosl/simulate.hpp"

namespace fosl::config {

/// Bench file: a [bench] section listing `units`, one section per unit with
/// `model = GENROU|RENEW`, and the controller sections the unit names in its
/// `exciter` / `governor` keys (`model = SEXS|TGOV1|GAST|HYGOV`). Keys follow
/// the machine nomenclature (Xd_p for X'd, Td0_pp for T''d0, ...). Unknown
/// keys are rejected.
sim::TestBench load_bench(const std::string& path);
void save_bench(const sim::TestBench& bench, const std::string& path);

/// Scenario file: [scenario] with bench, injection (none|a1|a2), duration,
/// seed, noise_tve, noise_fe, plus an optional [injection] section whose keys
/// override the injection parameters.
struct Scenario {
    std::string bench;  // empty means the built-in bench
    sim::FoInjection injection;
    double duration = 100.0;
    pmu::NoiseSpec noise;
};

Scenario load_scenario(const std::string& path);

/// Built-in scenario by name: none, a1 or a2.
Scenario named_scenario(const std::string& name);

/// Filter/locate settings file: [locate] keys mirror LocateConfig fields,
/// [ukf] takes alpha, beta, kappa, q_scale and r_scale.
void load_locate_config(const std::string& path, pb::LocateConfig& cfg);

/// SHA-256 hex digest of the text.
std::string digest(const std::string& text);

}  // namespace fosl::config
