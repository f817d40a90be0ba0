#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fosl/common.hpp"

namespace fosl::pmu {

/// Synchrophasor record at one point of connection: bus voltage, the branch
/// currents leaving the bus and frequency, all on a uniform time grid in p.u.
struct PhasorTrace {
    std::vector<double> time;
    std::vector<Complex> voltage;
    std::vector<std::string> branch_names;
    std::vector<std::vector<Complex>> branch_currents;
    std::vector<double> frequency;
    /// 0 marks a gap sample. Gaps are never interpolated.
    std::vector<std::uint8_t> valid;

    double reporting_rate = 0.0;  // Hz
    double power_base_mva = 100.0;
    double voltage_base_kv = 1.0;
    double current_base_ka = 1.0;
    double nominal_frequency = 60.0;
    /// Set when samples were held onto a finer grid than the source data.
    bool resampled = false;

    std::size_t size() const { return time.size(); }
    double step() const { return time.size() > 1 ? time[1] - time[0] : 0.0; }

    /// Current of the named branch; throws if absent.
    const std::vector<Complex>& current(const std::string& branch) const;
    std::size_t branch_index(const std::string& branch) const;

    /// Checks array lengths, a uniform monotone grid and |V| > 0 on valid
    /// samples.
    void validate() const;

    std::size_t gap_count() const;
};

}  // namespace fosl::pmu
