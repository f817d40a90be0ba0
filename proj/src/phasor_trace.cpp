#include "fosl/phasor_trace.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace fosl::pmu {

std::size_t PhasorTrace::branch_index(const std::string& branch) const {
    const auto it = std::find(branch_names.begin(), branch_names.end(), branch);
    if (it == branch_names.end()) throw InvalidArgument("pmuio", "trace has no branch '" + branch + "'");
    return static_cast<std::size_t>(it - branch_names.begin());
}

const std::vector<Complex>& PhasorTrace::current(const std::string& branch) const {
    return branch_currents[branch_index(branch)];
}

void PhasorTrace::validate() const {
    const std::size_t n = time.size();
    auto fail = [](const std::string& what) { throw InvalidArgument("pmuio", what); };
    if (n == 0) fail("trace is empty");
    if (voltage.size() != n) fail("voltage length differs from time grid");
    if (frequency.size() != n) fail("frequency length differs from time grid");
    if (valid.size() != n) fail("validity mask length differs from time grid");
    if (branch_currents.size() != branch_names.size()) fail("branch names and currents disagree");
    for (std::size_t b = 0; b < branch_currents.size(); ++b)
        if (branch_currents[b].size() != n) fail("branch '" + branch_names[b] + "' length differs from time grid");
    if (n > 1) {
        const double h = time[1] - time[0];
        if (!(h > 0.0)) fail("timestamps are not increasing");
        for (std::size_t k = 1; k < n; ++k) {
            const double d = time[k] - time[k - 1];
            if (!(d > 0.0) || std::abs(d - h) > 1e-6 * std::max(1.0, h) + 1e-9 * std::abs(time[k])) {
                std::ostringstream os;
                os << "non-uniform time grid at sample " << k << " (t = " << time[k] << ")";
                fail(os.str());
            }
        }
    }
    for (std::size_t k = 0; k < n; ++k) {
        if (!valid[k]) continue;
        if (!(std::abs(voltage[k]) > 0.0) || !std::isfinite(std::abs(voltage[k]))) {
            std::ostringstream os;
            os << "invalid voltage phasor at sample " << k;
            fail(os.str());
        }
    }
}

std::size_t PhasorTrace::gap_count() const {
    return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), std::uint8_t{0}));
}

}  // namespace fosl::pmu
