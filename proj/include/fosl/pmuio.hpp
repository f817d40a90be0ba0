#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fosl/phasor_trace.hpp"

namespace fosl::pmu {

struct NoiseSpec {
    double tve = 0.0;  // fraction, 0.01 for 1 %
    double fe = 0.0;   // Hz
    std::uint64_t seed = 0;

    void validate() const;
    /// Per-quadrature standard deviation for a unit phasor.
    double sigma() const;
};

/// Adds circularly symmetric Gaussian noise to every phasor, scaled by its
/// magnitude, and Gaussian noise of std FE/3 to the frequency.
PhasorTrace add_noise(const PhasorTrace& trace, const NoiseSpec& spec);

/// 20 log10(Var[fo] / sigma_v^2); -infinity for a constant signal.
double snr_fo(const std::vector<double>& fo_signal, double sigma_v);

/// Percentile (0-100] of |noisy - clean| / |clean|.
double empirical_tve(const std::vector<Complex>& noisy, const std::vector<Complex>& clean, double percentile = 99.7);

/// Three times the RMS of |noisy - clean| / |clean|, the TVE matching
/// sigma = TVE / (3 sqrt 2) per quadrature.
double three_sigma_tve(const std::vector<Complex>& noisy, const std::vector<Complex>& clean);

struct ContestFiles {
    std::string voltage_magnitude;
    std::string voltage_angle;
    std::string current_magnitude;
    std::string current_angle;
};

struct ContestOptions {
    bool angles_in_degrees = true;
    double voltage_base_kv = 1.0;  // 1 means the magnitudes are already p.u.
    double current_base_ka = 1.0;
    double power_base_mva = 100.0;
    double nominal_frequency = 60.0;
    /// Bus column to use; empty picks the only one (or the first).
    std::string bus;
};

/// Four delimited text files with a header row and time in the first column.
/// Branch names come from the current-file headers. Frequency is derived
/// from the unwrapped voltage angle. Empty or non-numeric-NaN cells become
/// gap samples.
PhasorTrace parse_contest_dataset(const ContestFiles& files, const ContestOptions& options = {});

/// Rows of a delimited numeric table (comma, tab, semicolon or whitespace,
/// detected from the header line).
struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;  // NaN marks an empty cell
};
Table read_table(const std::string& path);
char detect_delimiter(const std::string& header_line);

/// Unified CSV: time, V_re, V_im, I_re:<branch>, I_im:<branch> ..., f, valid.
void write_csv(const PhasorTrace& trace, const std::string& path);
PhasorTrace read_csv(const std::string& path);

/// Bases and metadata written next to the CSV.
void write_sidecar(const PhasorTrace& trace, const std::string& path, const std::string& manifest_digest);
/// Applies the bases found in a sidecar onto `trace`.
void read_sidecar(const std::string& path, PhasorTrace& trace);

/// Holds every sample over the finer grid `step`; flags the trace as
/// resampled.
PhasorTrace resample_zoh(const PhasorTrace& trace, double step);

/// Writes to a temporary file next to `path`, then renames it into place.
void write_text_atomic(const std::string& path, const std::string& text);

/// Header row plus one row per sample, all columns the same length.
void write_columns(const std::string& path, const std::vector<std::string>& names,
                   const std::vector<std::vector<double>>& columns);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double x);

}  // namespace fosl::pmu
