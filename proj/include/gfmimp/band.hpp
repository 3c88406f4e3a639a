#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gfmimp/models.hpp"

namespace gfmimp {

/// Exclusion-band report around the fundamental: corner frequencies where
/// the magnitude slope turns from falling to rising, the bandwidths they
/// span, and the in-band peak.
struct BandIndexReport {
  double f_a_hz = 0.0;    ///< corner below the fundamental
  double f_b_hz = 0.0;    ///< corner above the fundamental
  double df1_hz = 0.0;    ///< f_N - f_a
  double df2_hz = 0.0;    ///< f_b - f_N
  double df_hz = 0.0;     ///< max(df1, df2)
  double f_peak_hz = 0.0; ///< frequency of the sampled in-band maximum
  double z_peak_ohm = 0.0;
  std::string method_notes;
};

struct Corners {
  double f_a_hz = 0.0;
  double f_b_hz = 0.0;
};

struct CornerOptions {
  /// 3-point median prefilter for noisy measured curves; off by default
  /// and recorded in method_notes when on.
  bool median_prefilter = false;
};

/// Locates the magnitude minima nearest the fundamental on each side.
/// The discrete slope test requires a strictly negative first difference
/// before the candidate and a strictly positive one after; zero
/// differences are bridged by looking outward up to 3 samples. Candidates
/// nearest the fundamental win; each winner is refined by a 3-point
/// parabola (falling back to the discrete sample when curvature is not
/// convex). Pre: at least 5 samples on each side of f_N and adjacent
/// spacing at most 0.5 Hz. Throws NoCornerError naming the failing side.
Corners find_corner_frequencies(const ImpedanceCurve& curve,
                                const CornerOptions& opt = {});

struct Bandwidth {
  double df1_hz = 0.0;
  double df2_hz = 0.0;
  double df_hz = 0.0;
};

/// df1 = f_N - f_a, df2 = f_b - f_N, df = max. Throws ConfigError unless
/// f_a < f_N < f_b.
Bandwidth exclusion_bandwidth(double f_a_hz, double f_b_hz, double f_n_hz);

struct Peak {
  double f_peak_hz = 0.0;
  double z_peak_ohm = 0.0;
};

/// Maximum sampled magnitude on [f_a, f_b] and where it sits. Ties pick
/// the lower frequency. The value is resolution-dependent for models with
/// a fundamental pole; that caveat travels in the report notes.
Peak peak_characterize(const ImpedanceCurve& curve, double f_a_hz, double f_b_hz);

/// Full pipeline: corners, bandwidths, peak, and method notes.
BandIndexReport band_index(const ImpedanceCurve& curve, const CornerOptions& opt = {});

struct ComplianceBand {
  double f_lo_hz = 0.0;
  double f_hi_hz = 0.0;
};

struct ComplianceBandSet {
  std::string name;
  /// Bands where Re{Z} >= 0 is required; non-overlapping, ascending.
  std::vector<ComplianceBand> required_bands;
  /// Frequencies inside this band are exempt from the requirement.
  std::optional<ComplianceBand> excluded_band;
  void validate() const;
};

/// Bundled grid-code presets: "nerc" (0-300 Hz, no exclusion), "fingrid"
/// (up to 250 Hz, fundamental +/- 3 Hz excluded), "china" (1-1000 Hz,
/// +/- 5 Hz excluded), "unifi" (fundamental +/- 40 Hz, +/- 4 Hz
/// excluded). The fundamental is configurable (50 or 60 Hz).
ComplianceBandSet compliance_preset(const std::string& name, double f_n_hz);

enum class BandVerdict { kPass, kFail, kUntested };

struct ComplianceResult {
  ComplianceBand band;
  BandVerdict verdict = BandVerdict::kUntested;
  std::optional<double> first_violation_hz;
  /// Edge sub-ranges of the band the curve does not cover. Verdicts are
  /// sample-based: nothing is interpolated or certified between samples.
  std::vector<ComplianceBand> untested_subranges;
  std::size_t samples_checked = 0;
};

/// Per-band verdicts: pass when Re{Z} >= 0 at every covered sample, fail
/// with the first violating frequency otherwise, untested when the curve
/// has no samples in the band. Uncovered edges are reported, never failed.
std::vector<ComplianceResult> compliance_check(const ImpedanceCurve& curve,
                                               const ComplianceBandSet& bands);

/// Reads an externally measured curve table (same format the exporters
/// write); provenance becomes "measured:<path>".
ImpedanceCurve ingest_measured_curve(const std::string& path, double f_n_hz);

std::string band_report_json(const BandIndexReport& r, const ImpedanceCurve& curve);
std::string band_report_text(const BandIndexReport& r, const ImpedanceCurve& curve);
std::string compliance_report_json(const std::vector<ComplianceResult>& results,
                                   const ComplianceBandSet& set,
                                   const ImpedanceCurve& curve);
std::string compliance_report_text(const std::vector<ComplianceResult>& results,
                                   const ComplianceBandSet& set,
                                   const ImpedanceCurve& curve);

}  // namespace gfmimp
