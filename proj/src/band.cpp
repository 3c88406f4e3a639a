#include "gfmimp/band.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <limits>
#include <sstream>

#include "gfmimp/csvio.hpp"
#include "gfmimp/errors.hpp"

namespace gfmimp {

namespace {

std::vector<double> magnitudes(const ImpedanceCurve& c, bool median_prefilter) {
  std::vector<double> m(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) m[i] = std::abs(c.values_ohm[i]);
  if (!median_prefilter || m.size() < 3) return m;
  std::vector<double> out = m;
  for (std::size_t i = 1; i + 1 < m.size(); ++i) {
    double a = m[i - 1], b = m[i], d = m[i + 1];
    // median of three
    out[i] = std::max(std::min(a, b), std::min(std::max(a, b), d));
  }
  return out;
}

/// Sign of the first difference at index i (m[i+1] - m[i]), bridging zero
/// differences by looking outward up to `reach` further differences in the
/// same direction. Returns -1, 0, or +1.
int bridged_sign(const std::vector<double>& m, std::ptrdiff_t i, int direction,
                 int reach) {
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(m.size());
  for (int hop = 0; hop <= reach; ++hop) {
    const std::ptrdiff_t k = i + direction * hop;
    if (k < 0 || k + 1 >= n) return 0;
    const double d = m[static_cast<std::size_t>(k + 1)] - m[static_cast<std::size_t>(k)];
    if (d < 0.0) return -1;
    if (d > 0.0) return +1;
  }
  return 0;
}

bool is_corner(const std::vector<double>& m, std::ptrdiff_t k) {
  if (k < 1 || k + 1 > static_cast<std::ptrdiff_t>(m.size()) - 1) return false;
  // Falling into the sample, rising out of it; plateaus bridged outward.
  return bridged_sign(m, k - 1, -1, 3) < 0 && bridged_sign(m, k, +1, 3) > 0;
}

/// Vertex of the parabola through three (f, m) samples; falls back to the
/// middle sample when the points are not convex or when the window would
/// straddle the fundamental (the true curve may have a pole in between,
/// and a corner must stay strictly on its own side).
double parabolic_refine(const ImpedanceCurve& c, const std::vector<double>& m,
                        std::size_t k) {
  if (k == 0 || k + 1 >= c.size()) return c.freqs_hz[k];
  const double x0 = c.freqs_hz[k - 1], x1 = c.freqs_hz[k], x2 = c.freqs_hz[k + 1];
  if ((x0 - c.f_n_hz) * (x2 - c.f_n_hz) < 0.0) return x1;
  const double y0 = m[k - 1], y1 = m[k], y2 = m[k + 1];
  const double d01 = x1 - x0, d12 = x1 - x2;
  const double num = d01 * d01 * (y1 - y2) - d12 * d12 * (y1 - y0);
  const double den = d01 * (y1 - y2) - d12 * (y1 - y0);
  if (den >= 0.0) return x1;  // not convex around the sample
  const double vertex = x1 - 0.5 * num / den;
  return std::clamp(vertex, x0, x2);
}

}  // namespace

Corners find_corner_frequencies(const ImpedanceCurve& curve, const CornerOptions& opt) {
  curve.validate();
  const double f_n = curve.f_n_hz;
  if (!(f_n > 0.0)) throw ConfigError("curve carries no fundamental frequency");

  std::size_t below = 0, above = 0;
  bool has_below = false;
  for (std::size_t i = 0; i < curve.size(); ++i) {
    if (curve.freqs_hz[i] < f_n) {
      below = i;
      has_below = true;
    } else if (curve.freqs_hz[i] > f_n) {
      above = i;
      break;
    }
  }
  if (!has_below || above == 0)
    throw ConfigError("curve must bracket the fundamental on both sides");
  if (below + 1 < 5 || curve.size() - above < 5)
    throw ConfigError("need at least 5 samples on each side of the fundamental");
  for (std::size_t i = 1; i < curve.size(); ++i) {
    if (curve.freqs_hz[i] - curve.freqs_hz[i - 1] > 0.5 + 1e-9)
      throw ConfigError("adjacent frequency spacing exceeds 0.5 Hz");
  }

  const std::vector<double> m = magnitudes(curve, opt.median_prefilter);

  // Below side: walk away from the fundamental; the first corner found is
  // the one nearest it.
  std::optional<std::size_t> k_below;
  for (std::ptrdiff_t k = static_cast<std::ptrdiff_t>(below); k >= 1; --k) {
    if (is_corner(m, k)) {
      k_below = static_cast<std::size_t>(k);
      break;
    }
  }
  if (!k_below)
    throw NoCornerError("no corner detected below the fundamental",
                        NoCornerError::Side::kBelow);

  std::optional<std::size_t> k_above;
  for (std::size_t k = above; k + 1 < curve.size(); ++k) {
    if (is_corner(m, static_cast<std::ptrdiff_t>(k))) {
      k_above = k;
      break;
    }
  }
  if (!k_above)
    throw NoCornerError("no corner detected above the fundamental",
                        NoCornerError::Side::kAbove);

  Corners c;
  c.f_a_hz = parabolic_refine(curve, m, *k_below);
  c.f_b_hz = parabolic_refine(curve, m, *k_above);
  return c;
}

Bandwidth exclusion_bandwidth(double f_a_hz, double f_b_hz, double f_n_hz) {
  if (!(f_a_hz < f_n_hz && f_n_hz < f_b_hz))
    throw ConfigError("corner frequencies must straddle the fundamental");
  Bandwidth b;
  b.df1_hz = f_n_hz - f_a_hz;
  b.df2_hz = f_b_hz - f_n_hz;
  b.df_hz = std::max(b.df1_hz, b.df2_hz);
  return b;
}

Peak peak_characterize(const ImpedanceCurve& curve, double f_a_hz, double f_b_hz) {
  Peak best;
  bool found = false;
  for (std::size_t i = 0; i < curve.size(); ++i) {
    const double f = curve.freqs_hz[i];
    if (f < f_a_hz || f > f_b_hz) continue;
    const double mag = std::abs(curve.values_ohm[i]);
    if (!found || mag > best.z_peak_ohm) {
      best.f_peak_hz = f;
      best.z_peak_ohm = mag;
      found = true;
    }
  }
  if (!found) throw ConfigError("no samples between the corner frequencies");
  return best;
}

BandIndexReport band_index(const ImpedanceCurve& curve, const CornerOptions& opt) {
  const Corners c = find_corner_frequencies(curve, opt);
  const Bandwidth b = exclusion_bandwidth(c.f_a_hz, c.f_b_hz, curve.f_n_hz);
  const Peak p = peak_characterize(curve, c.f_a_hz, c.f_b_hz);

  // The corners are the minima bracketing the fundamental-frequency rise.
  // When the magnitude between them never climbs clearly above them (a
  // closed-loop null instead of a peak, as with inner loops alone), there
  // is no exclusion band to report.
  auto mag_nearest = [&](double f) {
    std::size_t best = 0;
    double dist = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < curve.size(); ++i) {
      const double d = std::abs(curve.freqs_hz[i] - f);
      if (d < dist) {
        dist = d;
        best = i;
      }
    }
    return std::abs(curve.values_ohm[best]);
  };
  const double corner_mag = std::max(mag_nearest(c.f_a_hz), mag_nearest(c.f_b_hz));
  if (!(p.z_peak_ohm > 2.0 * corner_mag))
    throw NoCornerError(
        "no impedance peak rises between the bracketing minima; without an "
        "outer power loop the curve has no fundamental-frequency exclusion band",
        NoCornerError::Side::kNoPeak);

  // Grid resolution near the fundamental, for the notes.
  double step = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t i = 1; i < curve.size(); ++i) {
    if (curve.freqs_hz[i] > curve.f_n_hz) break;
    step = curve.freqs_hz[i] - curve.freqs_hz[i - 1];
  }

  BandIndexReport r;
  r.f_a_hz = c.f_a_hz;
  r.f_b_hz = c.f_b_hz;
  r.df1_hz = b.df1_hz;
  r.df2_hz = b.df2_hz;
  r.df_hz = b.df_hz;
  r.f_peak_hz = p.f_peak_hz;
  r.z_peak_ohm = p.z_peak_ohm;
  std::ostringstream notes;
  notes << "grid_step_hz=" << format_double(step)
        << ";median_prefilter=" << (opt.median_prefilter ? "on" : "off")
        << ";refinement=parabolic3;peak_resolution_dependent="
        << (curve.fundamental_pole ? "yes" : "no");
  r.method_notes = notes.str();
  return r;
}

void ComplianceBandSet::validate() const {
  if (required_bands.empty()) throw ConfigError("compliance set has no bands");
  double prev_hi = -std::numeric_limits<double>::infinity();
  for (const auto& b : required_bands) {
    if (!(b.f_lo_hz < b.f_hi_hz)) throw ConfigError("compliance band is empty");
    if (b.f_lo_hz < prev_hi) throw ConfigError("compliance bands overlap or are unsorted");
    prev_hi = b.f_hi_hz;
  }
  if (excluded_band && !(excluded_band->f_lo_hz < excluded_band->f_hi_hz))
    throw ConfigError("excluded band is empty");
}

ComplianceBandSet compliance_preset(const std::string& name, double f_n_hz) {
  if (f_n_hz != 50.0 && f_n_hz != 60.0)
    throw ConfigError("presets are defined for 50 or 60 Hz fundamentals");
  ComplianceBandSet s;
  s.name = name;
  if (name == "nerc") {
    s.required_bands = {{0.0, 300.0}};
  } else if (name == "fingrid") {
    s.required_bands = {{0.0, f_n_hz - 3.0}, {f_n_hz + 3.0, 250.0}};
    s.excluded_band = ComplianceBand{f_n_hz - 3.0, f_n_hz + 3.0};
  } else if (name == "china") {
    s.required_bands = {{1.0, f_n_hz - 5.0}, {f_n_hz + 5.0, 1000.0}};
    s.excluded_band = ComplianceBand{f_n_hz - 5.0, f_n_hz + 5.0};
  } else if (name == "unifi") {
    s.required_bands = {{f_n_hz - 40.0, f_n_hz - 4.0}, {f_n_hz + 4.0, f_n_hz + 40.0}};
    s.excluded_band = ComplianceBand{f_n_hz - 4.0, f_n_hz + 4.0};
  } else {
    throw ConfigError("unknown compliance preset '" + name +
                      "' (expected nerc, fingrid, china, or unifi)");
  }
  s.validate();
  return s;
}

std::vector<ComplianceResult> compliance_check(const ImpedanceCurve& curve,
                                               const ComplianceBandSet& bands) {
  curve.validate();
  bands.validate();
  std::vector<ComplianceResult> out;
  for (const auto& band : bands.required_bands) {
    ComplianceResult r;
    r.band = band;
    double first_covered = 0.0, last_covered = 0.0;
    bool any = false;
    for (std::size_t i = 0; i < curve.size(); ++i) {
      const double f = curve.freqs_hz[i];
      if (f < band.f_lo_hz || f > band.f_hi_hz) continue;
      if (bands.excluded_band && f > bands.excluded_band->f_lo_hz &&
          f < bands.excluded_band->f_hi_hz)
        continue;
      if (!any) first_covered = f;
      last_covered = f;
      any = true;
      ++r.samples_checked;
      if (curve.values_ohm[i].real() < 0.0 && !r.first_violation_hz)
        r.first_violation_hz = f;
    }
    if (!any) {
      r.verdict = BandVerdict::kUntested;
      r.untested_subranges.push_back(band);
    } else {
      r.verdict = r.first_violation_hz ? BandVerdict::kFail : BandVerdict::kPass;
      if (first_covered > band.f_lo_hz)
        r.untested_subranges.push_back({band.f_lo_hz, first_covered});
      if (last_covered < band.f_hi_hz)
        r.untested_subranges.push_back({last_covered, band.f_hi_hz});
    }
    out.push_back(std::move(r));
  }
  return out;
}

ImpedanceCurve ingest_measured_curve(const std::string& path, double f_n_hz) {
  ImpedanceCurve c = read_curve_csv(path, f_n_hz);
  c.provenance = "measured:" + path;
  return c;
}

namespace {
const char* verdict_name(BandVerdict v) {
  switch (v) {
    case BandVerdict::kPass:
      return "pass";
    case BandVerdict::kFail:
      return "fail";
    case BandVerdict::kUntested:
      return "untested";
  }
  return "?";
}

nlohmann::ordered_json curve_meta(const ImpedanceCurve& c) {
  nlohmann::ordered_json j;
  j["provenance"] = c.provenance;
  j["params_digest"] = c.params_digest;
  j["n_points"] = c.size();
  j["f_n_hz"] = c.f_n_hz;
  return j;
}
}  // namespace

std::string band_report_json(const BandIndexReport& r, const ImpedanceCurve& curve) {
  nlohmann::ordered_json j;
  j["f_a_hz"] = r.f_a_hz;
  j["f_b_hz"] = r.f_b_hz;
  j["df1_hz"] = r.df1_hz;
  j["df2_hz"] = r.df2_hz;
  j["df_hz"] = r.df_hz;
  j["f_peak_hz"] = r.f_peak_hz;
  j["z_peak_ohm"] = r.z_peak_ohm;
  j["method_notes"] = r.method_notes;
  j["curve"] = curve_meta(curve);
  return j.dump(2) + "\n";
}

std::string band_report_text(const BandIndexReport& r, const ImpedanceCurve& curve) {
  std::ostringstream ss;
  ss << "exclusion band around " << format_double(curve.f_n_hz) << " Hz ("
     << curve.provenance << ")\n"
     << "  f_a = " << format_double(r.f_a_hz) << " Hz, f_b = " << format_double(r.f_b_hz)
     << " Hz\n"
     << "  df1 = " << format_double(r.df1_hz) << " Hz, df2 = " << format_double(r.df2_hz)
     << " Hz, df = " << format_double(r.df_hz) << " Hz\n"
     << "  peak |Z| = " << format_double(r.z_peak_ohm) << " ohm at "
     << format_double(r.f_peak_hz) << " Hz\n"
     << "  method: " << r.method_notes << "\n";
  return ss.str();
}

std::string compliance_report_json(const std::vector<ComplianceResult>& results,
                                   const ComplianceBandSet& set,
                                   const ImpedanceCurve& curve) {
  nlohmann::ordered_json j;
  j["preset"] = set.name;
  if (set.excluded_band) {
    j["excluded_band_hz"] = {set.excluded_band->f_lo_hz, set.excluded_band->f_hi_hz};
  } else {
    j["excluded_band_hz"] = nullptr;
  }
  j["bands"] = nlohmann::ordered_json::array();
  bool any_fail = false;
  for (const auto& r : results) {
    nlohmann::ordered_json b;
    b["f_lo_hz"] = r.band.f_lo_hz;
    b["f_hi_hz"] = r.band.f_hi_hz;
    b["verdict"] = verdict_name(r.verdict);
    b["samples_checked"] = r.samples_checked;
    if (r.first_violation_hz)
      b["first_violation_hz"] = *r.first_violation_hz;
    else
      b["first_violation_hz"] = nullptr;
    b["untested_subranges_hz"] = nlohmann::ordered_json::array();
    for (const auto& u : r.untested_subranges)
      b["untested_subranges_hz"].push_back({u.f_lo_hz, u.f_hi_hz});
    j["bands"].push_back(std::move(b));
    any_fail = any_fail || r.verdict == BandVerdict::kFail;
  }
  j["overall"] = any_fail ? "fail" : "pass";
  j["curve"] = curve_meta(curve);
  return j.dump(2) + "\n";
}

std::string compliance_report_text(const std::vector<ComplianceResult>& results,
                                   const ComplianceBandSet& set,
                                   const ImpedanceCurve& curve) {
  std::ostringstream ss;
  ss << "compliance preset '" << set.name << "' vs " << curve.provenance << "\n";
  bool any_fail = false;
  for (const auto& r : results) {
    ss << "  [" << format_double(r.band.f_lo_hz) << ", " << format_double(r.band.f_hi_hz)
       << "] Hz: " << verdict_name(r.verdict) << " (" << r.samples_checked << " samples";
    if (r.first_violation_hz)
      ss << ", first violation at " << format_double(*r.first_violation_hz) << " Hz";
    for (const auto& u : r.untested_subranges)
      ss << ", untested [" << format_double(u.f_lo_hz) << ", " << format_double(u.f_hi_hz)
         << "]";
    ss << ")\n";
    any_fail = any_fail || r.verdict == BandVerdict::kFail;
  }
  ss << "overall: " << (any_fail ? "fail" : "pass") << "\n";
  return ss.str();
}

}  // namespace gfmimp
