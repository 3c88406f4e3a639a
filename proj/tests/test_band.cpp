#include <doctest.h>

#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <json.hpp>
#include <numbers>
#include <string>
#include <vector>

#include "gfmimp/band.hpp"
#include "gfmimp/csvio.hpp"
#include "gfmimp/errors.hpp"
#include "gfmimp/models.hpp"
#include "gfmimp/params.hpp"

using gfmimp::BandVerdict;
using gfmimp::ComplianceBand;
using gfmimp::ComplianceBandSet;
using gfmimp::ConverterParams;
using gfmimp::CornerOptions;
using gfmimp::GridParams;
using gfmimp::ImpedanceCurve;
using gfmimp::ModelTier;
using gfmimp::NoCornerError;
using gfmimp::TierTag;

namespace {

ConverterParams table_converter(double dp_pu = 50.0) {
  ConverterParams p;
  p.S_N = 200e3;
  p.V_N = 563.0;
  p.I_N = 236.0;
  p.f_N = 50.0;
  p.omega_N = 100.0 * std::numbers::pi;
  p.V_dc = 1300.0;
  p.J = 2546.0;
  p.D_p = dp_pu * (200e3 / (100.0 * std::numbers::pi));
  p.K_v = 4438.0;
  p.K_q = 0.01;
  p.k_pV = 0.04;
  p.k_iV = 347.0;
  p.k_pI = 1.26;
  p.k_iI = 420.0;
  p.L_f = 300e-6;
  p.P_ref = 200e3;
  p.Q_ref = 0.0;
  return p;
}

/// Synthetic curve with a prescribed real magnitude (imaginary part zero).
template <typename Fn>
ImpedanceCurve synth(const std::vector<double>& grid, Fn magnitude,
                     bool pole = true, double f_n = 50.0) {
  ImpedanceCurve c;
  c.freqs_hz = grid;
  c.values_ohm.reserve(grid.size());
  for (double f : grid) c.values_ohm.emplace_back(magnitude(f), 0.0);
  c.frame = gfmimp::CurveFrame::kPositiveSeqStationary;
  c.provenance = "synthetic";
  c.params_digest = "0000000000000000";
  c.fundamental_pole = pole;
  c.f_n_hz = f_n;
  return c;
}

ImpedanceCurve damping_curve(double dp_pu, double step) {
  const ConverterParams p = table_converter(dp_pu);
  const GridParams g = GridParams::from_scr(p, 10.0, 0.1);
  const auto op = gfmimp::OperatingPoint::rated(p);
  ModelTier tier;
  tier.tag = TierTag::kApclSimplified;
  return gfmimp::sample_curve(tier, p, g, op,
                              gfmimp::frequency_grid(30.0, 70.0, step, p.f_N));
}

ImpedanceCurve inner_loop_curve() {
  const ConverterParams p = table_converter();
  const GridParams g = GridParams::from_scr(p, 10.0, 0.1);
  const auto op = gfmimp::OperatingPoint::rated(p);
  ModelTier tier;
  tier.tag = TierTag::kCclVcl;
  return gfmimp::sample_curve(tier, p, g, op,
                              gfmimp::frequency_grid(1.0, 100.0, 0.25));
}

}  // namespace

TEST_CASE("corners: W-shaped synthetic has minima at 45 and 55") {
  const auto grid = gfmimp::frequency_grid(30.0, 70.0, 0.1, 50.0);
  const auto c = synth(grid, [](double f) { return std::abs((f - 45.0) * (f - 55.0)); });
  const auto corners = gfmimp::find_corner_frequencies(c);
  // The kink at the zero is not a parabola; the 3-point vertex lands a
  // half-millihertz inside. Both corners must agree to that scale.
  CHECK(corners.f_a_hz == doctest::Approx(45.0).epsilon(0.0005));
  CHECK(corners.f_b_hz == doctest::Approx(55.0).epsilon(0.0005));

  const auto bw = gfmimp::exclusion_bandwidth(corners.f_a_hz, corners.f_b_hz, 50.0);
  CHECK(bw.df1_hz == doctest::Approx(5.0).epsilon(0.001));
  CHECK(bw.df2_hz == doctest::Approx(5.0).epsilon(0.001));
  CHECK(bw.df_hz == std::max(bw.df1_hz, bw.df2_hz));
}

TEST_CASE("corners: adjacent-to-gap minima stay on their own side, and a "
          "valley without a peak is not an exclusion band") {
  const auto grid = gfmimp::frequency_grid(49.5, 50.5, 0.1, 50.0);
  const auto c = synth(grid, [](double f) { return std::abs(f - 50.0); });

  // The parabola window would straddle the fundamental here; the raw
  // corner finder must keep the discrete sample on its own side.
  const auto corners = gfmimp::find_corner_frequencies(c);
  CHECK(corners.f_a_hz == doctest::Approx(49.9).epsilon(1e-12));
  CHECK(corners.f_b_hz == doctest::Approx(50.1).epsilon(1e-12));

  // But nothing rises between those minima, so the index pipeline refuses
  // to report a bandwidth for this curve.
  try {
    gfmimp::band_index(c);
    FAIL("expected NoCornerError");
  } catch (const NoCornerError& e) {
    CHECK(e.side == NoCornerError::Side::kNoPeak);
  }
}

TEST_CASE("corners: monotone sides throw NoCornerError naming the side") {
  const auto grid = gfmimp::frequency_grid(30.0, 70.0, 0.1, 50.0);

  // Rising everywhere: nothing falls into a minimum below the fundamental.
  const auto rising = synth(grid, [](double f) { return f; });
  CHECK_THROWS_AS(gfmimp::find_corner_frequencies(rising), NoCornerError);
  try {
    gfmimp::find_corner_frequencies(rising);
    CHECK(false);
  } catch (const NoCornerError& e) {
    CHECK(e.side == NoCornerError::Side::kBelow);
  }

  // Single V at 45: the side above the fundamental only rises.
  const auto single_v = synth(grid, [](double f) { return std::abs(f - 45.0); });
  try {
    gfmimp::find_corner_frequencies(single_v);
    CHECK(false);
  } catch (const NoCornerError& e) {
    CHECK(e.side == NoCornerError::Side::kAbove);
  }
}

TEST_CASE("corners: inner-loop stack has no exclusion band at all") {
  const auto c = inner_loop_curve();
  try {
    gfmimp::find_corner_frequencies(c);
    CHECK(false);
  } catch (const NoCornerError& e) {
    CHECK(e.side == NoCornerError::Side::kBelow);
  }
}

TEST_CASE("corners: precondition violations are config errors") {
  // Too few samples below the fundamental.
  const auto sparse_below = gfmimp::frequency_grid(49.8, 60.0, 0.1, 50.0);
  const auto c1 = synth(sparse_below, [](double f) { return std::abs((f - 49.9) * (f - 55.0)); });
  CHECK_THROWS_AS(gfmimp::find_corner_frequencies(c1), gfmimp::ConfigError);

  // Spacing above 0.5 Hz anywhere in the grid.
  const auto coarse = gfmimp::frequency_grid(30.0, 70.0, 0.6);
  const auto c2 = synth(coarse, [](double f) { return std::abs((f - 45.0) * (f - 55.0)); });
  CHECK_THROWS_AS(gfmimp::find_corner_frequencies(c2), gfmimp::ConfigError);

  // No samples above the fundamental at all.
  const auto below_only = gfmimp::frequency_grid(30.0, 49.0, 0.1);
  const auto c3 = synth(below_only, [](double f) { return std::abs(f - 45.0); });
  CHECK_THROWS_AS(gfmimp::find_corner_frequencies(c3), gfmimp::ConfigError);
}

TEST_CASE("corners: flat valley bottoms are bridged and refined to the plateau center") {
  const auto grid = gfmimp::frequency_grid(40.0, 60.0, 0.1, 50.0);
  // Distances computed in integer tenths of a hertz so that equal plateau
  // samples are bit-identical doubles.
  const auto c = synth(grid, [](double f) {
    const long k = std::lround(f * 10.0);
    const long dist = f < 50.0 ? std::labs(k - 450) : std::labs(k - 550);
    return static_cast<double>(std::max(dist, 1L)) * 0.1;
  });
  const auto corners = gfmimp::find_corner_frequencies(c);
  // Plateau samples at 44.9/45.0/45.1 share one value; the candidate
  // nearest the fundamental wins and the parabola centers the flat spot.
  CHECK(corners.f_a_hz == doctest::Approx(45.05).epsilon(1e-6));
  CHECK(corners.f_b_hz == doctest::Approx(54.95).epsilon(1e-6));
}

TEST_CASE("corners: median prefilter suppresses single-sample spikes") {
  const auto grid = gfmimp::frequency_grid(30.0, 70.0, 0.1, 50.0);
  const auto spiky = synth(grid, [](double f) {
    const long k = std::lround(f * 10.0);
    double m = static_cast<double>(std::min(std::labs(k - 450), std::labs(k - 550))) * 0.1;
    if (k == 470) m += 5.0;
    return m;
  });

  const auto raw = gfmimp::find_corner_frequencies(spiky);
  CHECK(raw.f_a_hz > 47.0);  // the spike fakes a minimum just above itself

  CornerOptions opt;
  opt.median_prefilter = true;
  const auto filtered = gfmimp::find_corner_frequencies(spiky, opt);
  // The filter turns the V bottom into a three-sample plateau; the
  // nearest-candidate rule plus refinement centers it.
  CHECK(filtered.f_a_hz == doctest::Approx(45.05).epsilon(1e-6));
  CHECK(filtered.f_b_hz == doctest::Approx(54.95).epsilon(1e-4));

  auto r = gfmimp::band_index(spiky, opt);
  CHECK(r.method_notes.find("median_prefilter=on") != std::string::npos);
}

TEST_CASE("corners: scale invariance") {
  const auto c = damping_curve(20.0, 0.1);
  auto scaled = c;
  for (auto& v : scaled.values_ohm) v *= 1024.0;  // exact binary scaling
  const auto a = gfmimp::find_corner_frequencies(c);
  const auto b = gfmimp::find_corner_frequencies(scaled);
  CHECK(a.f_a_hz == b.f_a_hz);
  CHECK(a.f_b_hz == b.f_b_hz);
}

TEST_CASE("band index: low-damping curve reproduces frozen corners") {
  const auto r = gfmimp::band_index(damping_curve(20.0, 0.1));
  CHECK(r.f_a_hz == doctest::Approx(44.511684).epsilon(1e-4));
  CHECK(r.f_b_hz == doctest::Approx(54.433685).epsilon(1e-4));
  CHECK(r.df1_hz == doctest::Approx(5.488316).epsilon(1e-3));
  CHECK(r.df2_hz == doctest::Approx(4.433685).epsilon(1e-3));
  CHECK(r.df_hz == r.df1_hz);
  CHECK(r.f_peak_hz == doctest::Approx(49.9).epsilon(1e-9));
  CHECK(r.z_peak_ohm == doctest::Approx(19.656309).epsilon(1e-4));
  CHECK(r.method_notes.find("median_prefilter=off") != std::string::npos);
  CHECK(r.method_notes.find("refinement=parabolic3") != std::string::npos);
  CHECK(r.method_notes.find("grid_step_hz=0.1") != std::string::npos);
  CHECK(r.method_notes.find("peak_resolution_dependent=yes") != std::string::npos);
}

TEST_CASE("band index: rated-damping curve reproduces frozen corners") {
  const auto r = gfmimp::band_index(damping_curve(50.0, 0.1));
  CHECK(r.f_a_hz == doctest::Approx(44.802787).epsilon(1e-4));
  CHECK(r.f_b_hz == doctest::Approx(54.417751).epsilon(1e-4));
  CHECK(r.z_peak_ohm == doctest::Approx(7.914349).epsilon(1e-4));
}

TEST_CASE("band index: halving the grid step moves corners less than one coarse step") {
  const auto ra = gfmimp::band_index(damping_curve(20.0, 0.1));
  const auto rb = gfmimp::band_index(damping_curve(20.0, 0.05));
  CHECK(std::abs(ra.f_a_hz - rb.f_a_hz) < 0.1);
  CHECK(std::abs(ra.f_b_hz - rb.f_b_hz) < 0.1);
}

TEST_CASE("bandwidth arithmetic and ordering guard") {
  const auto bw = gfmimp::exclusion_bandwidth(41.7, 56.9, 50.0);
  CHECK(bw.df1_hz == doctest::Approx(8.3).epsilon(1e-12));
  CHECK(bw.df2_hz == doctest::Approx(6.9).epsilon(1e-12));
  CHECK(bw.df_hz == doctest::Approx(8.3).epsilon(1e-12));

  CHECK_THROWS_AS(gfmimp::exclusion_bandwidth(50.0, 56.9, 50.0), gfmimp::ConfigError);
  CHECK_THROWS_AS(gfmimp::exclusion_bandwidth(56.9, 41.7, 50.0), gfmimp::ConfigError);
  CHECK_THROWS_AS(gfmimp::exclusion_bandwidth(41.7, 50.0, 50.0), gfmimp::ConfigError);
}

TEST_CASE("peak: inclusive bounds and lower-frequency tie break") {
  const auto grid = gfmimp::frequency_grid(45.0, 55.0, 0.5, 50.0);
  // Symmetric tent around the gap: 49.5 and 50.5 tie at the top.
  const auto c = synth(grid, [](double f) { return 10.0 - std::abs(f - 50.0); });
  const auto pk = gfmimp::peak_characterize(c, 45.0, 55.0);
  CHECK(pk.f_peak_hz == doctest::Approx(49.5).epsilon(1e-12));
  CHECK(pk.z_peak_ohm == doctest::Approx(9.5).epsilon(1e-12));

  // Bounds are inclusive: shrink to exactly one sample.
  const auto one = gfmimp::peak_characterize(c, 47.0, 47.0);
  CHECK(one.f_peak_hz == doctest::Approx(47.0).epsilon(1e-12));

  CHECK_THROWS_AS(gfmimp::peak_characterize(c, 47.01, 47.49), gfmimp::ConfigError);
}

TEST_CASE("compliance presets: band edges per grid code and fundamental") {
  const auto nerc = gfmimp::compliance_preset("nerc", 50.0);
  REQUIRE(nerc.required_bands.size() == 1);
  CHECK(nerc.required_bands[0].f_lo_hz == 0.0);
  CHECK(nerc.required_bands[0].f_hi_hz == 300.0);
  CHECK(!nerc.excluded_band.has_value());

  const auto fingrid = gfmimp::compliance_preset("fingrid", 50.0);
  REQUIRE(fingrid.required_bands.size() == 2);
  CHECK(fingrid.required_bands[0].f_lo_hz == 0.0);
  CHECK(fingrid.required_bands[0].f_hi_hz == 47.0);
  CHECK(fingrid.required_bands[1].f_lo_hz == 53.0);
  CHECK(fingrid.required_bands[1].f_hi_hz == 250.0);
  REQUIRE(fingrid.excluded_band.has_value());
  CHECK(fingrid.excluded_band->f_lo_hz == 47.0);
  CHECK(fingrid.excluded_band->f_hi_hz == 53.0);

  const auto china = gfmimp::compliance_preset("china", 60.0);
  REQUIRE(china.required_bands.size() == 2);
  CHECK(china.required_bands[0].f_lo_hz == 1.0);
  CHECK(china.required_bands[0].f_hi_hz == 55.0);
  CHECK(china.required_bands[1].f_lo_hz == 65.0);
  CHECK(china.required_bands[1].f_hi_hz == 1000.0);

  const auto unifi = gfmimp::compliance_preset("unifi", 60.0);
  REQUIRE(unifi.required_bands.size() == 2);
  CHECK(unifi.required_bands[0].f_lo_hz == 20.0);
  CHECK(unifi.required_bands[0].f_hi_hz == 56.0);
  CHECK(unifi.required_bands[1].f_lo_hz == 64.0);
  CHECK(unifi.required_bands[1].f_hi_hz == 100.0);

  CHECK_THROWS_AS(gfmimp::compliance_preset("nope", 50.0), gfmimp::ConfigError);
  CHECK_THROWS_AS(gfmimp::compliance_preset("nerc", 55.0), gfmimp::ConfigError);
}

TEST_CASE("compliance band sets validate ordering and bounds") {
  ComplianceBandSet s;
  s.name = "custom";
  CHECK_THROWS_AS(s.validate(), gfmimp::ConfigError);  // empty

  s.required_bands = {{10.0, 5.0}};
  CHECK_THROWS_AS(s.validate(), gfmimp::ConfigError);  // lo >= hi

  s.required_bands = {{10.0, 20.0}, {15.0, 30.0}};
  CHECK_THROWS_AS(s.validate(), gfmimp::ConfigError);  // overlap

  s.required_bands = {{10.0, 20.0}, {25.0, 30.0}};
  CHECK_NOTHROW(s.validate());
}

TEST_CASE("compliance: passive curve passes with untested edges recorded") {
  const auto c = inner_loop_curve();  // samples 1..100 Hz, Re >= 0 throughout
  const auto results = gfmimp::compliance_check(c, gfmimp::compliance_preset("nerc", 50.0));
  REQUIRE(results.size() == 1);
  const auto& r = results[0];
  CHECK(r.verdict == BandVerdict::kPass);
  CHECK(!r.first_violation_hz.has_value());
  CHECK(r.samples_checked == c.size());
  REQUIRE(r.untested_subranges.size() == 2);
  CHECK(r.untested_subranges[0].f_lo_hz == 0.0);
  CHECK(r.untested_subranges[0].f_hi_hz == doctest::Approx(1.0));
  CHECK(r.untested_subranges[1].f_lo_hz == doctest::Approx(100.0));
  CHECK(r.untested_subranges[1].f_hi_hz == 300.0);
}

TEST_CASE("compliance: negative-real region fails with the first violating frequency") {
  const auto grid = gfmimp::frequency_grid(1.0, 100.0, 0.1);
  ImpedanceCurve c;
  c.freqs_hz = grid;
  for (double f : grid)
    c.values_ohm.emplace_back(std::abs(f - 50.0) < 2.0 ? -1.0 : 1.0, 0.5);
  c.frame = gfmimp::CurveFrame::kPositiveSeqStationary;
  c.provenance = "synthetic";
  c.params_digest = "0000000000000000";
  c.fundamental_pole = false;
  c.f_n_hz = 50.0;

  const auto nerc = gfmimp::compliance_check(c, gfmimp::compliance_preset("nerc", 50.0));
  REQUIRE(nerc.size() == 1);
  CHECK(nerc[0].verdict == BandVerdict::kFail);
  REQUIRE(nerc[0].first_violation_hz.has_value());
  CHECK(*nerc[0].first_violation_hz == doctest::Approx(48.1).epsilon(1e-9));

  // The same curve passes a code that excludes the fundamental region.
  const auto china = gfmimp::compliance_check(c, gfmimp::compliance_preset("china", 50.0));
  REQUIRE(china.size() == 2);
  CHECK(china[0].verdict == BandVerdict::kPass);
  CHECK(china[1].verdict == BandVerdict::kPass);
  CHECK(china[0].untested_subranges.empty());
  REQUIRE(china[1].untested_subranges.size() == 1);
  CHECK(china[1].untested_subranges[0].f_lo_hz == doctest::Approx(100.0));
  CHECK(china[1].untested_subranges[0].f_hi_hz == 1000.0);
}

TEST_CASE("compliance: simplified outer-loop model is non-passive near the fundamental") {
  const auto c = damping_curve(50.0, 0.1);  // rated damping, 30..70 Hz
  const auto r = gfmimp::band_index(c);
  bool negative_inside = false;
  for (std::size_t i = 0; i < c.size(); ++i) {
    const double f = c.freqs_hz[i];
    if (f > r.f_a_hz && f < r.f_b_hz && c.values_ohm[i].real() < 0.0) {
      negative_inside = true;
      break;
    }
  }
  CHECK(negative_inside);

  const auto results = gfmimp::compliance_check(c, gfmimp::compliance_preset("nerc", 50.0));
  CHECK(results[0].verdict == BandVerdict::kFail);
}

TEST_CASE("compliance: bands with no samples stay untested, never failed") {
  const auto c = inner_loop_curve();

  ComplianceBandSet s;
  s.name = "custom";
  s.required_bands = {{200.0, 300.0}};
  const auto res = gfmimp::compliance_check(c, s);
  REQUIRE(res.size() == 1);
  CHECK(res[0].verdict == BandVerdict::kUntested);
  CHECK(res[0].samples_checked == 0);
  REQUIRE(res[0].untested_subranges.size() == 1);
  CHECK(res[0].untested_subranges[0].f_lo_hz == 200.0);
  CHECK(res[0].untested_subranges[0].f_hi_hz == 300.0);

  // A band fully shadowed by the exclusion window is untested too.
  ComplianceBandSet shadowed;
  shadowed.name = "custom";
  shadowed.required_bands = {{49.0, 51.0}};
  shadowed.excluded_band = ComplianceBand{45.0, 55.0};
  const auto res2 = gfmimp::compliance_check(c, shadowed);
  CHECK(res2[0].verdict == BandVerdict::kUntested);
  CHECK(res2[0].samples_checked == 0);
}

TEST_CASE("ingest: exported curve round-trips through CSV with identical corners") {
  const auto c = damping_curve(20.0, 0.1);
  const std::string dir = "band_test_out";
  const std::string path = dir + "/curve.csv";
  gfmimp::write_curve_csv(c, path);

  const auto back = gfmimp::ingest_measured_curve(path, 50.0);
  CHECK(back.provenance == "measured:" + path);
  CHECK(back.size() == c.size());

  const auto ra = gfmimp::band_index(c);
  const auto rb = gfmimp::band_index(back);
  CHECK(ra.f_a_hz == rb.f_a_hz);  // shortest-round-trip text is lossless
  CHECK(ra.f_b_hz == rb.f_b_hz);
  CHECK(ra.df_hz == rb.df_hz);
  CHECK(ra.z_peak_ohm == rb.z_peak_ohm);

  std::filesystem::remove_all(dir);
}

TEST_CASE("ingest: non-finite rows are rejected with their line number") {
  const std::string dir = "band_test_out";
  const std::string path = dir + "/bad.csv";
  gfmimp::write_text_file(path,
                          "freq_hz,re_ohm,im_ohm,mag_ohm,phase_deg\n"
                          "49.0,1.0,0.0,1.0,0.0\n"
                          "49.5,nan,0.0,1.0,0.0\n");
  try {
    gfmimp::ingest_measured_curve(path, 50.0);
    CHECK(false);
  } catch (const gfmimp::CsvFormatError& e) {
    CHECK(e.line == 3);
  }

  gfmimp::write_text_file(path,
                          "freq_hz,re_ohm,im_ohm\n"
                          "49.0,1.0,inf\n");
  try {
    gfmimp::ingest_measured_curve(path, 50.0);
    CHECK(false);
  } catch (const gfmimp::CsvFormatError& e) {
    CHECK(e.line == 2);
  }

  std::filesystem::remove_all(dir);
}

TEST_CASE("reports: JSON carries the index fields and curve identity") {
  const auto c = damping_curve(20.0, 0.1);
  const auto r = gfmimp::band_index(c);
  const auto j = nlohmann::json::parse(gfmimp::band_report_json(r, c));
  CHECK(j["f_a_hz"].get<double>() == doctest::Approx(r.f_a_hz));
  CHECK(j["f_b_hz"].get<double>() == doctest::Approx(r.f_b_hz));
  CHECK(j["df1_hz"].get<double>() == doctest::Approx(r.df1_hz));
  CHECK(j["df2_hz"].get<double>() == doctest::Approx(r.df2_hz));
  CHECK(j["df_hz"].get<double>() == doctest::Approx(r.df_hz));
  CHECK(j["f_peak_hz"].get<double>() == doctest::Approx(r.f_peak_hz));
  CHECK(j["z_peak_ohm"].get<double>() == doctest::Approx(r.z_peak_ohm));
  CHECK(j["method_notes"].get<std::string>() == r.method_notes);
  CHECK(j["curve"]["provenance"].get<std::string>() == "apcl");
  CHECK(j["curve"]["params_digest"].get<std::string>().size() == 16);
  CHECK(j["curve"]["n_points"].get<std::size_t>() == c.size());

  const auto text = gfmimp::band_report_text(r, c);
  CHECK(text.find("f_a = ") != std::string::npos);
  CHECK(text.find("f_b = ") != std::string::npos);
  CHECK(text.find("df = ") != std::string::npos);
  CHECK(text.find("method: ") != std::string::npos);
}

TEST_CASE("reports: compliance JSON carries verdicts and overall outcome") {
  const auto pass_curve = inner_loop_curve();
  const auto set = gfmimp::compliance_preset("nerc", 50.0);
  const auto ok = gfmimp::compliance_check(pass_curve, set);
  const auto jp = nlohmann::json::parse(gfmimp::compliance_report_json(ok, set, pass_curve));
  CHECK(jp["preset"].get<std::string>() == "nerc");
  CHECK(jp["overall"].get<std::string>() == "pass");
  REQUIRE(jp["bands"].size() == 1);
  CHECK(jp["bands"][0]["verdict"].get<std::string>() == "pass");
  CHECK(jp["bands"][0]["untested_subranges_hz"].size() == 2);

  const auto fail_curve = damping_curve(50.0, 0.1);
  const auto bad = gfmimp::compliance_check(fail_curve, set);
  const auto jf = nlohmann::json::parse(gfmimp::compliance_report_json(bad, set, fail_curve));
  CHECK(jf["overall"].get<std::string>() == "fail");
  CHECK(jf["bands"][0]["verdict"].get<std::string>() == "fail");
  CHECK(jf["bands"][0]["first_violation_hz"].is_number());

  const auto text = gfmimp::compliance_report_text(bad, set, fail_curve);
  CHECK(text.find("fail") != std::string::npos);
}
