#include "gfmimp/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "gfmimp/errors.hpp"

namespace gfmimp {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Millihertz lattice conversion with an exactness guard.
long long to_millihertz(double hz, const char* what) {
  const double scaled = hz * 1000.0;
  const double rounded = std::nearbyint(scaled);
  if (std::abs(scaled - rounded) > 1e-6 * std::max(1.0, std::abs(scaled)))
    throw ConfigError(std::string(what) +
                      " must align to a 1 mHz lattice (got " + std::to_string(hz) + " Hz)");
  return static_cast<long long>(rounded);
}
}  // namespace

std::string tier_name(TierTag tag) {
  switch (tag) {
    case TierTag::kCclOnly:
      return "ccl";
    case TierTag::kCclVcl:
      return "vcl";
    case TierTag::kApclSimplified:
      return "apcl";
    case TierTag::kFullNumeric:
      return "full";
  }
  throw ModelError("unknown tier tag");
}

TierTag tier_from_name(const std::string& name) {
  if (name == "ccl") return TierTag::kCclOnly;
  if (name == "vcl") return TierTag::kCclVcl;
  if (name == "apcl") return TierTag::kApclSimplified;
  if (name == "full") return TierTag::kFullNumeric;
  throw ConfigError("unknown tier '" + name + "' (expected ccl, vcl, apcl, or full)");
}

void ImpedanceCurve::validate() const {
  if (freqs_hz.size() != values_ohm.size())
    throw ModelError("curve frequency and value arrays differ in length");
  for (std::size_t i = 1; i < freqs_hz.size(); ++i)
    if (!(freqs_hz[i] > freqs_hz[i - 1]))
      throw ModelError("curve frequencies must be strictly increasing");
  if (fundamental_pole && frame == CurveFrame::kPositiveSeqStationary) {
    for (double f : freqs_hz)
      if (std::abs(f - f_n_hz) < 5e-4)
        throw ModelError("curve with a fundamental pole samples the fundamental itself");
  }
}

RationalTF ccl_impedance(const ConverterParams& p) {
  const RationalTF z_f = RationalTF::s() * RationalTF::constant(p.L_f);
  if (p.k_iI == 0.0) return z_f + RationalTF::constant(p.k_pI);
  return z_f + RationalTF::constant(p.k_pI) +
         RationalTF::constant(p.k_iI) / RationalTF::s();
}

namespace {
RationalTF current_loop_pi(const ConverterParams& p) {
  // (k_pI s + k_iI) / s
  return RationalTF(Polynomial({p.k_iI, p.k_pI}), Polynomial({0.0, 1.0}));
}
RationalTF voltage_loop_pi(const ConverterParams& p) {
  return RationalTF(Polynomial({p.k_iV, p.k_pV}), Polynomial({0.0, 1.0}));
}
}  // namespace

RationalTF vcl_impedance(const ConverterParams& p) {
  const RationalTF z_open = ccl_impedance(p);
  const RationalTF loop = voltage_loop_pi(p) * current_loop_pi(p);
  // (Z_f + G_I) / (1 + G_V G_I); the two PI denominators contribute a
  // shared s^2 factor that the explicit reduction cancels.
  return (z_open / (RationalTF::one() + loop)).reduced();
}

RationalTF apcl_gain(const ConverterParams& p, bool inertia_enabled) {
  const double j_eff = inertia_enabled ? p.J : 0.0;
  return RationalTF::one() /
         (RationalTF::s() * RationalTF(Polynomial({p.D_p, j_eff}), Polynomial::one()));
}

RationalTF voltage_tracking_closed_loop(const ConverterParams& p) {
  const RationalTF loop = voltage_loop_pi(p) * current_loop_pi(p);
  return (loop / (RationalTF::one() + loop)).reduced();
}

TFMatrix2x2 apcl_simplified_matrix(const ConverterParams& p, bool inertia_enabled,
                                   const std::optional<SSOPMatrices>& b_override) {
  const double b21 = b_override ? b_override->B_Vo_v[1][0] : p.V_N * p.V_N;
  TFMatrix2x2 m = TFMatrix2x2::diagonal(vcl_impedance(p));
  m(1, 0) = (RationalTF::constant(b21) * apcl_gain(p, inertia_enabled) *
             voltage_tracking_closed_loop(p))
                .reduced();
  return m;
}

Complex combine_positive_sequence(const DqMatrix& m) {
  return 0.5 * (m[0][0] + m[1][1]) + Complex(0.0, 0.5) * (m[1][0] - m[0][1]);
}

Complex dq_to_positive_sequence(const RationalTF& z, double f_hz, double f_n_hz) {
  const Complex s(0.0, kTwoPi * (f_hz - f_n_hz));
  return z.eval(s);
}

Complex dq_to_positive_sequence(const TFMatrix2x2& m, double f_hz, double f_n_hz) {
  const Complex s(0.0, kTwoPi * (f_hz - f_n_hz));
  DqMatrix vals;
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 2; ++c)
      vals[r][c] = m(r, c).is_zero() ? Complex(0.0, 0.0) : m(r, c).eval(s);
  return combine_positive_sequence(vals);
}

std::vector<double> frequency_grid(double start_hz, double stop_hz, double step_hz,
                                   std::optional<double> exclude_hz) {
  if (!(step_hz > 0.0)) throw ConfigError("frequency step must be positive");
  if (step_hz < 0.001 - 1e-12) throw ConfigError("frequency step must be at least 1 mHz");
  if (!(stop_hz >= start_hz)) throw ConfigError("frequency range is empty (stop < start)");
  const long long start_m = to_millihertz(start_hz, "grid start");
  const long long stop_m = to_millihertz(stop_hz, "grid stop");
  const long long step_m = to_millihertz(step_hz, "grid step");
  const long long excl_m =
      exclude_hz ? to_millihertz(*exclude_hz, "grid exclusion") : std::numeric_limits<long long>::min();
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>((stop_m - start_m) / step_m) + 1);
  for (long long f = start_m; f <= stop_m; f += step_m) {
    if (f == excl_m) continue;
    out.push_back(static_cast<double>(f) / 1000.0);
  }
  if (out.empty()) throw ConfigError("frequency grid is empty after exclusion");
  return out;
}

bool tier_has_fundamental_pole(const ModelTier& tier, const ConverterParams& p) {
  switch (tier.tag) {
    case TierTag::kCclOnly:
      return p.k_iI > 0.0;
    case TierTag::kCclVcl:
      return false;
    case TierTag::kApclSimplified:
      return true;
    case TierTag::kFullNumeric:
      return tier.linearization ? tier.linearization->has_fundamental_pole() : true;
  }
  throw ModelError("unknown tier tag");
}

ImpedanceCurve sample_curve(const ModelTier& tier, const ConverterParams& p,
                            const GridParams& g, const OperatingPoint& op,
                            const std::vector<double>& grid_hz) {
  (void)op;  // identifies the run; the rated-point closed forms do not consume it
  if (grid_hz.empty()) throw ConfigError("frequency grid is empty");
  const bool pole = tier_has_fundamental_pole(tier, p);
  if (pole) {
    for (double f : grid_hz)
      if (std::abs(f - p.f_N) < 5e-4)
        throw ConfigError("grid must exclude the fundamental for this tier");
  }

  ImpedanceCurve curve;
  curve.freqs_hz = grid_hz;
  curve.values_ohm.reserve(grid_hz.size());
  curve.frame = CurveFrame::kPositiveSeqStationary;
  curve.provenance = tier_name(tier.tag);
  curve.params_digest = params_digest(p, g);
  curve.fundamental_pole = pole;
  curve.f_n_hz = p.f_N;

  switch (tier.tag) {
    case TierTag::kCclOnly: {
      const RationalTF z = ccl_impedance(p);
      for (double f : grid_hz)
        curve.values_ohm.push_back(dq_to_positive_sequence(z, f, p.f_N));
      break;
    }
    case TierTag::kCclVcl: {
      const RationalTF z = vcl_impedance(p);
      for (double f : grid_hz)
        curve.values_ohm.push_back(dq_to_positive_sequence(z, f, p.f_N));
      break;
    }
    case TierTag::kApclSimplified: {
      const TFMatrix2x2 m =
          apcl_simplified_matrix(p, tier.inertia_enabled, tier.ssop_override);
      for (double f : grid_hz)
        curve.values_ohm.push_back(dq_to_positive_sequence(m, f, p.f_N));
      break;
    }
    case TierTag::kFullNumeric: {
      if (!tier.linearization)
        throw ModelError("numeric tier needs a linearization provider");
      for (double f : grid_hz)
        curve.values_ohm.push_back(
            combine_positive_sequence(tier.linearization->dq_impedance(f)));
      break;
    }
  }
  curve.validate();
  return curve;
}

}  // namespace gfmimp
