#pragma once

#include <array>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "gfmimp/params.hpp"
#include "gfmimp/tf.hpp"

namespace gfmimp {

/// Control-stack tiers, ordered by how many loops are closed around the
/// filter: current loop only, current + voltage loops, those plus the
/// simplified power-loop coupling term, and the numerically linearized
/// full stack (which also carries the reactive-power integrator).
enum class TierTag { kCclOnly, kCclVcl, kApclSimplified, kFullNumeric };

/// Stable lowercase token for file names and CLI flags:
/// "ccl" | "vcl" | "apcl" | "full".
std::string tier_name(TierTag tag);
/// Parses the tokens accepted on the command line. Throws ConfigError.
TierTag tier_from_name(const std::string& name);

using DqMatrix = std::array<std::array<Complex, 2>, 2>;

/// Frequency-response source for models that have no rational closed form:
/// returns the 2x2 dq-frame impedance looking into the converter at the
/// stationary-frame frequency f (the dq evaluation runs at f - f_N
/// internally).
class DqImpedanceProvider {
 public:
  virtual ~DqImpedanceProvider() = default;
  virtual DqMatrix dq_impedance(double f_hz) const = 0;
  virtual bool has_fundamental_pole() const { return true; }
};

struct ModelTier {
  TierTag tag = TierTag::kApclSimplified;
  /// When false the power loop runs damping-only, dropping the inertia
  /// state regardless of the configured J.
  bool inertia_enabled = true;
  /// Optional replacement for the rated-point small-signal product
  /// matrices; only meaningful for the outer-loop tiers.
  std::optional<SSOPMatrices> ssop_override;
  /// Required for kFullNumeric; ignored otherwise.
  std::shared_ptr<const DqImpedanceProvider> linearization;
};

enum class CurveFrame { kPositiveSeqStationary, kDqScalar };

struct ImpedanceCurve {
  std::vector<double> freqs_hz;     ///< strictly increasing
  std::vector<Complex> values_ohm;  ///< same length as freqs_hz
  CurveFrame frame = CurveFrame::kPositiveSeqStationary;
  std::string provenance;    ///< tier token, "scan", or "csv"
  std::string params_digest; ///< identifier of the generating parameter set
  /// True when the generating model has a genuine pole at the fundamental;
  /// such curves never sample f_N itself.
  bool fundamental_pole = false;
  double f_n_hz = 0.0;

  std::size_t size() const { return freqs_hz.size(); }
  /// Enforces the container invariants; throws ModelError on violation.
  void validate() const;
};

/// Current-loop-only dq impedance: s L_f + k_pI + k_iI / s.
RationalTF ccl_impedance(const ConverterParams& p);

/// Voltage-plus-current-loop dq impedance:
/// s (s^2 L_f + s k_pI + k_iI) /
///   (s^2 (k_pI k_pV + 1) + s (k_pI k_iV + k_iI k_pV) + k_iI k_iV).
RationalTF vcl_impedance(const ConverterParams& p);

/// Power-loop gain: 1 / (s (J s + D_p)) with inertia, 1 / (s D_p) without.
RationalTF apcl_gain(const ConverterParams& p, bool inertia_enabled);

/// Closed-loop reference-tracking function of the cascaded voltage and
/// current loops: G_V G_I / (1 + G_V G_I).
RationalTF voltage_tracking_closed_loop(const ConverterParams& p);

/// Simplified power-loop 2x2 dq impedance: diagonal entries are the
/// voltage-loop impedance, (1,2) is zero, and (2,1) couples the power loop
/// in via b21 * apcl_gain * voltage_tracking_closed_loop, where b21
/// defaults to V_N^2 and can be replaced through the override's
/// B_Vo_v(2,1) slot.
TFMatrix2x2 apcl_simplified_matrix(const ConverterParams& p, bool inertia_enabled = true,
                                   const std::optional<SSOPMatrices>& b_override = {});

/// Maps a dq-frame result to the positive-sequence stationary-frame
/// impedance at stationary frequency f: entries are evaluated at
/// s = j 2 pi (f - f_N) and combined as
/// 1/2 (Z11 + Z22) + (j/2)(Z21 - Z12). A scalar input acts as a diagonal
/// matrix, so the combination degenerates to direct evaluation.
Complex dq_to_positive_sequence(const RationalTF& z, double f_hz, double f_n_hz);
Complex dq_to_positive_sequence(const TFMatrix2x2& m, double f_hz, double f_n_hz);
/// The same combination applied to an already evaluated 2x2 block.
Complex combine_positive_sequence(const DqMatrix& m);

/// Inclusive arithmetic grid [start, stop] with the given step, optionally
/// dropping one frequency (exact match). All values must align to an
/// integer millihertz lattice (step >= 0.001 Hz); construction runs on
/// integer millihertz so the exclusion test is exact.
std::vector<double> frequency_grid(double start_hz, double stop_hz, double step_hz,
                                   std::optional<double> exclude_hz = {});

/// True when the tier's model has a pole exactly at the fundamental.
bool tier_has_fundamental_pole(const ModelTier& tier, const ConverterParams& p);

/// Samples the tier's positive-sequence impedance over the grid.
/// Pre: the grid excludes f_N whenever the tier has a fundamental pole.
/// The analytic tiers evaluate the rated-point closed forms; pass an SSOP
/// override to move the simplified tier's coupling strength off the rated
/// point. The operating point parameter identifies the run for provenance
/// and feeds tiers that carry a linearization.
ImpedanceCurve sample_curve(const ModelTier& tier, const ConverterParams& p,
                            const GridParams& g, const OperatingPoint& op,
                            const std::vector<double>& grid_hz);

}  // namespace gfmimp
