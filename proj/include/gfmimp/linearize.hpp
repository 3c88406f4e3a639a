#pragma once

#include <memory>
#include <vector>

#include <Eigen/Dense>

#include "gfmimp/models.hpp"
#include "gfmimp/params.hpp"
#include "gfmimp/sim.hpp"
#include "gfmimp/tf.hpp"

namespace gfmimp {

/// Small-signal state-space model of one control stack around its
/// equilibrium, obtained by central finite differences on the averaged
/// model. Inputs are the synchronous-frame Thevenin-EMF perturbation
/// components (d, q); outputs are the synchronous-frame terminal voltage
/// and current. The converter impedance follows as the input-independent
/// ratio Z_dq(s) = -H_v(s) H_i(s)^{-1}, where H_v, H_i are the EMF-to-
/// voltage and EMF-to-current transfer matrices.
struct LinearizedModel {
  ControlStack stack = ControlStack::kFull;
  ConverterParams params;
  GridParams grid;
  OperatingPoint op;

  Eigen::MatrixXd A;        ///< n x n state matrix
  Eigen::MatrixXd B;        ///< n x 2 input matrix
  Eigen::MatrixXd C_v, C_i; ///< 2 x n output rows for v and i
  Eigen::MatrixXd D_v, D_i; ///< 2 x 2 feedthroughs

  /// Closed-loop eigenvalues of A (stability of the converter + grid).
  std::vector<Complex> eigenvalues() const;
  /// Largest eigenvalue real part; negative means asymptotically stable.
  double worst_eigenvalue_re() const;

  /// EMF-to-voltage and EMF-to-current responses at s = j 2 pi f_dq.
  Eigen::Matrix2cd emf_to_v(double f_dq_hz) const;
  Eigen::Matrix2cd emf_to_i(double f_dq_hz) const;

  /// Converter dq impedance -H_v H_i^{-1} at dq frequency f_dq (Hz).
  DqMatrix impedance_dq(double f_dq_hz) const;
  /// Positive-sequence impedance at stationary frequency f:
  /// the dq block at f - f_N combined as 1/2 (Z11 + Z22) + (j/2)(Z21 - Z12).
  Complex impedance_pos_seq(double f_hz) const;
};

/// Builds the small-signal model at the stack's own operating point
/// (droop-consistent for the full stack). Relative perturbation step 1e-6
/// of each state/input scale, central differences.
LinearizedModel linearize_stack(ControlStack stack, const ConverterParams& p,
                                const GridParams& g);

/// Same, around a caller-supplied operating point.
LinearizedModel linearize_stack(ControlStack stack, const ConverterParams& p,
                                const GridParams& g, const OperatingPoint& op);

/// Adapter exposing a linearized full model through the sampling
/// interface used by the model tiers.
class NumericImpedanceProvider final : public DqImpedanceProvider {
 public:
  explicit NumericImpedanceProvider(LinearizedModel m) : model_(std::move(m)) {}

  DqMatrix dq_impedance(double f_hz) const override {
    return model_.impedance_dq(f_hz - model_.params.f_N);
  }
  bool has_fundamental_pole() const override { return true; }

  const LinearizedModel& model() const { return model_; }

 private:
  LinearizedModel model_;
};

/// Convenience: a ready-to-sample full-model tier (linearized in place).
ModelTier make_full_numeric_tier(const ConverterParams& p, const GridParams& g);

}  // namespace gfmimp
