#pragma once

#include <array>
#include <cstdint>
#include <string>

namespace gfmimp {

/// Converter ratings, controller gains, and loop constants. All SI.
struct ConverterParams {
  double S_N = 0.0;    ///< rated apparent power, VA
  double V_N = 0.0;    ///< rated voltage amplitude, V (peak phase)
  double I_N = 0.0;    ///< rated current amplitude, A (peak phase)
  double omega_N = 0.0;  ///< rated angular frequency, rad/s
  double f_N = 0.0;    ///< fundamental frequency, Hz (omega_N / 2*pi)
  double V_dc = 0.0;   ///< dc-link voltage, V (recorded; averaged model ignores it)

  double J = 0.0;      ///< power-loop inertia, (s^2*W)/rad; 0 disables inertia
  double D_p = 0.0;    ///< power-loop damping, (s*W)/rad
  double K_v = 0.0;    ///< voltage regulation gain, Var/V
  double K_q = 0.0;    ///< reactive integral gain, (s*V)/Var

  double k_pV = 0.0;   ///< voltage controller proportional gain, S
  double k_iV = 0.0;   ///< voltage controller integral gain, S/s
  double k_pI = 0.0;   ///< current controller proportional gain, Ohm
  double k_iI = 0.0;   ///< current controller integral gain, Ohm/s

  double L_f = 0.0;    ///< filter inductance, H

  double P_ref = 0.0;  ///< active power reference, W
  double Q_ref = 0.0;  ///< reactive power reference, Var

  /// Throws ConfigError when ratings are non-positive, J < 0, or the rating
  /// self-consistency 1.5*V_N*I_N ~ S_N (within 1%) fails.
  void validate() const;
};

/// Thevenin grid parameters. Exactly one of {(L_g, R_g), (SCR, ratio_RX)}
/// is given on input; the other pair is derived.
struct GridParams {
  double L_g = 0.0;       ///< grid inductance, H
  double R_g = 0.0;       ///< grid resistance, Ohm
  double SCR = 0.0;       ///< short-circuit ratio (dimensionless)
  double ratio_RX = 0.0;  ///< R_g / X_g (dimensionless)
  double V_grid = 0.0;    ///< grid source amplitude, V (peak phase)

  /// Builds from (SCR, R/X) against the converter base: X_g = Z_base / SCR.
  static GridParams from_scr(const ConverterParams& p, double scr, double ratio_rx,
                             double v_grid = 0.0);
  /// Builds from explicit (L_g, R_g).
  static GridParams from_impedance(const ConverterParams& p, double l_g, double r_g,
                                   double v_grid = 0.0);
  void validate() const;
};

/// Normalization bases derived from the ratings.
struct PerUnitBases {
  double S_base = 0.0;      ///< VA
  double V_base = 0.0;      ///< V, peak phase
  double I_base = 0.0;      ///< A, peak phase: S / (1.5 * V)
  double omega_base = 0.0;  ///< rad/s
  double Z_base = 0.0;      ///< Ohm: 1.5 * V^2 / S
  double L_base = 0.0;      ///< H: Z / omega
  double J_base = 0.0;      ///< (s^2*W)/rad: S / omega
  double D_base = 0.0;      ///< (s*W)/rad: S / omega
  double Kv_base = 0.0;     ///< Var/V: S / V
  double Kq_base = 0.0;     ///< (s*V)/Var: V / S
  double kpV_base = 0.0;    ///< S: 1 / Z
  double kiV_base = 0.0;    ///< S/s: omega / Z
  double kpI_base = 0.0;    ///< Ohm: Z
  double kiI_base = 0.0;    ///< Ohm/s: Z * omega
};

PerUnitBases per_unit_bases(const ConverterParams& p);

/// Steady-state terminal condition with the PCC voltage on the d-axis.
struct OperatingPoint {
  double V_d0 = 0.0;   ///< V
  double V_q0 = 0.0;   ///< V, zero by the alignment convention
  double I_d0 = 0.0;   ///< A
  double I_q0 = 0.0;   ///< A
  double P_0 = 0.0;    ///< W
  double Q_0 = 0.0;    ///< Var
  double theta_0 = 0.0;  ///< rad, converter d-axis angle relative to the grid source
  double pf = 1.0;     ///< P / sqrt(P^2 + Q^2); carries the sign of P

  /// Nameplate point: V_d0 = V_N, I_d0 = I_N, I_q0 = 0.
  static OperatingPoint rated(const ConverterParams& p);
};

/// Angle-perturbation coupling matrices evaluated at an operating point.
/// At the nameplate unity-power-factor point only the (2,1) entries are
/// nonzero: V_N*I_N, I_N^2, V_N*I_N, V_N^2, V_N*I_N, V_N^2.
struct SSOPMatrices {
  std::array<std::array<double, 2>, 2> B_Vo_i{};
  std::array<std::array<double, 2>, 2> B_Ic_i{};
  std::array<std::array<double, 2>, 2> B_Vc_i{};
  std::array<std::array<double, 2>, 2> B_Vo_v{};
  std::array<std::array<double, 2>, 2> B_Ic_v{};
  std::array<std::array<double, 2>, 2> B_Vc_v{};
  /// True when the operating point differs from the nameplate one, i.e. the
  /// entries come from the documented generalization rule rather than the
  /// values that hold exactly at rated conditions.
  bool extrapolated = false;
};

SSOPMatrices build_ssop_matrices(const OperatingPoint& op, const ConverterParams& p);

/// Solves the two-bus power flow for the requested terminal (P, Q):
/// finds (V_d0, theta_0) such that the converter injects P and Q into the
/// Thevenin grid. Damped Newton from theta = 0, V = V_grid; power-balance
/// residual below 1e-9 per unit. Throws InfeasibleOperatingPoint.
OperatingPoint solve_operating_point(const ConverterParams& p, const GridParams& g,
                                     double P, double Q);

/// Power-flow solve for the closed-loop converter: same as above but with the
/// reactive balance shifted by the voltage-regulation droop,
/// Q = Q_ref + K_v * (V_N - V_d0), so the result is the equilibrium the full
/// control stack actually holds for references (P_ref, Q_ref).
OperatingPoint solve_droop_operating_point(const ConverterParams& p, const GridParams& g,
                                           double P_ref, double Q_ref);

/// Q_ref that makes the droop equilibrium land on the plain power-flow point
/// for the terminal target (P, Q_target).
double droop_q_ref_for_target(const ConverterParams& p, const GridParams& g, double P,
                              double Q_target);

/// Loads converter + grid parameters from the JSON document format
/// described in the README. Throws ConfigError with a field-level message.
struct ParamSet {
  ConverterParams conv;
  GridParams grid;
};
ParamSet load_params(const std::string& path);

/// FNV-1a digest over the resolved SI values, stable across platforms.
std::string params_digest(const ConverterParams& p, const GridParams& g);

}  // namespace gfmimp
