#include <doctest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "gfmimp/linearize.hpp"
#include "gfmimp/models.hpp"
#include "gfmimp/params.hpp"
#include "gfmimp/sim.hpp"

using gfmimp::Complex;
using gfmimp::ControlStack;
using gfmimp::ConverterParams;
using gfmimp::GridParams;
using gfmimp::LinearizedModel;
using gfmimp::OperatingPoint;
using gfmimp::ScanConfig;

namespace {

ConverterParams table_converter() {
  ConverterParams p;
  p.S_N = 200e3;
  p.V_N = 563.0;
  p.I_N = 236.0;
  p.f_N = 50.0;
  p.omega_N = 100.0 * std::numbers::pi;
  p.V_dc = 1300.0;
  p.J = 2546.0;
  p.D_p = 31832.0;
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

double rel_err(Complex a, Complex b) { return std::abs(a - b) / std::abs(b); }

Complex eval_seq(const gfmimp::RationalTF& tf, double f, double f_n) {
  return tf.eval(Complex(0.0, 2.0 * std::numbers::pi * (f - f_n)));
}

}  // namespace

TEST_CASE("linearized current-only loop reproduces its closed form") {
  const ConverterParams p = table_converter();
  const GridParams g = GridParams::from_scr(p, 2.0, 0.1);
  const LinearizedModel m = gfmimp::linearize_stack(ControlStack::kCclOnly, p, g);
  const auto tf = gfmimp::ccl_impedance(p);
  for (double f : {30.0, 42.0, 49.9, 55.0, 70.0}) {
    CHECK(rel_err(m.impedance_pos_seq(f), eval_seq(tf, f, p.f_N)) < 1e-7);
  }
}

TEST_CASE("linearized voltage+current loops reproduce their closed form") {
  const ConverterParams p = table_converter();
  const GridParams g = GridParams::from_scr(p, 2.0, 0.1);
  const LinearizedModel m = gfmimp::linearize_stack(ControlStack::kVclCcl, p, g);
  const auto tf = gfmimp::vcl_impedance(p);
  for (double f : {30.0, 42.0, 55.0, 70.0}) {
    CHECK(rel_err(m.impedance_pos_seq(f), eval_seq(tf, f, p.f_N)) < 1e-5);
  }
  // the closed-loop null is the hardest point for finite differences
  CHECK(rel_err(m.impedance_pos_seq(49.9), eval_seq(tf, 49.9, p.f_N)) < 1e-3);
}

TEST_CASE("power loop raises a sharp impedance peak near the fundamental") {
  const ConverterParams p = table_converter();
  const GridParams g = GridParams::from_scr(p, 2.0, 0.1);
  const LinearizedModel m =
      gfmimp::linearize_stack(ControlStack::kApclVclCcl, p, g);
  const double near = std::abs(m.impedance_pos_seq(49.9));
  const double far = std::abs(m.impedance_pos_seq(45.0));
  CHECK(near > 10.0 * far);
}

TEST_CASE("eigenvalues separate the weak-grid and stiff-grid equilibria") {
  const ConverterParams p = table_converter();

  const LinearizedModel weak =
      gfmimp::linearize_stack(ControlStack::kFull, p, GridParams::from_scr(p, 2.0, 0.1));
  CHECK(weak.worst_eigenvalue_re() < 0.0);

  const LinearizedModel stiff =
      gfmimp::linearize_stack(ControlStack::kFull, p, GridParams::from_scr(p, 10.0, 0.1));
  CHECK(stiff.worst_eigenvalue_re() > 5.0);
  // the unstable mode is the reactive-loop oscillation near 12 Hz
  double mode_hz = 0.0;
  double worst = -1e300;
  for (const auto& ev : stiff.eigenvalues()) {
    if (ev.real() > worst) {
      worst = ev.real();
      mode_hz = std::abs(ev.imag()) / (2.0 * std::numbers::pi);
    }
  }
  CHECK(mode_hz > 9.0);
  CHECK(mode_hz < 15.0);
}

TEST_CASE("frequency scans agree with the linearization for coupled stacks") {
  const ConverterParams p = table_converter();
  const GridParams g = GridParams::from_scr(p, 2.0, 0.1);

  for (ControlStack stack : {ControlStack::kApclVclCcl, ControlStack::kFull}) {
    const LinearizedModel m = gfmimp::linearize_stack(stack, p, g);
    const OperatingPoint op = gfmimp::solve_stack_operating_point(stack, p, g);
    for (double f : {45.0, 49.9, 55.0}) {
      ScanConfig cfg;
      cfg.f_pert = f;
      cfg.stack = stack;
      cfg.dt = 5e-5;
      const auto r = gfmimp::run_scan(p, g, op, cfg);
      const Complex z_lin = m.impedance_pos_seq(f);
      CHECK(rel_err(r.Z_p, z_lin) < 5e-3);
      const double dphase = std::abs(std::arg(r.Z_p / z_lin)) * 180.0 / std::numbers::pi;
      CHECK(dphase < 0.5);
    }
  }
}

TEST_CASE("numeric tier plugs into curve sampling with pole-aware flags") {
  const ConverterParams p = table_converter();
  const GridParams g = GridParams::from_scr(p, 2.0, 0.1);
  const gfmimp::ModelTier tier = gfmimp::make_full_numeric_tier(p, g);

  REQUIRE(tier.linearization != nullptr);
  CHECK(tier.linearization->has_fundamental_pole());
  CHECK(tier.tag == gfmimp::TierTag::kFullNumeric);

  const OperatingPoint op =
      gfmimp::solve_stack_operating_point(ControlStack::kFull, p, g);
  const auto grid = gfmimp::frequency_grid(45.0, 55.0, 1.0, p.f_N);
  const gfmimp::ImpedanceCurve c = gfmimp::sample_curve(tier, p, g, op, grid);
  REQUIRE(c.size() == grid.size());
  CHECK(c.fundamental_pole);

  const LinearizedModel m = gfmimp::linearize_stack(ControlStack::kFull, p, g);
  for (std::size_t k = 0; k < c.size(); ++k) {
    CHECK(rel_err(c.values_ohm[k], m.impedance_pos_seq(c.freqs_hz[k])) < 1e-9);
  }
}

TEST_CASE("linearization exposes grid-EMF transfer matrices consistent with impedance") {
  const ConverterParams p = table_converter();
  const GridParams g = GridParams::from_scr(p, 2.0, 0.1);
  const LinearizedModel m = gfmimp::linearize_stack(ControlStack::kVclCcl, p, g);

  // At any dq frequency, v = H_v u and i = H_i u for the same drive, so
  // Z_dq = -H_v H_i^{-1} must satisfy v = -Z i column by column.
  const double f_dq = 7.0;
  const auto hv = m.emf_to_v(f_dq);
  const auto hi = m.emf_to_i(f_dq);
  const auto z = m.impedance_dq(f_dq);
  for (int col = 0; col < 2; ++col) {
    const Complex i0 = hi(0, col), i1 = hi(1, col);
    const Complex v0 = -(z[0][0] * i0 + z[0][1] * i1);
    const Complex v1 = -(z[1][0] * i0 + z[1][1] * i1);
    CHECK(std::abs(v0 - hv(0, col)) / std::abs(hv(0, col)) < 1e-10);
    CHECK(std::abs(v1 - hv(1, col)) / std::abs(hv(1, col)) < 1e-10);
  }
}
