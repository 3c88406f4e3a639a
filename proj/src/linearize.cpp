#include "gfmimp/linearize.hpp"

#include <cmath>
#include <complex>

#include <Eigen/Eigenvalues>

#include "gfmimp/errors.hpp"

namespace gfmimp {

namespace {

/// Packs the synchronous-frame outputs (terminal voltage and current) of
/// one state/input evaluation.
struct Outputs4 {
  double v_d, v_q, i_d, i_q;
};

Outputs4 eval_outputs(const std::vector<double>& x, const SimState& base,
                      ControlStack stack, const StackRefs& refs,
                      const ConverterParams& p, const GridParams& g,
                      Complex emf) {
  const SimState st = unpack_state(x, base, stack, p);
  const SimOutputs out = compute_outputs(st, emf, stack, refs, p, g);
  const Complex rot = std::polar(1.0, st.delta);
  const Complex v = out.v * rot;
  const Complex i = st.i * rot;
  return {v.real(), v.imag(), i.real(), i.imag()};
}

}  // namespace

std::vector<Complex> LinearizedModel::eigenvalues() const {
  Eigen::EigenSolver<Eigen::MatrixXd> es(A);
  std::vector<Complex> ev(static_cast<std::size_t>(A.rows()));
  for (Eigen::Index k = 0; k < A.rows(); ++k) ev[static_cast<std::size_t>(k)] = es.eigenvalues()[k];
  return ev;
}

double LinearizedModel::worst_eigenvalue_re() const {
  double w = -1e300;
  for (const Complex& ev : eigenvalues()) w = std::max(w, ev.real());
  return w;
}

Eigen::Matrix2cd LinearizedModel::emf_to_v(double f_dq_hz) const {
  const Complex s(0.0, 2.0 * M_PI * f_dq_hz);
  const Eigen::Index n = A.rows();
  Eigen::MatrixXcd resolvent = (s * Eigen::MatrixXcd::Identity(n, n) - A.cast<Complex>());
  const Eigen::MatrixXcd x = resolvent.partialPivLu().solve(B.cast<Complex>());
  return C_v.cast<Complex>() * x + D_v.cast<Complex>();
}

Eigen::Matrix2cd LinearizedModel::emf_to_i(double f_dq_hz) const {
  const Complex s(0.0, 2.0 * M_PI * f_dq_hz);
  const Eigen::Index n = A.rows();
  Eigen::MatrixXcd resolvent = (s * Eigen::MatrixXcd::Identity(n, n) - A.cast<Complex>());
  const Eigen::MatrixXcd x = resolvent.partialPivLu().solve(B.cast<Complex>());
  return C_i.cast<Complex>() * x + D_i.cast<Complex>();
}

DqMatrix LinearizedModel::impedance_dq(double f_dq_hz) const {
  const Complex s(0.0, 2.0 * M_PI * f_dq_hz);
  const Eigen::Index n = A.rows();
  const Eigen::MatrixXcd resolvent =
      s * Eigen::MatrixXcd::Identity(n, n) - A.cast<Complex>();
  const Eigen::MatrixXcd x = resolvent.partialPivLu().solve(B.cast<Complex>());
  const Eigen::Matrix2cd hv = C_v.cast<Complex>() * x + D_v.cast<Complex>();
  const Eigen::Matrix2cd hi = C_i.cast<Complex>() * x + D_i.cast<Complex>();
  if (std::abs(hi.determinant()) < 1e-300)
    throw EvaluationAtPole("current response singular in impedance extraction", s);
  const Eigen::Matrix2cd z = -hv * hi.inverse();
  return DqMatrix{{{z(0, 0), z(0, 1)}, {z(1, 0), z(1, 1)}}};
}

Complex LinearizedModel::impedance_pos_seq(double f_hz) const {
  return combine_positive_sequence(impedance_dq(f_hz - params.f_N));
}

LinearizedModel linearize_stack(ControlStack stack, const ConverterParams& p,
                                const GridParams& g) {
  return linearize_stack(stack, p, g, solve_stack_operating_point(stack, p, g));
}

LinearizedModel linearize_stack(ControlStack stack, const ConverterParams& p,
                                const GridParams& g, const OperatingPoint& op) {
  LinearizedModel m;
  m.stack = stack;
  m.params = p;
  m.grid = g;
  m.op = op;

  const StackRefs refs = make_stack_refs(stack, p, op);
  const SimState base = equilibrium_state(stack, p, g, op);
  const std::vector<double> x0 = pack_state(base, stack, p);
  const std::vector<double> sc = state_scales(stack, p);
  const Complex emf0(g.V_grid, 0.0);
  const std::size_t n = x0.size();

  m.A.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  m.B.resize(static_cast<Eigen::Index>(n), 2);
  m.C_v.resize(2, static_cast<Eigen::Index>(n));
  m.C_i.resize(2, static_cast<Eigen::Index>(n));
  m.D_v.resize(2, 2);
  m.D_i.resize(2, 2);

  const auto rhs = [&](const std::vector<double>& x, Complex emf) {
    const SimState st = unpack_state(x, base, stack, p);
    return pack_state(derivatives(st, emf, stack, refs, p, g), stack, p);
  };

  // State Jacobian and output rows, column by column.
  for (std::size_t j = 0; j < n; ++j) {
    const double h = 1e-6 * sc[j];
    std::vector<double> xp = x0, xm = x0;
    xp[j] += h;
    xm[j] -= h;
    const std::vector<double> fp = rhs(xp, emf0);
    const std::vector<double> fm = rhs(xm, emf0);
    const Outputs4 yp = eval_outputs(xp, base, stack, refs, p, g, emf0);
    const Outputs4 ym = eval_outputs(xm, base, stack, refs, p, g, emf0);
    const double inv2h = 1.0 / (2.0 * h);
    for (std::size_t i = 0; i < n; ++i)
      m.A(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          (fp[i] - fm[i]) * inv2h;
    m.C_v(0, static_cast<Eigen::Index>(j)) = (yp.v_d - ym.v_d) * inv2h;
    m.C_v(1, static_cast<Eigen::Index>(j)) = (yp.v_q - ym.v_q) * inv2h;
    m.C_i(0, static_cast<Eigen::Index>(j)) = (yp.i_d - ym.i_d) * inv2h;
    m.C_i(1, static_cast<Eigen::Index>(j)) = (yp.i_q - ym.i_q) * inv2h;
  }

  // Input Jacobians: perturb the synchronous-frame EMF components.
  const double hu = 1e-6 * p.V_N;
  const Complex du[2] = {Complex(hu, 0.0), Complex(0.0, hu)};
  for (int j = 0; j < 2; ++j) {
    const std::vector<double> fp = rhs(x0, emf0 + du[j]);
    const std::vector<double> fm = rhs(x0, emf0 - du[j]);
    const Outputs4 yp = eval_outputs(x0, base, stack, refs, p, g, emf0 + du[j]);
    const Outputs4 ym = eval_outputs(x0, base, stack, refs, p, g, emf0 - du[j]);
    const double inv2h = 1.0 / (2.0 * hu);
    for (std::size_t i = 0; i < n; ++i)
      m.B(static_cast<Eigen::Index>(i), j) = (fp[i] - fm[i]) * inv2h;
    m.D_v(0, j) = (yp.v_d - ym.v_d) * inv2h;
    m.D_v(1, j) = (yp.v_q - ym.v_q) * inv2h;
    m.D_i(0, j) = (yp.i_d - ym.i_d) * inv2h;
    m.D_i(1, j) = (yp.i_q - ym.i_q) * inv2h;
  }
  return m;
}

ModelTier make_full_numeric_tier(const ConverterParams& p, const GridParams& g) {
  ModelTier tier;
  tier.tag = TierTag::kFullNumeric;
  tier.linearization = std::make_shared<NumericImpedanceProvider>(
      linearize_stack(ControlStack::kFull, p, g));
  return tier;
}

}  // namespace gfmimp
