#include "gfmimp/sim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <complex>
#include <cstdlib>
#include <numbers>
#include <numeric>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "gfmimp/csvio.hpp"
#include "gfmimp/errors.hpp"

namespace gfmimp {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

bool has_voltage_loop(ControlStack s) { return s != ControlStack::kCclOnly; }

bool has_power_loop(ControlStack s) {
  return s == ControlStack::kApclVclCcl || s == ControlStack::kFull;
}

bool has_reactive_loop(ControlStack s) { return s == ControlStack::kFull; }

struct RhsEval {
  SimState d;
  SimOutputs out;
};

/// Nonlinear averaged model in the converter frame. The terminal node
/// carries an algebraic loop through the proportional gains (the bridge
/// EMF depends on the terminal voltage which depends on the EMF through
/// the inductive divider); with kappa = L_f/(L_f+L_g) it resolves to
///   v = ((1-kappa) b + kappa (E + R_g i)) / (1 + (1-kappa) a),
/// where e = b - a v collects the proportional paths.
RhsEval eval_rhs(const SimState& st, Complex e_thev_sync, ControlStack stack,
                 const StackRefs& refs, const ConverterParams& p,
                 const GridParams& g) {
  const double L_t = p.L_f + g.L_g;
  const double kappa = p.L_f / L_t;
  const Complex j_wn_lf(0.0, p.omega_N * p.L_f);
  const Complex E_c = e_thev_sync * std::polar(1.0, -st.delta);

  const bool vloop = has_voltage_loop(stack);
  const bool ploop = has_power_loop(stack);
  const bool qloop = has_reactive_loop(stack);

  const Complex v_ref(qloop ? p.V_N + st.xi_Q : refs.v_ref, 0.0);

  double a = 0.0;
  Complex b;
  if (vloop) {
    a = p.k_pI * p.k_pV;
    b = p.k_pI * (p.k_pV * v_ref + st.xi_V - st.i) + st.xi_I + j_wn_lf * st.i;
  } else {
    b = p.k_pI * (refs.i_ref - st.i) + st.xi_I + j_wn_lf * st.i;
  }
  const Complex c = kappa * (E_c + g.R_g * st.i);
  const Complex v = ((1.0 - kappa) * b + c) / (1.0 + (1.0 - kappa) * a);
  const Complex e = b - a * v;

  const double P = 1.5 * (v.real() * st.i.real() + v.imag() * st.i.imag());
  const double Q = 1.5 * (v.imag() * st.i.real() - v.real() * st.i.imag());

  RhsEval r;
  double omega = p.omega_N;
  if (ploop) {
    if (p.J > 0.0) {
      omega = st.omega;
      r.d.omega = (p.P_ref - P - p.D_p * (omega - p.omega_N)) / p.J;
    } else {
      omega = p.omega_N + (p.P_ref - P) / p.D_p;
    }
    r.d.delta = omega - p.omega_N;
  }

  r.d.i = (e - E_c - Complex(g.R_g, omega * L_t) * st.i) / L_t;
  const Complex i_ref = vloop ? p.k_pV * (v_ref - v) + st.xi_V : refs.i_ref;
  r.d.xi_I = p.k_iI * (i_ref - st.i);
  if (vloop) r.d.xi_V = p.k_iV * (v_ref - v);
  if (qloop) r.d.xi_Q = p.K_q * (p.Q_ref - Q + p.K_v * (p.V_N - std::abs(v)));

  r.out.v = v;
  r.out.e = e;
  r.out.p = P;
  r.out.q = Q;
  r.out.omega = omega;
  return r;
}

SimState add_scaled(const SimState& s, const SimState& k, double h) {
  SimState o = s;
  o.i += h * k.i;
  o.xi_I += h * k.xi_I;
  o.xi_V += h * k.xi_V;
  o.delta += h * k.delta;
  o.omega += h * k.omega;
  o.xi_Q += h * k.xi_Q;
  return o;
}

void check_divergence(const SimState& st, const ConverterParams& p, double t) {
  const double I_base = p.S_N / (1.5 * p.V_N);
  const bool bad = !(std::abs(st.i) <= 100.0 * I_base) ||
                   !(std::abs(st.xi_I) <= 100.0 * p.V_N) ||
                   !(std::abs(st.xi_V) <= 100.0 * I_base) ||
                   !(std::abs(st.delta) <= 100.0) ||
                   !(std::abs(st.omega) <= 100.0 * p.omega_N) ||
                   !(std::abs(st.xi_Q) <= 100.0 * p.V_N);
  if (bad) {
    std::ostringstream ss;
    ss << "simulation diverged (state above 100 p.u.) at t = " << t << " s";
    throw SimulationDiverged(ss.str(), t);
  }
}

/// Exact-bin capture geometry: the window is a whole number of
/// perturbation periods AND a whole number of fundamental periods, so the
/// tone, its mirror about the fundamental, and dc all land on exact DFT
/// bins. dt is shrunk to divide the window exactly.
struct CaptureWindow {
  double T = 0.0;
  double dt = 0.0;
  std::size_t n = 0;
  long cycles = 0;  ///< tone cycles relative to the fundamental (may be < 0)
};

CaptureWindow make_capture_window(double f_inj, double f_n, int min_periods,
                                  double dt_max) {
  const long n_cap = std::max<long>(20000, 1000L * min_periods);
  for (long k = min_periods; k <= n_cap; ++k) {
    const double T = static_cast<double>(k) / f_inj;
    const double fund = T * f_n;
    const double fund_round = std::nearbyint(fund);
    if (std::abs(fund - fund_round) < 1e-9) {
      CaptureWindow w;
      w.T = T;
      w.n = static_cast<std::size_t>(std::ceil(T / dt_max - 1e-12));
      w.dt = T / static_cast<double>(w.n);
      w.cycles = k - static_cast<long>(fund_round);
      return w;
    }
  }
  std::ostringstream ss;
  ss << "no capture window of at least " << min_periods << " periods of "
     << f_inj << " Hz aligns with the " << f_n << " Hz fundamental";
  throw ConfigError(ss.str());
}

/// dc, tone, and mirror-tone components plus the off-bin energy of one
/// injection run.
struct InjectionCapture {
  Complex V_inj, V_mir, I_inj, I_mir;
  double thd_v = 0.0, thd_i = 0.0;
};

InjectionCapture single_injection(const ConverterParams& p, const GridParams& g,
                                  const OperatingPoint& op, const ScanConfig& cfg,
                                  double f_inj) {
  const StackRefs refs = make_stack_refs(cfg.stack, p, op);
  SimState st = equilibrium_state(cfg.stack, p, g, op);

  const CaptureWindow win = make_capture_window(f_inj, p.f_N, cfg.capture_periods, cfg.dt);
  const double dt = win.dt;

  GridDrive drive;
  drive.e_static = Complex(g.V_grid, 0.0);
  drive.pert = Complex(cfg.amplitude * p.V_N, 0.0);
  drive.pert_omega = kTwoPi * (f_inj - p.f_N);
  drive.t_on = 1e300;  // off during the settling check

  // Steady state must hold before injecting: states move less than
  // 1e-6 p.u. over one fundamental period.
  const std::vector<double> scales = state_scales(cfg.stack, p);
  const std::size_t period_steps =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(1.0 / (p.f_N * dt))));
  double t = 0.0;
  bool settled = false;
  std::vector<double> prev = pack_state(st, cfg.stack, p);
  for (int period = 0; period < 250 && !settled; ++period) {
    for (std::size_t k = 0; k < period_steps; ++k) {
      st = step_model(st, t, drive, cfg.stack, refs, p, g, dt);
      t += dt;
    }
    const std::vector<double> cur = pack_state(st, cfg.stack, p);
    double worst = 0.0;
    for (std::size_t m = 0; m < cur.size(); ++m)
      worst = std::max(worst, std::abs(cur[m] - prev[m]) / scales[m]);
    settled = worst < 1e-6;
    prev = cur;
  }
  if (!settled)
    throw ModelError("pre-injection settling detector did not converge");

  // Tone on; let the injection transient decay.
  drive.t_on = t;
  const std::size_t settle_steps =
      static_cast<std::size_t>(std::ceil(cfg.settle_time / dt - 1e-12));
  for (std::size_t k = 0; k < settle_steps; ++k) {
    st = step_model(st, t, drive, cfg.stack, refs, p, g, dt);
    t += dt;
  }

  // Capture: single-pass accumulation of the dc, tone, and mirror bins of
  // the synchronous-frame terminal voltage and current, plus total energy.
  const double n_inv = 1.0 / static_cast<double>(win.n);
  Complex sv_inj, sv_mir, sv_dc, si_inj, si_mir, si_dc;
  double ev = 0.0, ei = 0.0;
  for (std::size_t k = 0; k < win.n; ++k) {
    const SimOutputs out = compute_outputs(st, drive.at(t), cfg.stack, refs, p, g);
    const Complex rot = std::polar(1.0, st.delta);
    const Complex v_sync = out.v * rot;
    const Complex i_sync = st.i * rot;
    const double angle = -kTwoPi * static_cast<double>(win.cycles) *
                         static_cast<double>(k) * n_inv;
    const Complex tw = std::polar(1.0, angle);
    sv_inj += v_sync * tw;
    sv_mir += v_sync * std::conj(tw);
    sv_dc += v_sync;
    si_inj += i_sync * tw;
    si_mir += i_sync * std::conj(tw);
    si_dc += i_sync;
    ev += std::norm(v_sync);
    ei += std::norm(i_sync);
    st = step_model(st, t, drive, cfg.stack, refs, p, g, dt);
    t += dt;
  }

  InjectionCapture cap;
  cap.V_inj = sv_inj * n_inv;
  cap.V_mir = sv_mir * n_inv;
  cap.I_inj = si_inj * n_inv;
  cap.I_mir = si_mir * n_inv;
  const Complex v_dc = sv_dc * n_inv;
  const Complex i_dc = si_dc * n_inv;

  const auto residual = [n_inv](double energy, Complex inj, Complex mir, Complex dc) {
    const double off = energy * n_inv - std::norm(inj) - std::norm(mir) - std::norm(dc);
    return std::sqrt(std::max(0.0, off) / std::max(std::norm(inj), 1e-300));
  };
  cap.thd_v = residual(ev, cap.V_inj, cap.V_mir, v_dc);
  cap.thd_i = residual(ei, cap.I_inj, cap.I_mir, i_dc);
  return cap;
}

std::size_t worker_count() {
  const char* env = std::getenv("GFMIMP_WORKERS");
  if (env != nullptr && *env != '\0') {
    const long v = std::strtol(env, nullptr, 10);
    if (v <= 1) return 1;
    return static_cast<std::size_t>(std::min<long>(v, 64));
  }
  const unsigned hw = std::thread::hardware_concurrency();
  if (hw <= 1) return 1;
  return static_cast<std::size_t>(std::min<unsigned>(hw, 64));
}

}  // namespace

std::string stack_name(ControlStack s) {
  switch (s) {
    case ControlStack::kCclOnly: return "ccl";
    case ControlStack::kVclCcl: return "vcl";
    case ControlStack::kApclVclCcl: return "apcl";
    case ControlStack::kFull: return "full";
  }
  throw ConfigError("unknown control stack");
}

ControlStack stack_from_name(const std::string& name) {
  if (name == "ccl") return ControlStack::kCclOnly;
  if (name == "vcl") return ControlStack::kVclCcl;
  if (name == "apcl") return ControlStack::kApclVclCcl;
  if (name == "full") return ControlStack::kFull;
  throw ConfigError("unknown control stack '" + name + "'");
}

ControlStack stack_for_tier(TierTag tier) {
  switch (tier) {
    case TierTag::kCclOnly: return ControlStack::kCclOnly;
    case TierTag::kCclVcl: return ControlStack::kVclCcl;
    case TierTag::kApclSimplified: return ControlStack::kApclVclCcl;
    case TierTag::kFullNumeric: return ControlStack::kFull;
  }
  throw ConfigError("unknown tier");
}

Complex GridDrive::at(double t) const {
  Complex e = e_static;
  if (t >= t_on)
    e += pert * std::polar(1.0, pert_omega * (t - t_on));
  return e;
}

SimOutputs compute_outputs(const SimState& st, Complex e_thev_sync,
                           ControlStack stack, const StackRefs& refs,
                           const ConverterParams& p, const GridParams& g) {
  return eval_rhs(st, e_thev_sync, stack, refs, p, g).out;
}

SimState derivatives(const SimState& st, Complex e_thev_sync, ControlStack stack,
                     const StackRefs& refs, const ConverterParams& p,
                     const GridParams& g) {
  return eval_rhs(st, e_thev_sync, stack, refs, p, g).d;
}

SimState step_model(const SimState& st, double t, const GridDrive& drive,
                    ControlStack stack, const StackRefs& refs,
                    const ConverterParams& p, const GridParams& g, double dt) {
  const Complex u0 = drive.at(t);
  const Complex um = drive.at(t + 0.5 * dt);
  const Complex u1 = drive.at(t + dt);
  const SimState k1 = eval_rhs(st, u0, stack, refs, p, g).d;
  const SimState k2 = eval_rhs(add_scaled(st, k1, 0.5 * dt), um, stack, refs, p, g).d;
  const SimState k3 = eval_rhs(add_scaled(st, k2, 0.5 * dt), um, stack, refs, p, g).d;
  const SimState k4 = eval_rhs(add_scaled(st, k3, dt), u1, stack, refs, p, g).d;

  SimState next = st;
  const double h = dt / 6.0;
  next.i += h * (k1.i + 2.0 * k2.i + 2.0 * k3.i + k4.i);
  next.xi_I += h * (k1.xi_I + 2.0 * k2.xi_I + 2.0 * k3.xi_I + k4.xi_I);
  next.xi_V += h * (k1.xi_V + 2.0 * k2.xi_V + 2.0 * k3.xi_V + k4.xi_V);
  next.delta += h * (k1.delta + 2.0 * k2.delta + 2.0 * k3.delta + k4.delta);
  next.omega += h * (k1.omega + 2.0 * k2.omega + 2.0 * k3.omega + k4.omega);
  next.xi_Q += h * (k1.xi_Q + 2.0 * k2.xi_Q + 2.0 * k3.xi_Q + k4.xi_Q);
  check_divergence(next, p, t + dt);
  return next;
}

std::size_t state_dim(ControlStack stack, const ConverterParams& p) {
  switch (stack) {
    case ControlStack::kCclOnly: return 4;
    case ControlStack::kVclCcl: return 6;
    case ControlStack::kApclVclCcl: return 7 + (p.J > 0.0 ? 1 : 0);
    case ControlStack::kFull: return 8 + (p.J > 0.0 ? 1 : 0);
  }
  throw ConfigError("unknown control stack");
}

std::vector<double> pack_state(const SimState& st, ControlStack stack,
                               const ConverterParams& p) {
  std::vector<double> x;
  x.reserve(state_dim(stack, p));
  x.push_back(st.i.real());
  x.push_back(st.i.imag());
  x.push_back(st.xi_I.real());
  x.push_back(st.xi_I.imag());
  if (has_voltage_loop(stack)) {
    x.push_back(st.xi_V.real());
    x.push_back(st.xi_V.imag());
  }
  if (has_power_loop(stack)) {
    x.push_back(st.delta);
    if (p.J > 0.0) x.push_back(st.omega);
  }
  if (has_reactive_loop(stack)) x.push_back(st.xi_Q);
  return x;
}

SimState unpack_state(const std::vector<double>& x, const SimState& base,
                      ControlStack stack, const ConverterParams& p) {
  if (x.size() != state_dim(stack, p))
    throw ConfigError("state vector dimension mismatch");
  SimState st = base;
  std::size_t k = 0;
  st.i = Complex(x[k], x[k + 1]);
  k += 2;
  st.xi_I = Complex(x[k], x[k + 1]);
  k += 2;
  if (has_voltage_loop(stack)) {
    st.xi_V = Complex(x[k], x[k + 1]);
    k += 2;
  }
  if (has_power_loop(stack)) {
    st.delta = x[k++];
    if (p.J > 0.0) st.omega = x[k++];
  }
  if (has_reactive_loop(stack)) st.xi_Q = x[k++];
  return st;
}

std::vector<double> state_scales(ControlStack stack, const ConverterParams& p) {
  const double I_base = p.S_N / (1.5 * p.V_N);
  std::vector<double> s;
  s.reserve(state_dim(stack, p));
  s.push_back(I_base);
  s.push_back(I_base);
  s.push_back(p.V_N);
  s.push_back(p.V_N);
  if (has_voltage_loop(stack)) {
    s.push_back(I_base);
    s.push_back(I_base);
  }
  if (has_power_loop(stack)) {
    s.push_back(1.0);
    if (p.J > 0.0) s.push_back(p.omega_N);
  }
  if (has_reactive_loop(stack)) s.push_back(p.V_N);
  return s;
}

OperatingPoint solve_stack_operating_point(ControlStack stack,
                                           const ConverterParams& p,
                                           const GridParams& g) {
  if (stack == ControlStack::kFull)
    return solve_droop_operating_point(p, g, p.P_ref, p.Q_ref);
  return solve_operating_point(p, g, p.P_ref, p.Q_ref);
}

StackRefs make_stack_refs(ControlStack /*stack*/, const ConverterParams& /*p*/,
                          const OperatingPoint& op) {
  StackRefs refs;
  refs.i_ref = Complex(op.I_d0, op.I_q0);
  refs.v_ref = op.V_d0;
  return refs;
}

SimState equilibrium_state(ControlStack stack, const ConverterParams& p,
                           const GridParams& /*g*/, const OperatingPoint& op) {
  SimState st;
  st.i = Complex(op.I_d0, op.I_q0);
  st.xi_I = Complex(op.V_d0, op.V_q0);  // PI holds e - j w_N L_f i = v
  st.xi_V = st.i;
  st.delta = op.theta_0;
  st.omega = p.omega_N;
  st.xi_Q = has_reactive_loop(stack) ? op.V_d0 - p.V_N : 0.0;
  return st;
}

void ScanConfig::validate(const ConverterParams& p) const {
  if (!(f_pert > 0.0)) throw ConfigError("scan frequency must be positive");
  if (std::abs(f_pert - p.f_N) < 1e-9)
    throw ConfigError("scan frequency coincides with the fundamental");
  if (!(amplitude > 0.0) || amplitude > 0.05)
    throw ConfigError("scan amplitude must lie in (0, 0.05] of V_N");
  if (!(settle_time >= 0.0)) throw ConfigError("settle time must be nonnegative");
  if (capture_periods < 1) throw ConfigError("capture periods must be at least 1");
  if (!(dt > 0.0) || dt > 50e-6)
    throw ConfigError("integration step must lie in (0, 50 us]");
  if (has_power_loop(stack) && std::abs(2.0 * p.f_N - f_pert) < 1e-9)
    throw ConfigError("scan frequency coincides with the mirror of dc");
}

ScanResult run_scan(const ConverterParams& p, const GridParams& g,
                    const OperatingPoint& op, const ScanConfig& cfg) {
  cfg.validate(p);

  ScanResult r;
  r.f_pert = cfg.f_pert;

  const InjectionCapture direct = single_injection(p, g, op, cfg, cfg.f_pert);
  r.V_phasor = direct.V_inj;
  r.I_phasor = direct.I_inj;
  r.thd_residual = std::max(direct.thd_v, direct.thd_i);

  if (!has_power_loop(cfg.stack)) {
    // Complex-symmetric stacks do not couple the mirror frequency; the
    // single-tone ratio is the positive-sequence impedance.
    if (std::abs(direct.I_inj) < 1e-300)
      throw ModelError("no current response at the scan frequency");
    r.Z_p = direct.V_inj / (-direct.I_inj);
  } else {
    // Power loops couple f and its mirror about the fundamental through
    // conjugating terms (P, Q, |v|), so the linear relation pairs the
    // component at f with the CONJUGATE of the component at the mirror:
    //   [V(f) ; conj(V(2f_N - f))] = -Z [I(f) ; conj(I(2f_N - f))].
    // Two injection runs (one per frequency) give two independent columns
    // and Z_p is the (1,1) entry of the solved 2x2.
    const double f_mirror = 2.0 * p.f_N - cfg.f_pert;
    const InjectionCapture mirror = single_injection(p, g, op, cfg, f_mirror);
    const Complex i11 = direct.I_inj, i21 = std::conj(direct.I_mir);
    const Complex i12 = mirror.I_mir, i22 = std::conj(mirror.I_inj);
    const Complex v11 = direct.V_inj;
    const Complex v12 = mirror.V_mir;
    const Complex det = i11 * i22 - i12 * i21;
    if (std::abs(det) < 1e-300)
      throw ModelError("frequency-coupling system is singular");
    r.Z_p = -(v11 * i22 - v12 * i21) / det;
    r.thd_residual = std::max(r.thd_residual, std::max(mirror.thd_v, mirror.thd_i));
  }

  if (r.thd_residual > 0.1) {
    std::ostringstream ss;
    ss << "nonlinear contamination: off-tone spectral energy fraction "
       << r.thd_residual;
    r.warnings.push_back(ss.str());
  }
  return r;
}

ScanSweepResult scan_sweep(const ConverterParams& p, const GridParams& g,
                           const OperatingPoint& op,
                           const std::vector<double>& freqs,
                           const ScanConfig& cfg) {
  struct Slot {
    bool ok = false;
    ScanResult r;
    std::string err;
  };
  std::vector<Slot> slots(freqs.size());

  const auto task = [&](std::size_t idx) {
    ScanConfig c = cfg;
    c.f_pert = freqs[idx];
    try {
      slots[idx].r = run_scan(p, g, op, c);
      slots[idx].ok = true;
    } catch (const std::exception& e) {
      slots[idx].err = e.what();
    }
  };

  const std::size_t workers = std::min(worker_count(), std::max<std::size_t>(freqs.size(), 1));
  if (workers <= 1) {
    for (std::size_t k = 0; k < freqs.size(); ++k) task(k);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t k = next.fetch_add(1); k < freqs.size(); k = next.fetch_add(1))
          task(k);
      });
    for (auto& th : pool) th.join();
  }

  ScanSweepResult out;
  out.curve.frame = CurveFrame::kPositiveSeqStationary;
  out.curve.provenance = "scan";
  out.curve.params_digest = params_digest(p, g);
  out.curve.f_n_hz = p.f_N;
  switch (cfg.stack) {
    case ControlStack::kCclOnly: out.curve.fundamental_pole = p.k_iI > 0.0; break;
    case ControlStack::kVclCcl: out.curve.fundamental_pole = false; break;
    default: out.curve.fundamental_pole = true; break;
  }
  std::vector<std::size_t> order(freqs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return freqs[a] < freqs[b]; });
  for (const std::size_t k : order) {
    if (slots[k].ok) {
      out.curve.freqs_hz.push_back(freqs[k]);
      out.curve.values_ohm.push_back(slots[k].r.Z_p);
      out.points.push_back(std::move(slots[k].r));
    } else {
      std::ostringstream ss;
      ss << freqs[k] << " Hz: " << slots[k].err;
      out.errors.push_back(ss.str());
    }
  }
  out.partial = !out.errors.empty();
  if (!out.curve.freqs_hz.empty()) out.curve.validate();
  return out;
}

Complex dft_component(const std::vector<Complex>& x, double cycles) {
  if (x.empty()) throw ConfigError("empty window");
  const double n_inv = 1.0 / static_cast<double>(x.size());
  Complex acc;
  for (std::size_t k = 0; k < x.size(); ++k)
    acc += x[k] * std::polar(1.0, -kTwoPi * cycles * static_cast<double>(k) * n_inv);
  return acc * n_inv;
}

void DemoConfig::validate() const {
  if (!(t_end > 0.0)) throw ConfigError("demo end time must be positive");
  if (!(dt > 0.0) || dt > 50e-6)
    throw ConfigError("integration step must lie in (0, 50 us]");
  if (record_dt < dt) throw ConfigError("record spacing must be at least dt");
  double prev = 0.0;
  for (const auto& ev : schedule) {
    if (!(ev.t > prev)) throw ConfigError("schedule times must be strictly increasing");
    if (!(ev.t < t_end)) throw ConfigError("schedule event after the end time");
    if (!(ev.D_p > 0.0)) throw ConfigError("scheduled damping must be positive");
    prev = ev.t;
  }
  if (!(spectrum_f_lo >= 0.0) || !(spectrum_f_hi > spectrum_f_lo) ||
      !(spectrum_f_step > 0.0))
    throw ConfigError("bad spectrum grid");
}

namespace {

/// Hann-windowed single-bin amplitude estimate over irregular windows.
Spectrum windowed_spectrum(const std::string& name, const std::vector<double>& t,
                           const std::vector<Complex>& x, std::size_t lo, std::size_t hi,
                           double f_lo, double f_hi, double f_step) {
  Spectrum sp;
  sp.signal = name;
  const std::size_t m = hi - lo;
  std::vector<double> wnd(m);
  double wsum = 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    wnd[k] = 0.5 * (1.0 - std::cos(kTwoPi * static_cast<double>(k) /
                                   static_cast<double>(m > 1 ? m - 1 : 1)));
    wsum += wnd[k];
  }
  const long nbins = std::lround((f_hi - f_lo) / f_step);
  for (long b = 0; b <= nbins; ++b) {
    const double f = f_lo + static_cast<double>(b) * f_step;
    Complex acc;
    for (std::size_t k = 0; k < m; ++k)
      acc += wnd[k] * x[lo + k] * std::polar(1.0, -kTwoPi * f * t[lo + k]);
    acc /= wsum;
    sp.freq_hz.push_back(f);
    sp.mag.push_back(std::abs(acc));
    sp.phase_deg.push_back(std::arg(acc) * 180.0 / std::numbers::pi);
  }
  return sp;
}

SpectralPeak peak_in(const Spectrum& sp, double f_lo, double f_hi) {
  SpectralPeak pk;
  for (std::size_t k = 0; k < sp.freq_hz.size(); ++k) {
    if (sp.freq_hz[k] < f_lo || sp.freq_hz[k] > f_hi) continue;
    if (sp.mag[k] > pk.mag) {
      pk.mag = sp.mag[k];
      pk.freq_hz = sp.freq_hz[k];
    }
  }
  return pk;
}

}  // namespace

DemoResult run_instability_demo(const ConverterParams& p, const GridParams& g,
                                const DemoConfig& cfg) {
  cfg.validate();

  ConverterParams pc = p;
  const ControlStack stack = ControlStack::kFull;
  const OperatingPoint op = solve_stack_operating_point(stack, pc, g);
  const StackRefs refs = make_stack_refs(stack, pc, op);
  SimState st = equilibrium_state(stack, pc, g, op);

  GridDrive drive;
  drive.e_static = Complex(g.V_grid, 0.0);
  drive.t_on = 1e300;

  const std::size_t rec_every =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(cfg.record_dt / cfg.dt)));
  const std::size_t n_steps =
      static_cast<std::size_t>(std::ceil(cfg.t_end / cfg.dt - 1e-12));

  DemoResult out;
  std::vector<Complex> v_sync, i_sync;

  std::size_t next_event = 0;
  double t = 0.0;
  for (std::size_t k = 0; k < n_steps; ++k) {
    while (next_event < cfg.schedule.size() &&
           t >= cfg.schedule[next_event].t - 0.5 * cfg.dt) {
      pc.D_p = cfg.schedule[next_event].D_p;
      st.delta += cfg.event_kick_rad;
      ++next_event;
    }
    if (k % rec_every == 0) {
      const SimOutputs o = compute_outputs(st, drive.at(t), stack, refs, pc, g);
      out.series.t_s.push_back(t);
      out.series.p_w.push_back(o.p);
      out.series.q_var.push_back(o.q);
      out.series.vd_v.push_back(o.v.real());
      out.series.vq_v.push_back(o.v.imag());
      out.series.id_a.push_back(st.i.real());
      out.series.iq_a.push_back(st.i.imag());
      out.series.omega_rads.push_back(o.omega);
      const Complex rot = std::polar(1.0, st.delta);
      v_sync.push_back(o.v * rot);
      i_sync.push_back(st.i * rot);
    }
    try {
      st = step_model(st, t, drive, stack, refs, pc, g, cfg.dt);
    } catch (const SimulationDiverged& e) {
      out.diverged = true;
      out.diverged_at_s = e.t;
      break;
    }
    t += cfg.dt;
  }

  const double t_last = out.series.t_s.empty() ? 0.0 : out.series.t_s.back();

  // Analysis window: from one second after the first event (transients
  // gone) to the second event or the end of usable data.
  const double t1 = cfg.schedule.empty() ? std::max(0.0, t_last - 3.0)
                                         : cfg.schedule.front().t;
  double w_hi = cfg.schedule.size() >= 2 ? cfg.schedule[1].t : t_last;
  w_hi = std::min(w_hi, t_last);
  double w_lo = t1 + 1.0;
  if (w_lo > w_hi - 0.5) w_lo = std::max(t1, w_hi - 1.0);
  w_lo = std::max(0.0, w_lo);

  std::size_t lo = 0, hi = out.series.size();
  while (lo < hi && out.series.t_s[lo] < w_lo) ++lo;
  while (hi > lo && out.series.t_s[hi - 1] > w_hi) --hi;

  if (hi - lo >= 16) {
    // Active power spectrum about its window mean.
    double mean_p = 0.0;
    for (std::size_t k = lo; k < hi; ++k) mean_p += out.series.p_w[k];
    mean_p /= static_cast<double>(hi - lo);
    std::vector<Complex> p_ac(out.series.size());
    for (std::size_t k = lo; k < hi; ++k)
      p_ac[k] = Complex(out.series.p_w[k] - mean_p, 0.0);

    // Stationary-frame signals put the coupled pair on both sides of the
    // fundamental instead of a single low-frequency line. The window-mean
    // phasor (the steady fundamental) is removed first so the sideband
    // pair is not buried under carrier leakage.
    Complex mean_v, mean_i;
    for (std::size_t k = lo; k < hi; ++k) {
      mean_v += v_sync[k];
      mean_i += i_sync[k];
    }
    mean_v /= static_cast<double>(hi - lo);
    mean_i /= static_cast<double>(hi - lo);
    std::vector<Complex> v_stat(v_sync.size()), i_stat(i_sync.size());
    for (std::size_t k = lo; k < hi; ++k) {
      const Complex carrier = std::polar(1.0, p.omega_N * out.series.t_s[k]);
      v_stat[k] = (v_sync[k] - mean_v) * carrier;
      i_stat[k] = (i_sync[k] - mean_i) * carrier;
    }

    out.spectra.push_back(windowed_spectrum("p", out.series.t_s, p_ac, lo, hi,
                                            cfg.spectrum_f_lo, cfg.spectrum_f_hi,
                                            cfg.spectrum_f_step));
    out.spectra.push_back(windowed_spectrum("v_stationary", out.series.t_s, v_stat,
                                            lo, hi, cfg.spectrum_f_lo,
                                            cfg.spectrum_f_hi, cfg.spectrum_f_step));
    out.spectra.push_back(windowed_spectrum("i_stationary", out.series.t_s, i_stat,
                                            lo, hi, cfg.spectrum_f_lo,
                                            cfg.spectrum_f_hi, cfg.spectrum_f_step));

    const double sub_hi = p.f_N - 0.5;
    const double super_lo = p.f_N + 0.5;
    out.p_peak = peak_in(out.spectra[0], cfg.spectrum_f_lo, sub_hi);
    out.v_sub_peak = peak_in(out.spectra[1], cfg.spectrum_f_lo, sub_hi);
    out.v_super_peak = peak_in(out.spectra[1], super_lo, cfg.spectrum_f_hi);
  }

  // Recovery envelope: peak |P - P_final| per fundamental period after the
  // last event.
  if (!cfg.schedule.empty() && !out.diverged && out.series.size() > 2) {
    const double t_rec = cfg.schedule.back().t + 0.05;
    std::size_t r0 = 0;
    while (r0 < out.series.size() && out.series.t_s[r0] < t_rec) ++r0;
    if (r0 + 2 < out.series.size()) {
      double p_final = 0.0;
      std::size_t n_final = 0;
      for (std::size_t k = out.series.size(); k-- > 0;) {
        p_final += out.series.p_w[k];
        ++n_final;
        if (t_last - out.series.t_s[k] > 0.1) break;
      }
      p_final /= static_cast<double>(n_final);
      const double bucket = 1.0 / p.f_N;
      double bucket_end = out.series.t_s[r0] + bucket;
      double worst = 0.0;
      for (std::size_t k = r0; k < out.series.size(); ++k) {
        if (out.series.t_s[k] > bucket_end) {
          out.recovery_envelope_w.push_back(worst);
          worst = 0.0;
          bucket_end += bucket;
        }
        worst = std::max(worst, std::abs(out.series.p_w[k] - p_final));
      }
      out.recovery_envelope_w.push_back(worst);
    }
  }
  return out;
}

void write_timeseries_csv(const TimeSeries& ts, const std::string& path) {
  std::ostringstream ss;
  ss << "t_s,p_w,q_var,vd_v,vq_v,id_a,iq_a,omega_rads\n";
  for (std::size_t k = 0; k < ts.size(); ++k) {
    ss << format_double(ts.t_s[k]) << ',' << format_double(ts.p_w[k]) << ','
       << format_double(ts.q_var[k]) << ',' << format_double(ts.vd_v[k]) << ','
       << format_double(ts.vq_v[k]) << ',' << format_double(ts.id_a[k]) << ','
       << format_double(ts.iq_a[k]) << ',' << format_double(ts.omega_rads[k]) << '\n';
  }
  write_text_file(path, ss.str());
}

void write_spectrum_csv(const Spectrum& sp, const std::string& path) {
  std::ostringstream ss;
  ss << "freq_hz,mag,phase_deg\n";
  for (std::size_t k = 0; k < sp.freq_hz.size(); ++k)
    ss << format_double(sp.freq_hz[k]) << ',' << format_double(sp.mag[k]) << ','
       << format_double(sp.phase_deg[k]) << '\n';
  write_text_file(path, ss.str());
}

}  // namespace gfmimp
