#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "gfmimp/models.hpp"
#include "gfmimp/params.hpp"

namespace gfmimp {

/// Control stacks the averaged model can run. Each adds one loop:
/// current PI only; voltage + current; power synchronization on top of
/// both (no reactive loop, the diagnostic configuration the analytic
/// 2x2 model describes); and the full stack with the reactive droop
/// integrator.
enum class ControlStack { kCclOnly, kVclCcl, kApclVclCcl, kFull };

std::string stack_name(ControlStack s);
ControlStack stack_from_name(const std::string& name);

/// The stack whose small-signal behavior an analytic tier describes.
ControlStack stack_for_tier(TierTag tier);

/// Averaged-model state. Members not used by a reduced stack stay frozen
/// at their equilibrium values (their derivatives are zero).
struct SimState {
  Complex i;     ///< converter current out of the bridge, converter frame [A]
  Complex xi_I;  ///< current-controller integrator [V]
  Complex xi_V;  ///< voltage-controller integrator [A]
  double delta = 0.0;  ///< converter frame angle minus synchronous angle [rad]
  double omega = 0.0;  ///< power-loop frequency state [rad/s]
  double xi_Q = 0.0;   ///< reactive-droop integrator [V]
};

/// Fixed references for the reduced stacks: the current order when no
/// voltage loop runs, the voltage order when no reactive loop runs.
struct StackRefs {
  Complex i_ref;
  double v_ref = 0.0;
};

/// Thevenin drive in the synchronous frame: a static source plus an
/// optional rotating perturbation switched on at t_on.
struct GridDrive {
  Complex e_static;
  Complex pert;            ///< perturbation phasor at switch-on
  double pert_omega = 0.0; ///< perturbation offset speed [rad/s]
  double t_on = 0.0;
  Complex at(double t) const;
};

/// Instantaneous electrical quantities implied by a state (the terminal
/// node sits behind the filter inductor and carries an algebraic loop
/// through the proportional gains; it is resolved in closed form).
struct SimOutputs {
  Complex v;       ///< terminal voltage, converter frame [V]
  Complex e;       ///< bridge EMF, converter frame [V]
  double p = 0.0;  ///< active power at the terminal [W]
  double q = 0.0;  ///< reactive power at the terminal [var]
  double omega = 0.0;  ///< converter frame speed [rad/s]
};

SimOutputs compute_outputs(const SimState& st, Complex e_thev_sync,
                           ControlStack stack, const StackRefs& refs,
                           const ConverterParams& p, const GridParams& g);

/// Time derivative of the state under the given synchronous-frame drive.
SimState derivatives(const SimState& st, Complex e_thev_sync, ControlStack stack,
                     const StackRefs& refs, const ConverterParams& p,
                     const GridParams& g);

/// One classical fixed-step RK4 advance from time t. Throws
/// SimulationDiverged when any state exceeds 100 p.u.
SimState step_model(const SimState& st, double t, const GridDrive& drive,
                    ControlStack stack, const StackRefs& refs,
                    const ConverterParams& p, const GridParams& g, double dt);

/// Number of active states: 4, 6, 7 or 8 (+1 with inertia on power stacks).
std::size_t state_dim(ControlStack stack, const ConverterParams& p);

/// Flatten the active states (documented order: i_d, i_q, xi_I_d, xi_I_q,
/// then xi_V_d, xi_V_q, then delta, omega when J > 0, then xi_Q) and the
/// matching per-unit scales used by the settle and divergence tests.
std::vector<double> pack_state(const SimState& st, ControlStack stack,
                               const ConverterParams& p);
SimState unpack_state(const std::vector<double>& x, const SimState& base,
                      ControlStack stack, const ConverterParams& p);
std::vector<double> state_scales(ControlStack stack, const ConverterParams& p);

/// Steady operating point for a stack: droop-consistent for the full
/// stack, plain power flow otherwise.
OperatingPoint solve_stack_operating_point(ControlStack stack,
                                           const ConverterParams& p,
                                           const GridParams& g);

/// References that hold the given operating point with this stack.
StackRefs make_stack_refs(ControlStack stack, const ConverterParams& p,
                          const OperatingPoint& op);

/// Closed-form equilibrium state at the operating point.
SimState equilibrium_state(ControlStack stack, const ConverterParams& p,
                           const GridParams& g, const OperatingPoint& op);

struct ScanConfig {
  double f_pert = 0.0;      ///< perturbation frequency [Hz]
  double amplitude = 0.01;  ///< fraction of V_N, in (0, 0.05]
  double settle_time = 2.0; ///< post-injection wait before capture [s]
  int capture_periods = 20; ///< minimum perturbation periods captured
  double dt = 1e-5;         ///< integration step, at most 50 us
  ControlStack stack = ControlStack::kFull;
  void validate(const ConverterParams& p) const;
};

struct ScanResult {
  double f_pert = 0.0;
  Complex Z_p;       ///< positive-sequence impedance at f_pert [ohm]
  Complex V_phasor;  ///< terminal-voltage component at f_pert
  Complex I_phasor;  ///< current component at f_pert
  double thd_residual = 0.0;  ///< off-tone spectral energy fraction
  std::vector<std::string> warnings;
};

/// Perturbation-injection measurement at one frequency. A series
/// positive-sequence tone rides on the grid source; after the transient
/// settles, exact-period windows of terminal voltage and current are
/// demodulated at the tone and its mirror about the fundamental. Stacks
/// with power loops couple the two; both injections are run and the 2x2
/// frequency-coupling system is solved, so Z_p is the true
/// positive-sequence impedance rather than the single-tone apparent
/// ratio. V_phasor/I_phasor always report the direct-run components.
ScanResult run_scan(const ConverterParams& p, const GridParams& g,
                    const OperatingPoint& op, const ScanConfig& cfg);

struct ScanSweepResult {
  ImpedanceCurve curve;           ///< provenance "scan"
  std::vector<ScanResult> points; ///< per-frequency details (kept points)
  std::vector<std::string> errors;///< per-point failures, "<freq>: <what>"
  bool partial = false;           ///< true when any point failed
};

/// Scans every frequency (workers set by GFMIMP_WORKERS, inline when 1;
/// the curve is assembled in ascending frequency order regardless of
/// input order or scheduling).
ScanSweepResult scan_sweep(const ConverterParams& p, const GridParams& g,
                           const OperatingPoint& op,
                           const std::vector<double>& freqs,
                           const ScanConfig& cfg);

/// Complex single-bin DFT, (1/N) * sum x_n exp(-j*2*pi*cycles*n/N).
Complex dft_component(const std::vector<Complex>& x, double cycles);

struct DemoEvent {
  double t = 0.0;   ///< event time [s]
  double D_p = 0.0; ///< damping value applied from t on [W s/rad]
};

struct DemoConfig {
  std::vector<DemoEvent> schedule; ///< strictly increasing times
  double t_end = 10.0;
  double dt = 1e-5;
  double record_dt = 5e-4;  ///< decimated output sample spacing
  /// Small rotor-angle disturbance applied with each scheduled change,
  /// standing in for the switching transient that excites the swing mode.
  double event_kick_rad = 0.002;
  double spectrum_f_lo = 1.0;
  double spectrum_f_hi = 95.0;
  double spectrum_f_step = 0.1;
  void validate() const;
};

struct TimeSeries {
  std::vector<double> t_s, p_w, q_var, vd_v, vq_v, id_a, iq_a, omega_rads;
  std::size_t size() const { return t_s.size(); }
};

struct Spectrum {
  std::string signal;
  std::vector<double> freq_hz;
  std::vector<double> mag;
  std::vector<double> phase_deg;
};

struct SpectralPeak {
  double freq_hz = 0.0;
  double mag = 0.0;
};

struct DemoResult {
  TimeSeries series;
  std::vector<Spectrum> spectra;  ///< "p", "v_stationary", "i_stationary"
  /// Dominant oscillation components in the analysis window after the
  /// first event: active power (sub-synchronous), and the stationary
  /// voltage peaks below and above the fundamental.
  SpectralPeak p_peak;
  SpectralPeak v_sub_peak;
  SpectralPeak v_super_peak;
  /// Peak |P - P_end| per fundamental period after the last event.
  std::vector<double> recovery_envelope_w;
  bool diverged = false;
  double diverged_at_s = 0.0;
};

/// Steps D_p per schedule on the full stack and reports waveforms,
/// Hann-windowed spectra, the dominant oscillation components, and the
/// post-restoration decay envelope. Divergence is reported as a finding.
DemoResult run_instability_demo(const ConverterParams& p, const GridParams& g,
                                const DemoConfig& cfg);

/// CSV exports: "t_s,p_w,q_var,vd_v,vq_v,id_a,iq_a,omega_rads" and
/// "freq_hz,mag,phase_deg".
void write_timeseries_csv(const TimeSeries& ts, const std::string& path);
void write_spectrum_csv(const Spectrum& sp, const std::string& path);

}  // namespace gfmimp
