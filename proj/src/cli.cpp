#include "gfmimp/cli.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gfmimp/band.hpp"
#include "gfmimp/csvio.hpp"
#include "gfmimp/errors.hpp"
#include "gfmimp/linearize.hpp"
#include "gfmimp/models.hpp"
#include "gfmimp/params.hpp"
#include "gfmimp/sim.hpp"

namespace gfmimp {
namespace {

using nlohmann::ordered_json;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitModel = 3;
constexpr int kExitNoCorner = 4;
constexpr int kExitComplianceFail = 5;

// ---------------------------------------------------------------------------
// small parsing / formatting helpers

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

double parse_number(const std::string& raw, const std::string& what) {
  const std::string s = trim(raw);
  const char* b = s.c_str();
  char* e = nullptr;
  errno = 0;
  const double v = std::strtod(b, &e);
  if (e == b || *e != '\0' || errno == ERANGE || !std::isfinite(v))
    throw ConfigError(what + ": '" + raw + "' is not a finite number");
  return v;
}

struct Triplet {
  double start = 0.0;
  double stop = 0.0;
  double step = 0.0;
};

Triplet parse_triplet(const std::string& s, const std::string& what) {
  const auto parts = split(s, ':');
  if (parts.size() != 3)
    throw ConfigError(what + ": expected start:stop:step, got '" + s + "'");
  Triplet t;
  t.start = parse_number(parts[0], what + " start");
  t.stop = parse_number(parts[1], what + " stop");
  t.step = parse_number(parts[2], what + " step");
  if (!(t.step > 0.0)) throw ConfigError(what + ": step must be positive");
  if (t.stop < t.start) throw ConfigError(what + ": stop must be >= start");
  return t;
}

/// "a:b:step" range or "v1,v2,..." list of plain values (not frequency
/// grids; no lattice constraint, no exclusion).
std::vector<double> parse_values(const std::string& s, const std::string& what) {
  if (s.find(':') != std::string::npos) {
    const Triplet t = parse_triplet(s, what);
    std::vector<double> out;
    const auto n = static_cast<std::size_t>(
        std::floor((t.stop - t.start) / t.step + 1e-9));
    for (std::size_t k = 0; k <= n; ++k) out.push_back(t.start + double(k) * t.step);
    return out;
  }
  std::vector<double> out;
  for (const auto& part : split(s, ',')) {
    if (trim(part).empty()) continue;
    out.push_back(parse_number(part, what));
  }
  if (out.empty()) throw ConfigError(what + ": no values given");
  return out;
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += '"';
  return out;
}

std::string iso_utc_now() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string join_path(const std::string& dir, const std::string& name) {
  if (dir.empty()) return name;
  if (dir.back() == '/') return dir + name;
  return dir + "/" + name;
}

// ---------------------------------------------------------------------------
// run configuration: fully resolved options for one command, the unit the
// manifest echoes and `rerun` replays.

struct RunConfig {
  std::string command;
  std::string params_path = "params/gfm200kw.json";
  std::string out_dir = "out";

  // single-value model/operating overrides (absent = parameter-file value)
  std::optional<double> dp_pu, j_pu, pf, scr, rx;
  bool no_inertia = false;

  // sampling grid for analytic/linearized curves
  Triplet grid{30.0, 70.0, 0.1};

  std::vector<std::string> tiers{"apcl"};  // curve
  std::string tier = "apcl";  // index/check source tier, scan control stack
  std::string curve_path;     // index/check: measured-curve source
  std::string preset;         // check

  // sweep axes (empty = not swept / defaults applied at execution)
  std::vector<double> dp_values, j_values, pf_values, scr_values, rx_values;

  // scan settings
  std::string freqs_spec;     // raw flag text ("" = command default)
  std::vector<double> freqs;  // resolved list (filled at execution / rerun)
  double amplitude = 0.01;
  int capture_periods = 20;
  double scan_dt = 1e-5;
  std::optional<double> settle;  // absent = adaptive from the damping pre-check

  // demo settings
  std::vector<std::pair<double, double>> schedule{{1.0, 2.5}, {5.0, 50.0}};
  double t_end = 10.0;

  std::string manifest_path;  // rerun input
};

void set_optional(ordered_json& j, const char* key, const std::optional<double>& v) {
  if (v) j[key] = *v;
  else j[key] = nullptr;
}

std::optional<double> get_optional(const ordered_json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<double>();
}

ordered_json grid_json(const Triplet& t) {
  ordered_json g;
  g["start_hz"] = t.start;
  g["stop_hz"] = t.stop;
  g["step_hz"] = t.step;
  return g;
}

Triplet grid_from_json(const ordered_json& j, const Triplet& fallback) {
  if (!j.is_object()) return fallback;
  Triplet t;
  t.start = j.value("start_hz", fallback.start);
  t.stop = j.value("stop_hz", fallback.stop);
  t.step = j.value("step_hz", fallback.step);
  return t;
}

void overrides_to_json(ordered_json& r, const RunConfig& cfg) {
  set_optional(r, "dp_pu", cfg.dp_pu);
  set_optional(r, "j_pu", cfg.j_pu);
  r["no_inertia"] = cfg.no_inertia;
  set_optional(r, "pf", cfg.pf);
  set_optional(r, "scr", cfg.scr);
  set_optional(r, "rx", cfg.rx);
}

void overrides_from_json(const ordered_json& r, RunConfig& cfg) {
  cfg.dp_pu = get_optional(r, "dp_pu");
  cfg.j_pu = get_optional(r, "j_pu");
  cfg.no_inertia = r.value("no_inertia", false);
  cfg.pf = get_optional(r, "pf");
  cfg.scr = get_optional(r, "scr");
  cfg.rx = get_optional(r, "rx");
}

void source_to_json(ordered_json& r, const RunConfig& cfg) {
  ordered_json src;
  if (!cfg.curve_path.empty()) src["curve_path"] = cfg.curve_path;
  else src["tier"] = cfg.tier;
  r["source"] = src;
}

void source_from_json(const ordered_json& r, RunConfig& cfg) {
  if (!r.contains("source")) return;
  const auto& src = r["source"];
  cfg.curve_path = src.value("curve_path", std::string());
  cfg.tier = src.value("tier", cfg.tier);
}

ordered_json resolved_json(const RunConfig& cfg) {
  ordered_json r;
  r["params_path"] = cfg.params_path;
  r["out_dir"] = cfg.out_dir;
  if (cfg.command == "curve") {
    r["tiers"] = cfg.tiers;
    r["grid_hz"] = grid_json(cfg.grid);
    overrides_to_json(r, cfg);
  } else if (cfg.command == "index" || cfg.command == "check") {
    source_to_json(r, cfg);
    if (cfg.command == "check") r["preset"] = cfg.preset;
    r["grid_hz"] = grid_json(cfg.grid);
    overrides_to_json(r, cfg);
  } else if (cfg.command == "sweep") {
    const bool scan_mode = !cfg.pf_values.empty() || !cfg.scr_values.empty() ||
                           !cfg.rx_values.empty();
    r["mode"] = scan_mode ? "scan" : "analytic";
    if (scan_mode) {
      r["pf_values"] = cfg.pf_values;
      r["scr_values"] = cfg.scr_values;
      r["rx_values"] = cfg.rx_values;
      r["freqs_hz"] = cfg.freqs;
      r["amplitude"] = cfg.amplitude;
      r["capture_periods"] = cfg.capture_periods;
      r["dt_s"] = cfg.scan_dt;
      set_optional(r, "settle_s", cfg.settle);
    } else {
      r["dp_pu_values"] = cfg.dp_values;
      r["j_pu_values"] = cfg.j_values;
      r["grid_hz"] = grid_json(cfg.grid);
    }
  } else if (cfg.command == "scan") {
    r["stack"] = cfg.tier;
    r["freqs_hz"] = cfg.freqs;
    r["amplitude"] = cfg.amplitude;
    r["capture_periods"] = cfg.capture_periods;
    r["dt_s"] = cfg.scan_dt;
    set_optional(r, "settle_s", cfg.settle);
    overrides_to_json(r, cfg);
  } else if (cfg.command == "demo") {
    ordered_json sched = ordered_json::array();
    for (const auto& ev : cfg.schedule) {
      ordered_json e;
      e["t_s"] = ev.first;
      e["dp_pu"] = ev.second;
      sched.push_back(e);
    }
    r["schedule"] = sched;
    r["t_end_s"] = cfg.t_end;
    overrides_to_json(r, cfg);
  }
  return r;
}

RunConfig config_from_manifest(const ordered_json& doc) {
  if (!doc.is_object() || !doc.contains("command") || !doc.contains("resolved"))
    throw ConfigError("manifest: expected an object with 'command' and 'resolved'");
  RunConfig cfg;
  cfg.command = doc["command"].get<std::string>();
  const ordered_json& r = doc["resolved"];
  cfg.params_path = r.value("params_path", cfg.params_path);
  cfg.out_dir = r.value("out_dir", cfg.out_dir);
  if (cfg.command == "curve") {
    if (r.contains("tiers")) cfg.tiers = r["tiers"].get<std::vector<std::string>>();
    cfg.grid = grid_from_json(r.value("grid_hz", ordered_json()), cfg.grid);
    overrides_from_json(r, cfg);
  } else if (cfg.command == "index" || cfg.command == "check") {
    source_from_json(r, cfg);
    cfg.preset = r.value("preset", std::string());
    cfg.grid = grid_from_json(r.value("grid_hz", ordered_json()), cfg.grid);
    overrides_from_json(r, cfg);
  } else if (cfg.command == "sweep") {
    const std::string mode = r.value("mode", "analytic");
    if (mode == "scan") {
      cfg.pf_values = r.value("pf_values", std::vector<double>{});
      cfg.scr_values = r.value("scr_values", std::vector<double>{});
      cfg.rx_values = r.value("rx_values", std::vector<double>{});
      cfg.freqs = r.value("freqs_hz", std::vector<double>{});
      cfg.amplitude = r.value("amplitude", cfg.amplitude);
      cfg.capture_periods = r.value("capture_periods", cfg.capture_periods);
      cfg.scan_dt = r.value("dt_s", 5e-5);
      cfg.settle = get_optional(r, "settle_s");
      if (cfg.pf_values.empty() && cfg.scr_values.empty() && cfg.rx_values.empty())
        throw ConfigError("manifest: scan-mode sweep without any axis values");
    } else {
      cfg.dp_values = r.value("dp_pu_values", std::vector<double>{});
      cfg.j_values = r.value("j_pu_values", std::vector<double>{});
      cfg.grid = grid_from_json(r.value("grid_hz", ordered_json()), cfg.grid);
    }
  } else if (cfg.command == "scan") {
    cfg.tier = r.value("stack", std::string("full"));
    cfg.freqs = r.value("freqs_hz", std::vector<double>{});
    cfg.amplitude = r.value("amplitude", cfg.amplitude);
    cfg.capture_periods = r.value("capture_periods", cfg.capture_periods);
    cfg.scan_dt = r.value("dt_s", cfg.scan_dt);
    cfg.settle = get_optional(r, "settle_s");
    overrides_from_json(r, cfg);
  } else if (cfg.command == "demo") {
    cfg.schedule.clear();
    for (const auto& e : r.value("schedule", ordered_json::array()))
      cfg.schedule.emplace_back(e.value("t_s", 0.0), e.value("dp_pu", 0.0));
    cfg.t_end = r.value("t_end_s", cfg.t_end);
    overrides_from_json(r, cfg);
  } else {
    throw ConfigError("manifest: unknown command '" + cfg.command + "'");
  }
  return cfg;
}

// ---------------------------------------------------------------------------
// parameter resolution shared by every command

struct ResolvedModel {
  ConverterParams p;
  GridParams g;
  PerUnitBases bases;  // from the parameter-file ratings
};

void apply_pf(ConverterParams& p, double pf) {
  if (!(std::abs(pf) > 0.0) || std::abs(pf) > 1.0)
    throw ConfigError("--pf must be a signed power factor with 0 < |pf| <= 1");
  // Constant apparent power: |P| + |Q| trade at fixed S_N. The sign of pf
  // sets the active-power direction; the reactive reference follows the
  // absorbing convention (the converter draws inductive reactive power),
  // so Q_ref <= 0 for every off-unity power factor.
  p.P_ref = p.S_N * pf;
  p.Q_ref = -p.S_N * std::sqrt(std::max(0.0, 1.0 - pf * pf));
}

ResolvedModel resolve_model(const RunConfig& cfg) {
  const ParamSet ps = load_params(cfg.params_path);
  ResolvedModel m{ps.conv, ps.grid, per_unit_bases(ps.conv)};
  if (cfg.no_inertia && cfg.j_pu)
    throw ConfigError("--no-inertia conflicts with --j-pu");
  if (cfg.dp_pu) m.p.D_p = *cfg.dp_pu * m.bases.D_base;
  if (cfg.j_pu) m.p.J = *cfg.j_pu * m.bases.J_base;
  if (cfg.no_inertia) m.p.J = 0.0;
  if (cfg.pf) apply_pf(m.p, *cfg.pf);
  if (cfg.scr || cfg.rx) {
    const double scr = cfg.scr ? *cfg.scr : m.g.SCR;
    const double rx = cfg.rx ? *cfg.rx : m.g.ratio_RX;
    m.g = GridParams::from_scr(m.p, scr, rx, m.g.V_grid);
  }
  m.p.validate();
  m.g.validate();
  return m;
}

bool has_operating_flags(const RunConfig& cfg) {
  return cfg.pf.has_value() || cfg.scr.has_value() || cfg.rx.has_value();
}

/// Tier for analytic/linearized curve sampling. Off-rated operating flags
/// move the outer-loop coupling strength to the solved operating point.
ModelTier build_tier(const std::string& token, const ResolvedModel& m,
                     const RunConfig& cfg, const OperatingPoint& op) {
  const TierTag tag = tier_from_name(token);
  if (tag == TierTag::kFullNumeric) return make_full_numeric_tier(m.p, m.g);
  ModelTier tier;
  tier.tag = tag;
  tier.inertia_enabled = !cfg.no_inertia;
  if (tag == TierTag::kApclSimplified && has_operating_flags(cfg))
    tier.ssop_override = build_ssop_matrices(op, m.p);
  return tier;
}

OperatingPoint curve_operating_point(const ResolvedModel& m, const RunConfig& cfg) {
  if (has_operating_flags(cfg))
    return solve_operating_point(m.p, m.g, m.p.P_ref, m.p.Q_ref);
  return OperatingPoint::rated(m.p);
}

ImpedanceCurve sample_tier_curve(const std::string& token, const ResolvedModel& m,
                                 const RunConfig& cfg, const OperatingPoint& op) {
  const ModelTier tier = build_tier(token, m, cfg, op);
  std::optional<double> exclude;
  if (tier_has_fundamental_pole(tier, m.p)) exclude = m.p.f_N;
  const std::vector<double> grid =
      frequency_grid(cfg.grid.start, cfg.grid.stop, cfg.grid.step, exclude);
  return sample_curve(tier, m.p, m.g, op, grid);
}

/// Curve for index/check: a measured CSV when --curve was given, otherwise
/// the requested tier sampled over the configured grid.
ImpedanceCurve source_curve(const RunConfig& cfg, const ResolvedModel& m) {
  if (!cfg.curve_path.empty())
    return ingest_measured_curve(cfg.curve_path, m.p.f_N);
  const OperatingPoint op = curve_operating_point(m, cfg);
  return sample_tier_curve(cfg.tier, m, cfg, op);
}

// ---------------------------------------------------------------------------
// manifest

void write_manifest(const RunConfig& cfg, const ResolvedModel* m,
                    const std::vector<std::string>& outputs,
                    const std::vector<std::string>& warnings) {
  ordered_json doc;
  doc["schema"] = "gfmimp-run/1";
  doc["command"] = cfg.command;
  doc["created_utc"] = iso_utc_now();  // the only timestamp in any output
  if (m != nullptr) doc["params_digest"] = params_digest(m->p, m->g);
  doc["resolved"] = resolved_json(cfg);
  doc["outputs"] = outputs;
  doc["warnings"] = warnings;
  write_text_file(join_path(cfg.out_dir, "manifest.json"), doc.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// scan support

double adaptive_settle(double worst_re) {
  return std::max(2.0, 6.0 / std::max(0.5, -worst_re));
}

std::vector<double> resolve_scan_freqs(const RunConfig& cfg, double f_n,
                                       const Triplet& fallback) {
  if (!cfg.freqs.empty()) return cfg.freqs;  // rerun carries the explicit list
  if (cfg.freqs_spec.empty())
    return frequency_grid(fallback.start, fallback.stop, fallback.step, f_n);
  if (cfg.freqs_spec.find(':') != std::string::npos) {
    const Triplet t = parse_triplet(cfg.freqs_spec, "--freqs");
    return frequency_grid(t.start, t.stop, t.step, f_n);
  }
  std::vector<double> vals = parse_values(cfg.freqs_spec, "--freqs");
  std::sort(vals.begin(), vals.end());
  return vals;
}

// ---------------------------------------------------------------------------
// curve

int cmd_curve(RunConfig cfg) {
  const ResolvedModel m = resolve_model(cfg);
  const OperatingPoint op = curve_operating_point(m, cfg);

  std::vector<std::string> tokens;
  for (const auto& t : cfg.tiers) {
    const std::string tok = trim(t);
    if (tok.empty()) continue;
    if (std::find(tokens.begin(), tokens.end(), tok) == tokens.end())
      tokens.push_back(tok);
  }
  if (tokens.empty()) throw ConfigError("--tier: no tier names given");
  cfg.tiers = tokens;

  std::vector<std::string> outputs;
  for (const auto& tok : tokens) {
    const ImpedanceCurve c = sample_tier_curve(tok, m, cfg, op);
    const std::string csv_name = "curve_" + tok + ".csv";
    const std::string meta_name = "curve_" + tok + ".json";
    write_curve_csv(c, join_path(cfg.out_dir, csv_name));
    write_curve_sidecar(c, join_path(cfg.out_dir, meta_name));
    outputs.push_back(csv_name);
    outputs.push_back(meta_name);
  }
  write_manifest(cfg, &m, outputs, {});
  return kExitOk;
}

// ---------------------------------------------------------------------------
// index

int cmd_index(RunConfig cfg) {
  const ResolvedModel m = resolve_model(cfg);
  const ImpedanceCurve c = source_curve(cfg, m);

  BandIndexReport rep;
  try {
    rep = band_index(c);
  } catch (const NoCornerError& e) {
    std::string msg = e.what();
    if (cfg.curve_path.empty() && cfg.tier == "vcl")
      msg += "; the voltage-controlled tier has no outer power loop, so no "
             "impedance peak rises around the fundamental and no exclusion "
             "band exists";
    std::cerr << "error: " << msg << "\n";
    write_manifest(cfg, &m, {}, {msg});
    return kExitNoCorner;
  }

  ordered_json j = ordered_json::parse(band_report_json(rep, c));
  ordered_json advice;
  advice["omit_lo_hz"] = c.f_n_hz - rep.df_hz;
  advice["omit_hi_hz"] = c.f_n_hz + rep.df_hz;
  advice["note"] =
      "omit this band from stationary-frame impedance fitting around the "
      "fundamental";
  j["advice"] = advice;

  std::ostringstream txt;
  txt << band_report_text(rep, c);
  txt << "  advice: omit [" << format_double(c.f_n_hz - rep.df_hz) << ", "
      << format_double(c.f_n_hz + rep.df_hz)
      << "] Hz from stationary-frame impedance fitting\n";

  write_text_file(join_path(cfg.out_dir, "index.json"), j.dump(2) + "\n");
  write_text_file(join_path(cfg.out_dir, "index.txt"), txt.str());
  write_manifest(cfg, &m, {"index.json", "index.txt"}, {});
  return kExitOk;
}

// ---------------------------------------------------------------------------
// sweep

struct SweepRow {
  std::vector<double> axis;  // swept values, in column order
  std::optional<BandIndexReport> band;
  std::string error;
};

std::string sweep_csv(const std::vector<std::string>& axis_names,
                      const std::vector<SweepRow>& rows) {
  std::ostringstream ss;
  for (const auto& n : axis_names) ss << n << ',';
  ss << "f_a_hz,f_b_hz,df1_hz,df2_hz,df_hz,f_peak_hz,z_peak_ohm,error\n";
  for (const auto& row : rows) {
    for (double v : row.axis) ss << format_double(v) << ',';
    if (row.band) {
      const auto& b = *row.band;
      ss << format_double(b.f_a_hz) << ',' << format_double(b.f_b_hz) << ','
         << format_double(b.df1_hz) << ',' << format_double(b.df2_hz) << ','
         << format_double(b.df_hz) << ',' << format_double(b.f_peak_hz) << ','
         << format_double(b.z_peak_ohm) << ',';
    } else {
      ss << ",,,,,,,";
    }
    ss << csv_escape(row.error) << '\n';
  }
  return ss.str();
}

int cmd_sweep_analytic(RunConfig cfg) {
  if (cfg.dp_values.empty()) cfg.dp_values = {10.0, 20.0, 30.0, 40.0, 50.0};
  if (cfg.j_values.empty()) cfg.j_values = {1.0, 2.0, 4.0, 8.0};

  const ParamSet ps = load_params(cfg.params_path);
  const PerUnitBases bases = per_unit_bases(ps.conv);

  std::vector<SweepRow> rows;
  for (double dp : cfg.dp_values) {
    for (double jj : cfg.j_values) {
      SweepRow row;
      row.axis = {dp, jj};
      try {
        ConverterParams p = ps.conv;
        p.D_p = dp * bases.D_base;
        p.J = jj * bases.J_base;
        p.validate();
        ModelTier tier;
        tier.tag = TierTag::kApclSimplified;
        const std::vector<double> grid =
            frequency_grid(cfg.grid.start, cfg.grid.stop, cfg.grid.step, p.f_N);
        const ImpedanceCurve c =
            sample_curve(tier, p, ps.grid, OperatingPoint::rated(p), grid);
        row.band = band_index(c);
      } catch (const Error& e) {
        row.error = e.what();
      }
      rows.push_back(std::move(row));
    }
  }

  write_text_file(join_path(cfg.out_dir, "sweep.csv"),
                  sweep_csv({"dp_pu", "j_pu"}, rows));
  const ResolvedModel m{ps.conv, ps.grid, bases};
  write_manifest(cfg, &m, {"sweep.csv"}, {});
  return kExitOk;
}

int cmd_sweep_scan(RunConfig cfg) {
  const ParamSet ps = load_params(cfg.params_path);
  const ResolvedModel base{ps.conv, ps.grid, per_unit_bases(ps.conv)};

  // Omitted axes stay at the parameter-file operating point.
  if (cfg.pf_values.empty()) {
    const double s = std::hypot(ps.conv.P_ref, ps.conv.Q_ref);
    cfg.pf_values = {s > 0.0 ? ps.conv.P_ref / s : 1.0};
  }
  if (cfg.scr_values.empty()) cfg.scr_values = {ps.grid.SCR};
  if (cfg.rx_values.empty()) cfg.rx_values = {ps.grid.ratio_RX};

  cfg.freqs = resolve_scan_freqs(cfg, ps.conv.f_N, Triplet{42.0, 58.0, 0.25});

  std::vector<SweepRow> rows;
  for (double pf : cfg.pf_values) {
    for (double scr : cfg.scr_values) {
      for (double rx : cfg.rx_values) {
        SweepRow row;
        row.axis = {pf, scr, rx};
        try {
          ConverterParams p = ps.conv;
          apply_pf(p, pf);
          const GridParams g = GridParams::from_scr(p, scr, rx, ps.grid.V_grid);
          const LinearizedModel lin = linearize_stack(ControlStack::kFull, p, g);
          const double worst = lin.worst_eigenvalue_re();
          if (worst >= 0.0) {
            row.error = "operating point small-signal unstable (worst eigenvalue "
                        "real part +" +
                        format_double(worst) + " 1/s)";
            rows.push_back(std::move(row));
            continue;
          }
          ScanConfig sc;
          sc.amplitude = cfg.amplitude;
          sc.capture_periods = cfg.capture_periods;
          sc.dt = cfg.scan_dt;
          sc.settle_time = cfg.settle ? *cfg.settle : adaptive_settle(worst);
          sc.stack = ControlStack::kFull;
          const ScanSweepResult sw = scan_sweep(p, g, lin.op, cfg.freqs, sc);
          std::vector<std::string> problems;
          if (!sw.errors.empty())
            problems.push_back(std::to_string(sw.errors.size()) +
                               " scan point(s) failed: " + sw.errors.front());
          if (sw.curve.size() == 0) {
            row.error = problems.front();
            rows.push_back(std::move(row));
            continue;
          }
          try {
            row.band = band_index(sw.curve);
          } catch (const Error& e) {
            problems.push_back(e.what());
          }
          if (!problems.empty()) {
            std::string joined;
            for (const auto& s : problems) {
              if (!joined.empty()) joined += "; ";
              joined += s;
            }
            row.error = joined;
          }
        } catch (const Error& e) {
          row.error = e.what();
        }
        rows.push_back(std::move(row));
      }
    }
  }

  write_text_file(join_path(cfg.out_dir, "sweep.csv"),
                  sweep_csv({"pf", "scr", "rx"}, rows));
  write_manifest(cfg, &base, {"sweep.csv"}, {});
  return kExitOk;
}

int cmd_sweep(RunConfig cfg) {
  const bool analytic_axes = !cfg.dp_values.empty() || !cfg.j_values.empty();
  const bool scan_axes = !cfg.pf_values.empty() || !cfg.scr_values.empty() ||
                         !cfg.rx_values.empty();
  if (analytic_axes && scan_axes)
    throw ConfigError(
        "sweep axes conflict: --dp-pu/--j-pu sweep the analytic damping/inertia "
        "surface, --pf/--scr/--rx sweep scanned operating points; give one group");
  if (scan_axes) return cmd_sweep_scan(std::move(cfg));
  return cmd_sweep_analytic(std::move(cfg));
}

// ---------------------------------------------------------------------------
// scan

int cmd_scan(RunConfig cfg) {
  const ResolvedModel m = resolve_model(cfg);
  const ControlStack stack = stack_from_name(cfg.tier);
  cfg.freqs = resolve_scan_freqs(cfg, m.p.f_N, Triplet{30.0, 70.0, 0.5});
  if (cfg.freqs.empty()) throw ConfigError("--freqs: no scan frequencies left");

  const LinearizedModel lin = linearize_stack(stack, m.p, m.g);
  const double worst = lin.worst_eigenvalue_re();
  if (worst >= 0.0)
    throw ModelError(
        "operating point is small-signal unstable with this control stack and "
        "grid (slowest mode real part +" +
        format_double(worst) +
        " 1/s); a time-domain scan cannot settle. Try a weaker coupling "
        "(e.g. --scr 3 --rx 0.3) or higher damping");

  ScanConfig sc;
  sc.amplitude = cfg.amplitude;
  sc.capture_periods = cfg.capture_periods;
  sc.dt = cfg.scan_dt;
  sc.settle_time = cfg.settle ? *cfg.settle : adaptive_settle(worst);
  sc.stack = stack;

  const ScanSweepResult sw = scan_sweep(m.p, m.g, lin.op, cfg.freqs, sc);
  if (sw.curve.size() == 0)
    throw ModelError("every scan frequency failed" +
                     (sw.errors.empty() ? std::string()
                                        : "; first: " + sw.errors.front()));

  const std::string csv_name = "scan_" + cfg.tier + ".csv";
  const std::string meta_name = "scan_" + cfg.tier + ".json";
  write_curve_csv(sw.curve, join_path(cfg.out_dir, csv_name));
  write_curve_sidecar(sw.curve, join_path(cfg.out_dir, meta_name));

  std::vector<std::string> warnings;
  for (const auto& e : sw.errors) {
    warnings.push_back("scan point failed: " + e);
    std::cerr << "warning: scan point failed: " << e << "\n";
  }
  for (const auto& pt : sw.points)
    for (const auto& w : pt.warnings)
      warnings.push_back(format_double(pt.f_pert) + " Hz: " + w);

  write_manifest(cfg, &m, {csv_name, meta_name}, warnings);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// check

int cmd_check(RunConfig cfg) {
  const ResolvedModel m = resolve_model(cfg);
  const ComplianceBandSet set = compliance_preset(cfg.preset, m.p.f_N);
  const ImpedanceCurve c = source_curve(cfg, m);
  const std::vector<ComplianceResult> results = compliance_check(c, set);

  bool any_fail = false;
  for (const auto& r : results)
    if (r.verdict == BandVerdict::kFail) any_fail = true;

  write_text_file(join_path(cfg.out_dir, "check.json"),
                  compliance_report_json(results, set, c));
  write_text_file(join_path(cfg.out_dir, "check.txt"),
                  compliance_report_text(results, set, c));
  write_manifest(cfg, &m, {"check.json", "check.txt"}, {});
  return any_fail ? kExitComplianceFail : kExitOk;
}

// ---------------------------------------------------------------------------
// demo

const Spectrum* find_spectrum(const DemoResult& res, const std::string& name) {
  for (const auto& sp : res.spectra)
    if (sp.signal == name) return &sp;
  return nullptr;
}

int cmd_demo(RunConfig cfg) {
  // The bundled scenario targets a weakly coupled grid, where the reduced
  // damping actually destabilizes the swing mode; explicit --scr/--rx win.
  if (!cfg.scr) cfg.scr = 2.0;
  if (!cfg.rx) cfg.rx = 0.1;
  const ResolvedModel m = resolve_model(cfg);

  DemoConfig dc;
  dc.t_end = cfg.t_end;
  for (const auto& ev : cfg.schedule)
    dc.schedule.push_back(DemoEvent{ev.first, ev.second * m.bases.D_base});
  dc.validate();

  const DemoResult res = run_instability_demo(m.p, m.g, dc);

  std::vector<std::string> outputs;
  write_timeseries_csv(res.series, join_path(cfg.out_dir, "demo_series.csv"));
  outputs.push_back("demo_series.csv");
  const std::pair<std::string, std::string> specs[] = {
      {"p", "demo_spectrum_p.csv"},
      {"v_stationary", "demo_spectrum_v.csv"},
      {"i_stationary", "demo_spectrum_i.csv"}};
  for (const auto& [signal, fname] : specs) {
    const Spectrum* sp = find_spectrum(res, signal);
    if (sp == nullptr) continue;
    write_spectrum_csv(*sp, join_path(cfg.out_dir, fname));
    outputs.push_back(fname);
  }

  const bool detected = res.p_peak.mag > 1e-6 * m.p.S_N;
  const double pair_sum = res.v_sub_peak.freq_hz + res.v_super_peak.freq_hz;
  const double pair_offset = std::abs(pair_sum - 2.0 * m.p.f_N);

  // Post-restoration decay, summarized as peak |P - P_end| over successive
  // 0.2 s blocks (10 fundamental periods each) of the first second.
  std::vector<double> blocks;
  if (!cfg.schedule.empty() && !res.diverged) {
    const std::size_t usable =
        std::min<std::size_t>(res.recovery_envelope_w.size(), 50);
    for (std::size_t k = 0; k + 10 <= usable; k += 10) {
      double peak = 0.0;
      for (std::size_t i = k; i < k + 10; ++i)
        peak = std::max(peak, res.recovery_envelope_w[i]);
      blocks.push_back(peak);
    }
  }
  bool monotone = blocks.size() >= 2;
  for (std::size_t k = 0; k + 1 < blocks.size(); ++k)
    if (!(blocks[k + 1] < blocks[k])) monotone = false;

  ordered_json j;
  j["grid"] = {{"scr", *cfg.scr}, {"rx", *cfg.rx}};
  ordered_json sched = ordered_json::array();
  for (const auto& ev : cfg.schedule) {
    ordered_json e;
    e["t_s"] = ev.first;
    e["dp_pu"] = ev.second;
    e["dp_si"] = ev.second * m.bases.D_base;
    sched.push_back(e);
  }
  j["schedule"] = sched;
  j["t_end_s"] = cfg.t_end;
  j["diverged"] = res.diverged;
  if (res.diverged) j["diverged_at_s"] = res.diverged_at_s;
  ordered_json osc;
  osc["detected"] = detected;
  osc["p_peak"] = {{"freq_hz", res.p_peak.freq_hz}, {"mag_w", res.p_peak.mag}};
  osc["v_sub_peak"] = {{"freq_hz", res.v_sub_peak.freq_hz},
                       {"mag_v", res.v_sub_peak.mag}};
  osc["v_super_peak"] = {{"freq_hz", res.v_super_peak.freq_hz},
                         {"mag_v", res.v_super_peak.mag}};
  osc["pair_sum_hz"] = pair_sum;
  osc["pair_offset_from_2fn_hz"] = pair_offset;
  osc["pair_identity_ok"] = detected && pair_offset < 0.5;
  j["oscillation"] = osc;
  if (!blocks.empty()) {
    ordered_json rec;
    rec["block_s"] = 0.2;
    rec["block_peak_w"] = blocks;
    rec["monotone_decay"] = monotone;
    rec["collapse_ratio"] =
        blocks.front() / std::max(blocks.back(), 1e-12);
    j["recovery"] = rec;
  } else {
    j["recovery"] = nullptr;
  }

  std::ostringstream txt;
  txt << "damping-step scenario at SCR " << format_double(*cfg.scr) << ", R/X "
      << format_double(*cfg.rx) << "\n";
  if (cfg.schedule.empty()) {
    txt << "  no events scheduled (quiet baseline)\n";
  } else {
    for (const auto& ev : cfg.schedule)
      txt << "  t = " << format_double(ev.first) << " s: damping -> "
          << format_double(ev.second) << " pu\n";
  }
  if (res.diverged)
    txt << "  simulation diverged at t = " << format_double(res.diverged_at_s)
        << " s (reported as a finding)\n";
  txt << (detected ? "  oscillation detected\n" : "  no oscillation detected\n");
  txt << "  active-power component: " << format_double(res.p_peak.mag) << " W at "
      << format_double(res.p_peak.freq_hz) << " Hz\n";
  txt << "  stationary voltage pair: " << format_double(res.v_sub_peak.freq_hz)
      << " Hz (" << format_double(res.v_sub_peak.mag) << " V) and "
      << format_double(res.v_super_peak.freq_hz) << " Hz ("
      << format_double(res.v_super_peak.mag) << " V)\n";
  txt << "  pair sum " << format_double(pair_sum) << " Hz, offset from twice the "
      << "fundamental " << format_double(pair_offset) << " Hz\n";
  if (!blocks.empty()) {
    txt << "  recovery peak |P - P_end| per 0.2 s block:";
    for (double b : blocks) txt << ' ' << format_double(b) << " W";
    txt << (monotone ? " (monotone decay)\n" : " (not monotone)\n");
  }

  write_text_file(join_path(cfg.out_dir, "demo_summary.json"), j.dump(2) + "\n");
  write_text_file(join_path(cfg.out_dir, "demo_summary.txt"), txt.str());
  outputs.push_back("demo_summary.json");
  outputs.push_back("demo_summary.txt");

  std::vector<std::string> warnings;
  if (res.diverged)
    warnings.push_back("simulation diverged at t = " +
                       format_double(res.diverged_at_s) + " s");
  write_manifest(cfg, &m, outputs, warnings);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// dispatch + rerun

int dispatch(RunConfig cfg) {
  if (cfg.command == "curve") return cmd_curve(std::move(cfg));
  if (cfg.command == "index") return cmd_index(std::move(cfg));
  if (cfg.command == "sweep") return cmd_sweep(std::move(cfg));
  if (cfg.command == "scan") return cmd_scan(std::move(cfg));
  if (cfg.command == "check") return cmd_check(std::move(cfg));
  if (cfg.command == "demo") return cmd_demo(std::move(cfg));
  throw ConfigError("unknown command '" + cfg.command + "'");
}

int cmd_rerun(const RunConfig& outer) {
  ordered_json doc;
  try {
    doc = ordered_json::parse(read_text_file(outer.manifest_path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("manifest is not valid JSON: " + std::string(e.what()));
  }
  RunConfig cfg = config_from_manifest(doc);
  if (!outer.out_dir.empty()) cfg.out_dir = outer.out_dir;
  return dispatch(std::move(cfg));
}

// ---------------------------------------------------------------------------
// argument wiring

struct CliHolders {
  std::string params, out;
  std::string tier, curve, preset, grid, freqs, schedule;
  std::string dp_list, j_list, pf_list, scr_list, rx_list;
  double dp = 0.0, j = 0.0, pf = 0.0, scr = 0.0, rx = 0.0;
  bool no_inertia = false;
  double amplitude = 0.01, settle = 0.0, dt = 0.0, t_end = 10.0;
  int periods = 20;
  std::string manifest;
  std::string rerun_out;
};

void add_common(CLI::App* sub, CliHolders& h) {
  sub->add_option("--params", h.params,
                  "parameter file (default params/gfm200kw.json)");
  sub->add_option("--out", h.out, "output directory (default out)");
}

void add_overrides(CLI::App* sub, CliHolders& h, bool with_inertia = true) {
  sub->add_option("--dp-pu", h.dp, "damping override, per unit");
  sub->add_option("--j-pu", h.j, "inertia override, per unit");
  if (with_inertia)
    sub->add_flag("--no-inertia", h.no_inertia, "drop the inertia state");
  sub->add_option("--pf", h.pf,
                  "signed power factor at rated apparent power; reactive "
                  "power is absorbed");
  sub->add_option("--scr", h.scr, "grid short-circuit ratio");
  sub->add_option("--rx", h.rx, "grid resistance-to-reactance ratio");
}

void fill_common(const CLI::App* sub, const CliHolders& h, RunConfig& cfg) {
  if (sub->count("--params")) cfg.params_path = h.params;
  if (sub->count("--out")) cfg.out_dir = h.out;
}

void fill_overrides(const CLI::App* sub, const CliHolders& h, RunConfig& cfg) {
  if (sub->count("--dp-pu")) cfg.dp_pu = h.dp;
  if (sub->count("--j-pu")) cfg.j_pu = h.j;
  if (sub->get_option_no_throw("--no-inertia") != nullptr &&
      sub->count("--no-inertia"))
    cfg.no_inertia = true;
  if (sub->count("--pf")) cfg.pf = h.pf;
  if (sub->count("--scr")) cfg.scr = h.scr;
  if (sub->count("--rx")) cfg.rx = h.rx;
}

void fill_grid(const CLI::App* sub, const CliHolders& h, RunConfig& cfg,
               const Triplet& fallback) {
  if (sub->count("--grid")) cfg.grid = parse_triplet(h.grid, "--grid");
  else cfg.grid = fallback;
}

void fill_scan_settings(const CLI::App* sub, const CliHolders& h, RunConfig& cfg,
                        double default_dt) {
  if (sub->count("--freqs")) cfg.freqs_spec = h.freqs;
  if (sub->count("--amplitude")) cfg.amplitude = h.amplitude;
  if (sub->count("--periods")) cfg.capture_periods = h.periods;
  cfg.scan_dt = sub->count("--dt") ? h.dt : default_dt;
  if (sub->count("--settle")) cfg.settle = h.settle;
}

std::vector<std::pair<double, double>> parse_schedule(const std::string& raw) {
  const std::string s = trim(raw);
  if (s.empty() || s == "none") return {};
  std::vector<std::pair<double, double>> out;
  for (const auto& item : split(s, ',')) {
    const auto parts = split(item, ':');
    if (parts.size() != 2)
      throw ConfigError("--schedule: expected t:dp_pu pairs, got '" + item + "'");
    out.emplace_back(parse_number(parts[0], "--schedule time"),
                     parse_number(parts[1], "--schedule damping"));
  }
  return out;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"grid-forming converter impedance toolkit"};
  app.name("gfmimp");
  app.require_subcommand(1);
  CliHolders h;

  CLI::App* curve = app.add_subcommand(
      "curve", "sample impedance curves for one or more model tiers");
  add_common(curve, h);
  curve->add_option("--tier", h.tier, "comma list of ccl,vcl,apcl,full");
  curve->add_option("--grid", h.grid, "frequency grid start:stop:step in Hz");
  add_overrides(curve, h);

  CLI::App* index = app.add_subcommand(
      "index", "exclusion-band report for a tier or a measured curve");
  add_common(index, h);
  index->add_option("--tier", h.tier, "source tier (ccl,vcl,apcl,full)");
  index->add_option("--curve", h.curve, "measured-curve CSV source");
  index->add_option("--grid", h.grid, "frequency grid start:stop:step in Hz");
  add_overrides(index, h);

  CLI::App* sweep = app.add_subcommand(
      "sweep", "tabulate the band report over damping/inertia or operating points");
  add_common(sweep, h);
  sweep->add_option("--dp-pu", h.dp_list, "damping values: list or a:b:step");
  sweep->add_option("--j-pu", h.j_list, "inertia values: list or a:b:step");
  sweep->add_option("--pf", h.pf_list, "power-factor values (scan mode)");
  sweep->add_option("--scr", h.scr_list, "short-circuit ratios (scan mode)");
  sweep->add_option("--rx", h.rx_list, "R/X ratios (scan mode)");
  sweep->add_option("--grid", h.grid, "analytic-mode frequency grid");
  sweep->add_option("--freqs", h.freqs, "scan-mode frequencies");
  sweep->add_option("--amplitude", h.amplitude, "scan amplitude, fraction of V_N");
  sweep->add_option("--periods", h.periods, "captured perturbation periods");
  sweep->add_option("--dt", h.dt, "integration step in s");
  sweep->add_option("--settle", h.settle, "settle time in s (default adaptive)");

  CLI::App* scan = app.add_subcommand(
      "scan", "time-domain perturbation-injection impedance measurement");
  add_common(scan, h);
  scan->add_option("--tier", h.tier, "control stack (ccl,vcl,apcl,full)");
  scan->add_option("--freqs", h.freqs, "frequencies: start:stop:step or list");
  scan->add_option("--amplitude", h.amplitude, "injection amplitude, fraction of V_N");
  scan->add_option("--periods", h.periods, "captured perturbation periods");
  scan->add_option("--dt", h.dt, "integration step in s");
  scan->add_option("--settle", h.settle, "settle time in s (default adaptive)");
  add_overrides(scan, h);

  CLI::App* check = app.add_subcommand(
      "check", "grid-code resistance compliance verdict");
  add_common(check, h);
  check->add_option("--preset", h.preset, "band preset: nerc, fingrid, china, unifi")
      ->required();
  check->add_option("--tier", h.tier, "source tier (ccl,vcl,apcl,full)");
  check->add_option("--curve", h.curve, "measured-curve CSV source");
  check->add_option("--grid", h.grid, "frequency grid start:stop:step in Hz");
  add_overrides(check, h);

  CLI::App* demo = app.add_subcommand(
      "demo", "damping-step oscillation scenario with waveforms and spectra");
  add_common(demo, h);
  demo->add_option("--schedule", h.schedule,
                   "t:dp_pu event list (default 1:2.5,5:50; 'none' for quiet)");
  demo->add_option("--t-end", h.t_end, "simulated length in s");
  add_overrides(demo, h);

  CLI::App* rerun = app.add_subcommand(
      "rerun", "replay a run from its manifest");
  rerun->add_option("manifest", h.manifest, "manifest.json of a previous run")
      ->required();
  rerun->add_option("--out", h.rerun_out, "override the output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    RunConfig cfg;
    if (curve->parsed()) {
      cfg.command = "curve";
      fill_common(curve, h, cfg);
      fill_overrides(curve, h, cfg);
      fill_grid(curve, h, cfg, Triplet{30.0, 70.0, 0.1});
      if (curve->count("--tier")) cfg.tiers = split(h.tier, ',');
    } else if (index->parsed()) {
      cfg.command = "index";
      fill_common(index, h, cfg);
      fill_overrides(index, h, cfg);
      fill_grid(index, h, cfg, Triplet{30.0, 70.0, 0.1});
      if (index->count("--tier") && index->count("--curve"))
        throw ConfigError("give either --tier or --curve, not both");
      if (index->count("--tier")) cfg.tier = h.tier;
      if (index->count("--curve")) cfg.curve_path = h.curve;
    } else if (sweep->parsed()) {
      cfg.command = "sweep";
      fill_common(sweep, h, cfg);
      fill_grid(sweep, h, cfg, Triplet{30.0, 70.0, 0.1});
      if (sweep->count("--dp-pu")) cfg.dp_values = parse_values(h.dp_list, "--dp-pu");
      if (sweep->count("--j-pu")) cfg.j_values = parse_values(h.j_list, "--j-pu");
      if (sweep->count("--pf")) cfg.pf_values = parse_values(h.pf_list, "--pf");
      if (sweep->count("--scr")) cfg.scr_values = parse_values(h.scr_list, "--scr");
      if (sweep->count("--rx")) cfg.rx_values = parse_values(h.rx_list, "--rx");
      fill_scan_settings(sweep, h, cfg, 5e-5);
    } else if (scan->parsed()) {
      cfg.command = "scan";
      fill_common(scan, h, cfg);
      fill_overrides(scan, h, cfg);
      cfg.tier = scan->count("--tier") ? h.tier : "full";
      fill_scan_settings(scan, h, cfg, 1e-5);
    } else if (check->parsed()) {
      cfg.command = "check";
      fill_common(check, h, cfg);
      fill_overrides(check, h, cfg);
      fill_grid(check, h, cfg, Triplet{1.0, 100.0, 0.1});
      cfg.preset = h.preset;
      if (check->count("--tier") && check->count("--curve"))
        throw ConfigError("give either --tier or --curve, not both");
      if (check->count("--tier")) cfg.tier = h.tier;
      if (check->count("--curve")) cfg.curve_path = h.curve;
    } else if (demo->parsed()) {
      cfg.command = "demo";
      fill_common(demo, h, cfg);
      fill_overrides(demo, h, cfg);
      if (demo->count("--schedule")) cfg.schedule = parse_schedule(h.schedule);
      if (demo->count("--t-end")) cfg.t_end = h.t_end;
    } else if (rerun->parsed()) {
      RunConfig outer;
      outer.manifest_path = h.manifest;
      outer.out_dir = rerun->count("--out") ? h.rerun_out : std::string();
      return cmd_rerun(outer);
    }
    return dispatch(std::move(cfg));
  } catch (const NoCornerError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNoCorner;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ModelError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitModel;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitModel;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitModel;
  }
}

}  // namespace gfmimp
