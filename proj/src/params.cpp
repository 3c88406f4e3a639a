#include "gfmimp/params.hpp"

#include <charconv>
#include <cmath>
#include <complex>
#include <fstream>
#include <json.hpp>
#include <numbers>
#include <sstream>

#include "gfmimp/errors.hpp"

namespace gfmimp {

namespace {

constexpr double kPi = std::numbers::pi;

void require(bool cond, const std::string& msg) {
  if (!cond) throw ConfigError(msg);
}

}  // namespace

void ConverterParams::validate() const {
  require(S_N > 0.0, "S_N must be positive");
  require(V_N > 0.0, "V_N must be positive");
  require(I_N > 0.0, "I_N must be positive");
  require(omega_N > 0.0, "omega_N must be positive");
  require(f_N > 0.0, "f_N must be positive");
  require(V_dc > 0.0, "V_dc must be positive");
  require(std::abs(omega_N - 2.0 * kPi * f_N) <= 1e-9 * omega_N,
          "omega_N and f_N are inconsistent");
  require(J >= 0.0, "J must be nonnegative (0 disables inertia)");
  require(D_p > 0.0, "D_p must be positive");
  require(K_v >= 0.0 && K_q >= 0.0, "K_v and K_q must be nonnegative");
  require(k_pV >= 0.0 && k_iV >= 0.0 && k_pI >= 0.0 && k_iI >= 0.0,
          "controller gains must be nonnegative");
  require(L_f > 0.0, "L_f must be positive");
  const double s_from_vi = 1.5 * V_N * I_N;
  require(std::abs(s_from_vi - S_N) <= 0.01 * S_N,
          "ratings inconsistent: 1.5*V_N*I_N differs from S_N by more than 1%");
}

GridParams GridParams::from_scr(const ConverterParams& p, double scr, double ratio_rx,
                                double v_grid) {
  require(scr > 0.0, "SCR must be positive");
  require(ratio_rx >= 0.0, "ratio_RX must be nonnegative");
  const PerUnitBases b = per_unit_bases(p);
  GridParams g;
  g.SCR = scr;
  g.ratio_RX = ratio_rx;
  const double x_g = b.Z_base / scr;
  g.L_g = x_g / p.omega_N;
  g.R_g = ratio_rx * x_g;
  g.V_grid = v_grid > 0.0 ? v_grid : p.V_N;
  return g;
}

GridParams GridParams::from_impedance(const ConverterParams& p, double l_g, double r_g,
                                      double v_grid) {
  require(l_g >= 0.0 && r_g >= 0.0, "L_g and R_g must be nonnegative");
  const PerUnitBases b = per_unit_bases(p);
  GridParams g;
  g.L_g = l_g;
  g.R_g = r_g;
  const double x_g = p.omega_N * l_g;
  g.SCR = x_g > 0.0 ? b.Z_base / x_g : 0.0;
  g.ratio_RX = x_g > 0.0 ? r_g / x_g : 0.0;
  g.V_grid = v_grid > 0.0 ? v_grid : p.V_N;
  return g;
}

void GridParams::validate() const {
  require(L_g >= 0.0 && R_g >= 0.0, "grid impedance must be nonnegative");
  require(V_grid > 0.0, "V_grid must be positive");
}

PerUnitBases per_unit_bases(const ConverterParams& p) {
  PerUnitBases b;
  b.S_base = p.S_N;
  b.V_base = p.V_N;
  b.I_base = p.S_N / (1.5 * p.V_N);
  b.omega_base = p.omega_N;
  b.Z_base = 1.5 * p.V_N * p.V_N / p.S_N;
  b.L_base = b.Z_base / p.omega_N;
  b.J_base = p.S_N / p.omega_N;
  b.D_base = p.S_N / p.omega_N;
  b.Kv_base = p.S_N / p.V_N;
  b.Kq_base = p.V_N / p.S_N;
  b.kpV_base = 1.0 / b.Z_base;
  b.kiV_base = p.omega_N / b.Z_base;
  b.kpI_base = b.Z_base;
  b.kiI_base = b.Z_base * p.omega_N;
  return b;
}

OperatingPoint OperatingPoint::rated(const ConverterParams& p) {
  OperatingPoint op;
  op.V_d0 = p.V_N;
  op.V_q0 = 0.0;
  op.I_d0 = p.I_N;
  op.I_q0 = 0.0;
  op.P_0 = 1.5 * p.V_N * p.I_N;
  op.Q_0 = 0.0;
  op.theta_0 = 0.0;
  op.pf = 1.0;
  return op;
}

SSOPMatrices build_ssop_matrices(const OperatingPoint& op, const ConverterParams& p) {
  SSOPMatrices m;
  const double vd = op.V_d0, id = op.I_d0, iq = op.I_q0;
  // Generalization of the rated-point values: the d-axis products fill the
  // (2,1) slot; the rotation pattern adds the q-companion at (2,2) with a
  // sign flip. With the d-axis alignment V_q0 = 0, only current products
  // pick up a q-axis term.
  auto fill = [](std::array<std::array<double, 2>, 2>& mat, double dd, double dq) {
    mat[1][0] = dd;
    mat[1][1] = -dq;
  };
  fill(m.B_Vo_i, vd * id, vd * iq);
  fill(m.B_Ic_i, id * id, id * iq);
  fill(m.B_Vc_i, vd * id, vd * iq);
  fill(m.B_Vo_v, vd * vd, vd * op.V_q0);
  fill(m.B_Ic_v, id * vd, id * op.V_q0);
  fill(m.B_Vc_v, vd * vd, vd * op.V_q0);
  m.extrapolated = !(op.V_d0 == p.V_N && op.I_d0 == p.I_N && op.I_q0 == 0.0);
  return m;
}

namespace {

struct PfResult {
  double P;
  double Q;
};

PfResult evaluate_power(const ConverterParams& p, const GridParams& g, double v_d0,
                        double theta) {
  const std::complex<double> z_g(g.R_g, p.omega_N * g.L_g);
  const std::complex<double> v(v_d0, 0.0);
  const std::complex<double> e_g = g.V_grid * std::exp(std::complex<double>(0.0, -theta));
  const std::complex<double> i = (v - e_g) / z_g;
  const std::complex<double> s = 1.5 * v * std::conj(i);
  return {s.real(), s.imag()};
}

OperatingPoint finish_operating_point(const ConverterParams& p, double v_d0, double theta,
                                      double P, double Q) {
  OperatingPoint op;
  op.V_d0 = v_d0;
  op.V_q0 = 0.0;
  op.I_d0 = 2.0 * P / (3.0 * v_d0);
  op.I_q0 = -2.0 * Q / (3.0 * v_d0);
  op.P_0 = P;
  op.Q_0 = Q;
  op.theta_0 = theta;
  const double s_mag = std::hypot(P, Q);
  op.pf = s_mag > 0.0 ? P / s_mag : 1.0;
  return op;
}

/// Damped Newton on (V_d0, theta) against two power-balance residuals
/// supplied in per unit. Shared by the plain and droop-consistent solves.
template <typename ResidualFn>
OperatingPoint newton_power_flow(const ConverterParams& p, const GridParams& g,
                                 ResidualFn&& residual_pu) {
  const std::complex<double> z_g(g.R_g, p.omega_N * g.L_g);
  if (std::abs(z_g) < 1e-9) {
    // Stiff grid: the PCC is the source itself; no angle/voltage freedom.
    throw ConfigError("grid impedance is zero; use the stiff-grid helpers instead");
  }

  double v = g.V_grid;
  double theta = 0.0;
  auto norm2 = [&](double vv, double th, double& r1, double& r2) {
    residual_pu(vv, th, r1, r2);
    return std::hypot(r1, r2);
  };

  double r1 = 0.0, r2 = 0.0;
  double res = norm2(v, theta, r1, r2);
  const double tol = 1e-9;
  for (int iter = 0; iter < 50 && res > tol; ++iter) {
    const double hv = 1e-7 * g.V_grid;
    const double ht = 1e-8;
    double a1, a2, b1, b2, c1, c2, d1, d2;
    residual_pu(v + hv, theta, a1, a2);
    residual_pu(v - hv, theta, b1, b2);
    residual_pu(v, theta + ht, c1, c2);
    residual_pu(v, theta - ht, d1, d2);
    const double j11 = (a1 - b1) / (2.0 * hv), j12 = (c1 - d1) / (2.0 * ht);
    const double j21 = (a2 - b2) / (2.0 * hv), j22 = (c2 - d2) / (2.0 * ht);
    const double det = j11 * j22 - j12 * j21;
    if (std::abs(det) < 1e-30) break;
    const double dv = (-r1 * j22 + r2 * j12) / det;
    const double dth = (-j11 * r2 + j21 * r1) / det;

    double step = 1.0;
    for (int halvings = 0; halvings < 25; ++halvings) {
      double t1, t2;
      const double vn = v + step * dv;
      const double thn = theta + step * dth;
      if (vn > 0.0) {
        const double rn = norm2(vn, thn, t1, t2);
        if (rn < res) {
          v = vn;
          theta = thn;
          r1 = t1;
          r2 = t2;
          res = rn;
          break;
        }
      }
      step *= 0.5;
    }
  }
  if (res > tol)
    throw InfeasibleOperatingPoint("infeasible operating point: power flow did not converge",
                                   res);
  const PfResult pq = evaluate_power(p, g, v, theta);
  return finish_operating_point(p, v, theta, pq.P, pq.Q);
}

}  // namespace

OperatingPoint solve_operating_point(const ConverterParams& p, const GridParams& g,
                                     double P, double Q) {
  const std::complex<double> z_g(g.R_g, p.omega_N * g.L_g);
  if (std::abs(z_g) < 1e-9) {
    return finish_operating_point(p, g.V_grid, 0.0, P, Q);
  }
  return newton_power_flow(p, g, [&](double v, double th, double& r1, double& r2) {
    const PfResult pq = evaluate_power(p, g, v, th);
    r1 = (pq.P - P) / p.S_N;
    r2 = (pq.Q - Q) / p.S_N;
  });
}

OperatingPoint solve_droop_operating_point(const ConverterParams& p, const GridParams& g,
                                           double P_ref, double Q_ref) {
  const std::complex<double> z_g(g.R_g, p.omega_N * g.L_g);
  if (std::abs(z_g) < 1e-9) {
    // The voltage droop cannot move the PCC voltage off the source value;
    // the reactive balance fixes Q instead.
    const double q = Q_ref + p.K_v * (p.V_N - g.V_grid);
    return finish_operating_point(p, g.V_grid, 0.0, P_ref, q);
  }
  return newton_power_flow(p, g, [&](double v, double th, double& r1, double& r2) {
    const PfResult pq = evaluate_power(p, g, v, th);
    r1 = (pq.P - P_ref) / p.S_N;
    r2 = (pq.Q - Q_ref - p.K_v * (p.V_N - v)) / p.S_N;
  });
}

double droop_q_ref_for_target(const ConverterParams& p, const GridParams& g, double P,
                              double Q_target) {
  const OperatingPoint op = solve_operating_point(p, g, P, Q_target);
  return Q_target - p.K_v * (p.V_N - op.V_d0);
}

namespace {

using nlohmann::json;

double to_si(const json& node, const std::string& field, double base) {
  if (node.is_number()) return node.get<double>();
  if (node.is_object()) {
    if (!node.contains("value") || !node["value"].is_number())
      throw ConfigError("field '" + field + "': object form needs a numeric \"value\"");
    const double v = node["value"].get<double>();
    const bool pu = node.value("pu", false);
    if (!pu) return v;
    if (base <= 0.0)
      throw ConfigError("field '" + field + "': per-unit input is not supported here");
    return v * base;
  }
  throw ConfigError("field '" + field + "': expected a number or {\"value\", \"pu\"} object");
}

double plain_number(const json& obj, const std::string& field) {
  if (!obj.contains(field)) throw ConfigError("missing field '" + field + "'");
  if (!obj[field].is_number())
    throw ConfigError("field '" + field + "' must be a plain SI number");
  return obj[field].get<double>();
}

}  // namespace

ParamSet load_params(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open parameter file: " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("parameter file is not valid JSON: " + std::string(e.what()));
  }
  if (!doc.is_object() || !doc.contains("converter") || !doc["converter"].is_object())
    throw ConfigError("parameter file needs a \"converter\" object");

  const json& c = doc["converter"];
  ConverterParams p;
  // Ratings come first and must be plain SI: they define the bases every
  // per-unit annotated field is resolved against.
  p.S_N = plain_number(c, "S_N");
  p.V_N = plain_number(c, "V_N");
  p.I_N = plain_number(c, "I_N");
  if (c.contains("f_N")) {
    p.f_N = plain_number(c, "f_N");
    p.omega_N = 2.0 * kPi * p.f_N;
    if (c.contains("omega_N")) {
      const double w = plain_number(c, "omega_N");
      if (std::abs(w - p.omega_N) > 1e-9 * p.omega_N)
        throw ConfigError("f_N and omega_N are inconsistent");
    }
  } else if (c.contains("omega_N")) {
    p.omega_N = plain_number(c, "omega_N");
    p.f_N = p.omega_N / (2.0 * kPi);
  } else {
    throw ConfigError("missing field 'f_N' (or 'omega_N')");
  }
  p.V_dc = plain_number(c, "V_dc");

  ConverterParams ratings = p;
  ratings.J = 0.0;
  const PerUnitBases b = per_unit_bases(ratings);

  auto field = [&](const std::string& name, double base) {
    if (!c.contains(name)) throw ConfigError("missing field '" + name + "'");
    return to_si(c[name], name, base);
  };
  p.J = field("J", b.J_base);
  p.D_p = field("D_p", b.D_base);
  p.K_v = field("K_v", b.Kv_base);
  p.K_q = field("K_q", b.Kq_base);
  p.k_pV = field("k_pV", b.kpV_base);
  p.k_iV = field("k_iV", b.kiV_base);
  p.k_pI = field("k_pI", b.kpI_base);
  p.k_iI = field("k_iI", b.kiI_base);
  p.L_f = field("L_f", b.L_base);
  p.P_ref = field("P_ref", b.S_base);
  p.Q_ref = c.contains("Q_ref") ? to_si(c["Q_ref"], "Q_ref", b.S_base) : 0.0;

  static const char* known_conv[] = {"S_N",  "V_N",  "I_N",  "f_N",  "omega_N", "V_dc",
                                     "J",    "D_p",  "K_v",  "K_q",  "k_pV",    "k_iV",
                                     "k_pI", "k_iI", "L_f",  "P_ref", "Q_ref"};
  for (auto it = c.begin(); it != c.end(); ++it) {
    bool known = false;
    for (const char* k : known_conv)
      if (it.key() == k) known = true;
    if (!known) throw ConfigError("unknown converter field '" + it.key() + "'");
  }
  p.validate();

  GridParams g;
  if (!doc.contains("grid") || !doc["grid"].is_object())
    throw ConfigError("parameter file needs a \"grid\" object");
  const json& gj = doc["grid"];
  const bool has_scr = gj.contains("SCR") || gj.contains("ratio_RX");
  const bool has_lr = gj.contains("L_g") || gj.contains("R_g");
  if (has_scr == has_lr)
    throw ConfigError("grid: supply exactly one of {SCR, ratio_RX} or {L_g, R_g}");
  double v_grid = 0.0;
  if (gj.contains("V_grid")) v_grid = to_si(gj["V_grid"], "V_grid", b.V_base);
  if (has_scr) {
    if (!gj.contains("SCR") || !gj.contains("ratio_RX"))
      throw ConfigError("grid: SCR and ratio_RX must be supplied together");
    g = GridParams::from_scr(p, plain_number(gj, "SCR"), plain_number(gj, "ratio_RX"), v_grid);
  } else {
    if (!gj.contains("L_g") || !gj.contains("R_g"))
      throw ConfigError("grid: L_g and R_g must be supplied together");
    g = GridParams::from_impedance(p, to_si(gj["L_g"], "L_g", b.L_base),
                                   to_si(gj["R_g"], "R_g", b.Z_base), v_grid);
  }
  static const char* known_grid[] = {"SCR", "ratio_RX", "L_g", "R_g", "V_grid"};
  for (auto it = gj.begin(); it != gj.end(); ++it) {
    bool known = false;
    for (const char* k : known_grid)
      if (it.key() == k) known = true;
    if (!known) throw ConfigError("unknown grid field '" + it.key() + "'");
  }
  g.validate();
  return {p, g};
}

std::string params_digest(const ConverterParams& p, const GridParams& g) {
  std::ostringstream canonical;
  auto put = [&](const char* name, double v) {
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    canonical << name << '=' << std::string_view(buf, r.ptr) << ';';
  };
  put("S_N", p.S_N);
  put("V_N", p.V_N);
  put("I_N", p.I_N);
  put("omega_N", p.omega_N);
  put("V_dc", p.V_dc);
  put("J", p.J);
  put("D_p", p.D_p);
  put("K_v", p.K_v);
  put("K_q", p.K_q);
  put("k_pV", p.k_pV);
  put("k_iV", p.k_iV);
  put("k_pI", p.k_pI);
  put("k_iI", p.k_iI);
  put("L_f", p.L_f);
  put("P_ref", p.P_ref);
  put("Q_ref", p.Q_ref);
  put("L_g", g.L_g);
  put("R_g", g.R_g);
  put("V_grid", g.V_grid);

  const std::string s = canonical.str();
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char out[17];
  static const char* hex = "0123456789abcdef";
  for (int i = 15; i >= 0; --i) {
    out[i] = hex[h & 0xF];
    h >>= 4;
  }
  out[16] = '\0';
  return std::string(out);
}

}  // namespace gfmimp
