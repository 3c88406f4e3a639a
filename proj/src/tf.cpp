#include "gfmimp/tf.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>

#include "gfmimp/errors.hpp"

namespace gfmimp {

namespace {

// Strips exactly-zero leading coefficients; representation of the zero
// polynomial is the single coefficient {0.0}.
std::vector<double> trim(std::vector<double> c) {
  while (c.size() > 1 && c.back() == 0.0) c.pop_back();
  if (c.empty()) c.push_back(0.0);
  return c;
}

}  // namespace

Polynomial::Polynomial(std::vector<double> coeffs) : coeffs_(trim(std::move(coeffs))) {}

Polynomial Polynomial::term(double c, int k) {
  std::vector<double> v(static_cast<std::size_t>(k) + 1, 0.0);
  v.back() = c;
  return Polynomial(std::move(v));
}

bool Polynomial::is_zero() const { return coeffs_.size() == 1 && coeffs_[0] == 0.0; }

Complex Polynomial::eval(Complex s) const {
  Complex acc = 0.0;
  for (auto it = coeffs_.rbegin(); it != coeffs_.rend(); ++it) acc = acc * s + *it;
  return acc;
}

std::vector<Complex> Polynomial::roots() const {
  const int n = degree();
  if (n < 1 || is_zero()) return {};

  // A coefficient that is exactly zero at the low end factors out one s
  // exactly; deflating first keeps origin roots bit-exact instead of
  // leaving them as eigenvalue noise.
  std::size_t origin_roots = 0;
  while (origin_roots < coeffs_.size() - 1 && coeffs_[origin_roots] == 0.0) ++origin_roots;
  if (origin_roots > 0) {
    const Polynomial deflated(
        std::vector<double>(coeffs_.begin() + static_cast<std::ptrdiff_t>(origin_roots),
                            coeffs_.end()));
    std::vector<Complex> out(origin_roots, Complex(0.0, 0.0));
    const auto rest = deflated.roots();
    out.insert(out.end(), rest.begin(), rest.end());
    std::sort(out.begin(), out.end(), [](const Complex& a, const Complex& b) {
      if (a.real() != b.real()) return a.real() < b.real();
      return a.imag() < b.imag();
    });
    return out;
  }

  if (n == 1) return {Complex(-coeffs_[0] / coeffs_[1], 0.0)};

  Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(n, n);
  const double lead = coeffs_[static_cast<std::size_t>(n)];
  for (int i = 0; i < n; ++i) companion(i, n - 1) = -coeffs_[static_cast<std::size_t>(i)] / lead;
  for (int i = 1; i < n; ++i) companion(i, i - 1) = 1.0;

  Eigen::EigenSolver<Eigen::MatrixXd> solver(companion, /*computeEigenvectors=*/false);
  std::vector<Complex> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out.push_back(solver.eigenvalues()(i));

  // Newton polish to tighten each eigenvalue against the original
  // coefficients; keeps root-dependent operations reproducible.
  Polynomial deriv = [&] {
    std::vector<double> d(static_cast<std::size_t>(n), 0.0);
    for (int i = 1; i <= n; ++i)
      d[static_cast<std::size_t>(i - 1)] = coeffs_[static_cast<std::size_t>(i)] * i;
    return Polynomial(std::move(d));
  }();
  for (auto& r : out) {
    for (int iter = 0; iter < 8; ++iter) {
      const Complex f = eval(r);
      const Complex fp = deriv.eval(r);
      if (std::abs(fp) == 0.0) break;
      const Complex step = f / fp;
      r -= step;
      if (std::abs(step) <= 1e-14 * std::max(1.0, std::abs(r))) break;
    }
    // Snap near-real roots so conjugate pairs sort deterministically.
    if (std::abs(r.imag()) <= 1e-12 * std::max(1.0, std::abs(r.real()))) r = Complex(r.real(), 0.0);
  }
  std::sort(out.begin(), out.end(), [](const Complex& a, const Complex& b) {
    if (a.real() != b.real()) return a.real() < b.real();
    return a.imag() < b.imag();
  });
  return out;
}

Polynomial Polynomial::operator+(const Polynomial& rhs) const {
  std::vector<double> c(std::max(coeffs_.size(), rhs.coeffs_.size()), 0.0);
  for (std::size_t i = 0; i < coeffs_.size(); ++i) c[i] += coeffs_[i];
  for (std::size_t i = 0; i < rhs.coeffs_.size(); ++i) c[i] += rhs.coeffs_[i];
  return Polynomial(std::move(c));
}

Polynomial Polynomial::operator-(const Polynomial& rhs) const {
  std::vector<double> c(std::max(coeffs_.size(), rhs.coeffs_.size()), 0.0);
  for (std::size_t i = 0; i < coeffs_.size(); ++i) c[i] += coeffs_[i];
  for (std::size_t i = 0; i < rhs.coeffs_.size(); ++i) c[i] -= rhs.coeffs_[i];
  return Polynomial(std::move(c));
}

Polynomial Polynomial::operator*(const Polynomial& rhs) const {
  if (is_zero() || rhs.is_zero()) return Polynomial::zero();
  std::vector<double> c(coeffs_.size() + rhs.coeffs_.size() - 1, 0.0);
  for (std::size_t i = 0; i < coeffs_.size(); ++i)
    for (std::size_t j = 0; j < rhs.coeffs_.size(); ++j) c[i + j] += coeffs_[i] * rhs.coeffs_[j];
  return Polynomial(std::move(c));
}

Polynomial Polynomial::operator*(double k) const {
  std::vector<double> c = coeffs_;
  for (auto& v : c) v *= k;
  return Polynomial(std::move(c));
}

RationalTF::RationalTF(Polynomial num, Polynomial den)
    : num_(std::move(num)), den_(std::move(den)) {
  if (den_.is_zero()) throw ConfigError("zero denominator");
  canonicalize();
}

void RationalTF::canonicalize() {
  const double lead = den_.coeffs().back();
  if (lead == 1.0) return;
  num_ = num_ * (1.0 / lead);
  den_ = den_ * (1.0 / lead);
  // Guard against residual rounding in the normalized leading coefficient.
  std::vector<double> d = den_.coeffs();
  d.back() = 1.0;
  den_ = Polynomial(std::move(d));
}

Complex RationalTF::eval(Complex s) const {
  if (near_pole(s)) throw EvaluationAtPole("evaluation at pole", s);
  return num_.eval(s) / den_.eval(s);
}

bool RationalTF::near_pole(Complex s) const {
  double max_coeff = 0.0;
  for (double c : den_.coeffs()) max_coeff = std::max(max_coeff, std::abs(c));
  const double scale = std::pow(std::max(1.0, std::abs(s)), den_.degree());
  return std::abs(den_.eval(s)) < 1e-12 * max_coeff * scale;
}

std::vector<Complex> RationalTF::poles() const { return den_.roots(); }
std::vector<Complex> RationalTF::zeros() const { return num_.roots(); }

RationalTF RationalTF::reduced() const {
  if (num_.is_zero()) return RationalTF(Polynomial::zero(), Polynomial::one());
  std::vector<Complex> z = zeros();
  std::vector<Complex> p = poles();
  std::vector<bool> z_used(z.size(), false);

  auto match = [](const Complex& a, const Complex& b) {
    return std::abs(a - b) <= 1e-9 * std::max({1.0, std::abs(a), std::abs(b)});
  };

  std::vector<Complex> p_kept;
  for (const auto& pole : p) {
    bool cancelled = false;
    for (std::size_t i = 0; i < z.size(); ++i) {
      if (!z_used[i] && match(pole, z[i])) {
        z_used[i] = true;
        cancelled = true;
        break;
      }
    }
    if (!cancelled) p_kept.push_back(pole);
  }

  auto rebuild = [](const std::vector<Complex>& roots) {
    // Multiplies real linear/quadratic factors; conjugate pairs are joined
    // so coefficients stay real.
    Polynomial out = Polynomial::one();
    std::vector<bool> used(roots.size(), false);
    for (std::size_t i = 0; i < roots.size(); ++i) {
      if (used[i]) continue;
      const Complex r = roots[i];
      if (r.imag() == 0.0) {
        // Normalize -0 so an exact origin root rebuilds as exactly {0, 1}.
        out = out * Polynomial({r.real() == 0.0 ? 0.0 : -r.real(), 1.0});
        continue;
      }
      bool paired = false;
      for (std::size_t j = i + 1; j < roots.size(); ++j) {
        if (!used[j] && std::abs(roots[j] - std::conj(r)) <=
                            1e-9 * std::max(1.0, std::abs(r))) {
          used[j] = true;
          paired = true;
          break;
        }
      }
      if (paired) {
        out = out * Polynomial({std::norm(r), -2.0 * r.real(), 1.0});
      } else {
        // Unpaired complex root (numerical asymmetry): keep its real form
        // via the magnitude-preserving quadratic as well.
        out = out * Polynomial({std::norm(r), -2.0 * r.real(), 1.0});
      }
    }
    return out;
  };

  std::vector<Complex> z_kept;
  for (std::size_t i = 0; i < z.size(); ++i)
    if (!z_used[i]) z_kept.push_back(z[i]);

  const double num_lead = num_.coeffs().back();
  Polynomial nn = rebuild(z_kept) * num_lead;
  Polynomial dd = rebuild(p_kept);
  return RationalTF(std::move(nn), std::move(dd));
}

RationalTF RationalTF::operator+(const RationalTF& rhs) const {
  return RationalTF(num_ * rhs.den_ + rhs.num_ * den_, den_ * rhs.den_);
}

RationalTF RationalTF::operator-(const RationalTF& rhs) const {
  return RationalTF(num_ * rhs.den_ - rhs.num_ * den_, den_ * rhs.den_);
}

RationalTF RationalTF::operator*(const RationalTF& rhs) const {
  return RationalTF(num_ * rhs.num_, den_ * rhs.den_);
}

RationalTF RationalTF::operator/(const RationalTF& rhs) const {
  if (rhs.is_zero()) throw ConfigError("zero denominator");
  return RationalTF(num_ * rhs.den_, den_ * rhs.num_);
}

}  // namespace gfmimp
