#pragma once

#include <array>
#include <complex>
#include <vector>

namespace gfmimp {

using Complex = std::complex<double>;

/// Real-coefficient polynomial in the Laplace variable s, ascending powers.
/// Invariant: the highest-order coefficient is nonzero unless the polynomial
/// is identically zero, in which case coeffs == {0.0}.
class Polynomial {
 public:
  Polynomial() : coeffs_{0.0} {}
  explicit Polynomial(std::vector<double> coeffs);
  static Polynomial zero() { return Polynomial(); }
  static Polynomial one() { return Polynomial({1.0}); }
  /// Monomial c * s^k.
  static Polynomial term(double c, int k);

  const std::vector<double>& coeffs() const { return coeffs_; }
  int degree() const { return static_cast<int>(coeffs_.size()) - 1; }
  bool is_zero() const;

  Complex eval(Complex s) const;
  /// All roots, via companion-matrix eigenvalues with a Newton polish,
  /// sorted by (real, imag) for reproducibility.
  std::vector<Complex> roots() const;

  Polynomial operator+(const Polynomial& rhs) const;
  Polynomial operator-(const Polynomial& rhs) const;
  Polynomial operator*(const Polynomial& rhs) const;
  Polynomial operator*(double k) const;

  bool operator==(const Polynomial& rhs) const = default;

 private:
  std::vector<double> coeffs_;
};

/// Ratio of two real-coefficient polynomials, kept in canonical form:
/// the denominator's leading coefficient is normalized to 1 after every
/// arithmetic operation. No pole/zero cancellation happens implicitly;
/// use reduced() when cancellation is wanted, so it stays auditable.
class RationalTF {
 public:
  RationalTF() : num_(Polynomial::zero()), den_(Polynomial::one()) {}
  /// Throws ConfigError if den is identically zero.
  RationalTF(Polynomial num, Polynomial den);
  static RationalTF zero() { return RationalTF(); }
  static RationalTF one() { return RationalTF(Polynomial::one(), Polynomial::one()); }
  static RationalTF constant(double k) {
    return RationalTF(Polynomial({k}), Polynomial::one());
  }
  /// The Laplace variable itself.
  static RationalTF s() { return RationalTF(Polynomial({0.0, 1.0}), Polynomial::one()); }

  const Polynomial& num() const { return num_; }
  const Polynomial& den() const { return den_; }
  bool is_zero() const { return num_.is_zero(); }

  /// num(s)/den(s). Throws EvaluationAtPole when |den(s)| falls below
  /// 1e-12 * max|den coeff| * max(1, |s|)^deg(den).
  Complex eval(Complex s) const;
  /// True when eval() would throw for this s.
  bool near_pole(Complex s) const;

  /// Roots of the denominator.
  std::vector<Complex> poles() const;
  /// Roots of the numerator.
  std::vector<Complex> zeros() const;

  /// Cancels matching pole/zero pairs (relative root tolerance 1e-9) and
  /// rebuilds the rational from the surviving roots. Explicit on purpose:
  /// cancellation changes pole reporting, so it must be a visible step.
  RationalTF reduced() const;

  RationalTF operator+(const RationalTF& rhs) const;
  RationalTF operator-(const RationalTF& rhs) const;
  RationalTF operator*(const RationalTF& rhs) const;
  /// Throws ConfigError("zero denominator") when rhs is the zero rational.
  RationalTF operator/(const RationalTF& rhs) const;

 private:
  void canonicalize();
  Polynomial num_;
  Polynomial den_;
};

/// 2x2 matrix of rationals; row = d/q output, column = d/q input.
struct TFMatrix2x2 {
  std::array<std::array<RationalTF, 2>, 2> entries;

  static TFMatrix2x2 diagonal(const RationalTF& d) {
    TFMatrix2x2 m;
    m.entries[0][0] = d;
    m.entries[1][1] = d;
    return m;
  }

  const RationalTF& operator()(int row, int col) const { return entries[row][col]; }
  RationalTF& operator()(int row, int col) { return entries[row][col]; }
};

}  // namespace gfmimp
