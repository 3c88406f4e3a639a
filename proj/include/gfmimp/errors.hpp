#pragma once

#include <complex>
#include <stdexcept>
#include <string>

namespace gfmimp {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Invalid configuration, parameter file, or user input.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

/// Mathematical or model-level failure (pole evaluation, solver breakdown).
class ModelError : public Error {
 public:
  explicit ModelError(const std::string& msg) : Error(msg) {}
};

/// Rational function evaluated too close to a pole.
class EvaluationAtPole : public ModelError {
 public:
  EvaluationAtPole(const std::string& msg, std::complex<double> where)
      : ModelError(msg), s(where) {}
  std::complex<double> s;
};

/// Steady-state power-flow solve did not converge.
class InfeasibleOperatingPoint : public ModelError {
 public:
  InfeasibleOperatingPoint(const std::string& msg, double final_residual)
      : ModelError(msg), residual(final_residual) {}
  double residual;
};

/// Time-domain state left the trusted region or became non-finite.
class SimulationDiverged : public ModelError {
 public:
  SimulationDiverged(const std::string& msg, double at_time)
      : ModelError(msg), t(at_time) {}
  double t;
};

/// No slope sign change found on one side of the fundamental, or no
/// impedance peak rising between the two minima.
class NoCornerError : public Error {
 public:
  enum class Side { kBelow, kAbove, kNoPeak };
  NoCornerError(const std::string& msg, Side which) : Error(msg), side(which) {}
  Side side;
};

/// Malformed curve file (bad row, non-monotone or duplicate frequency).
class CsvFormatError : public ConfigError {
 public:
  CsvFormatError(const std::string& msg, std::size_t line_number)
      : ConfigError(msg), line(line_number) {}
  std::size_t line;
};

}  // namespace gfmimp
