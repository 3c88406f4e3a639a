#pragma once

#include <string>

#include "gfmimp/models.hpp"

namespace gfmimp {

/// Shortest decimal string that round-trips the double exactly.
std::string format_double(double v);

/// Writes content to path, creating parent directories. Throws ConfigError
/// on I/O failure.
void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

/// Curve table: "freq_hz,re_ohm,im_ohm,mag_ohm,phase_deg", one row per
/// grid point, shortest round-trip numbers, '\n' line endings.
std::string curve_csv_text(const ImpedanceCurve& c);
void write_curve_csv(const ImpedanceCurve& c, const std::string& path);

/// JSON sidecar carrying the curve's provenance and parameter digest.
std::string curve_sidecar_json(const ImpedanceCurve& c);
void write_curve_sidecar(const ImpedanceCurve& c, const std::string& path);

/// Reads a curve table. The first three columns must be freq_hz, re_ohm,
/// im_ohm; magnitude/phase columns are optional and recomputed rather than
/// trusted. Throws CsvFormatError with the offending line number.
ImpedanceCurve read_curve_csv(const std::string& path, double f_n_hz);

}  // namespace gfmimp
