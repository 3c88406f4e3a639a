#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <numbers>
#include <sstream>
#include <vector>

#include "gfmimp/csvio.hpp"
#include "gfmimp/errors.hpp"

namespace gfmimp {

std::string format_double(double v) {
  if (v == 0.0) v = 0.0;  // normalize -0
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

void write_text_file(const std::string& path, const std::string& content) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(p.parent_path(), ec);
    if (ec) throw ConfigError("cannot create directory " + p.parent_path().string());
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open for writing: " + path);
  out << content;
  if (!out) throw ConfigError("write failed: " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string curve_csv_text(const ImpedanceCurve& c) {
  c.validate();
  std::string out = "freq_hz,re_ohm,im_ohm,mag_ohm,phase_deg\n";
  constexpr double kRadToDeg = 180.0 / std::numbers::pi;
  for (std::size_t i = 0; i < c.size(); ++i) {
    const Complex z = c.values_ohm[i];
    out += format_double(c.freqs_hz[i]);
    out += ',';
    out += format_double(z.real());
    out += ',';
    out += format_double(z.imag());
    out += ',';
    out += format_double(std::abs(z));
    out += ',';
    out += format_double(std::arg(z) * kRadToDeg);
    out += '\n';
  }
  return out;
}

void write_curve_csv(const ImpedanceCurve& c, const std::string& path) {
  write_text_file(path, curve_csv_text(c));
}

std::string curve_sidecar_json(const ImpedanceCurve& c) {
  nlohmann::ordered_json j;
  j["provenance"] = c.provenance;
  j["params_digest"] = c.params_digest;
  j["frame"] = c.frame == CurveFrame::kPositiveSeqStationary ? "positive_seq_stationary"
                                                             : "dq_scalar";
  j["f_n_hz"] = c.f_n_hz;
  j["fundamental_pole"] = c.fundamental_pole;
  j["n_points"] = c.size();
  j["freq_start_hz"] = c.freqs_hz.empty() ? 0.0 : c.freqs_hz.front();
  j["freq_stop_hz"] = c.freqs_hz.empty() ? 0.0 : c.freqs_hz.back();
  return j.dump(2) + "\n";
}

void write_curve_sidecar(const ImpedanceCurve& c, const std::string& path) {
  write_text_file(path, curve_sidecar_json(c));
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string::size_type start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    if (comma == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

double parse_double(const std::string& field, std::size_t line_no) {
  double v = 0.0;
  const char* begin = field.data();
  const char* end = begin + field.size();
  // Tolerate surrounding spaces.
  while (begin < end && *begin == ' ') ++begin;
  while (end > begin && *(end - 1) == ' ') --end;
  const auto r = std::from_chars(begin, end, v);
  if (r.ec != std::errc() || r.ptr != end)
    throw CsvFormatError("not a number: '" + field + "'", line_no);
  return v;
}

}  // namespace

ImpedanceCurve read_curve_csv(const std::string& path, double f_n_hz) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open: " + path);

  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw CsvFormatError("file is empty", 1);
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_csv_line(line);
  if (header.size() < 3 || header[0] != "freq_hz" || header[1] != "re_ohm" ||
      header[2] != "im_ohm")
    throw CsvFormatError("header must start with freq_hz,re_ohm,im_ohm", line_no);
  const std::size_t ncols = header.size();

  ImpedanceCurve c;
  c.frame = CurveFrame::kPositiveSeqStationary;
  c.provenance = "csv";
  c.f_n_hz = f_n_hz;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != ncols)
      throw CsvFormatError("expected " + std::to_string(ncols) + " columns, got " +
                               std::to_string(fields.size()),
                           line_no);
    const double f = parse_double(fields[0], line_no);
    const double re = parse_double(fields[1], line_no);
    const double im = parse_double(fields[2], line_no);
    if (!std::isfinite(f) || !std::isfinite(re) || !std::isfinite(im))
      throw CsvFormatError("non-finite value", line_no);
    if (!c.freqs_hz.empty() && !(f > c.freqs_hz.back()))
      throw CsvFormatError("frequencies must be strictly increasing", line_no);
    c.freqs_hz.push_back(f);
    c.values_ohm.emplace_back(re, im);
  }
  if (c.freqs_hz.empty()) throw CsvFormatError("no data rows", line_no);
  c.validate();
  return c;
}

}  // namespace gfmimp
