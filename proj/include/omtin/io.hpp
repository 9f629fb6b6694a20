#pragma once

// On-disk formats.
//
// TraceFile (little-endian):
//   char[8]  "OMTRACE1"
//   u32      version (1)
//   u64      sample count
//   f64      sample rate, Hz
//   char[16] unit tag, space padded
//   f64[n]   samples
//
// SpectrumFile (text):
//   # unit=<tag> df_hz=<v> window=<w> overlap=<v> segments=<n>
//   frequency_hz,psd
//   <f>,<psd>            (17 significant digits)

#include <fmt/format.h>

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "omtin/core.hpp"
#include "omtin/spectral.hpp"

namespace omtin::io {

inline constexpr char trace_magic[8] = {'O', 'M', 'T', 'R', 'A', 'C', 'E', '1'};
inline constexpr std::uint32_t trace_version = 1;
inline constexpr std::size_t unit_field = 16;
inline constexpr std::size_t trace_header_size = 8 + 4 + 8 + 8 + unit_field;

namespace detail {

template <typename T>
void put_le(std::string& out, T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big)
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
  out.append(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get_le(std::string_view in, std::size_t offset) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, in.data() + offset, sizeof(T));
  if constexpr (std::endian::native == std::endian::big)
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_failure("cannot open '" + path + "' for reading");
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw io_failure("read error on '" + path + "'");
  return data;
}

inline void write_file(const std::string& path, std::string_view data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io_failure("cannot open '" + path + "' for writing");
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  out.flush();
  if (!out) throw io_failure("write error on '" + path + "'");
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.emplace_back(s.substr(start, pos == std::string_view::npos ? s.npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline double parse_double(std::string_view text, const std::string& what) {
  const std::string s(trim(text));
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw io_failure("bad number '" + s + "' in " + what);
  }
  if (used != s.size()) throw io_failure("bad number '" + s + "' in " + what);
  return v;
}

}  // namespace detail

// ---------------------------------------------------------------- traces

inline std::string encode_trace(const TimeTrace& t) {
  if (t.unit.size() > unit_field) throw invalid_input("unit tag '" + t.unit + "' longer than 16 bytes");
  std::string out;
  out.reserve(trace_header_size + 8 * t.size());
  out.append(trace_magic, 8);
  detail::put_le<std::uint32_t>(out, trace_version);
  detail::put_le<std::uint64_t>(out, t.size());
  detail::put_le<double>(out, t.sample_rate);
  std::string unit = t.unit;
  unit.resize(unit_field, ' ');
  out += unit;
  for (double v : t.samples) detail::put_le<double>(out, v);
  return out;
}

inline TimeTrace decode_trace(std::string_view data, const std::string& origin = "trace") {
  if (data.size() < trace_header_size) throw io_failure(origin + ": truncated header");
  if (std::memcmp(data.data(), trace_magic, 8) != 0) throw io_failure(origin + ": not a trace file (bad magic)");
  const auto version = detail::get_le<std::uint32_t>(data, 8);
  if (version != trace_version) throw io_failure(origin + ": unsupported version " + std::to_string(version));
  const auto count = detail::get_le<std::uint64_t>(data, 12);
  const auto rate = detail::get_le<double>(data, 20);
  std::string unit(data.substr(28, unit_field));
  while (!unit.empty() && unit.back() == ' ') unit.pop_back();
  const std::size_t payload = data.size() - trace_header_size;
  if (payload % 8 != 0 || payload / 8 != count)
    throw io_failure(origin + ": declared count " + std::to_string(count) + " does not match payload");
  if (!(rate > 0.0) || !std::isfinite(rate)) throw io_failure(origin + ": invalid sample rate");
  std::vector<double> samples(count);
  for (std::size_t i = 0; i < count; ++i) samples[i] = detail::get_le<double>(data, trace_header_size + 8 * i);
  return TimeTrace(std::move(samples), rate, std::move(unit));
}

inline void write_trace(const std::string& path, const TimeTrace& t) { detail::write_file(path, encode_trace(t)); }

inline TimeTrace read_trace(const std::string& path) { return decode_trace(detail::read_file(path), path); }

// ---------------------------------------------------------------- spectra

inline std::string encode_spectrum(const Spectrum& s) {
  for (char c : s.unit)
    if (c == ' ' || c == '\t' || c == '\n') throw invalid_input("spectrum unit tag must not contain whitespace");
  std::string out = fmt::format("# unit={} df_hz={:.17g} window={} overlap={:.17g} segments={}\n", s.unit, s.df,
                                s.window, s.overlap, s.segments);
  out += "frequency_hz,psd\n";
  for (std::size_t k = 0; k < s.size(); ++k) out += fmt::format("{:.17g},{:.17g}\n", s.frequencies[k], s.values[k]);
  return out;
}

inline Spectrum decode_spectrum(std::string_view text, const std::string& origin = "spectrum") {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || line.rfind("# ", 0) != 0) throw io_failure(origin + ": missing header line");
  Spectrum s;
  bool seen[5] = {};
  for (const auto& field : detail::split(std::string_view(line).substr(2), ' ')) {
    if (field.empty()) continue;
    const auto eq = field.find('=');
    if (eq == std::string::npos) throw io_failure(origin + ": malformed header field '" + field + "'");
    const std::string key = field.substr(0, eq), value = field.substr(eq + 1);
    if (key == "unit") {
      s.unit = value;
      seen[0] = true;
    } else if (key == "df_hz") {
      s.df = detail::parse_double(value, origin);
      seen[1] = true;
    } else if (key == "window") {
      s.window = value;
      seen[2] = true;
    } else if (key == "overlap") {
      s.overlap = detail::parse_double(value, origin);
      seen[3] = true;
    } else if (key == "segments") {
      s.segments = static_cast<std::size_t>(detail::parse_double(value, origin));
      seen[4] = true;
    } else {
      throw io_failure(origin + ": unknown header field '" + key + "'");
    }
  }
  for (bool b : seen)
    if (!b) throw io_failure(origin + ": incomplete header");
  if (!std::getline(in, line) || detail::trim(line) != "frequency_hz,psd")
    throw io_failure(origin + ": missing column line 'frequency_hz,psd'");
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    const auto cols = detail::split(line, ',');
    if (cols.size() != 2) throw io_failure(origin + ": expected two columns in '" + line + "'");
    s.frequencies.push_back(detail::parse_double(cols[0], origin));
    s.values.push_back(detail::parse_double(cols[1], origin));
  }
  if (s.size() < 2) throw io_failure(origin + ": fewer than two rows");
  if (!(s.df > 0.0)) throw io_failure(origin + ": df_hz must be > 0");
  for (std::size_t k = 0; k < s.size(); ++k)
    if (std::abs(s.frequencies[k] - static_cast<double>(k) * s.df) > 1e-9 * std::max(1.0, s.frequencies[k]))
      throw io_failure(origin + ": frequency grid is not uniform from 0 with the declared df");
  return s;
}

inline void write_spectrum(const std::string& path, const Spectrum& s) {
  detail::write_file(path, encode_spectrum(s));
}

inline Spectrum read_spectrum(const std::string& path) { return decode_spectrum(detail::read_file(path), path); }

// ---------------------------------------------------------------- tables

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
      if (columns[i] == name) return i;
    throw io_failure("table has no column '" + name + "'");
  }
  std::vector<double> values(const std::string& name) const {
    const std::size_t c = column(name);
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(r[c]);
    return out;
  }
};

inline std::string encode_csv(const Table& t) {
  std::string out;
  for (std::size_t i = 0; i < t.columns.size(); ++i) out += (i ? "," : "") + t.columns[i];
  out += '\n';
  for (const auto& r : t.rows) {
    for (std::size_t i = 0; i < r.size(); ++i) out += fmt::format("{}{:.17g}", i ? "," : "", r[i]);
    out += '\n';
  }
  return out;
}

/// First non-comment line is the header; '#' lines are skipped.
inline Table decode_csv(std::string_view text, const std::string& origin = "csv") {
  std::istringstream in{std::string(text)};
  std::string line;
  Table t;
  while (std::getline(in, line)) {
    const auto s = detail::trim(line);
    if (s.empty() || s.front() == '#') continue;
    const auto cols = detail::split(s, ',');
    if (t.columns.empty()) {
      for (const auto& c : cols) t.columns.emplace_back(detail::trim(c));
      continue;
    }
    if (cols.size() != t.columns.size())
      throw io_failure(origin + ": row has " + std::to_string(cols.size()) + " columns, expected " +
                       std::to_string(t.columns.size()));
    std::vector<double> row;
    for (const auto& c : cols) row.push_back(detail::parse_double(c, origin));
    t.rows.push_back(std::move(row));
  }
  if (t.columns.empty()) throw io_failure(origin + ": empty table");
  return t;
}

inline void write_csv(const std::string& path, const Table& t) { detail::write_file(path, encode_csv(t)); }

inline Table read_csv(const std::string& path) { return decode_csv(detail::read_file(path), path); }

/// key=value lines written next to an output file as <path>.meta.
inline void write_meta(const std::string& path, const std::vector<std::pair<std::string, std::string>>& entries) {
  std::string out;
  for (const auto& [k, v] : entries) out += k + "=" + v + "\n";
  detail::write_file(path + ".meta", out);
}

}  // namespace omtin::io
