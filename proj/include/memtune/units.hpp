#pragma once

#include <cstdlib>
#include <map>
#include <string>

#include "memtune/errors.hpp"

namespace memtune {

/// Parses "350um", "160 mW", "98MPa", "260kHz", "0.6K/mW" or a bare number
/// into SI units. The suffix is the full unit string; no suffix means the
/// value is already SI.
inline double parse_quantity(const std::string& text) {
  static const std::map<std::string, double> factors = {
      {"m", 1.0},     {"mm", 1e-3},  {"um", 1e-6},  {"nm", 1e-9},
      {"W", 1.0},     {"mW", 1e-3},  {"uW", 1e-6},
      {"Pa", 1.0},    {"kPa", 1e3},  {"MPa", 1e6},  {"GPa", 1e9},
      {"Hz", 1.0},    {"kHz", 1e3},  {"MHz", 1e6},
      {"K", 1.0},     {"K/W", 1.0},  {"K/mW", 1e3},
      {"s", 1.0},     {"ms", 1e-3}};

  const char* begin = text.c_str();
  char* end = nullptr;
  const double value = std::strtod(begin, &end);
  if (end == begin) throw spec_error("parse_quantity: no number in '" + text + "'");
  std::string suffix(end);
  const std::size_t a = suffix.find_first_not_of(" \t");
  if (a == std::string::npos) return value;
  const std::size_t b = suffix.find_last_not_of(" \t");
  suffix = suffix.substr(a, b - a + 1);
  const auto it = factors.find(suffix);
  if (it == factors.end())
    throw spec_error("parse_quantity: unknown unit '" + suffix + "' in '" + text + "'");
  return value * it->second;
}

}  // namespace memtune
