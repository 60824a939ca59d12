#pragma once

#include <string>
#include <vector>

#include "memtune/core.hpp"
#include "memtune/errors.hpp"

namespace memtune {

namespace detail {

/// LPCVD silicon-nitride film constants shared by all presets.
inline MembraneSpec sin_base() {
  MembraneSpec s;
  s.density = 2900.0;           // kg/m^3
  s.youngs_modulus = 260e9;     // Pa
  s.heat_conductivity = 3.0;    // W/(K m)
  s.expansion_alpha0 = 1.6e-6;  // 1/K
  s.expansion_alpha1 = 1.3e-8;  // 1/K^2
  s.frame_expansion = 2.6e-6;   // 1/K, silicon frame
  s.absorption_fraction = 1.5e-3;
  return s;
}

}  // namespace detail

/// Named membrane presets covering the measured sample set plus one
/// high-stress film. Keys: t1_250, t1_500, t1_1000, t1_1500, t1_500_t75,
/// t1_500_t100, highstress.
inline MembraneSpec preset_membrane(const std::string& name) {
  MembraneSpec s = detail::sin_base();
  if (name == "t1_250") {
    s.side_length = 250e-6;
    s.thickness = 50e-9;
    s.initial_stress = 66.4e6;
  } else if (name == "t1_500") {
    s.side_length = 500e-6;
    s.thickness = 50e-9;
    s.initial_stress = 98.0e6;
  } else if (name == "t1_1000") {
    s.side_length = 1000e-6;
    s.thickness = 50e-9;
    s.initial_stress = 120e6;
  } else if (name == "t1_1500") {
    s.side_length = 1500e-6;
    s.thickness = 50e-9;
    s.initial_stress = 78.8e6;
  } else if (name == "t1_500_t75") {
    s.side_length = 500e-6;
    s.thickness = 75e-9;
    s.initial_stress = 114e6;
  } else if (name == "t1_500_t100") {
    s.side_length = 500e-6;
    s.thickness = 100e-9;
    s.initial_stress = 217e6;
  } else if (name == "highstress") {
    // Stoichiometric high-stress film: much lower optical absorption.
    s.side_length = 500e-6;
    s.thickness = 50e-9;
    s.initial_stress = 980e6;
    s.absorption_fraction = 1.5e-5;
  } else {
    throw spec_error("unknown membrane preset '" + name + "'");
  }
  s.validate();
  return s;
}

inline const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = {
      "t1_250",     "t1_500",      "t1_1000",   "t1_1500",
      "t1_500_t75", "t1_500_t100", "highstress"};
  return names;
}

}  // namespace memtune
