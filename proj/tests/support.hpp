#pragma once

#include <string>

#include "effham/effham.hpp"

namespace testing_support {

inline effham::ExperimentConfig config(const std::string& name) {
  return effham::load_config(std::string(EFFHAM_CONFIG_DIR) + "/" + name + ".json");
}

/// Single-group spec with constant coefficients A = a, b = drift.
inline effham::EnvironmentSpec constant_spec(double a, double drift, double sigma = 1.0) {
  effham::EnvironmentSpec s;
  s.ellipticity_min = s.ellipticity_max = a;
  s.drift_amplitude = std::abs(drift);
  s.group[0].diffusion = {a, 0.0};
  s.group[0].drift[0] = {drift, 0.0};
  s.coupling = {{0.0, 0.0}};
  s.fission = {{sigma, 0.0}};
  s.c_min = 0.5;
  return s;
}

}  // namespace testing_support
