// Copyright 2026 The halfwalk Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <string>

#include "halfwalk/model.hpp"

namespace halfwalk::testing {

inline std::string data_path(const std::string& name) {
  return std::string(HALFWALK_DATA_DIR) + "/" + name + ".json";
}

inline WalkModel model_named(const std::string& name) {
  return load_model_file(data_path(name));
}

inline Vec vec2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

inline Vec direction(double theta) { return vec2(std::cos(theta), std::sin(theta)); }

inline LatticeMeasure measure_of(
    int dim, const std::vector<std::pair<LatticeVector, double>>& atoms) {
  LatticeMeasure m;
  m.dim = dim;
  for (const auto& [s, w] : atoms) m.atoms.push_back({s, w});
  return m;
}

}  // namespace halfwalk::testing
