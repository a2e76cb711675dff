// Copyright 2026 The halfwalk Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "halfwalk/geometry.hpp"

namespace halfwalk {

enum class HarmonicCase { generic, tangent, saturated };
const char* to_string(HarmonicCase c);

struct HarmonicFunction {
  BoundaryPoint a;
  HarmonicCase case_tag = HarmonicCase::generic;
  double phi0_a = 0.0;
  double phi0_bar = 0.0;
  double dbeta_phi0_a = 0.0;
  // Generic: (1 - phi0(a)) / (1 - phi0(a_bar)).
  // Tangent: dbeta phi0(a) / (1 - phi0(a)).
  double coef = 0.0;
  // Positive multiplier; ratios of h do not depend on it.
  double scale = 1.0;
};

// Builds h_a for a in D-hat on the upper boundary of D (or on the zero
// stratum). Throws DomainError otherwise.
HarmonicFunction make_harmonic(const WalkModel& model, const DualPoint& a);
HarmonicFunction make_harmonic(const WalkModel& model, const BoundaryPoint& a);

double h_eval(const HarmonicFunction& h, const LatticeVector& z);
double log_h(const HarmonicFunction& h, const LatticeVector& z);

// max over the window of |sum_z' p(z,z') h(z') - h(z)| / h(z).
double harmonicity_residual(const WalkModel& model, const HarmonicFunction& h,
                            const std::vector<LatticeVector>& window);

// h(x, y) = exp(alpha.x) h(0, y) within 1e-10 relative.
bool multiplicative_structure_check(const HarmonicFunction& h,
                                    const std::vector<LatticeVector>& samples);

bool lambda_consistency(const WalkModel& model, const HarmonicFunction& h);

// Sites of the box [-r, r]^{d-1} x [0, ymax].
std::vector<LatticeVector> box_window(int dim, int r, int ymax);

}  // namespace halfwalk
