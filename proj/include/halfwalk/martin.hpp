// Copyright 2026 The halfwalk Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "halfwalk/green.hpp"
#include "halfwalk/harmonic.hpp"

namespace halfwalk {

enum class MethodPolicy { exact, monte_carlo, automatic };

struct KernelOptions {
  MethodPolicy policy = MethodPolicy::automatic;
  LinearSolveOptions linear;
  MonteCarloOptions monte_carlo;
  // Lattice rounding of r q: nearest site, or componentwise floor.
  bool floor_rounding = false;
};

struct KernelRow {
  double r = 0.0;
  LatticeVector z_n;
  double K = 0.0;
  double error = 0.0;
  GreenEstimate numerator;    // G(z, z_n)
  GreenEstimate denominator;  // G(z0, z_n)
};

struct KernelTrace {
  LatticeVector z;
  LatticeVector z0;
  Vec q;
  std::vector<KernelRow> rows;
  double predicted = 0.0;  // h(z) / h(z0) with h built at a_hat(q)
  std::vector<double> dropped_radii;
  std::string note;
};

// Last-radius relative deviation below tol and |K - predicted| nonincreasing
// over the last three radii.
struct TraceVerdict {
  double last_deviation = 0.0;
  bool within_tolerance = false;
  bool monotone_tail = false;
};
TraceVerdict verdict(const KernelTrace& trace, double tol);

std::vector<KernelTrace> kernel_traces(const WalkModel& model,
                                       const std::vector<LatticeVector>& probes,
                                       const LatticeVector& z0, const Vec& q,
                                       const std::vector<double>& radii,
                                       const KernelOptions& opts = {});
KernelTrace kernel_trace(const WalkModel& model, const LatticeVector& z,
                         const LatticeVector& z0, const Vec& q,
                         const std::vector<double>& radii,
                         const KernelOptions& opts = {});

struct NonradialProbe {
  LatticeVector z;
  double k1 = 0.0, k2 = 0.0;
  double error = 0.0;  // combined error of k1 - k2
  double predicted = 0.0;
  bool agree = false;  // |k1 - k2| < max(error, 5% of predicted)
};

struct NonradialReport {
  Vec q1, q2;
  DualPoint a_hat1, a_hat2;
  std::vector<KernelTrace> traces1, traces2;
  std::vector<NonradialProbe> probes;
  bool all_agree = false;
};

NonradialReport nonradial_experiment(const WalkModel& model, const Vec& q1,
                                     const Vec& q2,
                                     const std::vector<LatticeVector>& probes,
                                     const LatticeVector& z0,
                                     const std::vector<double>& radii,
                                     const KernelOptions& opts = {});

struct RatioRow {
  double r = 0.0;
  LatticeVector z_n;
  LatticeVector z, zp;
  double ratio = 0.0;  // tilted G(z, z_n) / tilted G(z', z_n)
  double error = 0.0;
  double predicted = 0.0;
};

struct RatioLimitReport {
  DualPoint tilt;
  double interior_row_sum = 0.0;  // phi(a)
  double boundary_row_sum = 0.0;  // phi0(a)
  std::vector<double> radii;
  std::vector<double> log_tilted_green;  // log of tilted G(z0, z_n)
  double slope = 0.0;                    // regression over all radii
  double terminal_slope = 0.0;           // last two radii
  std::vector<RatioRow> rows;
};

// Tilted kernel exp(a.(z' - z)) p(z, z') for a on the lower boundary of D.
RatioLimitReport ratio_limit_probe(
    const WalkModel& model, const DualPoint& a,
    const std::vector<std::pair<LatticeVector, LatticeVector>>& pairs,
    const LatticeVector& z0, const Vec& q, const std::vector<double>& radii,
    const KernelOptions& opts = {});

}  // namespace halfwalk
