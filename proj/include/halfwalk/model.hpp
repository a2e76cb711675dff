// Copyright 2026 The halfwalk Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace halfwalk {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Site or step in Z^d. The last coordinate is the height above the boundary.
using LatticeVector = std::vector<int>;

struct Atom {
  LatticeVector step;
  double weight = 0.0;
};

struct LatticeMeasure {
  int dim = 0;
  std::vector<Atom> atoms;

  Vec mean() const;
  // Largest sup-norm of a support vector.
  int max_step_norm() const;
};

enum class Status { pass, fail, inconclusive };

const char* to_string(Status s);

struct HypothesisCheck {
  Status status = Status::inconclusive;
  std::string detail;
};

struct HypothesisReport {
  HypothesisCheck h0, h1, h2, h3, h4;
  Vec m, m0;

  bool all_pass() const;
};

struct WalkModel {
  int dim = 0;
  LatticeMeasure mu;
  LatticeMeasure mu0;
  HypothesisReport report;
  int window_radius = 0;

  // Stable textual form used for hashing and provenance.
  std::string canonical() const;
  std::uint64_t hash() const;
  std::string hash_hex() const;
};

using TransitionRow = std::vector<std::pair<LatticeVector, double>>;

struct IrreducibilityReport {
  HypothesisCheck h1;
  HypothesisCheck h2;
};

inline constexpr double kWeightSumTol = 1e-12;
inline constexpr double kMeanTol = 1e-12;

// Window radius used when none is given: wide enough for a few steps.
int default_window_radius(const WalkModel& model);

// Parse a JSON measure document and run every hypothesis check.
WalkModel load_model(const std::string& document, int window_radius = 0);
WalkModel load_model_file(const std::string& path, int window_radius = 0);

// Build from in-memory measures; same validation as load_model.
WalkModel make_model(LatticeMeasure mu, LatticeMeasure mu0,
                     int window_radius = 0);

HypothesisCheck check_h0(const WalkModel& model);
IrreducibilityReport check_irreducibility(const WalkModel& model,
                                          int window_radius);
HypothesisCheck check_h3(const WalkModel& model);
HypothesisCheck check_h3(const Vec& m, const Vec& m0);

TransitionRow transition_row(const WalkModel& model, const LatticeVector& z);

// Throws ValidationError unless every hypothesis passed.
void require_accepted(const WalkModel& model);

std::string to_string(const LatticeVector& z);
LatticeVector parse_lattice_vector(const std::string& text);
Vec to_vec(const LatticeVector& z);

}  // namespace halfwalk
