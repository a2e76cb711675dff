// Copyright 2026 The halfwalk Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "halfwalk/genfunc.hpp"

namespace halfwalk {

inline constexpr double kStratTol = 1e-9;
inline constexpr double kConeTol = 1e-8;
inline constexpr double kQpTol = 1e-8;
inline constexpr double kAtlasTol = 1e-6;

enum class Stratum { plus, minus, zero, interior };
const char* to_string(Stratum s);

struct BoundaryPoint {
  DualPoint a;
  double phi_a = 0.0;
  bool on_D_boundary = false;
  Stratum stratum = Stratum::interior;
  DualPoint a_bar;
  double phi0_at_a = 0.0;
  double phi0_at_bar = 0.0;
  Vec grad_phi;
  Vec grad_phi_bar;
  Vec grad_phi0_bar;
  // Undefined on the zero stratum.
  std::optional<double> kappa;

  bool phi0_active() const;
  bool phi_active() const;
  // grad phi0(a_bar) + kappa grad phi(a_bar); requires kappa.
  Vec boundary_generator() const;
};

enum class ConeCase { both_active, phi0_only, phi_only };
const char* to_string(ConeCase c);

struct NormalCone {
  std::vector<Vec> generators;
  ConeCase case_tag = ConeCase::phi_only;
};

// Nonnegative least-squares fit of a direction by cone generators.
struct ConeFit {
  std::vector<double> coef;
  double residual = 0.0;  // relative to |q|
};

struct ConeDecomposition {
  Vec q;
  BoundaryPoint a_hat;
  Vec gamma_q;
  double c1 = 0.0;
  double c2 = 0.0;
  bool active_phi0 = false;
};

struct QuasiPotentialResult {
  double value = 0.0;
  DualPoint maximizer;
  // (I(0, gamma_q), I+(gamma_q, q)) when q has positive last coordinate.
  std::optional<std::pair<double, double>> decomposition;
  bool flagged = false;  // fell back to a grid search
};

struct PathSegment {
  Vec from;
  Vec to;
  bool on_boundary = false;
  double cost = 0.0;
  std::optional<double> duration;
};

struct OptimalPath {
  Vec q;
  Vec gamma_q;
  std::vector<PathSegment> segments;
  double total_cost = 0.0;
};

struct IMinResult {
  double value = 0.0;
  Vec gamma;  // unit minimizer in the boundary hyperplane
};

struct AtlasRow {
  Vec q;
  BoundaryPoint a_hat;
  double value = 0.0;  // a_hat . q
  std::optional<Vec> gamma_q;
  int cluster = -1;
};

struct Fan {
  int cluster = -1;
  std::vector<std::size_t> rows;
  double angular_width = 0.0;
  DualPoint a_hat;
};

struct Atlas {
  std::vector<AtlasRow> rows;
  std::vector<Fan> fans;
  bool injective() const { return fans.empty(); }
};

struct AHatOptions {
  enum class Method { automatic, bisection, barrier };
  Method method = Method::automatic;
  // Strictly feasible start (alpha, beta, beta') for the barrier method.
  std::optional<Vec> start;
};

// Interval data for d = 2.
struct ThetaInterval {
  double proj_lo = 0.0, proj_hi = 0.0;   // projection of D
  double theta_lo = 0.0, theta_hi = 0.0; // Theta
};

// Geometry of one model with cached d = 2 interval data.
class Geometry {
 public:
  explicit Geometry(const WalkModel& model);

  const WalkModel& model() const { return model_; }

  BoundaryPoint classify(const DualPoint& a) const;
  bool theta_contains(const Vec& alpha) const;
  NormalCone normal_cone(const BoundaryPoint& bp) const;
  BoundaryPoint a_hat(const Vec& q, const AHatOptions& opts = {}) const;
  ConeDecomposition gamma_q(const Vec& q) const;
  QuasiPotentialResult quasi_potential_Iplus(const Vec& q_from,
                                             const Vec& q_to) const;
  QuasiPotentialResult quasi_potential_I(const Vec& q) const;
  IMinResult i_min() const;
  OptimalPath optimal_path(const Vec& q, bool with_times = false) const;
  Atlas boundary_atlas(int n_samples) const;

  // Support function of D and its maximizer.
  QuasiPotentialResult support_D(const Vec& v) const;
  // A point strictly inside D and D0.
  DualPoint interior_point() const;
  // Random strictly feasible barrier start.
  Vec random_barrier_start(std::uint64_t seed) const;
  const ThetaInterval& theta_interval() const;  // d = 2 only
  double psi(double alpha) const;               // phi0(bar a), d = 2

 private:
  BoundaryPoint a_hat_bisection(const Vec& q) const;
  BoundaryPoint a_hat_barrier(const Vec& q, const std::optional<Vec>& start)
      const;
  void certify(const BoundaryPoint& bp, const Vec& q) const;
  double grid_lower_bound(const Vec& v) const;

  const WalkModel& model_;
  ThetaInterval theta_;
  std::vector<DualPoint> boundary_samples_;
};

// One-shot wrappers.
BoundaryPoint classify(const WalkModel& model, const DualPoint& a);
bool theta_contains(const WalkModel& model, const Vec& alpha);
NormalCone normal_cone(const WalkModel& model, const BoundaryPoint& bp);
BoundaryPoint a_hat(const WalkModel& model, const Vec& q);
ConeDecomposition gamma_q(const WalkModel& model, const Vec& q);
QuasiPotentialResult quasi_potential_Iplus(const WalkModel& model,
                                           const Vec& q_from, const Vec& q_to);
QuasiPotentialResult quasi_potential_I(const WalkModel& model, const Vec& q);
IMinResult i_min(const WalkModel& model);
OptimalPath optimal_path(const WalkModel& model, const Vec& q,
                         bool with_times = false);
Atlas boundary_atlas(const WalkModel& model, int n_samples);

ConeFit fit_cone(const NormalCone& cone, const Vec& q);

}  // namespace halfwalk
