// Copyright 2026 The halfwalk Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "halfwalk/band_solver.hpp"
#include "halfwalk/geometry.hpp"

namespace halfwalk {

enum class Kernel { reflected, killed };
enum class Method { series, linear_solve, monte_carlo };
const char* to_string(Kernel k);
const char* to_string(Method m);

inline constexpr std::size_t kMaxBandEntries = 25'000'000;
inline constexpr double kPruneMass = 1e-25;
inline constexpr std::uint64_t kVisitCap = 1'000'000;

struct GreenEstimate {
  LatticeVector source;
  LatticeVector target;
  Kernel kernel = Kernel::reflected;
  Method method = Method::linear_solve;
  double value = 0.0;
  // Truncation bound, or 95% half-width for Monte Carlo.
  double error = 0.0;
  bool error_known = true;
  std::uint64_t samples = 0;
  bool flagged = false;
  std::string note;
};

// Inclusive lattice rectangle.
struct Box {
  LatticeVector lo;
  LatticeVector hi;

  int dim() const { return static_cast<int>(lo.size()); }
  bool contains(const LatticeVector& z) const;
  std::size_t volume() const;
  std::string str() const;
};

Box bounding_box(const std::vector<LatticeVector>& sites, int margin);

// Certified upper bounds on G and G+ from finite sets of exponential tilts.
class GreenBound {
 public:
  explicit GreenBound(const Geometry& geometry);

  // Upper bound on G(u, target) or G+(u, target).
  double upper(Kernel kernel, const LatticeVector& u,
               const LatticeVector& target) const;
  // Upper bound on sum_w G(u, w) f(w) with f(w) = sum_w' mu0(w' - w)
  // G+(w', target) over boundary sites w.
  double upper_boundary_sum(const LatticeVector& u,
                            const LatticeVector& target) const;

  double gs00() const { return gs00_; }
  double gdiag() const { return gdiag_; }

  // Tilts a in D with phi0(a_bar) < 1.
  struct Tilt {
    Vec a;
    Vec a_bar;
    double phi0_a = 0.0;
    double phi0_bar = 0.0;
  };
  const std::vector<Tilt>& boundary_tilts() const { return cor_; }
  const std::vector<Vec>& d_tilts() const { return d_pts_; }
  const std::vector<Vec>& dd0_tilts() const { return dd0_pts_; }

 private:
  int dim_;
  double gs00_ = 0.0;
  double gdiag_ = 0.0;
  std::vector<Vec> d_pts_;    // in D
  std::vector<Vec> dd0_pts_;  // in D and D0
  std::vector<Tilt> cor_;
};

// I - P on a box, killed on leaving it (and below y = 1 for G+).
class BoxSystem {
 public:
  struct Exit {
    std::size_t from;
    LatticeVector to;
    double p;
  };

  BoxSystem(const WalkModel& model, Kernel kernel, const Box& box,
            std::size_t max_entries = kMaxBandEntries);

  const Box& box() const { return box_; }
  Kernel kernel() const { return kernel_; }
  std::size_t size() const { return n_; }
  std::size_t index(const LatticeVector& z) const;
  LatticeVector site(std::size_t i) const;
  const std::vector<Exit>& exits() const { return exits_; }

  // G_box(z, .)
  std::vector<double> row(const LatticeVector& z) const;
  // G_box(., z')
  std::vector<double> column(const LatticeVector& zp) const;
  // (I - P_box)^{-1} rhs
  std::vector<double> apply_inverse(std::vector<double> rhs) const;

  static std::size_t band_entries(const WalkModel& model, const Box& box);

 private:
  Box box_;
  Kernel kernel_;
  std::size_t n_ = 0;
  std::vector<int> order_;  // dimensions from fastest to slowest
  std::vector<std::size_t> stride_;
  std::vector<Exit> exits_;
  std::unique_ptr<BandedMMatrix> matrix_;
};

struct LinearSolveOptions {
  std::optional<Box> box;
  // Grow faces until every requested error is below rel_tol * value.
  bool adaptive = true;
  double rel_tol = 1e-8;
  // Report the box-killed Green function itself (error is roundoff only).
  bool box_killed = false;
  std::size_t max_entries = kMaxBandEntries;
  int margin = 12;
  // Reused across calls when set.
  std::shared_ptr<const GreenBound> bound;
};

// G(z, .) on a solved box.
class GreenField {
 public:
  GreenField(std::shared_ptr<const BoxSystem> system,
             std::shared_ptr<const GreenBound> bound, LatticeVector source,
             bool box_killed);

  const Box& box() const { return system_->box(); }
  const BoxSystem& system() const { return *system_; }
  double value(const LatticeVector& site) const;
  GreenEstimate estimate(const LatticeVector& site) const;
  // Truncation error split by exit face: index 2k for lo, 2k+1 for hi.
  std::vector<double> face_errors(const LatticeVector& site) const;
  void flag(const std::string& note) { note_ = note; }

 private:
  std::shared_ptr<const BoxSystem> system_;
  std::shared_ptr<const GreenBound> bound_;
  LatticeVector source_;
  bool box_killed_;
  std::vector<double> g_;
  std::string note_;
};

// G(., z') on a solved box.
class GreenColumn {
 public:
  GreenColumn(std::shared_ptr<const BoxSystem> system,
              std::shared_ptr<const GreenBound> bound, LatticeVector target,
              bool box_killed);

  const Box& box() const { return system_->box(); }
  const BoxSystem& system() const { return *system_; }
  double value(const LatticeVector& site) const;
  double error(const LatticeVector& site) const;
  GreenEstimate estimate(const LatticeVector& site) const;
  std::vector<double> face_errors(const LatticeVector& site) const;
  void flag(const std::string& note) { note_ = note; }

 private:
  std::shared_ptr<const BoxSystem> system_;
  LatticeVector target_;
  std::string note_;
  bool box_killed_;
  std::vector<double> g_;
  std::vector<std::vector<double>> face_err_;  // per face, per site
};

// Row solve: G(z, t) for each target t.
GreenField solve_row(const WalkModel& model, const LatticeVector& z,
                     const std::vector<LatticeVector>& targets, Kernel kernel,
                     const LinearSolveOptions& opts = {});
// Column solve: G(s, target) for each source s.
GreenColumn solve_column(const WalkModel& model,
                         const std::vector<LatticeVector>& sources,
                         const LatticeVector& target, Kernel kernel,
                         const LinearSolveOptions& opts = {});

std::vector<GreenEstimate> green_linear_solve(
    const WalkModel& model, const LatticeVector& z,
    const std::vector<LatticeVector>& targets, Kernel kernel,
    const LinearSolveOptions& opts = {});

struct SeriesOptions {
  // Kill the walk on leaving this box.
  std::optional<Box> box;
  double prune = kPruneMass;
  std::size_t max_sites = kMaxBandEntries;
  std::shared_ptr<const GreenBound> bound;
};

std::vector<GreenEstimate> green_series(const WalkModel& model,
                                        const LatticeVector& z,
                                        const std::vector<LatticeVector>& targets,
                                        int horizon, Kernel kernel,
                                        const SeriesOptions& opts = {});
GreenEstimate green_series(const WalkModel& model, const LatticeVector& z,
                           const LatticeVector& target, int horizon,
                           Kernel kernel, const SeriesOptions& opts = {});

struct MonteCarloOptions {
  std::uint64_t n_paths = 100000;
  std::uint64_t path_cap = 1000000;
  // A path stops once the bound on its remaining visits, summed over the
  // targets, falls below this; the stopped mass is added to the error.
  double escape_tol = 1e-9;
  std::uint64_t seed = 1;
  int threads = 0;  // 0: HALFWALK_THREADS or hardware concurrency
  std::optional<Box> box;
  std::shared_ptr<const GreenBound> bound;
};

// Paths are split into fixed chunks, each with its own seeded stream, so the
// result does not depend on the thread count.
std::vector<GreenEstimate> green_monte_carlo(
    const WalkModel& model, const LatticeVector& z,
    const std::vector<LatticeVector>& targets, Kernel kernel,
    const MonteCarloOptions& opts);

int default_threads();

struct RenewalAudit {
  GreenEstimate lhs;          // G(z, z_n)
  GreenEstimate direct_term;  // G+(z, z_n)
  double boundary_sum = 0.0;
  double boundary_sum_error = 0.0;
  double remainder = 0.0;  // outside the box, certified
  int w_max = 0;
  double principal = 0.0;
  double delta = 0.0;
  double relative_gap = 0.0;
  // Relative size of all certified truncation terms.
  double certified_bound = 0.0;
  double principal_ratio = 0.0;
  Vec gamma_q;
  bool flagged = false;
  std::string note;
};

RenewalAudit renewal_audit(const WalkModel& model, const LatticeVector& z,
                           const LatticeVector& z_n, const Vec& q, double delta,
                           const LinearSolveOptions& opts = {});
// Principal-part ratios for several delta from one set of solves.
std::vector<RenewalAudit> renewal_audit(const WalkModel& model,
                                        const LatticeVector& z,
                                        const LatticeVector& z_n, const Vec& q,
                                        const std::vector<double>& deltas,
                                        const LinearSolveOptions& opts = {});

LatticeVector nearest_site(const Vec& x);

struct AsymptoticsRow {
  double r = 0.0;
  LatticeVector z_n;
  GreenEstimate estimate;
  double log_value_over_r = 0.0;
  double predicted_limit = 0.0;
};

struct AsymptoticsResult {
  Vec q;
  LatticeVector z0;
  std::vector<AsymptoticsRow> reflected;
  std::vector<AsymptoticsRow> killed;
  double slope = 0.0;
  double slope_killed = 0.0;
  double predicted = 0.0;         // -I(0, q)
  double predicted_killed = 0.0;  // -I+(0, q)
};

// Least-squares slope of log G against |z_n|.
double regression_slope(const std::vector<double>& x,
                        const std::vector<double>& y);

AsymptoticsResult log_asymptotics_experiment(
    const WalkModel& model, const Vec& q, const std::vector<double>& radii,
    const LatticeVector& z0, const LinearSolveOptions& opts = {});

// sum over boundary w of G(z, w) exp(a.w): truncated value, certified
// remainder, and the closed form (1 - phi0(a_bar))^{-1} exp(a_bar.z).
struct BoundarySumCheck {
  double partial = 0.0;
  double error = 0.0;
  double closed_form = 0.0;
};
BoundarySumCheck boundary_sum_check(const WalkModel& model,
                                    const LatticeVector& z, const DualPoint& a,
                                    int w_max);

}  // namespace halfwalk
