// Copyright 2026 The halfwalk Authors
// SPDX-License-Identifier: Apache-2.0
#include "halfwalk/martin.hpp"

#include <algorithm>
#include <cmath>

#include "halfwalk/errors.hpp"

namespace halfwalk {

namespace {

double dot(const Vec& a, const LatticeVector& z) {
  double s = 0.0;
  for (int k = 0; k < a.size(); ++k) s += a[k] * z[k];
  return s;
}

LatticeVector round_site(const Vec& x, bool floor_rounding) {
  if (!floor_rounding) return nearest_site(x);
  LatticeVector z(x.size());
  for (int k = 0; k < x.size(); ++k) z[k] = static_cast<int>(std::floor(x[k]));
  return z;
}

double ratio_error(double k, const GreenEstimate& a, const GreenEstimate& b) {
  const double ra = a.value > 0 ? a.error / a.value : 0.0;
  const double rb = b.value > 0 ? b.error / b.value : 0.0;
  return std::abs(k) * std::hypot(ra, rb);
}

// G(s, z_n) for each source, exact or Monte Carlo per the policy.
std::vector<GreenEstimate> column_estimates(const WalkModel& model,
                                            const std::vector<LatticeVector>& sources,
                                            const LatticeVector& z_n,
                                            const KernelOptions& opts) {
  std::vector<GreenEstimate> out;
  if (opts.policy != MethodPolicy::monte_carlo) {
    try {
      const GreenColumn col =
          solve_column(model, sources, z_n, Kernel::reflected, opts.linear);
      for (const auto& s : sources) out.push_back(col.estimate(s));
      return out;
    } catch (const CapacityError&) {
      if (opts.policy == MethodPolicy::exact) throw;
    }
  }
  for (const auto& s : sources)
    out.push_back(
        green_monte_carlo(model, s, {z_n}, Kernel::reflected, opts.monte_carlo)
            .front());
  return out;
}

}  // namespace

TraceVerdict verdict(const KernelTrace& trace, double tol) {
  TraceVerdict v;
  if (trace.rows.empty()) return v;
  const double p = trace.predicted;
  v.last_deviation = std::abs(trace.rows.back().K - p) / p;
  v.within_tolerance = v.last_deviation < tol;
  const std::size_t n = trace.rows.size();
  v.monotone_tail = true;
  for (std::size_t i = (n >= 3 ? n - 2 : 1); i < n; ++i)
    if (std::abs(trace.rows[i].K - p) > std::abs(trace.rows[i - 1].K - p))
      v.monotone_tail = false;
  return v;
}

std::vector<KernelTrace> kernel_traces(const WalkModel& model,
                                       const std::vector<LatticeVector>& probes,
                                       const LatticeVector& z0, const Vec& q,
                                       const std::vector<double>& radii,
                                       const KernelOptions& opts) {
  require_accepted(model);
  const int d = model.dim;
  if (q.size() != d || !(q.norm() > 0.0) || q[d - 1] < 0.0)
    throw DomainError("q must be a nonzero direction in the closed half-space");
  const Vec u = q / q.norm();
  Geometry geo(model);
  const HarmonicFunction h = make_harmonic(model, geo.a_hat(u));
  KernelOptions o = opts;
  if (!o.linear.bound) o.linear.bound = std::make_shared<const GreenBound>(geo);
  if (!o.monte_carlo.bound) o.monte_carlo.bound = o.linear.bound;

  std::vector<KernelTrace> traces;
  for (const auto& z : probes) {
    KernelTrace t;
    t.z = z;
    t.z0 = z0;
    t.q = u;
    t.predicted = std::exp(log_h(h, z) - log_h(h, z0));
    traces.push_back(t);
  }
  std::vector<LatticeVector> sources = probes;
  sources.push_back(z0);
  for (double r : radii) {
    LatticeVector zn = round_site(r * u, o.floor_rounding);
    zn[d - 1] = std::max(zn[d - 1], 0);
    const auto est = column_estimates(model, sources, zn, o);
    const GreenEstimate& den = est.back();
    for (std::size_t i = 0; i < probes.size(); ++i) {
      if (!(den.value > den.error) || !(den.value > 0.0)) {
        traces[i].dropped_radii.push_back(r);
        traces[i].note = "denominator consistent with zero; row dropped";
        continue;
      }
      KernelRow row;
      row.r = r;
      row.z_n = zn;
      row.numerator = est[i];
      row.denominator = den;
      row.K = est[i].value / den.value;
      row.error = ratio_error(row.K, est[i], den);
      traces[i].rows.push_back(row);
    }
  }
  return traces;
}

KernelTrace kernel_trace(const WalkModel& model, const LatticeVector& z,
                         const LatticeVector& z0, const Vec& q,
                         const std::vector<double>& radii,
                         const KernelOptions& opts) {
  return kernel_traces(model, {z}, z0, q, radii, opts).front();
}

NonradialReport nonradial_experiment(const WalkModel& model, const Vec& q1,
                                     const Vec& q2,
                                     const std::vector<LatticeVector>& probes,
                                     const LatticeVector& z0,
                                     const std::vector<double>& radii,
                                     const KernelOptions& opts) {
  Geometry geo(model);
  NonradialReport rep;
  rep.q1 = q1 / q1.norm();
  rep.q2 = q2 / q2.norm();
  rep.a_hat1 = geo.a_hat(rep.q1).a;
  rep.a_hat2 = geo.a_hat(rep.q2).a;
  if ((rep.a_hat1 - rep.a_hat2).norm() > kAtlasTol)
    throw DomainError("directions are not in one fan: a_hat differs");
  KernelOptions o = opts;
  if (!o.linear.bound) o.linear.bound = std::make_shared<const GreenBound>(geo);
  rep.traces1 = kernel_traces(model, probes, z0, rep.q1, radii, o);
  rep.traces2 = kernel_traces(model, probes, z0, rep.q2, radii, o);
  rep.all_agree = true;
  for (std::size_t i = 0; i < probes.size(); ++i) {
    NonradialProbe p;
    p.z = probes[i];
    p.predicted = rep.traces1[i].predicted;
    if (rep.traces1[i].rows.empty() || rep.traces2[i].rows.empty()) {
      rep.all_agree = false;
      rep.probes.push_back(p);
      continue;
    }
    const KernelRow& a = rep.traces1[i].rows.back();
    const KernelRow& b = rep.traces2[i].rows.back();
    p.k1 = a.K;
    p.k2 = b.K;
    p.error = std::hypot(a.error, b.error);
    p.agree = std::abs(p.k1 - p.k2) < std::max(p.error, 0.05 * p.predicted);
    rep.all_agree = rep.all_agree && p.agree;
    rep.probes.push_back(p);
  }
  return rep;
}

RatioLimitReport ratio_limit_probe(
    const WalkModel& model, const DualPoint& a,
    const std::vector<std::pair<LatticeVector, LatticeVector>>& pairs,
    const LatticeVector& z0, const Vec& q, const std::vector<double>& radii,
    const KernelOptions& opts) {
  require_accepted(model);
  const int d = model.dim;
  Geometry geo(model);
  const BoundaryPoint bp = geo.classify(a);
  if (!bp.on_D_boundary || bp.stratum == Stratum::plus)
    throw DomainError("tilt must lie on the lower boundary of D");
  RatioLimitReport rep;
  rep.tilt = a;
  rep.interior_row_sum = bp.phi_a;
  rep.boundary_row_sum = bp.phi0_at_a;
  if (rep.boundary_row_sum > 1.0 + kStratTol)
    throw DomainError("tilted kernel is not substochastic: phi0(a) > 1");
  if (q.size() != d || !(q.norm() > 0.0) || q[d - 1] < 0.0)
    throw DomainError("q must be a nonzero direction in the closed half-space");
  const Vec u = q / q.norm();
  const HarmonicFunction h = make_harmonic(model, geo.a_hat(u));
  KernelOptions o = opts;
  if (!o.linear.bound) o.linear.bound = std::make_shared<const GreenBound>(geo);

  std::vector<LatticeVector> sources{z0};
  for (const auto& [z, zp] : pairs) {
    sources.push_back(z);
    sources.push_back(zp);
  }
  std::vector<double> xs;
  for (double r : radii) {
    LatticeVector zn = round_site(r * u, o.floor_rounding);
    zn[d - 1] = std::max(zn[d - 1], 0);
    const auto est = column_estimates(model, sources, zn, o);
    // Tilted Green function exp(a.(z_n - z)) G(z, z_n).
    rep.radii.push_back(r);
    rep.log_tilted_green.push_back(std::log(est[0].value) + dot(a, zn) -
                                   dot(a, z0));
    xs.push_back(to_vec(zn).norm());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const auto& g1 = est[1 + 2 * i];
      const auto& g2 = est[2 + 2 * i];
      RatioRow row;
      row.r = r;
      row.z_n = zn;
      row.z = pairs[i].first;
      row.zp = pairs[i].second;
      const double tilt = std::exp(dot(a, row.zp) - dot(a, row.z));
      row.ratio = tilt * g1.value / g2.value;
      row.error = ratio_error(row.ratio, g1, g2);
      row.predicted = tilt * std::exp(log_h(h, row.z) - log_h(h, row.zp));
      rep.rows.push_back(row);
    }
  }
  if (xs.size() >= 2) {
    rep.slope = regression_slope(xs, rep.log_tilted_green);
    const std::size_t n = xs.size();
    rep.terminal_slope = (rep.log_tilted_green[n - 1] - rep.log_tilted_green[n - 2]) /
                         (xs[n - 1] - xs[n - 2]);
  }
  return rep;
}

}  // namespace halfwalk
