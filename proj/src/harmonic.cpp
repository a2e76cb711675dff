// Copyright 2026 The halfwalk Authors
// SPDX-License-Identifier: Apache-2.0
#include "halfwalk/harmonic.hpp"

#include <cmath>
#include <cstdio>

#include "halfwalk/errors.hpp"

namespace halfwalk {

namespace {

double dot(const DualPoint& a, const LatticeVector& z) {
  double s = 0.0;
  for (int k = 0; k < a.size(); ++k) s += a[k] * z[k];
  return s;
}

}  // namespace

const char* to_string(HarmonicCase c) {
  switch (c) {
    case HarmonicCase::generic:
      return "generic";
    case HarmonicCase::tangent:
      return "tangent";
    case HarmonicCase::saturated:
      return "saturated";
  }
  return "?";
}

HarmonicFunction make_harmonic(const WalkModel& model, const DualPoint& a) {
  return make_harmonic(model, classify(model, a));
}

HarmonicFunction make_harmonic(const WalkModel& model, const BoundaryPoint& a) {
  if (!a.on_D_boundary)
    throw DomainError("h_a needs a on the boundary of D");
  if (a.stratum == Stratum::minus)
    throw DomainError("h_a needs a on the upper or zero stratum of D");
  if (a.phi0_at_bar > 1.0 + kStratTol)
    throw DomainError("h_a needs phi0(a_bar) <= 1");
  const int d = model.dim;
  HarmonicFunction h;
  h.a = a;
  h.phi0_a = a.phi0_at_a;
  h.phi0_bar = a.phi0_at_bar;
  h.dbeta_phi0_a = phi_dbeta(model, a.a, Which::boundary);
  if (std::abs(1.0 - h.phi0_bar) < kStratTol) {
    h.case_tag = HarmonicCase::saturated;
  } else if (std::abs(a.grad_phi[d - 1]) <= kStratTol) {
    h.case_tag = HarmonicCase::tangent;
    h.coef = h.dbeta_phi0_a / (1.0 - h.phi0_a);
    if (!(h.coef > 0.0))
      throw DomainError("tangent h_a vanishes on the boundary hyper-plane");
  } else {
    h.case_tag = HarmonicCase::generic;
    h.coef = (1.0 - h.phi0_a) / (1.0 - h.phi0_bar);
  }
  return h;
}

double log_h(const HarmonicFunction& h, const LatticeVector& z) {
  const int d = static_cast<int>(z.size());
  if (d != h.a.a.size()) throw DomainError("site has the wrong dimension");
  const int y = z[d - 1];
  if (y < 0) throw DomainError("site is below the half-space");
  const double ls = std::log(h.scale);
  switch (h.case_tag) {
    case HarmonicCase::saturated:
      return ls + dot(h.a.a_bar, z);
    case HarmonicCase::tangent:
      return ls + dot(h.a.a, z) + std::log(y + h.coef);
    case HarmonicCase::generic:
      break;
  }
  // e^{a.z} (1 - c e^{-delta y}), delta = beta - beta_bar > 0.
  const double delta = beta_of(h.a.a) - beta_of(h.a.a_bar);
  const double c = h.coef;
  double tail;
  if (c > 0.0) {
    const double e = std::log(c) - delta * y;
    if (!(e < 0.0)) {
      char buf[128];
      std::snprintf(buf, sizeof buf,
                    "h_a is not positive at %s (misclassified a?)",
                    to_string(z).c_str());
      throw NumericalError(buf);
    }
    tail = std::log(-std::expm1(e));
  } else {
    tail = std::log1p(-c * std::exp(-delta * y));
  }
  return ls + dot(h.a.a, z) + tail;
}

double h_eval(const HarmonicFunction& h, const LatticeVector& z) {
  return std::exp(log_h(h, z));
}

double harmonicity_residual(const WalkModel& model, const HarmonicFunction& h,
                            const std::vector<LatticeVector>& window) {
  double worst = 0.0;
  for (const auto& z : window) {
    const double lz = log_h(h, z);
    double s = 0.0;
    for (const auto& [w, p] : transition_row(model, z))
      s += p * std::exp(log_h(h, w) - lz);
    worst = std::max(worst, std::abs(s - 1.0));
  }
  return worst;
}

bool multiplicative_structure_check(const HarmonicFunction& h,
                                    const std::vector<LatticeVector>& samples) {
  const int d = static_cast<int>(h.a.a.size());
  for (const auto& z : samples) {
    LatticeVector z0(d, 0);
    z0[d - 1] = z[d - 1];
    double ax = 0.0;
    for (int k = 0; k + 1 < d; ++k) ax += h.a.a[k] * z[k];
    const double lhs = log_h(h, z);
    const double rhs = ax + log_h(h, z0);
    if (std::abs(std::expm1(lhs - rhs)) > 1e-10) return false;
  }
  return true;
}

bool lambda_consistency(const WalkModel& model, const HarmonicFunction& h) {
  return theta_contains(model, alpha_of(h.a.a));
}

std::vector<LatticeVector> box_window(int dim, int r, int ymax) {
  std::vector<LatticeVector> out;
  LatticeVector z(dim, -r);
  z[dim - 1] = 0;
  while (true) {
    out.push_back(z);
    int k = 0;
    for (; k < dim; ++k) {
      const int top = (k == dim - 1) ? ymax : r;
      const int bottom = (k == dim - 1) ? 0 : -r;
      if (z[k] < top) {
        ++z[k];
        break;
      }
      z[k] = bottom;
    }
    if (k == dim) break;
  }
  return out;
}

}  // namespace halfwalk
