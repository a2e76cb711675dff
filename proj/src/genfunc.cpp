// Copyright 2026 The halfwalk Authors
// SPDX-License-Identifier: Apache-2.0
#include "halfwalk/genfunc.hpp"

#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>

#include "halfwalk/errors.hpp"

namespace halfwalk {

namespace {

double exponent(const DualPoint& a, const LatticeVector& z) {
  double e = 0.0;
  for (int k = 0; k < a.size(); ++k) e += a[k] * z[k];
  if (!(std::abs(e) <= kExponentGuard)) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "exponent a.z = %.6g exceeds the guard",
                  e);
    throw RangeError(buf);
  }
  return e;
}

void check_dim(const WalkModel& model, const DualPoint& a) {
  if (a.size() != model.dim)
    throw DomainError("dual point has the wrong dimension");
  if (!a.allFinite()) throw DomainError("dual point is not finite");
}

// Smallest x in [lo, hi] with pred(x) true, assuming pred is monotone.
double bisect(double lo, double hi, const std::function<bool(double)>& pred) {
  for (int it = 0; it < 400; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (pred(mid))
      hi = mid;
    else
      lo = mid;
  }
  return hi;
}

// Grows a bracket [lo, hi] around `from` until pred(lo) is false and
// pred(hi) is true.
void bracket(double from, const std::function<bool(double)>& pred, double& lo,
             double& hi) {
  double step = 1.0;
  if (pred(from)) {
    hi = from;
    lo = from - step;
    while (pred(lo)) {
      hi = lo;
      step *= 2.0;
      lo = from - step;
      if (step > 1e6) throw NumericalError("bracket growth failed");
    }
  } else {
    lo = from;
    hi = from + step;
    while (!pred(hi)) {
      lo = hi;
      step *= 2.0;
      hi = from + step;
      if (step > 1e6) throw NumericalError("bracket growth failed");
    }
  }
}

double dbeta_at(const WalkModel& model, const Vec& alpha, double beta,
                Which which) {
  return phi_dbeta(model, join(alpha, beta), which);
}

double value_at(const WalkModel& model, const Vec& alpha, double beta,
                Which which) {
  return phi_value(model, join(alpha, beta), which);
}

}  // namespace

DualPoint join(const Vec& alpha, double beta) {
  DualPoint a(alpha.size() + 1);
  a.head(alpha.size()) = alpha;
  a[alpha.size()] = beta;
  return a;
}

const LatticeMeasure& measure(const WalkModel& model, Which which) {
  return which == Which::interior ? model.mu : model.mu0;
}

GenFuncValue phi(const WalkModel& model, const DualPoint& a, Which which) {
  check_dim(model, a);
  const int d = model.dim;
  GenFuncValue out;
  out.value = 0.0;
  out.gradient = Vec::Zero(d);
  out.hessian = Mat::Zero(d, d);
  Vec z(d);
  for (const auto& atom : measure(model, which).atoms) {
    const double w = atom.weight * std::exp(exponent(a, atom.step));
    for (int k = 0; k < d; ++k) z[k] = atom.step[k];
    out.value += w;
    out.gradient += w * z;
    out.hessian.noalias() += w * z * z.transpose();
  }
  return out;
}

double phi_value(const WalkModel& model, const DualPoint& a, Which which) {
  check_dim(model, a);
  double v = 0.0;
  for (const auto& atom : measure(model, which).atoms)
    v += atom.weight * std::exp(exponent(a, atom.step));
  return v;
}

double phi_dbeta(const WalkModel& model, const DualPoint& a, Which which) {
  check_dim(model, a);
  double v = 0.0;
  for (const auto& atom : measure(model, which).atoms) {
    const int y = atom.step.back();
    if (y != 0) v += atom.weight * y * std::exp(exponent(a, atom.step));
  }
  return v;
}

Vec phi_gradient(const WalkModel& model, const DualPoint& a, Which which) {
  check_dim(model, a);
  Vec g = Vec::Zero(model.dim);
  for (const auto& atom : measure(model, which).atoms) {
    const double w = atom.weight * std::exp(exponent(a, atom.step));
    for (int k = 0; k < model.dim; ++k) g[k] += w * atom.step[k];
  }
  return g;
}

double beta_minimizer(const WalkModel& model, const Vec& alpha) {
  if (alpha.size() != model.dim - 1)
    throw DomainError("alpha has the wrong dimension");
  auto increasing = [&](double b) {
    return dbeta_at(model, alpha, b, Which::interior) > 0.0;
  };
  double lo = 0, hi = 0;
  bracket(0.0, increasing, lo, hi);
  return bisect(lo, hi, increasing);
}

double min_phi_over_beta(const WalkModel& model, const Vec& alpha) {
  return value_at(model, alpha, beta_minimizer(model, alpha), Which::interior);
}

double beta_bar(const WalkModel& model, const Vec& alpha) {
  const double bmin = beta_minimizer(model, alpha);
  const double fmin = value_at(model, alpha, bmin, Which::interior);
  if (fmin > 1.0 + kTolRoot) {
    char buf[96];
    std::snprintf(buf, sizeof buf,
                  "no root: inf over beta of phi(alpha, .) is %.17g > 1", fmin);
    throw DomainError(buf);
  }
  if (fmin >= 1.0 - kTolRoot) return bmin;
  // On the left branch phi decreases; find the smallest beta with phi <= 1.
  auto below = [&](double b) {
    return value_at(model, alpha, b, Which::interior) <= 1.0;
  };
  double step = 1.0, lo = bmin - step;
  while (below(lo)) {
    step *= 2.0;
    lo = bmin - step;
    if (step > 1e6) throw NumericalError("bracket growth failed");
  }
  return bisect(lo, bmin, below);
}

double beta_plus(const WalkModel& model, const Vec& alpha) {
  const double bmin = beta_minimizer(model, alpha);
  const double fmin = value_at(model, alpha, bmin, Which::interior);
  if (fmin > 1.0 + kTolRoot) {
    char buf[96];
    std::snprintf(buf, sizeof buf,
                  "no root: inf over beta of phi(alpha, .) is %.17g > 1", fmin);
    throw DomainError(buf);
  }
  if (fmin >= 1.0 - kTolRoot) return bmin;
  auto above = [&](double b) {
    return value_at(model, alpha, b, Which::interior) > 1.0;
  };
  double step = 1.0, hi = bmin + step;
  while (!above(hi)) {
    step *= 2.0;
    hi = bmin + step;
    if (step > 1e6) throw NumericalError("bracket growth failed");
  }
  // Largest beta with phi <= 1.
  double lo = bmin;
  for (int it = 0; it < 400; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (above(mid))
      hi = mid;
    else
      lo = mid;
  }
  return lo;
}

DualPoint bar_a(const WalkModel& model, const DualPoint& a) {
  check_dim(model, a);
  const Vec alpha = alpha_of(a);
  return join(alpha, beta_bar(model, alpha));
}

DualPoint plus_a(const WalkModel& model, const Vec& alpha) {
  return join(alpha, beta_plus(model, alpha));
}

double spectral_radius_argmin(const WalkModel& model, const Vec& alpha) {
  if (alpha.size() != model.dim - 1)
    throw DomainError("alpha has the wrong dimension");
  // Right derivative of beta -> max(phi, phi0) is nondecreasing.
  auto rising = [&](double b) {
    const DualPoint a = join(alpha, b);
    const double f = phi_value(model, a, Which::interior);
    const double f0 = phi_value(model, a, Which::boundary);
    double slope;
    if (f > f0)
      slope = phi_dbeta(model, a, Which::interior);
    else if (f0 > f)
      slope = phi_dbeta(model, a, Which::boundary);
    else
      slope = std::max(phi_dbeta(model, a, Which::interior),
                       phi_dbeta(model, a, Which::boundary));
    return slope > 0.0;
  };
  double lo = 0, hi = 0;
  bracket(0.0, rising, lo, hi);
  return bisect(lo, hi, rising);
}

double spectral_radius_lambda(const WalkModel& model, const Vec& alpha) {
  const double b = spectral_radius_argmin(model, alpha);
  const DualPoint a = join(alpha, b);
  return std::log(std::max(phi_value(model, a, Which::interior),
                           phi_value(model, a, Which::boundary)));
}

bool is_positive_definite(const Mat& m) {
  if (m.rows() != m.cols()) return false;
  Eigen::LLT<Mat> llt(m);
  return llt.info() == Eigen::Success;
}

}  // namespace halfwalk
