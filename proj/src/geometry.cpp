// Copyright 2026 The halfwalk Authors
// SPDX-License-Identifier: Apache-2.0
#include "halfwalk/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <numeric>
#include <random>

#include "halfwalk/errors.hpp"

namespace halfwalk {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Last x in [lo, hi] with pred(x) false, given pred monotone false->true.
double last_false(double lo, double hi,
                  const std::function<bool(double)>& pred) {
  for (int it = 0; it < 400; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (pred(mid))
      hi = mid;
    else
      lo = mid;
  }
  return lo;
}

// log phi with gradient and Hessian.
struct LogPhi {
  double value;
  Vec grad;
  Mat hess;
};

LogPhi log_phi(const WalkModel& model, const DualPoint& a, Which which) {
  const GenFuncValue f = phi(model, a, which);
  LogPhi out;
  out.value = std::log(f.value);
  out.grad = f.gradient / f.value;
  out.hess = f.hessian / f.value -
             (f.gradient * f.gradient.transpose()) / (f.value * f.value);
  return out;
}

double max_phi(const WalkModel& model, const DualPoint& a) {
  return std::max(phi_value(model, a, Which::interior),
                  phi_value(model, a, Which::boundary));
}

double angle_between(const Vec& u, const Vec& v) {
  const double c = u.dot(v) / (u.norm() * v.norm());
  return std::acos(std::clamp(c, -1.0, 1.0));
}

// Barrier problem in x = (alpha, beta, beta'):
//   maximize q.(alpha, beta) s.t. log phi(alpha,beta) <= 0,
//   log phi(alpha,beta') <= 0, log phi0(alpha,beta') <= 0.
class HatProblem {
 public:
  HatProblem(const WalkModel& model, const Vec& q) : model_(model), d_(model.dim) {
    c_ = Vec::Zero(d_ + 1);
    c_.head(d_) = q;
  }

  int n() const { return d_ + 1; }
  const Vec& c() const { return c_; }

  DualPoint point(const Vec& x, bool primed) const {
    DualPoint a(d_);
    a.head(d_ - 1) = x.head(d_ - 1);
    a[d_ - 1] = primed ? x[d_] : x[d_ - 1];
    return a;
  }

  // Constraint i in x coordinates.
  void constraint(int i, const Vec& x, double& g, Vec& grad, Mat& hess) const {
    const bool primed = (i != 0);
    const Which which = (i == 2) ? Which::boundary : Which::interior;
    const LogPhi lp = log_phi(model_, point(x, primed), which);
    g = lp.value;
    grad = Vec::Zero(n());
    hess = Mat::Zero(n(), n());
    std::vector<int> idx(d_);
    for (int k = 0; k < d_ - 1; ++k) idx[k] = k;
    idx[d_ - 1] = primed ? d_ : d_ - 1;
    for (int r = 0; r < d_; ++r) {
      grad[idx[r]] = lp.grad[r];
      for (int s = 0; s < d_; ++s) hess(idx[r], idx[s]) = lp.hess(r, s);
    }
  }

  double constraint_value(int i, const Vec& x) const {
    const bool primed = (i != 0);
    const Which which = (i == 2) ? Which::boundary : Which::interior;
    return std::log(phi_value(model_, point(x, primed), which));
  }

  bool strictly_feasible(const Vec& x) const {
    try {
      for (int i = 0; i < 3; ++i)
        if (!(constraint_value(i, x) < 0.0)) return false;
    } catch (const RangeError&) {
      return false;
    }
    return true;
  }

  double barrier(const Vec& x, double t) const {
    double f = -t * c_.dot(x);
    for (int i = 0; i < 3; ++i) f -= std::log(-constraint_value(i, x));
    return f;
  }

  Vec solve(Vec x, std::vector<double>* slack = nullptr) const {
    if (!strictly_feasible(x))
      throw DomainError("barrier start is not strictly feasible");
    double t = 1.0;
    const int m = 3;
    for (int outer = 0; outer < 60; ++outer) {
      for (int inner = 0; inner < 200; ++inner) {
        Vec grad = -t * c_;
        Mat hess = Mat::Zero(n(), n());
        for (int i = 0; i < m; ++i) {
          double g;
          Vec gi;
          Mat hi;
          constraint(i, x, g, gi, hi);
          grad += gi / (-g);
          hess += gi * gi.transpose() / (g * g) + hi / (-g);
        }
        const Vec dx = -hess.ldlt().solve(grad);
        const double dec2 = -grad.dot(dx);
        if (!(dec2 >= 0.0) || !dx.allFinite()) break;
        if (dec2 < 1e-18) break;
        const double f0 = barrier(x, t);
        double s = 1.0;
        Vec xn;
        bool moved = false;
        for (int ls = 0; ls < 80; ++ls) {
          xn = x + s * dx;
          if (strictly_feasible(xn) && barrier(xn, t) <= f0 - 0.25 * s * dec2) {
            moved = true;
            break;
          }
          s *= 0.5;
        }
        if (!moved) break;
        x = xn;
        if (dec2 < 1e-12) break;
      }
      if (m / t < 1e-11) break;
      t *= 8.0;
    }
    if (slack) {
      slack->resize(3);
      for (int i = 0; i < 3; ++i) (*slack)[i] = -constraint_value(i, x);
    }
    return x;
  }

  // Newton on the KKT system of the active set; returns false when it does
  // not converge to a consistent point.
  bool polish(Vec& x, const std::vector<bool>& active) const {
    std::vector<int> vars;
    for (int k = 0; k < d_ - 1; ++k) vars.push_back(k);
    if (active[0]) vars.push_back(d_ - 1);
    if (active[1] || active[2]) vars.push_back(d_);
    std::vector<int> act;
    for (int i = 0; i < 3; ++i)
      if (active[i]) act.push_back(i);
    const int nv = static_cast<int>(vars.size());
    const int na = static_cast<int>(act.size());
    if (na == 0) return false;
    const int N = nv + na;
    Vec lam = Vec::Ones(na);
    // Initial multipliers from least squares on the stationarity equations.
    {
      Mat J(nv, na);
      for (int j = 0; j < na; ++j) {
        double g;
        Vec gi;
        Mat hi;
        constraint(act[j], x, g, gi, hi);
        for (int r = 0; r < nv; ++r) J(r, j) = gi[vars[r]];
      }
      Vec rhs(nv);
      for (int r = 0; r < nv; ++r) rhs[r] = c_[vars[r]];
      lam = J.colPivHouseholderQr().solve(rhs);
    }
    Vec xw = x;
    double last_norm = std::numeric_limits<double>::infinity();
    for (int it = 0; it < 60; ++it) {
      Vec F = Vec::Zero(N);
      Mat J = Mat::Zero(N, N);
      for (int r = 0; r < nv; ++r) F[r] = c_[vars[r]];
      for (int j = 0; j < na; ++j) {
        double g;
        Vec gi;
        Mat hi;
        try {
          constraint(act[j], xw, g, gi, hi);
        } catch (const RangeError&) {
          return false;
        }
        for (int r = 0; r < nv; ++r) {
          F[r] -= lam[j] * gi[vars[r]];
          for (int s = 0; s < nv; ++s) J(r, s) -= lam[j] * hi(vars[r], vars[s]);
          J(r, nv + j) = -gi[vars[r]];
          J(nv + j, r) = gi[vars[r]];
        }
        F[nv + j] = g;
      }
      const double nf = F.norm();
      if (nf < 1e-15) break;
      if (it > 8 && nf > 0.5 * last_norm && nf < 1e-13) break;
      last_norm = nf;
      const Vec step = J.fullPivLu().solve(-F);
      if (!step.allFinite()) return false;
      for (int r = 0; r < nv; ++r) xw[vars[r]] += step[r];
      for (int j = 0; j < na; ++j) lam[j] += step[nv + j];
      if (it == 59 && nf > 1e-12) return false;
    }
    for (int j = 0; j < na; ++j)
      if (lam[j] < -1e-10) return false;
    for (int i = 0; i < 3; ++i)
      if (!active[i] && constraint_value(i, xw) > 1e-12) return false;
    if ((xw - x).norm() > 1e-3) return false;
    x = xw;
    return true;
  }

 private:
  const WalkModel& model_;
  int d_;
  Vec c_;
};

Vec unit_or_throw(const Vec& q, const char* what) {
  const double n = q.norm();
  if (!(n > 0.0) || !q.allFinite())
    throw DomainError(std::string(what) + " must be a nonzero finite vector");
  return q / n;
}

}  // namespace

const char* to_string(Stratum s) {
  switch (s) {
    case Stratum::plus:
      return "plus";
    case Stratum::minus:
      return "minus";
    case Stratum::zero:
      return "zero";
    case Stratum::interior:
      return "interior";
  }
  return "?";
}

const char* to_string(ConeCase c) {
  switch (c) {
    case ConeCase::both_active:
      return "both_active";
    case ConeCase::phi0_only:
      return "phi0_only";
    case ConeCase::phi_only:
      return "phi_only";
  }
  return "?";
}

bool BoundaryPoint::phi0_active() const {
  return std::abs(phi0_at_bar - 1.0) <= kStratTol;
}

bool BoundaryPoint::phi_active() const {
  return std::abs(phi_a - 1.0) <= kStratTol;
}

Vec BoundaryPoint::boundary_generator() const {
  if (!kappa) throw DomainError("kappa undefined on the zero stratum");
  return grad_phi0_bar + (*kappa) * grad_phi_bar;
}

ConeFit fit_cone(const NormalCone& cone, const Vec& q) {
  const double nq = q.norm();
  const Vec u = q / nq;
  ConeFit best;
  best.residual = std::numeric_limits<double>::infinity();
  auto single = [&](std::size_t k) {
    const Vec& g = cone.generators[k];
    const double c = std::max(0.0, u.dot(g) / g.squaredNorm());
    ConeFit f;
    f.coef.assign(cone.generators.size(), 0.0);
    f.coef[k] = c * nq;
    f.residual = (u - c * g).norm();
    return f;
  };
  for (std::size_t k = 0; k < cone.generators.size(); ++k) {
    ConeFit f = single(k);
    if (f.residual < best.residual) best = f;
  }
  if (cone.generators.size() == 2) {
    Mat A(q.size(), 2);
    A.col(0) = cone.generators[0];
    A.col(1) = cone.generators[1];
    const Vec c = A.colPivHouseholderQr().solve(u);
    if (c[0] >= 0.0 && c[1] >= 0.0) {
      const double r = (u - A * c).norm();
      if (r <= best.residual) {
        best.coef = {c[0] * nq, c[1] * nq};
        best.residual = r;
      }
    }
  }
  if (cone.generators.empty()) {
    best.residual = 1.0;
  }
  return best;
}

Geometry::Geometry(const WalkModel& model) : model_(model) {
  require_accepted(model);
  const int d = model.dim;
  if (d == 2) {
    Vec alpha(1);
    auto infeasible = [&](double x) {
      alpha[0] = x;
      return min_phi_over_beta(model_, alpha) > 1.0;
    };
    double hi = 1.0;
    while (!infeasible(hi)) hi *= 2.0;
    theta_.proj_hi = last_false(0.0, hi, infeasible);
    double lo = -1.0;
    while (!infeasible(lo)) lo *= 2.0;
    theta_.proj_lo = -last_false(0.0, -lo, [&](double x) { return infeasible(-x); });
    // Theta = {psi <= 1}; psi(0) <= 1 always.
    if (psi(theta_.proj_hi) <= 1.0)
      theta_.theta_hi = theta_.proj_hi;
    else
      theta_.theta_hi = last_false(0.0, theta_.proj_hi,
                                   [&](double x) { return psi(x) > 1.0; });
    if (psi(theta_.proj_lo) <= 1.0)
      theta_.theta_lo = theta_.proj_lo;
    else
      theta_.theta_lo = -last_false(0.0, -theta_.proj_lo,
                                    [&](double x) { return psi(-x) > 1.0; });
  }
  // Radial samples of the boundary of D around an interior point.
  if (d <= 3) {
    const DualPoint p = interior_point();
    std::vector<Vec> dirs;
    if (d == 2) {
      const int K = 256;
      for (int k = 0; k < K; ++k) {
        const double th = 2.0 * kPi * k / K;
        Vec u(2);
        u << std::cos(th), std::sin(th);
        dirs.push_back(u);
      }
    } else {
      const int K = 512;
      const double ga = kPi * (3.0 - std::sqrt(5.0));
      for (int k = 0; k < K; ++k) {
        const double z = 1.0 - 2.0 * (k + 0.5) / K;
        const double r = std::sqrt(1.0 - z * z);
        Vec u(3);
        u << r * std::cos(ga * k), r * std::sin(ga * k), z;
        dirs.push_back(u);
      }
    }
    for (const Vec& u : dirs) {
      auto outside = [&](double r) {
        try {
          return phi_value(model_, p + r * u, Which::interior) > 1.0;
        } catch (const RangeError&) {
          return true;
        }
      };
      double hi_r = 1.0;
      while (!outside(hi_r)) hi_r *= 2.0;
      const double r = last_false(0.0, hi_r, outside);
      boundary_samples_.push_back(p + r * u);
    }
  }
}

double Geometry::psi(double alpha) const {
  Vec a(1);
  a[0] = alpha;
  return phi_value(model_, join(a, beta_bar(model_, a)), Which::boundary);
}

const ThetaInterval& Geometry::theta_interval() const {
  if (model_.dim != 2) throw DomainError("theta interval is a d = 2 object");
  return theta_;
}

DualPoint Geometry::interior_point() const {
  const Vec m = model_.report.m, m0 = model_.report.m0;
  Vec u = -(m / m.norm() + m0 / m0.norm());
  u.normalize();
  auto f = [&](double s) {
    try {
      return max_phi(model_, s * u);
    } catch (const RangeError&) {
      return std::numeric_limits<double>::infinity();
    }
  };
  double hi = 1e-3;
  while (f(hi) < 1.0) hi *= 2.0;
  // Golden-section on the convex function s -> max(phi, phi0)(s u).
  double lo = 0.0;
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = hi - g * (hi - lo), x2 = lo + g * (hi - lo);
  double f1 = f(x1), f2 = f(x2);
  for (int it = 0; it < 100; ++it) {
    if (f1 < f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - g * (hi - lo);
      f1 = f(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + g * (hi - lo);
      f2 = f(x2);
    }
  }
  return 0.5 * (lo + hi) * u;
}

Vec Geometry::random_barrier_start(std::uint64_t seed) const {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const DualPoint p = interior_point();
  const int d = model_.dim;
  double scale = std::max(0.05, p.norm());
  for (int attempt = 0; attempt < 10000; ++attempt) {
    Vec u(d);
    for (int k = 0; k < d; ++k) u[k] = gauss(rng);
    const DualPoint a = p + scale * unif(rng) * u / u.norm();
    bool ok = false;
    try {
      ok = max_phi(model_, a) < 1.0 - 1e-9;
    } catch (const RangeError&) {
      ok = false;
    }
    if (!ok) {
      if (attempt % 50 == 49) scale *= 0.7;
      continue;
    }
    const Vec alpha = alpha_of(a);
    const double bp = beta_plus(model_, alpha);
    const double b = beta_of(a) + unif(rng) * 0.9 * (bp - beta_of(a));
    Vec x(d + 1);
    x.head(d - 1) = alpha;
    x[d - 1] = b;
    x[d] = beta_of(a);
    return x;
  }
  throw NumericalError("could not sample a strictly feasible start");
}

BoundaryPoint Geometry::classify(const DualPoint& a) const {
  if (a.size() != model_.dim) throw DomainError("dual point has wrong dimension");
  const int d = model_.dim;
  const GenFuncValue f = phi(model_, a, Which::interior);
  if (f.value > 1.0 + kStratTol) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "point outside D: phi(a) = %.17g", f.value);
    throw DomainError(buf);
  }
  BoundaryPoint bp;
  bp.a = a;
  bp.phi_a = f.value;
  bp.grad_phi = f.gradient;
  bp.on_D_boundary = std::abs(f.value - 1.0) <= kStratTol;
  const double gd = f.gradient[d - 1];
  if (f.value < 1.0 - kStratTol)
    bp.stratum = Stratum::interior;
  else if (std::abs(gd) <= kStratTol)
    bp.stratum = Stratum::zero;
  else
    bp.stratum = gd > 0 ? Stratum::plus : Stratum::minus;
  bp.a_bar = bar_a(model_, a);
  bp.phi0_at_a = phi_value(model_, a, Which::boundary);
  const GenFuncValue f0bar = phi(model_, bp.a_bar, Which::boundary);
  bp.phi0_at_bar = f0bar.value;
  bp.grad_phi0_bar = f0bar.gradient;
  bp.grad_phi_bar = phi_gradient(model_, bp.a_bar, Which::interior);
  const double db = bp.grad_phi_bar[d - 1];
  if (bp.stratum != Stratum::zero && std::abs(db) > kStratTol)
    bp.kappa = -bp.grad_phi0_bar[d - 1] / db;
  return bp;
}

bool Geometry::theta_contains(const Vec& alpha) const {
  return spectral_radius_lambda(model_, alpha) <= kStratTol;
}

NormalCone Geometry::normal_cone(const BoundaryPoint& bp) const {
  const bool phi_act = bp.phi_active();
  const bool phi0_act = bp.phi0_active();
  if (bp.phi0_at_bar > 1.0 + kStratTol)
    throw DomainError("point is outside D-hat (phi0(a_bar) > 1)");
  if (!phi_act && !phi0_act)
    throw DomainError("point is not on the boundary of D-hat");
  NormalCone cone;
  if (!bp.kappa) {
    cone.generators = {bp.grad_phi};
    cone.case_tag = ConeCase::phi_only;
  } else if (phi_act && phi0_act) {
    cone.generators = {bp.grad_phi, bp.boundary_generator()};
    cone.case_tag = ConeCase::both_active;
  } else if (phi0_act) {
    cone.generators = {bp.boundary_generator()};
    cone.case_tag = ConeCase::phi0_only;
  } else {
    cone.generators = {bp.grad_phi};
    cone.case_tag = ConeCase::phi_only;
  }
  return cone;
}

void Geometry::certify(const BoundaryPoint& bp, const Vec& q) const {
  const ConeFit fit = fit_cone(normal_cone(bp), q);
  if (!(fit.residual < kConeTol)) {
    char buf[128];
    std::snprintf(buf, sizeof buf,
                  "a_hat not certified: cone residual %.3g exceeds %.1g",
                  fit.residual, kConeTol);
    throw NumericalError(buf);
  }
}

BoundaryPoint Geometry::a_hat_bisection(const Vec& q) const {
  const double qx = q[0], qy = q[1];
  const double lo = theta_.theta_lo, hi = theta_.theta_hi;
  Vec alpha(1);
  double ahat;
  if (qy <= 0.0) {
    ahat = qx > 0 ? hi : lo;
  } else {
    // Sign of the derivative of alpha qx + qy beta_plus(alpha).
    auto descending = [&](double x) {
      alpha[0] = x;
      const DualPoint a = plus_a(model_, alpha);
      const Vec g = phi_gradient(model_, a, Which::interior);
      return qx * g[1] - qy * g[0] < 0.0;
    };
    if (descending(lo))
      ahat = lo;
    else if (!descending(hi))
      ahat = hi;
    else
      ahat = last_false(lo, hi, descending);
  }
  alpha[0] = ahat;
  return classify(plus_a(model_, alpha));
}

BoundaryPoint Geometry::a_hat_barrier(const Vec& q,
                                      const std::optional<Vec>& start) const {
  const int d = model_.dim;
  HatProblem prob(model_, q);
  Vec x0;
  if (start) {
    x0 = *start;
  } else {
    const DualPoint p = interior_point();
    x0.resize(d + 1);
    x0.head(d) = p;
    x0[d] = p[d - 1];
  }
  std::vector<double> slack;
  Vec x = prob.solve(x0, &slack);
  std::vector<bool> active(3);
  for (int i = 0; i < 3; ++i) active[i] = slack[i] < 1e-6;
  if (q[d - 1] > 0.0) active[0] = true;
  if (active[1] != active[2]) active[1] = active[2] = true;
  Vec xp = x;
  if (prob.polish(xp, active)) x = xp;
  const Vec alpha = x.head(d - 1);
  DualPoint a;
  try {
    a = plus_a(model_, alpha);
  } catch (const DomainError&) {
    a = join(alpha, x[d - 1]);
  }
  return classify(a);
}

BoundaryPoint Geometry::a_hat(const Vec& q, const AHatOptions& opts) const {
  const int d = model_.dim;
  if (q.size() != d) throw DomainError("direction has the wrong dimension");
  unit_or_throw(q, "direction q");
  if (q[d - 1] < 0.0)
    throw DomainError("direction q must have nonnegative last coordinate");
  auto method = opts.method;
  if (method == AHatOptions::Method::automatic)
    method = (d == 2) ? AHatOptions::Method::bisection
                      : AHatOptions::Method::barrier;
  if (method == AHatOptions::Method::bisection && d != 2)
    throw DomainError("bisection a_hat solver is for d = 2");
  BoundaryPoint bp = (method == AHatOptions::Method::bisection)
                         ? a_hat_bisection(q)
                         : a_hat_barrier(q, opts.start);
  certify(bp, q);
  return bp;
}

ConeDecomposition Geometry::gamma_q(const Vec& q) const {
  const int d = model_.dim;
  if (q.size() != d) throw DomainError("direction has the wrong dimension");
  if (!(q[d - 1] > 0.0))
    throw DomainError("gamma_q needs a positive last coordinate");
  ConeDecomposition out;
  out.q = q;
  out.a_hat = a_hat(q);
  const Vec& g = out.a_hat.grad_phi;
  out.active_phi0 = out.a_hat.phi0_at_bar >= 1.0 - kStratTol;
  out.gamma_q = Vec::Zero(d);
  if (!out.active_phi0) {
    NormalCone cone{{g}, ConeCase::phi_only};
    const ConeFit fit = fit_cone(cone, q);
    if (!(fit.residual < kConeTol))
      throw NumericalError("q is not on the ray of grad phi(a_hat)");
    out.c1 = q.dot(g) / g.squaredNorm();
    return out;
  }
  if (!(g[d - 1] > 0.0))
    throw NumericalError(
        "inconsistent stratum: last coordinate of grad phi(a_hat) <= 0");
  out.c1 = q[d - 1] / g[d - 1];
  out.gamma_q = q - out.c1 * g;
  out.gamma_q[d - 1] = 0.0;
  if (out.gamma_q.norm() > 0.0) {
    const Vec g2 = out.a_hat.boundary_generator();
    out.c2 = out.gamma_q.dot(g2) / g2.squaredNorm();
    const double resid = (out.gamma_q - out.c2 * g2).norm() / q.norm();
    if (out.c2 < -kConeTol * q.norm() || resid > kConeTol)
      throw NumericalError("gamma_q is not in the normal cone of a_hat");
    out.c2 = std::max(0.0, out.c2);
  }
  return out;
}

double Geometry::grid_lower_bound(const Vec& v) const {
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& a : boundary_samples_) best = std::max(best, a.dot(v));
  return best;
}

QuasiPotentialResult Geometry::support_D(const Vec& v) const {
  const int d = model_.dim;
  if (v.size() != d) throw DomainError("direction has the wrong dimension");
  QuasiPotentialResult out;
  out.maximizer = Vec::Zero(d);
  const double nv = v.norm();
  if (nv == 0.0) return out;
  const Vec u = v / nv;

  // a(s) = argmin log phi(a) - s u.a; log phi(a(s)) increases with s.
  DualPoint a = Vec::Zero(d);
  auto inner = [&](double s, DualPoint& x) -> bool {
    for (int it = 0; it < 200; ++it) {
      LogPhi lp;
      try {
        lp = log_phi(model_, x, Which::interior);
      } catch (const RangeError&) {
        return false;
      }
      const Vec g = lp.grad - s * u;
      if (g.norm() < 1e-14 * (1.0 + s)) return true;
      const Vec dx = -lp.hess.ldlt().solve(g);
      const double f0 = lp.value - s * u.dot(x);
      const double slope = g.dot(dx);
      double step = 1.0;
      bool moved = false;
      for (int ls = 0; ls < 60; ++ls) {
        const Vec xn = x + step * dx;
        try {
          const double fn =
              std::log(phi_value(model_, xn, Which::interior)) - s * u.dot(xn);
          if (fn <= f0 + 1e-4 * step * slope + 1e-15 * (1.0 + std::abs(f0))) {
            x = xn;
            moved = true;
            break;
          }
        } catch (const RangeError&) {
        }
        step *= 0.5;
      }
      if (!moved) return g.norm() < 1e-10 * (1.0 + s);
      if (x.norm() > 200.0) return false;
    }
    return false;
  };
  auto level = [&](double s, DualPoint& x) {
    if (!inner(s, x)) return std::numeric_limits<double>::infinity();
    return std::log(phi_value(model_, x, Which::interior));
  };

  bool ok = true;
  double s_lo = 0.0, s_hi = 1.0;
  DualPoint a_lo = a;
  if (level(0.0, a_lo) >= 0.0) ok = false;
  DualPoint a_hi = a_lo;
  if (ok) {
    while (true) {
      DualPoint trial = a_hi;
      const double h = level(s_hi, trial);
      if (h >= 0.0) {
        if (std::isfinite(h)) a_hi = trial;
        break;
      }
      s_lo = s_hi;
      a_lo = trial;
      a_hi = trial;
      s_hi *= 2.0;
      if (s_hi > 1e8) {
        ok = false;
        break;
      }
    }
  }
  DualPoint best = a_lo;
  if (ok) {
    // Safeguarded Newton on h(s) = log phi(a(s)), h'(s) = s u^T H^{-1} u.
    double s = s_lo;
    DualPoint x = a_lo;
    for (int it = 0; it < 200; ++it) {
      double h = level(s, x);
      if (!std::isfinite(h)) {
        ok = false;
        break;
      }
      if (h < 0)
        s_lo = s;
      else
        s_hi = s;
      best = x;
      if (std::abs(h) < 1e-15) break;
      const LogPhi lp = log_phi(model_, x, Which::interior);
      const double dh = s * u.dot(lp.hess.ldlt().solve(u));
      double sn = (dh > 0) ? s - h / dh : 0.5 * (s_lo + s_hi);
      if (!(sn > s_lo && sn < s_hi)) sn = 0.5 * (s_lo + s_hi);
      if (s_hi - s_lo < 1e-15 * s_hi) break;
      s = sn;
    }
  }
  if (ok) {
    out.maximizer = best;
    out.value = best.dot(v);
    if (!boundary_samples_.empty() &&
        out.value < grid_lower_bound(v) - 1e-9 * (1.0 + nv))
      ok = false;
  }
  if (!ok) {
    if (d != 2)
      throw NumericalError("support function solver did not converge");
    // Fine radial grid with golden refinement.
    const DualPoint p = interior_point();
    auto radial = [&](double th) {
      Vec w(2);
      w << std::cos(th), std::sin(th);
      double hi_r = 1.0;
      auto outside = [&](double r) {
        try {
          return phi_value(model_, p + r * w, Which::interior) > 1.0;
        } catch (const RangeError&) {
          return true;
        }
      };
      while (!outside(hi_r)) hi_r *= 2.0;
      return DualPoint(p + last_false(0.0, hi_r, outside) * w);
    };
    const int K = 20000;
    int kbest = 0;
    double vbest = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < K; ++k) {
      const double val = radial(2 * kPi * k / K).dot(v);
      if (val > vbest) {
        vbest = val;
        kbest = k;
      }
    }
    double lo = 2 * kPi * (kbest - 1) / K, hi = 2 * kPi * (kbest + 1) / K;
    for (int it = 0; it < 100; ++it) {
      const double m1 = lo + (hi - lo) / 3, m2 = hi - (hi - lo) / 3;
      if (radial(m1).dot(v) < radial(m2).dot(v))
        lo = m1;
      else
        hi = m2;
    }
    out.maximizer = radial(0.5 * (lo + hi));
    out.value = out.maximizer.dot(v);
    out.flagged = true;
  }
  return out;
}

QuasiPotentialResult Geometry::quasi_potential_Iplus(const Vec& q_from,
                                                     const Vec& q_to) const {
  if (q_from.size() != model_.dim || q_to.size() != model_.dim)
    throw DomainError("vectors have the wrong dimension");
  return support_D(q_to - q_from);
}

QuasiPotentialResult Geometry::quasi_potential_I(const Vec& q) const {
  const int d = model_.dim;
  if (q.size() != d) throw DomainError("direction has the wrong dimension");
  QuasiPotentialResult out;
  out.maximizer = Vec::Zero(d);
  if (q.norm() == 0.0) return out;
  if (q[d - 1] < 0.0) throw DomainError("q must lie in the half-space");
  if (q[d - 1] > 0.0) {
    const ConeDecomposition cd = gamma_q(q);
    out.maximizer = cd.a_hat.a;
    out.value = cd.a_hat.a.dot(q);
    double i0 = 0.0;
    if (cd.gamma_q.norm() > 0.0) i0 = a_hat(cd.gamma_q).a.dot(cd.gamma_q);
    const double ip = support_D(q - cd.gamma_q).value;
    out.decomposition = std::make_pair(i0, ip);
  } else {
    const BoundaryPoint bp = a_hat(q);
    out.maximizer = bp.a;
    out.value = bp.a.dot(q);
  }
  return out;
}

IMinResult Geometry::i_min() const {
  const int d = model_.dim;
  auto cost = [&](const Vec& g) {
    return a_hat(g).a.dot(g) + support_D(-g).value;
  };
  IMinResult best;
  best.value = std::numeric_limits<double>::infinity();
  if (d == 2) {
    // The unit sphere of the boundary line is {+e1, -e1}.
    for (double s : {1.0, -1.0}) {
      Vec g(2);
      g << s, 0.0;
      const double c = cost(g);
      if (c < best.value) {
        best.value = c;
        best.gamma = g;
      }
    }
  } else if (d == 3) {
    auto at = [&](double th) {
      Vec g(3);
      g << std::cos(th), std::sin(th), 0.0;
      return g;
    };
    const int K = 360;
    std::vector<double> vals(K);
    int kbest = 0;
    for (int k = 0; k < K; ++k) {
      vals[k] = cost(at(2 * kPi * k / K));
      if (vals[k] < vals[kbest]) kbest = k;
    }
    double lo = 2 * kPi * (kbest - 1) / K, hi = 2 * kPi * (kbest + 1) / K;
    const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
    double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
    double f1 = cost(at(x1)), f2 = cost(at(x2));
    for (int it = 0; it < 60; ++it) {
      if (f1 < f2) {
        hi = x2;
        x2 = x1;
        f2 = f1;
        x1 = hi - gr * (hi - lo);
        f1 = cost(at(x1));
      } else {
        lo = x1;
        x1 = x2;
        f1 = f2;
        x2 = lo + gr * (hi - lo);
        f2 = cost(at(x2));
      }
    }
    best.gamma = at(0.5 * (lo + hi));
    best.value = std::min({cost(best.gamma), vals[kbest]});
    if (vals[kbest] < cost(best.gamma)) best.gamma = at(2 * kPi * kbest / K);
  } else {
    std::mt19937_64 rng(12345);
    std::normal_distribution<double> gauss(0.0, 1.0);
    auto random_dir = [&]() {
      Vec g = Vec::Zero(d);
      for (int k = 0; k + 1 < d; ++k) g[k] = gauss(rng);
      return Vec(g / g.norm());
    };
    for (int k = 0; k < 2000; ++k) {
      const Vec g = random_dir();
      const double c = cost(g);
      if (c < best.value) {
        best.value = c;
        best.gamma = g;
      }
    }
    double step = 0.1;
    while (step > 1e-7) {
      bool improved = false;
      for (int k = 0; k + 1 < d; ++k)
        for (double s : {step, -step}) {
          Vec g = best.gamma;
          g[k] += s;
          g /= g.norm();
          const double c = cost(g);
          if (c < best.value) {
            best.value = c;
            best.gamma = g;
            improved = true;
          }
        }
      if (!improved) step *= 0.5;
    }
  }
  if (!(best.value > 0.0))
    throw NumericalError("I_min is not positive; model or solver inconsistent");
  return best;
}

OptimalPath Geometry::optimal_path(const Vec& q, bool with_times) const {
  const int d = model_.dim;
  if (q.size() != d) throw DomainError("direction has the wrong dimension");
  unit_or_throw(q, "q");
  OptimalPath path;
  path.q = q;
  path.gamma_q = Vec::Zero(d);
  if (!(q[d - 1] > 0.0)) {
    const BoundaryPoint bp = a_hat(q);
    PathSegment seg{Vec::Zero(d), q, true, bp.a.dot(q), std::nullopt};
    if (with_times) {
      const NormalCone cone = normal_cone(bp);
      if (bp.kappa && cone.case_tag != ConeCase::phi_only) {
        const Vec g2 = bp.boundary_generator();
        const double c2 = q.dot(g2) / g2.squaredNorm();
        seg.duration = c2 * (1.0 + *bp.kappa);
      } else {
        seg.duration = q.norm() / bp.grad_phi.norm();
      }
    }
    path.gamma_q = q;
    path.segments.push_back(seg);
    path.total_cost = seg.cost;
    return path;
  }
  const ConeDecomposition cd = gamma_q(q);
  path.gamma_q = cd.gamma_q;
  if (cd.gamma_q.norm() == 0.0) {
    const QuasiPotentialResult ip = support_D(q);
    PathSegment seg{Vec::Zero(d), q, false, cd.a_hat.a.dot(q), std::nullopt};
    if (with_times)
      seg.duration = q.norm() / phi_gradient(model_, ip.maximizer,
                                             Which::interior).norm();
    path.segments.push_back(seg);
  } else {
    const Vec& g = cd.gamma_q;
    PathSegment b{Vec::Zero(d), g, true, a_hat(g).a.dot(g), std::nullopt};
    const QuasiPotentialResult ip = support_D(q - g);
    PathSegment i{g, q, false, ip.value, std::nullopt};
    if (with_times) {
      b.duration = cd.c2 * (1.0 + *cd.a_hat.kappa);
      i.duration = (q - g).norm() /
                   phi_gradient(model_, ip.maximizer, Which::interior).norm();
    }
    path.segments.push_back(b);
    path.segments.push_back(i);
  }
  for (const auto& s : path.segments) path.total_cost += s.cost;
  return path;
}

Atlas Geometry::boundary_atlas(int n_samples) const {
  if (n_samples < 8) throw DomainError("atlas needs at least 8 samples");
  const int d = model_.dim;
  Atlas atlas;
  std::vector<Vec> qs;
  if (d == 2) {
    for (int k = 0; k < n_samples; ++k) {
      const double th = kPi * k / (n_samples - 1);
      Vec q(2);
      q << std::cos(th), std::sin(th);
      if (k == n_samples - 1) q << -1.0, 0.0;
      if (k == 0) q << 1.0, 0.0;
      qs.push_back(q);
    }
  } else {
    const double ga = kPi * (3.0 - std::sqrt(5.0));
    for (int k = 0; k < n_samples; ++k) {
      const double y = 1.0 - (k + 0.5) / n_samples;
      const double r = std::sqrt(std::max(0.0, 1.0 - y * y));
      Vec q = Vec::Zero(d);
      // Spread the horizontal part over the first two coordinates.
      q[0] = r * std::cos(ga * k);
      if (d > 2) q[1] = r * std::sin(ga * k);
      q[d - 1] = y;
      qs.push_back(q / q.norm());
    }
  }
  for (const Vec& q : qs) {
    AtlasRow row;
    row.q = q;
    row.a_hat = a_hat(q);
    row.value = row.a_hat.a.dot(q);
    if (q[d - 1] > 0.0) row.gamma_q = gamma_q(q).gamma_q;
    atlas.rows.push_back(std::move(row));
  }
  // Union-find on a_hat within atlas_tol.
  const std::size_t n = atlas.rows.size();
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  std::function<std::size_t(std::size_t)> find = [&](std::size_t i) {
    return parent[i] == i ? i : parent[i] = find(parent[i]);
  };
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if ((atlas.rows[i].a_hat.a - atlas.rows[j].a_hat.a).norm() <= kAtlasTol)
        parent[find(j)] = find(i);
  std::vector<int> label(n, -1);
  int next = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t r = find(i);
    if (label[r] < 0) label[r] = next++;
    atlas.rows[i].cluster = label[r];
  }
  std::vector<std::vector<std::size_t>> members(next);
  for (std::size_t i = 0; i < n; ++i) members[atlas.rows[i].cluster].push_back(i);
  for (int c = 0; c < next; ++c) {
    if (members[c].size() < 2) continue;
    Fan fan;
    fan.cluster = c;
    fan.rows = members[c];
    fan.a_hat = atlas.rows[members[c].front()].a_hat.a;
    for (std::size_t i : members[c])
      for (std::size_t j : members[c])
        fan.angular_width = std::max(
            fan.angular_width, angle_between(atlas.rows[i].q, atlas.rows[j].q));
    atlas.fans.push_back(std::move(fan));
  }
  return atlas;
}

BoundaryPoint classify(const WalkModel& model, const DualPoint& a) {
  return Geometry(model).classify(a);
}
bool theta_contains(const WalkModel& model, const Vec& alpha) {
  return spectral_radius_lambda(model, alpha) <= kStratTol;
}
NormalCone normal_cone(const WalkModel& model, const BoundaryPoint& bp) {
  return Geometry(model).normal_cone(bp);
}
BoundaryPoint a_hat(const WalkModel& model, const Vec& q) {
  return Geometry(model).a_hat(q);
}
ConeDecomposition gamma_q(const WalkModel& model, const Vec& q) {
  return Geometry(model).gamma_q(q);
}
QuasiPotentialResult quasi_potential_Iplus(const WalkModel& model,
                                           const Vec& q_from, const Vec& q_to) {
  return Geometry(model).quasi_potential_Iplus(q_from, q_to);
}
QuasiPotentialResult quasi_potential_I(const WalkModel& model, const Vec& q) {
  return Geometry(model).quasi_potential_I(q);
}
IMinResult i_min(const WalkModel& model) { return Geometry(model).i_min(); }
OptimalPath optimal_path(const WalkModel& model, const Vec& q, bool with_times) {
  return Geometry(model).optimal_path(q, with_times);
}
Atlas boundary_atlas(const WalkModel& model, int n_samples) {
  return Geometry(model).boundary_atlas(n_samples);
}

}  // namespace halfwalk
