// Copyright 2026 The halfwalk Authors
// SPDX-License-Identifier: Apache-2.0
#include "halfwalk/green.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include "halfwalk/errors.hpp"

namespace halfwalk {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kInf = std::numeric_limits<double>::infinity();

double dot(const Vec& a, const LatticeVector& z) {
  double s = 0.0;
  for (int k = 0; k < a.size(); ++k) s += a[k] * z[k];
  return s;
}

LatticeVector sub(const LatticeVector& a, const LatticeVector& b) {
  LatticeVector c(a.size());
  for (std::size_t k = 0; k < a.size(); ++k) c[k] = a[k] - b[k];
  return c;
}

LatticeVector add(const LatticeVector& a, const LatticeVector& b) {
  LatticeVector c(a.size());
  for (std::size_t k = 0; k < a.size(); ++k) c[k] = a[k] + b[k];
  return c;
}

int y_floor(Kernel kernel) { return kernel == Kernel::killed ? 1 : 0; }

void check_site(const LatticeVector& z, int dim, Kernel kernel,
                const char* what) {
  if (static_cast<int>(z.size()) != dim)
    throw DomainError(std::string(what) + " has the wrong dimension");
  if (z.back() < y_floor(kernel))
    throw DomainError(std::string(what) + " " + to_string(z) +
                      (kernel == Kernel::killed
                           ? " must have positive last coordinate"
                           : " is below the half-space"));
}

// Minimizer of phi over R^d by damped Newton on log phi.
double min_phi(const WalkModel& model) {
  Vec a = Vec::Zero(model.dim);
  for (int it = 0; it < 200; ++it) {
    const GenFuncValue f = phi(model, a, Which::interior);
    const Vec g = f.gradient / f.value;
    if (g.norm() < 1e-14) break;
    const Mat h = f.hessian / f.value - g * g.transpose();
    const Vec dx = -h.ldlt().solve(g);
    double s = 1.0;
    const double l0 = std::log(f.value);
    for (int ls = 0; ls < 60; ++ls) {
      try {
        if (std::log(phi_value(model, a + s * dx, Which::interior)) <=
            l0 + 1e-4 * s * g.dot(dx))
          break;
      } catch (const RangeError&) {
      }
      s *= 0.5;
    }
    a += s * dx;
  }
  return phi_value(model, a, Which::interior);
}

double max_phi(const WalkModel& model, const Vec& a) {
  return std::max(phi_value(model, a, Which::interior),
                  phi_value(model, a, Which::boundary));
}

std::vector<Vec> sphere_directions(int d, int n) {
  std::vector<Vec> out;
  if (d == 2) {
    for (int k = 0; k < n; ++k) {
      Vec u(2);
      u << std::cos(2 * kPi * k / n), std::sin(2 * kPi * k / n);
      out.push_back(u);
    }
    return out;
  }
  // Deterministic quasi-uniform points from a fixed Gaussian stream.
  std::mt19937_64 rng(20260101);
  std::normal_distribution<double> g(0.0, 1.0);
  if (d == 3) {
    const double ga = kPi * (3.0 - std::sqrt(5.0));
    for (int k = 0; k < n; ++k) {
      const double z = 1.0 - 2.0 * (k + 0.5) / n;
      const double r = std::sqrt(1.0 - z * z);
      Vec u(3);
      u << r * std::cos(ga * k), r * std::sin(ga * k), z;
      out.push_back(u);
    }
    return out;
  }
  for (int k = 0; k < n; ++k) {
    Vec u(d);
    for (int i = 0; i < d; ++i) u[i] = g(rng);
    out.push_back(u / u.norm());
  }
  return out;
}

int face_of(const Box& box, const LatticeVector& u) {
  int best = -1;
  int over = 0;
  for (int k = 0; k < box.dim(); ++k) {
    if (u[k] < box.lo[k] && box.lo[k] - u[k] > over) {
      over = box.lo[k] - u[k];
      best = 2 * k;
    }
    if (u[k] > box.hi[k] && u[k] - box.hi[k] > over) {
      over = u[k] - box.hi[k];
      best = 2 * k + 1;
    }
  }
  return best;
}

std::shared_ptr<const GreenBound> bound_for(
    const WalkModel& model, const std::shared_ptr<const GreenBound>& given) {
  if (given) return given;
  Geometry g(model);
  return std::make_shared<const GreenBound>(g);
}

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

const char* to_string(Kernel k) {
  return k == Kernel::reflected ? "reflected" : "killed";
}

const char* to_string(Method m) {
  switch (m) {
    case Method::series:
      return "series";
    case Method::linear_solve:
      return "linear_solve";
    case Method::monte_carlo:
      return "monte_carlo";
  }
  return "?";
}

bool Box::contains(const LatticeVector& z) const {
  for (int k = 0; k < dim(); ++k)
    if (z[k] < lo[k] || z[k] > hi[k]) return false;
  return true;
}

std::size_t Box::volume() const {
  std::size_t v = 1;
  for (int k = 0; k < dim(); ++k) v *= static_cast<std::size_t>(hi[k] - lo[k] + 1);
  return v;
}

std::string Box::str() const {
  std::ostringstream os;
  for (int k = 0; k < dim(); ++k)
    os << (k ? "x" : "") << "[" << lo[k] << "," << hi[k] << "]";
  return os.str();
}

Box bounding_box(const std::vector<LatticeVector>& sites, int margin) {
  if (sites.empty()) throw DomainError("bounding box of no sites");
  Box b{sites.front(), sites.front()};
  for (const auto& z : sites)
    for (int k = 0; k < b.dim(); ++k) {
      b.lo[k] = std::min(b.lo[k], z[k]);
      b.hi[k] = std::max(b.hi[k], z[k]);
    }
  for (int k = 0; k < b.dim(); ++k) {
    b.lo[k] -= margin;
    b.hi[k] += margin;
  }
  return b;
}

// ---------------------------------------------------------------------------

GreenBound::GreenBound(const Geometry& geometry) : dim_(geometry.model().dim) {
  const WalkModel& model = geometry.model();
  const double mphi = min_phi(model);
  if (!(mphi < 1.0)) throw NumericalError("inf of phi is not below 1");
  gs00_ = 1.0 / (1.0 - mphi);

  const int nd = dim_ == 2 ? 48 : (dim_ == 3 ? 120 : 200);
  std::vector<Vec> support;
  for (const Vec& u : sphere_directions(dim_, nd))
    support.push_back(geometry.support_D(u).maximizer);
  d_pts_.push_back(Vec::Zero(dim_));
  for (double s : {1.0, 0.9, 0.7, 0.4})
    for (const Vec& a : support) d_pts_.push_back(s * a);

  // Rays from 0 stay in D; cut them where phi0 reaches 1.
  for (const Vec& a : d_pts_) {
    double lo = 0.0, hi = 1.0;
    auto in_d0 = [&](double s) {
      try {
        return phi_value(model, s * a, Which::boundary) <= 1.0;
      } catch (const RangeError&) {
        return false;
      }
    };
    if (!in_d0(hi)) {
      for (int it = 0; it < 60; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (in_d0(mid))
          lo = mid;
        else
          hi = mid;
      }
      hi = lo;
    }
    dd0_pts_.push_back(hi * a);
  }

  double rho = max_phi(model, geometry.interior_point());
  for (const Vec& b : dd0_pts_) rho = std::min(rho, max_phi(model, 0.5 * b));
  if (!(rho < 1.0)) throw NumericalError("no tilt with max(phi, phi0) < 1");
  gdiag_ = 1.0 / (1.0 - rho);

  for (const Vec& a : d_pts_) {
    if (phi_value(model, a, Which::interior) > 1.0) continue;
    Tilt t;
    t.a = a;
    try {
      t.a_bar = bar_a(model, a);
    } catch (const DomainError&) {
      continue;
    }
    t.phi0_a = phi_value(model, a, Which::boundary);
    t.phi0_bar = phi_value(model, t.a_bar, Which::boundary);
    if (t.phi0_bar < 1.0 - 1e-9) cor_.push_back(t);
  }
}

double GreenBound::upper(Kernel kernel, const LatticeVector& u,
                         const LatticeVector& target) const {
  const LatticeVector v = sub(u, target);
  if (kernel == Kernel::killed) {
    if (u.back() <= 0) return 0.0;
    double e = kInf;
    for (const Vec& a : d_pts_) e = std::min(e, dot(a, v));
    return gs00_ * std::exp(e);
  }
  double e = kInf;
  for (const Vec& b : dd0_pts_) e = std::min(e, dot(b, v));
  double best = gdiag_ * std::exp(e);
  if (target.back() >= 1) {
    for (const Tilt& t : cor_) {
      const double x = std::exp(dot(t.a, v)) +
                       t.phi0_a / (1.0 - t.phi0_bar) *
                           std::exp(dot(t.a_bar, u) - dot(t.a, target));
      best = std::min(best, gs00_ * x);
    }
  }
  return best;
}

double GreenBound::upper_boundary_sum(const LatticeVector& u,
                                      const LatticeVector& target) const {
  double best = kInf;
  for (const Tilt& t : cor_)
    best = std::min(best, gs00_ * t.phi0_a / (1.0 - t.phi0_bar) *
                              std::exp(dot(t.a_bar, u) - dot(t.a, target)));
  return best;
}

// ---------------------------------------------------------------------------

std::size_t BoxSystem::band_entries(const WalkModel& model, const Box& box) {
  const int d = box.dim();
  int slow = 0;
  for (int k = 1; k < d; ++k)
    if (box.hi[k] - box.lo[k] > box.hi[slow] - box.lo[slow]) slow = k;
  std::size_t stride = 1;
  for (int k = 0; k < d; ++k)
    if (k != slow) stride *= static_cast<std::size_t>(box.hi[k] - box.lo[k] + 1);
  int reach = 0;
  for (const auto* m : {&model.mu, &model.mu0})
    for (const auto& atom : m->atoms) reach = std::max(reach, std::abs(atom.step[slow]));
  const std::size_t bw = stride * static_cast<std::size_t>(reach + 1);
  return box.volume() * (2 * bw + 1);
}

BoxSystem::BoxSystem(const WalkModel& model, Kernel kernel, const Box& box,
                     std::size_t max_entries)
    : box_(box), kernel_(kernel) {
  const int d = model.dim;
  if (box.dim() != d) throw DomainError("box has the wrong dimension");
  for (int k = 0; k < d; ++k)
    if (box.hi[k] < box.lo[k]) throw DomainError("empty box");
  if (box.lo[d - 1] < y_floor(kernel))
    throw DomainError(kernel == Kernel::killed
                          ? "killed-walk box must start at y = 1"
                          : "box extends below the half-space");
  if (band_entries(model, box) > max_entries)
    throw CapacityError("box " + box.str() + " exceeds the solver memory cap");
  n_ = box.volume();
  int slow = 0;
  for (int k = 1; k < d; ++k)
    if (box.hi[k] - box.lo[k] > box.hi[slow] - box.lo[slow]) slow = k;
  for (int k = 0; k < d; ++k)
    if (k != slow) order_.push_back(k);
  order_.push_back(slow);
  stride_.assign(d, 0);
  std::size_t s = 1;
  for (int k : order_) {
    stride_[k] = s;
    s *= static_cast<std::size_t>(box.hi[k] - box.lo[k] + 1);
  }
  std::size_t bw = 0;
  for (const auto* m : {&model.mu, &model.mu0})
    for (const auto& atom : m->atoms) {
      long long off = 0;
      for (int k = 0; k < d; ++k)
        off += static_cast<long long>(atom.step[k]) *
               static_cast<long long>(stride_[k]);
      bw = std::max<std::size_t>(bw, static_cast<std::size_t>(std::llabs(off)));
    }
  matrix_ = std::make_unique<BandedMMatrix>(n_, bw);
  LatticeVector z = box.lo;
  LatticeVector u(d);
  for (std::size_t i = 0; i < n_; ++i) {
    const bool on_boundary = z[d - 1] == 0;
    const LatticeMeasure& m =
        (kernel == Kernel::reflected && on_boundary) ? model.mu0 : model.mu;
    for (const auto& atom : m.atoms) {
      for (int k = 0; k < d; ++k) u[k] = z[k] + atom.step[k];
      if (kernel == Kernel::killed && u[d - 1] <= 0) {
        matrix_->add_deficit(i, atom.weight);
      } else if (box.contains(u)) {
        matrix_->add_transition(i, index(u), atom.weight);
      } else {
        matrix_->add_deficit(i, atom.weight);
        exits_.push_back({i, u, atom.weight});
      }
    }
    for (int k : order_) {
      if (z[k] < box.hi[k]) {
        ++z[k];
        break;
      }
      z[k] = box.lo[k];
    }
  }
  matrix_->factor();
}

std::size_t BoxSystem::index(const LatticeVector& z) const {
  if (!box_.contains(z)) throw DomainError("site " + to_string(z) + " outside box");
  std::size_t i = 0;
  for (int k = 0; k < box_.dim(); ++k)
    i += static_cast<std::size_t>(z[k] - box_.lo[k]) * stride_[k];
  return i;
}

LatticeVector BoxSystem::site(std::size_t i) const {
  LatticeVector z(box_.dim());
  for (int k : order_) {
    const std::size_t ext = static_cast<std::size_t>(box_.hi[k] - box_.lo[k] + 1);
    z[k] = box_.lo[k] + static_cast<int>((i / stride_[k]) % ext);
  }
  return z;
}

std::vector<double> BoxSystem::row(const LatticeVector& z) const {
  std::vector<double> b(n_, 0.0);
  b[index(z)] = 1.0;
  matrix_->solve_transpose(b);
  return b;
}

std::vector<double> BoxSystem::column(const LatticeVector& zp) const {
  std::vector<double> b(n_, 0.0);
  b[index(zp)] = 1.0;
  matrix_->solve(b);
  return b;
}

std::vector<double> BoxSystem::apply_inverse(std::vector<double> rhs) const {
  matrix_->solve(rhs);
  return rhs;
}

// ---------------------------------------------------------------------------

GreenField::GreenField(std::shared_ptr<const BoxSystem> system,
                       std::shared_ptr<const GreenBound> bound,
                       LatticeVector source, bool box_killed)
    : system_(std::move(system)),
      bound_(std::move(bound)),
      source_(std::move(source)),
      box_killed_(box_killed) {
  g_ = system_->row(source_);
}

double GreenField::value(const LatticeVector& site) const {
  if (!box().contains(site)) return 0.0;
  return g_[system_->index(site)];
}

std::vector<double> GreenField::face_errors(const LatticeVector& site) const {
  std::vector<double> f(2 * box().dim(), 0.0);
  if (box_killed_) return f;
  const Kernel k = system_->kernel();
  for (const auto& e : system_->exits()) {
    const double x = g_[e.from];
    if (x == 0.0) continue;
    f[face_of(box(), e.to)] += x * e.p * bound_->upper(k, e.to, site);
  }
  return f;
}

GreenEstimate GreenField::estimate(const LatticeVector& site) const {
  GreenEstimate est;
  est.source = source_;
  est.target = site;
  est.kernel = system_->kernel();
  est.method = Method::linear_solve;
  est.value = value(site);
  if (!box().contains(site)) {
    est.error = box_killed_ ? 0.0 : bound_->upper(est.kernel, source_, site);
    est.flagged = true;
    est.note = "target outside box";
    return est;
  }
  if (box_killed_) {
    est.error = 1e-13 * est.value;
    est.note = "box-killed";
  } else {
    const auto f = face_errors(site);
    est.error = std::accumulate(f.begin(), f.end(), 0.0);
  }
  if (!note_.empty()) {
    est.flagged = true;
    est.note = note_;
  }
  return est;
}

GreenColumn::GreenColumn(std::shared_ptr<const BoxSystem> system,
                         std::shared_ptr<const GreenBound> bound,
                         LatticeVector target, bool box_killed)
    : system_(std::move(system)),
      target_(std::move(target)),
      box_killed_(box_killed) {
  g_ = system_->column(target_);
  const int nf = 2 * box().dim();
  face_err_.assign(nf, {});
  if (box_killed_) return;
  std::vector<std::vector<double>> rhs(nf, std::vector<double>(system_->size(), 0.0));
  std::vector<bool> used(nf, false);
  for (const auto& e : system_->exits()) {
    const int f = face_of(box(), e.to);
    rhs[f][e.from] += e.p * bound->upper(system_->kernel(), e.to, target_);
    used[f] = true;
  }
  for (int f = 0; f < nf; ++f)
    face_err_[f] = used[f] ? system_->apply_inverse(std::move(rhs[f]))
                           : std::vector<double>(system_->size(), 0.0);
}

double GreenColumn::value(const LatticeVector& site) const {
  if (!box().contains(site)) return 0.0;
  return g_[system_->index(site)];
}

std::vector<double> GreenColumn::face_errors(const LatticeVector& site) const {
  std::vector<double> f(face_err_.size(), 0.0);
  if (box_killed_) return f;
  const std::size_t i = system_->index(site);
  for (std::size_t k = 0; k < f.size(); ++k) f[k] = face_err_[k][i];
  return f;
}

double GreenColumn::error(const LatticeVector& site) const {
  if (box_killed_) return 1e-13 * value(site);
  const auto f = face_errors(site);
  return std::accumulate(f.begin(), f.end(), 0.0);
}

GreenEstimate GreenColumn::estimate(const LatticeVector& site) const {
  GreenEstimate est;
  est.source = site;
  est.target = target_;
  est.kernel = system_->kernel();
  est.method = Method::linear_solve;
  if (!box().contains(site))
    throw DomainError("source " + to_string(site) + " outside the solved box");
  est.value = value(site);
  est.error = error(site);
  if (box_killed_) est.note = "box-killed";
  if (!note_.empty()) {
    est.flagged = true;
    est.note = note_;
  }
  return est;
}

namespace {

Box initial_box(const std::vector<LatticeVector>& sites, Kernel kernel,
                const LinearSolveOptions& opts) {
  Box b = opts.box ? *opts.box : bounding_box(sites, opts.margin);
  const int d = b.dim();
  b.lo[d - 1] = std::max(b.lo[d - 1], y_floor(kernel));
  for (const auto& z : sites)
    if (!b.contains(z))
      throw DomainError("site " + to_string(z) + " outside box " + b.str());
  return b;
}

// Grows the faces whose error share is large; false when the cap is hit.
bool grow(const WalkModel& model, Box& box, Kernel kernel,
          const std::vector<double>& face_share, const LinearSolveOptions& opts) {
  const int d = box.dim();
  const double top = *std::max_element(face_share.begin(), face_share.end());
  auto grown = [&](double threshold) {
    Box b = box;
    for (int k = 0; k < d; ++k) {
      const int ext = box.hi[k] - box.lo[k] + 1;
      const int step = std::max(opts.margin / 2 + 2, ext / 4);
      if (face_share[2 * k] >= threshold &&
          !(k == d - 1 && b.lo[k] <= y_floor(kernel)))
        b.lo[k] -= step;
      if (face_share[2 * k + 1] >= threshold) b.hi[k] += step;
      if (k == d - 1) b.lo[k] = std::max(b.lo[k], y_floor(kernel));
    }
    return b;
  };
  for (double frac : {0.05, 1.0}) {
    const Box b = grown(top * frac);
    if (b.volume() == box.volume()) continue;
    if (BoxSystem::band_entries(model, b) <= opts.max_entries) {
      box = b;
      return true;
    }
  }
  return false;
}

}  // namespace

GreenField solve_row(const WalkModel& model, const LatticeVector& z,
                     const std::vector<LatticeVector>& targets, Kernel kernel,
                     const LinearSolveOptions& opts) {
  require_accepted(model);
  const int d = model.dim;
  check_site(z, d, kernel, "source");
  for (const auto& t : targets) check_site(t, d, kernel, "target");
  auto bound = bound_for(model, opts.bound);
  std::vector<LatticeVector> sites = targets;
  sites.push_back(z);
  Box box = initial_box(sites, kernel, opts);
  for (int it = 0;; ++it) {
    auto sys = std::make_shared<const BoxSystem>(model, kernel, box, opts.max_entries);
    GreenField field(sys, bound, z, opts.box_killed);
    if (opts.box_killed || !opts.adaptive) return field;
    std::vector<double> share(2 * d, 0.0);
    bool done = true;
    for (const auto& t : targets) {
      const double v = field.value(t);
      const auto f = field.face_errors(t);
      const double err = std::accumulate(f.begin(), f.end(), 0.0);
      if (err <= opts.rel_tol * v) continue;
      done = false;
      for (int k = 0; k < 2 * d; ++k)
        share[k] = std::max(share[k], v > 0 ? f[k] / v : kInf);
    }
    if (done) return field;
    if (it >= 60 || !grow(model, box, kernel, share, opts)) {
      field.flag("truncation above tolerance at the memory cap");
      return field;
    }
  }
}

GreenColumn solve_column(const WalkModel& model,
                         const std::vector<LatticeVector>& sources,
                         const LatticeVector& target, Kernel kernel,
                         const LinearSolveOptions& opts) {
  require_accepted(model);
  const int d = model.dim;
  check_site(target, d, kernel, "target");
  for (const auto& s : sources) check_site(s, d, kernel, "source");
  auto bound = bound_for(model, opts.bound);
  std::vector<LatticeVector> sites = sources;
  sites.push_back(target);
  Box box = initial_box(sites, kernel, opts);
  for (int it = 0;; ++it) {
    auto sys = std::make_shared<const BoxSystem>(model, kernel, box, opts.max_entries);
    GreenColumn col(sys, bound, target, opts.box_killed);
    if (opts.box_killed || !opts.adaptive) return col;
    std::vector<double> share(2 * d, 0.0);
    bool done = true;
    for (const auto& s : sources) {
      const double v = col.value(s);
      const auto f = col.face_errors(s);
      const double err = std::accumulate(f.begin(), f.end(), 0.0);
      if (err <= opts.rel_tol * v) continue;
      done = false;
      for (int k = 0; k < 2 * d; ++k)
        share[k] = std::max(share[k], v > 0 ? f[k] / v : kInf);
    }
    if (done) return col;
    if (it >= 60 || !grow(model, box, kernel, share, opts)) {
      col.flag("truncation above tolerance at the memory cap");
      return col;
    }
  }
}

std::vector<GreenEstimate> green_linear_solve(
    const WalkModel& model, const LatticeVector& z,
    const std::vector<LatticeVector>& targets, Kernel kernel,
    const LinearSolveOptions& opts) {
  const GreenField field = solve_row(model, z, targets, kernel, opts);
  std::vector<GreenEstimate> out;
  for (const auto& t : targets) out.push_back(field.estimate(t));
  return out;
}

// ---------------------------------------------------------------------------

namespace {

struct Grid {
  LatticeVector lo, hi;
  std::vector<std::size_t> stride;
  std::vector<double> m;

  void reset(const LatticeVector& l, const LatticeVector& h) {
    lo = l;
    hi = h;
    stride.assign(lo.size(), 0);
    std::size_t s = 1;
    for (std::size_t k = 0; k < lo.size(); ++k) {
      stride[k] = s;
      s *= static_cast<std::size_t>(hi[k] - lo[k] + 1);
    }
    m.assign(s, 0.0);
  }
  bool contains(const LatticeVector& z) const {
    for (std::size_t k = 0; k < lo.size(); ++k)
      if (z[k] < lo[k] || z[k] > hi[k]) return false;
    return true;
  }
  std::size_t index(const LatticeVector& z) const {
    std::size_t i = 0;
    for (std::size_t k = 0; k < lo.size(); ++k)
      i += static_cast<std::size_t>(z[k] - lo[k]) * stride[k];
    return i;
  }
  // Advances z through the grid in index order.
  bool next(LatticeVector& z) const {
    for (std::size_t k = 0; k < lo.size(); ++k) {
      if (z[k] < hi[k]) {
        ++z[k];
        return true;
      }
      z[k] = lo[k];
    }
    return false;
  }
};

}  // namespace

std::vector<GreenEstimate> green_series(const WalkModel& model,
                                        const LatticeVector& z,
                                        const std::vector<LatticeVector>& targets,
                                        int horizon, Kernel kernel,
                                        const SeriesOptions& opts) {
  require_accepted(model);
  const int d = model.dim;
  if (horizon < 0) throw DomainError("horizon must be nonnegative");
  check_site(z, d, kernel, "source");
  for (const auto& t : targets) check_site(t, d, kernel, "target");
  if (opts.box && !opts.box->contains(z))
    throw DomainError("source outside the series box");
  auto bound = bound_for(model, opts.bound);

  LatticeVector smin(d, 0), smax(d, 0);
  for (const auto* m : {&model.mu, &model.mu0})
    for (const auto& a : m->atoms)
      for (int k = 0; k < d; ++k) {
        smin[k] = std::min(smin[k], a.step[k]);
        smax[k] = std::max(smax[k], a.step[k]);
      }

  std::vector<double> value(targets.size(), 0.0);
  Grid cur;
  cur.reset(z, z);
  cur.m[0] = 1.0;
  for (std::size_t i = 0; i < targets.size(); ++i)
    if (targets[i] == z) value[i] += 1.0;
  LatticeVector nz_lo = z, nz_hi = z;
  double pruned = 0.0;
  LatticeVector u(d);
  for (int t = 1; t <= horizon; ++t) {
    LatticeVector lo(d), hi(d);
    for (int k = 0; k < d; ++k) {
      lo[k] = nz_lo[k] + smin[k];
      hi[k] = nz_hi[k] + smax[k];
    }
    lo[d - 1] = std::max(lo[d - 1], y_floor(kernel));
    if (opts.box)
      for (int k = 0; k < d; ++k) {
        lo[k] = std::max(lo[k], opts.box->lo[k]);
        hi[k] = std::min(hi[k], opts.box->hi[k]);
      }
    bool empty = false;
    for (int k = 0; k < d; ++k) empty = empty || hi[k] < lo[k];
    if (empty) {
      cur.m.assign(cur.m.size(), 0.0);
      break;
    }
    Grid nxt;
    nxt.reset(lo, hi);
    if (nxt.m.size() > opts.max_sites)
      throw CapacityError("series grid exceeds the memory cap");
    LatticeVector w = cur.lo;
    std::size_t i = 0;
    do {
      const double mass = cur.m[i++];
      if (mass == 0.0) continue;
      const LatticeMeasure& m =
          (kernel == Kernel::reflected && w[d - 1] == 0) ? model.mu0 : model.mu;
      for (const auto& a : m.atoms) {
        for (int k = 0; k < d; ++k) u[k] = w[k] + a.step[k];
        if (!nxt.contains(u)) continue;  // killed or outside the box
        nxt.m[nxt.index(u)] += mass * a.weight;
      }
    } while (cur.next(w));
    nz_lo = hi;
    nz_hi = lo;
    bool any = false;
    w = nxt.lo;
    i = 0;
    do {
      double& mass = nxt.m[i++];
      if (mass == 0.0) continue;
      if (mass < opts.prune) {
        pruned += mass;
        mass = 0.0;
        continue;
      }
      any = true;
      for (int k = 0; k < d; ++k) {
        nz_lo[k] = std::min(nz_lo[k], w[k]);
        nz_hi[k] = std::max(nz_hi[k], w[k]);
      }
    } while (nxt.next(w));
    for (std::size_t j = 0; j < targets.size(); ++j)
      if (nxt.contains(targets[j])) value[j] += nxt.m[nxt.index(targets[j])];
    cur = std::move(nxt);
    if (!any) {
      cur.m.assign(cur.m.size(), 0.0);
      break;
    }
  }
  // Remaining mass and pruned mass, each weighted by an upper bound on the
  // Green function from where it sits. Tilt 0 bounds every entry.
  const double cap = kernel == Kernel::killed ? bound->gs00() : bound->gdiag();
  std::vector<GreenEstimate> out;
  for (std::size_t j = 0; j < targets.size(); ++j) {
    GreenEstimate est;
    est.source = z;
    est.target = targets[j];
    est.kernel = kernel;
    est.method = Method::series;
    est.value = value[j];
    double tail = pruned * cap;
    LatticeVector w = cur.lo;
    std::size_t i = 0;
    do {
      const double mass = cur.m[i++];
      if (mass > 0.0) tail += mass * bound->upper(kernel, w, targets[j]);
    } while (cur.next(w));
    est.error = tail;
    if (opts.box) est.note = "box-killed";
    out.push_back(est);
  }
  return out;
}

GreenEstimate green_series(const WalkModel& model, const LatticeVector& z,
                           const LatticeVector& target, int horizon,
                           Kernel kernel, const SeriesOptions& opts) {
  return green_series(model, z, std::vector<LatticeVector>{target}, horizon,
                      kernel, opts)
      .front();
}

// ---------------------------------------------------------------------------

int default_threads() {
  if (const char* env = std::getenv("HALFWALK_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  const unsigned hc = std::thread::hardware_concurrency();
  return hc > 0 ? static_cast<int>(hc) : 1;
}

namespace {

constexpr std::uint64_t kChunk = 4096;

struct StepTable {
  std::vector<double> cdf;
  std::vector<LatticeVector> step;
};

StepTable table(const LatticeMeasure& m) {
  StepTable t;
  double c = 0.0;
  for (const auto& a : m.atoms) {
    c += a.weight;
    t.cdf.push_back(c);
    t.step.push_back(a.step);
  }
  t.cdf.back() = 1.0;
  return t;
}

struct ChunkResult {
  std::vector<std::uint64_t> sum;
  std::vector<std::uint64_t> sumsq;
  std::uint64_t capped = 0;
  std::uint64_t visit_cap_hits = 0;
  std::vector<LatticeVector> capped_ends;
};

}  // namespace

std::vector<GreenEstimate> green_monte_carlo(
    const WalkModel& model, const LatticeVector& z,
    const std::vector<LatticeVector>& targets, Kernel kernel,
    const MonteCarloOptions& opts) {
  require_accepted(model);
  const int d = model.dim;
  if (opts.n_paths < 100) throw DomainError("Monte Carlo needs n_paths >= 100");
  if (opts.path_cap == 0) throw DomainError("path_cap must be positive");
  check_site(z, d, kernel, "source");
  for (const auto& t : targets) check_site(t, d, kernel, "target");
  if (opts.box && !opts.box->contains(z))
    throw DomainError("source outside the Monte Carlo box");
  const std::size_t nt = targets.size();

  const StepTable mu = table(model.mu), mu0 = table(model.mu0);
  int max_l1 = 0;
  for (const auto* m : {&model.mu, &model.mu0})
    for (const auto& a : m->atoms) {
      int l1 = 0;
      for (int k = 0; k < d; ++k) l1 += std::abs(a.step[k]);
      max_l1 = std::max(max_l1, l1);
    }
  std::vector<bool> reachable(nt, true);
  for (std::size_t j = 0; j < nt; ++j) {
    double l1 = 0.0;
    for (int k = 0; k < d; ++k) l1 += std::abs(targets[j][k] - z[k]);
    reachable[j] = l1 <= static_cast<double>(opts.path_cap) * max_l1;
  }
  Box tbox = bounding_box(targets.empty() ? std::vector<LatticeVector>{z} : targets, 0);
  const std::shared_ptr<const GreenBound> bound = bound_for(model, opts.bound);
  auto escaped = [&](const LatticeVector& w) {
    double rest = 0.0;
    for (const auto& t : targets) {
      rest += bound->upper(kernel, w, t);
      if (rest >= opts.escape_tol) return false;
    }
    return true;
  };

  const std::uint64_t n_chunks = (opts.n_paths + kChunk - 1) / kChunk;
  std::vector<ChunkResult> results(n_chunks);
  auto run_chunk = [&](std::uint64_t c) {
    ChunkResult& res = results[c];
    res.sum.assign(nt, 0);
    res.sumsq.assign(nt, 0);
    std::uint64_t state = opts.seed ^ (0xD1B54A32D192ED03ULL * (c + 1));
    std::mt19937_64 rng(splitmix64(state));
    const std::uint64_t first = c * kChunk;
    const std::uint64_t last = std::min(opts.n_paths, first + kChunk);
    std::vector<std::uint64_t> visits(nt);
    LatticeVector w(d);
    for (std::uint64_t p = first; p < last; ++p) {
      std::fill(visits.begin(), visits.end(), 0);
      w = z;
      std::uint64_t steps = 0;
      bool alive = true;
      while (true) {
        if (tbox.contains(w))
          for (std::size_t j = 0; j < nt; ++j)
            if (w == targets[j] && visits[j] < kVisitCap) {
              if (++visits[j] == kVisitCap) ++res.visit_cap_hits;
            }
        if (steps == opts.path_cap) break;
        const StepTable& t =
            (kernel == Kernel::reflected && w[d - 1] == 0) ? mu0 : mu;
        const double x = static_cast<double>(rng() >> 11) * 0x1p-53;
        const std::size_t a = static_cast<std::size_t>(
            std::upper_bound(t.cdf.begin(), t.cdf.end(), x) - t.cdf.begin());
        const LatticeVector& s = t.step[std::min(a, t.step.size() - 1)];
        for (int k = 0; k < d; ++k) w[k] += s[k];
        ++steps;
        if ((kernel == Kernel::killed && w[d - 1] <= 0) ||
            (opts.box && !opts.box->contains(w))) {
          alive = false;
          break;
        }
        if (steps % 64 == 0 && !tbox.contains(w) && escaped(w)) {
          alive = false;
          break;
        }
      }
      if (alive) {
        ++res.capped;
        if (c == 0) res.capped_ends.push_back(w);
      }
      for (std::size_t j = 0; j < nt; ++j) {
        res.sum[j] += visits[j];
        res.sumsq[j] += visits[j] * visits[j];
      }
    }
  };
  const int threads =
      std::max(1, std::min<int>(opts.threads > 0 ? opts.threads : default_threads(),
                                static_cast<int>(n_chunks)));
  if (threads == 1) {
    for (std::uint64_t c = 0; c < n_chunks; ++c) run_chunk(c);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t)
      pool.emplace_back([&, t] {
        for (std::uint64_t c = t; c < n_chunks; c += threads) run_chunk(c);
      });
    for (auto& th : pool) th.join();
  }

  std::vector<std::uint64_t> sum(nt, 0), sumsq(nt, 0);
  std::uint64_t capped = 0, cap_hits = 0;
  for (const auto& r : results) {
    for (std::size_t j = 0; j < nt; ++j) {
      sum[j] += r.sum[j];
      sumsq[j] += r.sumsq[j];
    }
    capped += r.capped;
    cap_hits += r.visit_cap_hits;
  }
  const std::uint64_t chunk0 = std::min(opts.n_paths, kChunk);
  const double n = static_cast<double>(opts.n_paths);
  std::vector<GreenEstimate> out;
  for (std::size_t j = 0; j < nt; ++j) {
    GreenEstimate est;
    est.source = z;
    est.target = targets[j];
    est.kernel = kernel;
    est.method = Method::monte_carlo;
    est.samples = opts.n_paths;
    if (!reachable[j]) {
      est.flagged = true;
      est.note = "structural zero: unreachable within path_cap";
      out.push_back(est);
      continue;
    }
    const double s = static_cast<double>(sum[j]);
    const double ss = static_cast<double>(sumsq[j]);
    est.value = s / n;
    const double var = std::max(0.0, (ss - s * s / n) / (n - 1.0));
    est.error = 1.96 * std::sqrt(var / n) + opts.escape_tol;
    std::string note;
    if (capped > 0) {
      // Expected visits after the cap, estimated on the first chunk.
      double bias = 0.0;
      for (const auto& e : results[0].capped_ends)
        bias += bound->upper(kernel, e, targets[j]);
      bias /= static_cast<double>(chunk0);
      char buf[96];
      std::snprintf(buf, sizeof buf, "path_cap reached by %llu paths; bias <~ %.3g",
                    static_cast<unsigned long long>(capped), bias);
      note = buf;
      if (bias > 0.1 * est.error) est.flagged = true;
    }
    if (cap_hits > 0) {
      est.flagged = true;
      note += note.empty() ? "" : "; ";
      note += "per-path visit cap hit";
    }
    if (opts.box) note = note.empty() ? "box-killed" : "box-killed; " + note;
    est.note = note;
    out.push_back(est);
  }
  return out;
}

// ---------------------------------------------------------------------------

LatticeVector nearest_site(const Vec& x) {
  LatticeVector z(x.size());
  for (int k = 0; k < x.size(); ++k) z[k] = static_cast<int>(std::lround(x[k]));
  return z;
}

std::vector<RenewalAudit> renewal_audit(const WalkModel& model,
                                        const LatticeVector& z,
                                        const LatticeVector& z_n, const Vec& q,
                                        const std::vector<double>& deltas,
                                        const LinearSolveOptions& opts) {
  require_accepted(model);
  const int d = model.dim;
  check_site(z, d, Kernel::reflected, "source");
  check_site(z_n, d, Kernel::killed, "z_n");
  Geometry geo(model);
  const ConeDecomposition cd = geo.gamma_q(q / q.norm());
  auto bound = bound_for(model, opts.bound);
  LinearSolveOptions o = opts;
  o.bound = bound;

  RenewalAudit base;
  std::vector<LatticeVector> bsites;
  std::vector<double> f, df, gz;
  for (int pass = 0;; ++pass) {
  base = RenewalAudit{};
  bsites.clear();
  const GreenField field = solve_row(model, z, {z_n}, Kernel::reflected, o);
  const Box& box = field.box();
  Box kbox = box;
  kbox.lo[d - 1] = std::max(kbox.lo[d - 1], 1);
  auto ksys = std::make_shared<const BoxSystem>(model, Kernel::killed, kbox, o.max_entries);
  const GreenColumn kcol(ksys, bound, z_n, o.box_killed);

  base.lhs = field.estimate(z_n);
  base.direct_term.source = z;
  base.direct_term.target = z_n;
  base.direct_term.kernel = Kernel::killed;
  if (z[d - 1] >= 1) base.direct_term = kcol.estimate(z);
  base.gamma_q = cd.gamma_q;

  // Boundary sites of the box.
  {
    Box b = box;
    b.hi[d - 1] = 0;
    LatticeVector w = b.lo;
    while (true) {
      bsites.push_back(w);
      int k = 0;
      for (; k < d - 1; ++k) {
        if (w[k] < b.hi[k]) {
          ++w[k];
          break;
        }
        w[k] = b.lo[k];
      }
      if (k == d - 1) break;
    }
  }
  base.w_max = 0;
  for (int k = 0; k + 1 < d; ++k)
    base.w_max = std::max({base.w_max, std::abs(box.lo[k]), std::abs(box.hi[k])});

  // f(w) = sum_w' mu0(w' - w) G+(w', z_n) and its error.
  f.assign(bsites.size(), 0.0);
  df.assign(bsites.size(), 0.0);
  gz.assign(bsites.size(), 0.0);
  for (std::size_t i = 0; i < bsites.size(); ++i) {
    const LatticeVector& w = bsites[i];
    gz[i] = field.value(w);
    for (const auto& a : model.mu0.atoms) {
      if (a.step[d - 1] < 1) continue;
      const LatticeVector wp = add(w, a.step);
      if (kbox.contains(wp)) {
        f[i] += a.weight * kcol.value(wp);
        df[i] += a.weight * kcol.error(wp);
      } else {
        df[i] += a.weight * bound->upper(Kernel::killed, wp, z_n);
      }
    }
  }
  double s_b = 0.0, err1 = 0.0;
  for (std::size_t i = 0; i < bsites.size(); ++i) {
    s_b += gz[i] * f[i];
    if (df[i] > 0.0)
      err1 += (gz[i] + bound->upper(Kernel::reflected, z, bsites[i])) * df[i];
  }
  double err2 = 0.0;
  if (!o.box_killed)
    for (const auto& e : field.system().exits()) {
      const double x = field.value(field.system().site(e.from));
      if (x > 0.0) err2 += x * e.p * bound->upper_boundary_sum(e.to, z_n);
    }
  double rem = kInf;
  for (const auto& t : bound->boundary_tilts()) {
    const double closed = std::exp(dot(t.a_bar, z)) / (1.0 - t.phi0_bar);
    double partial = 0.0;
    for (std::size_t i = 0; i < bsites.size(); ++i)
      partial += gz[i] * std::exp(dot(t.a, bsites[i]));
    double outside = std::max(closed - partial, 0.0) + 4e-16 * closed;
    if (d == 2) {
      // Geometric tails with G(z, w) <= gdiag e^{b.(z - w)}.
      double right = kInf, left = kInf;
      for (const Vec& b : bound->dd0_tilts()) {
        const double c = bound->gdiag() * std::exp(dot(b, z));
        const double r = t.a[0] - b[0];
        if (r < 0.0)
          right = std::min(right, c * std::exp(r * (box.hi[0] + 1)) / -std::expm1(r));
        if (r > 0.0)
          left = std::min(left, c * std::exp(r * (box.lo[0] - 1)) / -std::expm1(-r));
      }
      outside = std::min(outside, right + left);
    }
    rem = std::min(rem, bound->gs00() * t.phi0_a * std::exp(-dot(t.a, z_n)) * outside);
  }
  if (o.box_killed) rem = 0.0;
  base.boundary_sum = s_b;
  base.boundary_sum_error = err1 + err2;
  base.remainder = rem;
  const double lhs = base.lhs.value;
  base.relative_gap = std::abs(lhs - base.direct_term.value - s_b) / lhs;
  base.certified_bound =
      (base.lhs.error + base.direct_term.error + err1 + err2 + rem) / lhs;
  if (!std::isfinite(rem)) {
    base.flagged = true;
    base.note = "no tilt with phi0(a_bar) < 1: remainder unknown";
  }
  if (base.lhs.flagged) {
    base.flagged = true;
    base.note = base.lhs.note;
  }
  // Widen the boundary window until the outside remainder is negligible.
  if (o.box_killed || !o.adaptive || !(rem > o.rel_tol * lhs)) break;
  Box wider = box;
  for (int k = 0; k + 1 < d; ++k) {
    const int grow_by = std::max(8, (box.hi[k] - box.lo[k]) / 4);
    wider.lo[k] -= grow_by;
    wider.hi[k] += grow_by;
  }
  if (pass >= 8 || BoxSystem::band_entries(model, wider) > o.max_entries) {
    base.flagged = true;
    base.note = "outside remainder above tolerance at the memory cap";
    break;
  }
  o.box = wider;
  }

  double zn_norm = 0.0;
  for (int k = 0; k < d; ++k) zn_norm += double(z_n[k]) * z_n[k];
  zn_norm = std::sqrt(zn_norm);
  const bool gamma_zero = cd.gamma_q.norm() == 0.0;
  std::vector<RenewalAudit> out;
  for (double delta : deltas) {
    if (!(delta > 0.0)) throw DomainError("delta must be positive");
    RenewalAudit r = base;
    r.delta = delta;
    double xi = gamma_zero ? base.direct_term.value : 0.0;
    for (std::size_t i = 0; i < bsites.size(); ++i) {
      double dist = 0.0;
      for (int k = 0; k < d; ++k) {
        const double c = bsites[i][k] - cd.gamma_q[k] * zn_norm;
        dist += c * c;
      }
      if (std::sqrt(dist) < delta * zn_norm) xi += gz[i] * f[i];
    }
    r.principal = xi;
    r.principal_ratio = xi / base.lhs.value;
    out.push_back(r);
  }
  return out;
}

RenewalAudit renewal_audit(const WalkModel& model, const LatticeVector& z,
                           const LatticeVector& z_n, const Vec& q, double delta,
                           const LinearSolveOptions& opts) {
  return renewal_audit(model, z, z_n, q, std::vector<double>{delta}, opts).front();
}

double regression_slope(const std::vector<double>& x,
                        const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw DomainError("regression needs at least two points");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  if (!(sxx > 0.0)) throw DomainError("regression abscissae are all equal");
  return sxy / sxx;
}

AsymptoticsResult log_asymptotics_experiment(const WalkModel& model,
                                             const Vec& q,
                                             const std::vector<double>& radii,
                                             const LatticeVector& z0,
                                             const LinearSolveOptions& opts) {
  require_accepted(model);
  const int d = model.dim;
  if (q.size() != d || !(q.norm() > 0.0) || q[d - 1] < 0.0)
    throw DomainError("q must be a nonzero direction in the half-space");
  if (radii.size() < 2) throw DomainError("need at least two radii");
  for (std::size_t i = 1; i < radii.size(); ++i)
    if (!(radii[i] > radii[i - 1])) throw DomainError("radii must increase");
  const Vec u = q / q.norm();
  Geometry geo(model);
  AsymptoticsResult res;
  res.q = u;
  res.z0 = z0;
  res.predicted = -geo.quasi_potential_I(u).value;
  res.predicted_killed = -geo.support_D(u).value;
  LinearSolveOptions o = opts;
  o.bound = bound_for(model, opts.bound);

  for (Kernel kernel : {Kernel::reflected, Kernel::killed}) {
    LatticeVector src = z0;
    src[d - 1] = std::max(src[d - 1], y_floor(kernel));
    std::vector<LatticeVector> zs;
    for (double r : radii) {
      LatticeVector zn = nearest_site(r * u);
      zn[d - 1] = std::max(zn[d - 1], y_floor(kernel));
      zs.push_back(zn);
    }
    const GreenField field = solve_row(model, src, zs, kernel, o);
    auto& rows = kernel == Kernel::reflected ? res.reflected : res.killed;
    std::vector<double> xs, ys;
    for (std::size_t i = 0; i < radii.size(); ++i) {
      AsymptoticsRow row;
      row.r = radii[i];
      row.z_n = zs[i];
      row.estimate = field.estimate(zs[i]);
      row.log_value_over_r = std::log(row.estimate.value) / radii[i];
      row.predicted_limit =
          kernel == Kernel::reflected ? res.predicted : res.predicted_killed;
      xs.push_back(to_vec(zs[i]).norm());
      ys.push_back(std::log(row.estimate.value));
      rows.push_back(row);
    }
    (kernel == Kernel::reflected ? res.slope : res.slope_killed) =
        regression_slope(xs, ys);
  }
  return res;
}

BoundarySumCheck boundary_sum_check(const WalkModel& model,
                                    const LatticeVector& z, const DualPoint& a,
                                    int w_max) {
  require_accepted(model);
  if (model.dim != 2) throw DomainError("boundary_sum_check is implemented for d = 2");
  if (w_max < 1) throw DomainError("w_max must be positive");
  const DualPoint abar = bar_a(model, a);
  const double p0bar = phi_value(model, abar, Which::boundary);
  if (!(p0bar < 1.0)) throw DomainError("boundary sum diverges: phi0(a_bar) >= 1");
  Geometry geo(model);
  auto bound = std::make_shared<const GreenBound>(geo);
  std::vector<LatticeVector> ws;
  for (int x = -w_max; x <= w_max; ++x) ws.push_back({x, 0});
  LinearSolveOptions o;
  o.bound = bound;
  const GreenField field = solve_row(model, z, ws, Kernel::reflected, o);
  BoundarySumCheck out;
  out.closed_form = std::exp(dot(abar, z)) / (1.0 - p0bar);
  for (const auto& w : ws) {
    const GreenEstimate e = field.estimate(w);
    const double ew = std::exp(a[0] * w[0]);
    out.partial += e.value * ew;
    out.error += e.error * ew;
  }
  // Geometric tails beyond |x| > w_max with G(z, w) <= gdiag e^{b.(z - w)}.
  double right = kInf, left = kInf;
  for (const Vec& b : bound->dd0_tilts()) {
    const double c = bound->gdiag() * std::exp(dot(b, z));
    const double r = a[0] - b[0];
    if (r < 0.0)
      right = std::min(right, c * std::exp(r * (w_max + 1)) / -std::expm1(r));
    if (r > 0.0)
      left = std::min(left, c * std::exp(-r * (w_max + 1)) / -std::expm1(-r));
  }
  out.error += right + left;
  return out;
}

}  // namespace halfwalk
