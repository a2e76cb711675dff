// Copyright 2026 The halfwalk Authors
// SPDX-License-Identifier: Apache-2.0
// Acceptance runner: prints one PASS/FAIL line per criterion.
//   acceptance [criterion ...] [--cli PATH]
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "halfwalk/errors.hpp"
#include "halfwalk/geometry.hpp"
#include "halfwalk/green.hpp"
#include "halfwalk/harmonic.hpp"
#include "halfwalk/martin.hpp"
#include "halfwalk/model.hpp"

using namespace halfwalk;

namespace {

constexpr double kPi = 3.14159265358979323846;

// Pre-registered targets.
constexpr double kHarmonicTol = 1e-10;
constexpr double kDecompTol = 1e-8;
constexpr double kGridCell = 1e-3;
constexpr double kRestartSpread = 1e-7;
constexpr int kMcMinAgree = 18;
constexpr double kSlopeRelTol = 0.10;
constexpr double kRenewalTol = 1e-6;
constexpr double kPrincipalFloor = 0.9;
constexpr double kPrincipalDelta = 0.15;
constexpr double kKernelTol = 0.10;
constexpr double kFanMinWidth = 0.05;
constexpr double kFanAgree = 0.05;
constexpr double kIMinFloor = 1e-8;
constexpr double kIMinOracleTol = 1e-5;

const std::vector<double> kLadder{10, 20, 30, 45, 60};
const std::vector<LatticeVector> kProbes{{1, 2}, {0, 2}, {-2, 1}, {3, 0}, {2, 5}};

std::string g_cli;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string data_path(const std::string& name) {
  return std::string(HALFWALK_DATA_DIR) + "/" + name + ".json";
}

WalkModel model_named(const std::string& name) { return load_model_file(data_path(name)); }

Vec vec2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

Vec direction(double th) { return vec2(std::cos(th), std::sin(th)); }

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

LatticeMeasure measure_of(const std::vector<std::pair<LatticeVector, double>>& atoms) {
  LatticeMeasure m;
  m.dim = 2;
  for (const auto& [s, w] : atoms) m.atoms.push_back({s, w});
  return m;
}

// ---------------------------------------------------------------------------

Outcome harmonicity() {
  const auto window = box_window(2, 8, 8);
  const WalkModel ref = model_named("reference");
  const WalkModel tan = model_named("tangent");
  Geometry g(ref);
  const ThetaInterval& t = g.theta_interval();
  std::vector<std::pair<const WalkModel*, DualPoint>> points;
  std::mt19937_64 rng(2026);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 7; ++k) {
    Vec al(1);
    al << t.theta_lo + (t.theta_hi - t.theta_lo) * (0.02 + 0.96 * u(rng));
    points.emplace_back(&ref, plus_a(ref, al));
  }
  for (double alpha : {t.theta_lo, t.theta_hi}) {
    Vec al(1);
    al << alpha;
    points.emplace_back(&ref, plus_a(ref, al));
  }
  points.emplace_back(&tan, Geometry(tan).a_hat(vec2(1, 0)).a);

  std::map<HarmonicCase, int> seen;
  double worst = 0.0;
  for (const auto& [m, a] : points) {
    const HarmonicFunction h = make_harmonic(*m, a);
    ++seen[h.case_tag];
    worst = std::max(worst, harmonicity_residual(*m, h, window));
  }
  Outcome o;
  o.pass = worst < kHarmonicTol && seen.size() == 3;
  o.detail = "max residual " + fmt("%.3g", worst) + " over 10 points; generic " +
             std::to_string(seen[HarmonicCase::generic]) + " saturated " +
             std::to_string(seen[HarmonicCase::saturated]) + " tangent " +
             std::to_string(seen[HarmonicCase::tangent]);
  return o;
}

Outcome decomposition() {
  const WalkModel m = model_named("reference");
  Geometry g(m);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, kPi);
  const double i_plus = g.quasi_potential_I(vec2(1, 0)).value;
  const double i_minus = g.quasi_potential_I(vec2(-1, 0)).value;
  double worst_gap = 0.0, worst_cell = 0.0;
  for (int k = 0; k < 100; ++k) {
    double th = u(rng);
    th = std::clamp(th, 1e-3, kPi - 1e-3);
    const Vec q = direction(th);
    const QuasiPotentialResult r = g.quasi_potential_I(q);
    worst_gap = std::max(worst_gap, std::abs(r.value - r.decomposition->first -
                                             r.decomposition->second));
    const double gq = g.gamma_q(q).gamma_q[0];
    // Grid oracle: integer ternary search of the convex cost on x = i * cell.
    auto cost = [&](long i) {
      const double x = i * kGridCell;
      const double i0 = x >= 0 ? x * i_plus : -x * i_minus;
      return i0 + g.support_D(q - vec2(x, 0)).value;
    };
    long lo = -3000, hi = 3000;
    while (hi - lo > 2) {
      const long m1 = lo + (hi - lo) / 3, m2 = hi - (hi - lo) / 3;
      if (cost(m1) <= cost(m2))
        hi = m2;
      else
        lo = m1;
    }
    long best = lo;
    for (long i = lo; i <= hi; ++i)
      if (cost(i) < cost(best)) best = i;
    worst_cell = std::max(worst_cell, std::abs(best * kGridCell - gq) / kGridCell);
  }
  Outcome o;
  o.pass = worst_gap < kDecompTol && worst_cell <= 1.0;
  o.detail = "max gap " + fmt("%.3g", worst_gap) + ", max grid offset " +
             fmt("%.3g", worst_cell) + " cells over 100 q";
  return o;
}

Outcome cone_certification() {
  const WalkModel m = model_named("reference");
  Geometry g(m);
  double worst_res = 0.0, worst_spread = 0.0;
  for (int k = 0; k < 200; ++k) {
    const Vec q = direction(kPi * k / 199.0);
    const BoundaryPoint bp = g.a_hat(q);
    worst_res = std::max(worst_res, fit_cone(g.normal_cone(bp), q).residual);
    AHatOptions opt;
    opt.method = AHatOptions::Method::barrier;
    for (std::uint64_t s = 1; s <= 10; ++s) {
      opt.start = g.random_barrier_start(1000 * k + s);
      worst_spread = std::max(worst_spread, (g.a_hat(q, opt).a - bp.a).norm());
    }
  }
  Outcome o;
  o.pass = worst_res < kConeTol && worst_spread < kRestartSpread;
  o.detail = "max NNLS residual " + fmt("%.3g", worst_res) + ", max restart spread " +
             fmt("%.3g", worst_spread) + " over 200 q";
  return o;
}

Outcome green_cross_validation() {
  const WalkModel m = model_named("reference");
  Geometry g(m);
  auto bound = std::make_shared<const GreenBound>(g);
  const Box box{{-30, 0}, {30, 30}};
  const std::vector<LatticeVector> sources{{0, 1}, {5, 0}, {-10, 4}, {3, 10}};
  const std::vector<LatticeVector> targets{{0, 0}, {2, 1}, {-3, 2}, {6, 5}, {-8, 0}};
  SeriesOptions so;
  so.box = box;
  so.bound = bound;
  LinearSolveOptions lo;
  lo.box = box;
  lo.box_killed = true;
  lo.bound = bound;
  MonteCarloOptions mo;
  mo.box = box;
  mo.bound = bound;
  mo.n_paths = 200000;
  mo.seed = 20260101;
  int exact_agree = 0, mc_agree = 0, pairs = 0;
  double worst_exact = 0.0;
  for (const auto& z : sources) {
    const auto se = green_series(m, z, targets, 2000, Kernel::reflected, so);
    const auto li = green_linear_solve(m, z, targets, Kernel::reflected, lo);
    const auto mc = green_monte_carlo(m, z, targets, Kernel::reflected, mo);
    for (std::size_t i = 0; i < targets.size(); ++i) {
      ++pairs;
      const double d = std::abs(se[i].value - li[i].value);
      worst_exact = std::max(worst_exact, d / li[i].value);
      if (d <= se[i].error + li[i].error + 1e-12 * li[i].value) ++exact_agree;
      const double sigma = mc[i].error / 1.96;
      if (std::abs(mc[i].value - li[i].value) <= 3.0 * sigma + li[i].error) ++mc_agree;
    }
  }
  Outcome o;
  o.pass = exact_agree == pairs && mc_agree >= kMcMinAgree;
  o.detail = "series/linear agree " + std::to_string(exact_agree) + "/" +
             std::to_string(pairs) + " (max rel diff " + fmt("%.3g", worst_exact) +
             "), MC within 3 sigma " + std::to_string(mc_agree) + "/" +
             std::to_string(pairs);
  return o;
}

Outcome log_asymptotics() {
  const WalkModel m = model_named("reference");
  Geometry g(m);
  LinearSolveOptions lo;
  lo.bound = std::make_shared<const GreenBound>(g);
  bool pass = true;
  std::string detail;
  for (const Vec& q : {vec2(0, 1), direction(kPi / 4), vec2(1, 0)}) {
    const AsymptoticsResult r =
        log_asymptotics_experiment(m, q, {10, 20, 30, 40, 50, 60}, {0, 1}, lo);
    const bool a = std::abs(r.slope - r.predicted) <= kSlopeRelTol * std::abs(r.predicted);
    const bool b = std::abs(r.slope_killed - r.predicted_killed) <=
                   kSlopeRelTol * std::abs(r.predicted_killed);
    pass = pass && a && b;
    detail += "q=(" + fmt("%.3f", q[0]) + "," + fmt("%.3f", q[1]) + "): G " +
              fmt("%.5f", r.slope) + " vs " + fmt("%.5f", r.predicted) +
              (a ? " ok" : " off") + ", G+ " + fmt("%.5f", r.slope_killed) + " vs " +
              fmt("%.5f", r.predicted_killed) + (b ? " ok" : " off") + "; ";
  }
  return {pass, detail};
}

Outcome renewal() {
  const WalkModel m = model_named("reference");
  Geometry g(m);
  LinearSolveOptions lo;
  lo.bound = std::make_shared<const GreenBound>(g);
  bool pass = true;
  std::string detail;
  const std::vector<double> deltas{0.1, kPrincipalDelta, 0.25};
  for (const Vec& q : {vec2(0, 1), direction(kPi / 4)}) {
    std::vector<double> ratios;
    std::string table;
    double gap20 = 0.0, cert20 = 0.0;
    for (double r : {20.0, 30.0, 40.0, 60.0}) {
      const auto audits = renewal_audit(m, {0, 1}, nearest_site(r * q), q, deltas, lo);
      if (r == 20.0) {
        gap20 = audits[1].relative_gap;
        cert20 = audits[1].certified_bound;
      }
      ratios.push_back(audits[1].principal_ratio);
      table += " r" + fmt("%.0f", r) + ":" + fmt("%.3f", audits[0].principal_ratio) + "/" +
               fmt("%.3f", audits[1].principal_ratio) + "/" +
               fmt("%.3f", audits[2].principal_ratio);
    }
    const bool inc = std::is_sorted(ratios.begin(), ratios.end()) &&
                     std::adjacent_find(ratios.begin(), ratios.end()) == ratios.end();
    const bool ok = gap20 < kRenewalTol && cert20 < kRenewalTol && inc &&
                    ratios.back() > kPrincipalFloor && ratios.back() <= 1.0 + 1e-12;
    pass = pass && ok;
    detail += "q=(" + fmt("%.3f", q[0]) + "," + fmt("%.3f", q[1]) + ") gap " +
              fmt("%.2g", gap20) + " cert " + fmt("%.2g", cert20) +
              " Xi/G(delta .1/.15/.25)" + table + (ok ? " ok" : " off") + "; ";
  }
  return {pass, detail};
}

Outcome martin_convergence() {
  const WalkModel m = model_named("reference");
  const auto traces = kernel_traces(m, kProbes, {0, 1}, vec2(0, 1), kLadder);
  bool pass = true;
  std::string detail;
  for (const auto& t : traces) {
    const TraceVerdict v = verdict(t, kKernelTol);
    pass = pass && v.within_tolerance && v.monotone_tail;
    detail += to_string(t.z) + " dev " + fmt("%.4f", v.last_deviation) +
              (v.monotone_tail ? " monotone" : " not monotone") + "; ";
  }
  return {pass, detail};
}

Outcome nonradial_fan() {
  // mu0(1,0) = p tuned so that phi0(a_bar) = 1 at alpha* = alpha_max(D) / 2.
  const auto mu = measure_of({{{1, 0}, .2}, {{-1, 0}, .2}, {{0, 1}, .35}, {{0, -1}, .25}});
  auto build = [&](double p) {
    return make_model(mu, measure_of({{{1, 0}, p}, {{-1, 0}, .1}, {{0, 1}, .9 - p}}));
  };
  const WalkModel probe = build(0.5);
  const double alpha_star = 0.5 * Geometry(probe).theta_interval().proj_hi;
  Vec al(1);
  al << alpha_star;
  const DualPoint abar = bar_a(probe, plus_a(probe, al));
  auto excess = [&](double p) {
    return p * std::exp(abar[0]) + .1 * std::exp(-abar[0]) + (.9 - p) * std::exp(abar[1]) -
           1.0;
  };
  double lo = 0.0, hi = 0.9;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    ((excess(mid) > 0) == (excess(hi) > 0) ? hi : lo) = mid;
  }
  const double p = 0.5 * (lo + hi);
  const WalkModel m = build(p);
  const WalkModel shipped = model_named("fan");
  Geometry g(m);
  const double phi0_bar = phi_value(m, bar_a(m, plus_a(m, al)), Which::boundary);

  const Atlas atlas = g.boundary_atlas(181);
  const Fan* widest = nullptr;
  for (const auto& f : atlas.fans)
    if (!widest || f.angular_width > widest->angular_width) widest = &f;
  Outcome o;
  if (!widest) {
    o.detail = "no fan found";
    return o;
  }
  double th_lo = kPi, th_hi = 0.0;
  for (std::size_t i : widest->rows) {
    const double th = std::atan2(atlas.rows[i].q[1], atlas.rows[i].q[0]);
    th_lo = std::min(th_lo, th);
    th_hi = std::max(th_hi, th);
  }
  const Vec q1 = direction(th_lo), q2 = direction(0.5 * (th_lo + th_hi));
  const NonradialReport rep = nonradial_experiment(m, q1, q2, kProbes, {0, 1}, {60});
  int agree = 0;
  std::string probes;
  for (const auto& pr : rep.probes) {
    const bool ok = std::abs(pr.k1 - pr.k2) < std::max(pr.error, kFanAgree * pr.predicted);
    agree += ok;
    probes += " " + to_string(pr.z) + ":" + fmt("%.4f", pr.k1) + "/" + fmt("%.4f", pr.k2);
  }
  double shipped_p = -1.0;
  for (const auto& a : shipped.mu0.atoms)
    if (a.step == LatticeVector{1, 0}) shipped_p = a.weight;
  const bool same_model = std::abs(shipped_p - p) < 1e-12;
  o.pass = same_model && std::abs(phi0_bar - 1.0) < 1e-12 && widest->angular_width > kFanMinWidth &&
           agree == static_cast<int>(rep.probes.size());
  o.detail = "p " + fmt("%.17g", p) + (same_model ? " (matches data/fan.json)" : " (differs from data/fan.json)") +
             ", phi0(a_bar) - 1 " + fmt("%.2g", phi0_bar - 1.0) + ", fan width " +
             fmt("%.4f", widest->angular_width) + " rad, directions " + fmt("%.4f", th_lo) +
             " and " + fmt("%.4f", 0.5 * (th_lo + th_hi)) + ", r=60 agree " +
             std::to_string(agree) + "/" + std::to_string(rep.probes.size()) + probes;
  return o;
}

// d = 2: I(0, +-e1) + I+(+-e1, 0) from the generating functions alone.
double i_min_oracle_d2(const WalkModel& m) {
  auto min_over_beta = [&](double alpha) {
    double lo = -30, hi = 30;
    for (int it = 0; it < 200; ++it) {
      const double m1 = lo + (hi - lo) / 3, m2 = hi - (hi - lo) / 3;
      (phi_value(m, vec2(alpha, m1), Which::interior) <
               phi_value(m, vec2(alpha, m2), Which::interior)
           ? hi
           : lo) = (phi_value(m, vec2(alpha, m1), Which::interior) <
                            phi_value(m, vec2(alpha, m2), Which::interior)
                        ? m2
                        : m1);
    }
    return 0.5 * (lo + hi);
  };
  auto in_proj = [&](double alpha) {
    return phi_value(m, vec2(alpha, min_over_beta(alpha)), Which::interior) <= 1.0;
  };
  auto in_theta = [&](double alpha) {
    const double bmin = min_over_beta(alpha);
    if (phi_value(m, vec2(alpha, bmin), Which::interior) > 1.0) return false;
    double lo = bmin - 40, hi = bmin;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      (phi_value(m, vec2(alpha, mid), Which::interior) > 1.0 ? lo : hi) = mid;
    }
    return phi_value(m, vec2(alpha, hi), Which::boundary) <= 1.0;
  };
  // Extents of a convex set containing 0 along +-1.
  auto extent = [](const std::function<bool(double)>& inside, double sign) {
    double lo = 0.0, hi = 8.0;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      (inside(sign * mid) ? lo : hi) = mid;
    }
    return lo;
  };
  const double th_hi = extent(in_theta, 1.0), th_lo = extent(in_theta, -1.0);
  const double pr_hi = extent(in_proj, 1.0), pr_lo = extent(in_proj, -1.0);
  // +e1: I(0, e1) = max alpha over Theta, I+(e1, 0) = max -alpha over proj D.
  return std::min(th_hi + pr_lo, th_lo + pr_hi);
}

double i_min_oracle_d3(const Geometry& g) {
  auto cost = [&](double th) {
    Vec v(3);
    v << std::cos(th), std::sin(th), 0.0;
    return g.quasi_potential_I(v).value +
           g.quasi_potential_Iplus(v, Vec::Zero(3)).value;
  };
  const int coarse = 360;
  int kbest = 0;
  double best = cost(0.0);
  for (int k = 1; k < coarse; ++k) {
    const double c = cost(2 * kPi * k / coarse);
    if (c < best) {
      best = c;
      kbest = k;
    }
  }
  const double h = 2 * kPi / coarse;
  for (int j = -400; j <= 400; ++j)
    best = std::min(best, cost(h * kbest + h * j / 400.0));
  return best;
}

Outcome i_min_positivity() {
  bool pass = true;
  std::string detail;
  for (const char* name : {"reference", "tangent", "fan", "d3"}) {
    const WalkModel m = model_named(name);
    Geometry g(m);
    const double v = g.i_min().value;
    const double oracle = m.dim == 2 ? i_min_oracle_d2(m) : i_min_oracle_d3(g);
    const bool ok = v > kIMinFloor && std::abs(v - oracle) < kIMinOracleTol;
    pass = pass && ok;
    detail += std::string(name) + " " + fmt("%.10f", v) + " oracle " + fmt("%.10f", oracle) +
              (ok ? "" : " off") + "; ";
  }
  return {pass, detail};
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

Outcome determinism() {
  if (g_cli.empty()) return {false, "no --cli given"};
  const std::string ref = data_path("reference");
  const std::vector<std::string> commands = {
      "geometry " + ref + " --samples 50",
      "atlas " + ref + " --samples 61",
      "ahat " + ref + " --q 0.3,1",
      "quasipotential " + ref + " --q 1,2",
      "green " + ref + " --from 0,1 --to 1,1 3,2 --method mc --n-paths 20000 --seed 11 --threads 2",
      "green " + ref + " --from 0,1 --to 1,1 3,2 --method series --horizon 300",
      "renewal " + ref + " --q 0,1 --r 15",
      "asymptotics " + ref + " --q 1,1 --radii 10,20",
      "martin " + ref + " --q 0,1 --z 1,2 0,2 --radii 10,20",
      "martin " + ref + " --q 0,1 --z 1,2 --radii 4 --policy mc --n-paths 20000 --seed 5",
  };
  int same = 0;
  std::string bad;
  for (std::size_t i = 0; i < commands.size(); ++i) {
    std::string out[2];
    for (int run = 0; run < 2; ++run) {
      const std::string file = "determinism_" + std::to_string(i) + "_" +
                               std::to_string(run) + ".csv";
      const std::string cmd = g_cli + " " + commands[i] + " --out " + file + " > /dev/null";
      if (std::system(cmd.c_str()) != 0) bad += " [failed: " + commands[i] + "]";
      out[run] = slurp(file);
      std::remove(file.c_str());
    }
    if (!out[0].empty() && out[0] == out[1])
      ++same;
    else
      bad += " [differs: " + commands[i] + "]";
  }
  return {same == static_cast<int>(commands.size()),
          std::to_string(same) + "/" + std::to_string(commands.size()) +
              " CSV outputs byte-identical" + bad};
}

struct Criterion {
  int id;
  const char* name;
  Outcome (*run)();
  double budget_s;
};

const Criterion kCriteria[] = {
    {1, "harmonicity", harmonicity, 1},
    {2, "quasi-potential decomposition", decomposition, 30},
    {3, "cone certification", cone_certification, 30},
    {4, "Green cross-validation", green_cross_validation, 300},
    {5, "logarithmic asymptotics", log_asymptotics, 600},
    {6, "renewal audit", renewal, 600},
    {7, "Martin kernel convergence", martin_convergence, 600},
    {8, "non-radial fan", nonradial_fan, 600},
    {9, "I_min positivity", i_min_positivity, 600},
    {10, "determinism", determinism, 600},
};

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> wanted;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--cli" && i + 1 < argc) {
      g_cli = argv[++i];
    } else {
      wanted.push_back(std::atoi(a.c_str()));
    }
  }
  if (wanted.empty())
    for (const auto& c : kCriteria) wanted.push_back(c.id);
  int failures = 0;
  for (int id : wanted) {
    const Criterion* c = nullptr;
    for (const auto& k : kCriteria)
      if (k.id == id) c = &k;
    if (!c) {
      std::fprintf(stderr, "unknown criterion %d\n", id);
      return 2;
    }
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c->run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs > c->budget_s) {
      o.pass = false;
      o.detail += " (over the " + fmt("%.0f", c->budget_s) + " s budget)";
    }
    std::printf("criterion %d (%s): %s  %s [%.1f s]\n", c->id, c->name,
                o.pass ? "PASS" : "FAIL", o.detail.c_str(), secs);
    std::fflush(stdout);
    failures += !o.pass;
  }
  return failures == 0 ? 0 : 1;
}
