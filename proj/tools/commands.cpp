// Copyright 2026 The halfwalk Authors
// SPDX-License-Identifier: Apache-2.0
#include "commands.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "halfwalk/errors.hpp"
#include "halfwalk/geometry.hpp"
#include "halfwalk/green.hpp"
#include "halfwalk/harmonic.hpp"
#include "halfwalk/martin.hpp"
#include "halfwalk/model.hpp"
#include "halfwalk/report.hpp"

namespace halfwalk::cli {

namespace {

struct Common {
  std::string model_path;
  std::uint64_t seed = 1;
  std::string format = "text";
  std::string out_path;
  int window = 0;
  int threads = 0;
  double rel_tol = 1e-8;
};

struct Output {
  std::vector<std::pair<std::string, std::string>> summary;
  std::optional<CsvTable> table;
  int exit_code = kExitOk;

  void put(const std::string& key, const std::string& value) {
    summary.emplace_back(key, value);
  }
  void put(const std::string& key, double value) { put(key, format_double(value)); }
};

Vec parse_real_vector(const std::string& text) {
  std::string cleaned;
  for (char c : text)
    if (c != '(' && c != ')' && c != '[' && c != ']' && c != ' ') cleaned += c;
  std::vector<double> vals;
  std::stringstream ss(cleaned);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(tok, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (tok.empty() || used != tok.size())
      throw DomainError("not a real vector: '" + text + "'");
    vals.push_back(v);
  }
  if (vals.empty()) throw DomainError("empty vector: '" + text + "'");
  Vec out(vals.size());
  for (std::size_t i = 0; i < vals.size(); ++i) out[i] = vals[i];
  return out;
}

Vec unit_direction(const WalkModel& model, const std::string& text) {
  Vec q = parse_real_vector(text);
  if (q.size() != model.dim)
    throw DomainError("direction " + text + " has the wrong dimension");
  if (!(q.norm() > 0.0)) throw DomainError("direction must be nonzero");
  return q / q.norm();
}

LatticeVector site_of(const WalkModel& model, const std::string& text) {
  LatticeVector z;
  try {
    z = parse_lattice_vector(text);
  } catch (const ParseError& e) {
    throw DomainError(e.what());
  }
  if (static_cast<int>(z.size()) != model.dim)
    throw DomainError("site " + text + " has the wrong dimension");
  return z;
}

std::vector<LatticeVector> sites_of(const WalkModel& model,
                                    const std::vector<std::string>& texts) {
  std::vector<LatticeVector> out;
  for (const auto& t : texts) out.push_back(site_of(model, t));
  return out;
}

std::string join_doubles(const std::vector<double>& xs) {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) s += ' ';
    s += format_double(xs[i]);
  }
  return s;
}

void emit(const Output& o, const Provenance& prov, const Common& c,
          std::ostream& out) {
  CsvTable fallback({"key", "value"});
  for (const auto& [k, v] : o.summary) fallback.add_row({k, v});
  const CsvTable& table = o.table ? *o.table : fallback;
  if (!c.out_path.empty()) {
    std::ofstream f(c.out_path, std::ios::binary);
    if (!f) throw Error("cannot write " + c.out_path);
    table.write(f, prov);
  }
  if (c.format == "csv") {
    table.write(out, prov);
    return;
  }
  out << "# " << prov.line() << "\n";
  for (const auto& [k, v] : o.summary) out << k << ": " << v << "\n";
  if (o.table) {
    out << "\n";
    std::ostringstream os;
    o.table->write(os, prov);
    std::string line;
    std::istringstream is(os.str());
    std::getline(is, line);  // provenance already printed
    while (std::getline(is, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      out << line << "\n";
    }
  }
}

LinearSolveOptions linear_options(const Common& c) {
  LinearSolveOptions o;
  o.rel_tol = c.rel_tol;
  return o;
}

// ---------------------------------------------------------------------------

Output cmd_validate(const WalkModel& m) {
  Output o;
  o.table = CsvTable({"hypothesis", "status", "detail"});
  const HypothesisReport& r = m.report;
  const std::pair<const char*, const HypothesisCheck*> rows[] = {
      {"H0", &r.h0}, {"H1", &r.h1}, {"H2", &r.h2}, {"H3", &r.h3}, {"H4", &r.h4}};
  for (const auto& [name, h] : rows) {
    o.table->add_row({name, to_string(h->status), h->detail});
    o.put(name, std::string(to_string(h->status)) + " (" + h->detail + ")");
  }
  o.put("m", format_vec(r.m));
  o.put("m0", format_vec(r.m0));
  o.put("accepted", r.all_pass() ? "yes" : "no");
  if (!r.all_pass()) o.exit_code = kExitValidation;
  return o;
}

Output cmd_geometry(const WalkModel& m, int samples) {
  require_accepted(m);
  Geometry geo(m);
  Output o;
  const int d = m.dim;
  o.put("interior_point", format_vec(geo.interior_point()));
  o.put("i_min", geo.i_min().value);
  if (d == 2) {
    const ThetaInterval& t = geo.theta_interval();
    o.put("proj_D", format_double(t.proj_lo) + " " + format_double(t.proj_hi));
    o.put("Theta", format_double(t.theta_lo) + " " + format_double(t.theta_hi));
    o.table = CsvTable({"alpha", "beta_plus", "beta_bar", "phi0_plus",
                        "phi0_bar", "stratum_plus", "in_theta"});
    for (int k = 0; k < samples; ++k) {
      const double s = samples == 1 ? 0.5 : double(k) / (samples - 1);
      Vec alpha(1);
      alpha << t.proj_lo + s * (t.proj_hi - t.proj_lo);
      const DualPoint ap = plus_a(m, alpha);
      const DualPoint ab = bar_a(m, ap);
      const BoundaryPoint bp = geo.classify(ap);
      o.table->add_row({format_double(alpha[0]), format_double(ap[1]),
                        format_double(ab[1]),
                        format_double(phi_value(m, ap, Which::boundary)),
                        format_double(phi_value(m, ab, Which::boundary)),
                        to_string(bp.stratum),
                        geo.theta_contains(alpha) ? "1" : "0"});
    }
    return o;
  }
  // Extent of proj D and of Theta along directions in alpha-space.
  std::vector<std::string> header;
  for (int k = 0; k + 1 < d; ++k) header.push_back("u" + std::to_string(k + 1));
  header.push_back("proj_extent");
  header.push_back("theta_extent");
  o.table = CsvTable(header);
  std::mt19937_64 rng(0x5eed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int k = 0; k < samples; ++k) {
    Vec u(d - 1);
    if (d == 3) {
      const double th = 2.0 * 3.14159265358979323846 * k / samples;
      u << std::cos(th), std::sin(th);
    } else {
      for (int i = 0; i + 1 < d; ++i) u[i] = gauss(rng);
      u /= u.norm();
    }
    auto extent = [&](const std::function<bool(const Vec&)>& inside) {
      double lo = 0.0, hi = 1.0;
      while (inside(hi * u) && hi < 1e6) hi *= 2.0;
      for (int it = 0; it < 80; ++it) {
        const double mid = 0.5 * (lo + hi);
        (inside(mid * u) ? lo : hi) = mid;
      }
      return lo;
    };
    const double pe = extent([&](const Vec& a) {
      try {
        return min_phi_over_beta(m, a) <= 1.0;
      } catch (const Error&) {
        return false;
      }
    });
    const double te = extent([&](const Vec& a) {
      try {
        return geo.theta_contains(a);
      } catch (const Error&) {
        return false;
      }
    });
    std::vector<std::string> row;
    for (int i = 0; i + 1 < d; ++i) row.push_back(format_double(u[i]));
    row.push_back(format_double(pe));
    row.push_back(format_double(te));
    o.table->add_row(row);
  }
  return o;
}

Output cmd_ahat(const WalkModel& m, const std::string& qtext) {
  require_accepted(m);
  Geometry geo(m);
  const Vec q = unit_direction(m, qtext);
  const BoundaryPoint bp = geo.a_hat(q);
  Output o;
  o.put("q", format_vec(q));
  o.put("a_hat", format_vec(bp.a));
  o.put("stratum", to_string(bp.stratum));
  o.put("phi0_a_bar", bp.phi0_at_bar);
  o.put("I(0,q)", bp.a.dot(q));
  std::string gamma = "undefined";
  if (q[m.dim - 1] > 0.0) gamma = format_vec(geo.gamma_q(q).gamma_q);
  o.put("gamma_q", gamma);
  o.put("harmonic_case", to_string(make_harmonic(m, bp).case_tag));
  o.table = CsvTable({"q", "a_hat", "stratum", "value", "gamma_q"});
  o.table->add_row({format_vec(q), format_vec(bp.a), to_string(bp.stratum),
                    format_double(bp.a.dot(q)), gamma});
  return o;
}

Output cmd_gamma(const WalkModel& m, const std::string& qtext) {
  require_accepted(m);
  Geometry geo(m);
  const Vec q = unit_direction(m, qtext);
  const ConeDecomposition cd = geo.gamma_q(q);
  Output o;
  o.put("q", format_vec(q));
  o.put("a_hat", format_vec(cd.a_hat.a));
  o.put("gamma_q", format_vec(cd.gamma_q));
  o.put("c1", cd.c1);
  o.put("c2", cd.c2);
  o.put("phi0_active", cd.active_phi0 ? "yes" : "no");
  const OptimalPath path = geo.optimal_path(q, true);
  o.put("path_cost", path.total_cost);
  o.table = CsvTable({"from", "to", "on_boundary", "cost", "duration"});
  for (const auto& s : path.segments)
    o.table->add_row({format_vec(s.from), format_vec(s.to),
                      s.on_boundary ? "1" : "0", format_double(s.cost),
                      s.duration ? format_double(*s.duration) : ""});
  return o;
}

Output cmd_quasipotential(const WalkModel& m, const std::string& qtext,
                          const std::string& from_text) {
  require_accepted(m);
  Geometry geo(m);
  const Vec q = parse_real_vector(qtext);
  if (q.size() != m.dim) throw DomainError("q has the wrong dimension");
  Vec from = Vec::Zero(m.dim);
  if (!from_text.empty()) from = parse_real_vector(from_text);
  if (from.size() != m.dim) throw DomainError("from has the wrong dimension");
  const QuasiPotentialResult i = geo.quasi_potential_I(q);
  const QuasiPotentialResult ip = geo.quasi_potential_Iplus(from, q);
  Output o;
  o.put("q", format_vec(q));
  o.put("I(0,q)", i.value);
  o.put("maximizer", format_vec(i.maximizer));
  o.put("I+(from,q)", ip.value);
  std::string d1, d2, gap;
  if (i.decomposition) {
    d1 = format_double(i.decomposition->first);
    d2 = format_double(i.decomposition->second);
    gap = format_double(i.value - i.decomposition->first - i.decomposition->second);
    o.put("I(0,gamma_q)", d1);
    o.put("I+(gamma_q,q)", d2);
    o.put("decomposition_gap", gap);
  }
  o.table = CsvTable({"q", "I", "I_plus_from", "I_0_gamma", "I_plus_gamma_q",
                      "decomposition_gap"});
  o.table->add_row({format_vec(q), format_double(i.value),
                    format_double(ip.value), d1, d2, gap});
  return o;
}

Output cmd_atlas(const WalkModel& m, int samples) {
  require_accepted(m);
  Geometry geo(m);
  const Atlas atlas = geo.boundary_atlas(samples);
  Output o;
  o.put("samples", std::to_string(atlas.rows.size()));
  o.put("injective", atlas.injective() ? "yes" : "no");
  o.put("fans", std::to_string(atlas.fans.size()));
  for (std::size_t k = 0; k < atlas.fans.size(); ++k)
    o.put("fan_" + std::to_string(k),
          "width " + format_double(atlas.fans[k].angular_width) + " a_hat " +
              format_vec(atlas.fans[k].a_hat) + " rows " +
              std::to_string(atlas.fans[k].rows.size()));
  o.table = CsvTable({"q", "a_hat", "stratum", "gamma_q", "value", "cluster"});
  for (const auto& r : atlas.rows)
    o.table->add_row({format_vec(r.q), format_vec(r.a_hat.a),
                      to_string(r.a_hat.stratum),
                      r.gamma_q ? format_vec(*r.gamma_q) : "",
                      format_double(r.value), std::to_string(r.cluster)});
  return o;
}

Output cmd_harmonic(const WalkModel& m, const std::string& qtext,
                    const std::string& tilt_text, int window) {
  require_accepted(m);
  Geometry geo(m);
  HarmonicFunction h;
  if (!tilt_text.empty()) {
    h = make_harmonic(m, parse_real_vector(tilt_text));
  } else {
    h = make_harmonic(m, geo.a_hat(unit_direction(m, qtext)));
  }
  const auto sites = box_window(m.dim, window, window);
  const double res = harmonicity_residual(m, h, sites);
  Output o;
  o.put("a", format_vec(h.a.a));
  o.put("case", to_string(h.case_tag));
  o.put("coef", h.coef);
  o.put("window", std::to_string(window));
  o.put("max_relative_residual", res);
  o.put("multiplicative_structure",
        multiplicative_structure_check(h, sites) ? "pass" : "fail");
  o.put("lambda_consistency", lambda_consistency(m, h) ? "pass" : "fail");
  o.table = CsvTable({"z", "log_h", "relative_residual"});
  for (const auto& z : sites)
    o.table->add_row({format_site(z), format_double(log_h(h, z)),
                      format_double(harmonicity_residual(m, h, {z}))});
  if (!(res < 1e-10)) o.exit_code = kExitValidation;
  return o;
}

Output cmd_green(const WalkModel& m, const Common& c, const std::string& from,
                 const std::vector<std::string>& to, const std::string& method,
                 const std::string& kernel_text, int horizon,
                 std::uint64_t n_paths, const std::string& box_lo,
                 const std::string& box_hi) {
  require_accepted(m);
  const LatticeVector z = site_of(m, from);
  const auto targets = sites_of(m, to);
  const Kernel kernel = kernel_text == "killed" ? Kernel::killed : Kernel::reflected;
  std::optional<Box> box;
  if (!box_lo.empty() || !box_hi.empty())
    box = Box{site_of(m, box_lo), site_of(m, box_hi)};
  Geometry geo(m);
  auto bound = std::make_shared<const GreenBound>(geo);
  std::vector<GreenEstimate> est;
  if (method == "series") {
    SeriesOptions so;
    so.box = box;
    so.bound = bound;
    est = green_series(m, z, targets, horizon, kernel, so);
  } else if (method == "linear") {
    LinearSolveOptions lo = linear_options(c);
    lo.bound = bound;
    if (box) {
      lo.box = box;
      lo.box_killed = true;
    }
    est = green_linear_solve(m, z, targets, kernel, lo);
  } else {
    MonteCarloOptions mo;
    mo.n_paths = n_paths;
    mo.seed = c.seed;
    mo.threads = c.threads;
    mo.box = box;
    mo.bound = bound;
    est = green_monte_carlo(m, z, targets, kernel, mo);
  }
  Output o;
  o.put("source", format_site(z));
  o.put("kernel", to_string(kernel));
  o.put("method", method);
  if (box) o.put("box", box->str());
  o.table = CsvTable({"source", "target", "kernel", "method", "value", "error",
                      "samples", "note"});
  for (const auto& e : est)
    o.table->add_row({format_site(e.source), format_site(e.target),
                      to_string(e.kernel), to_string(e.method),
                      format_double(e.value),
                      e.error_known ? format_double(e.error) : "",
                      std::to_string(e.samples), e.note});
  return o;
}

Output cmd_renewal(const WalkModel& m, const Common& c, const std::string& qtext,
                   double r, const std::vector<double>& deltas,
                   const std::string& ztext) {
  const Vec q = unit_direction(m, qtext);
  const LatticeVector z = site_of(m, ztext);
  const LatticeVector zn = nearest_site(r * q);
  const auto audits = renewal_audit(m, z, zn, q, deltas, linear_options(c));
  const RenewalAudit& a = audits.front();
  Output o;
  o.put("z", format_site(z));
  o.put("z_n", format_site(zn));
  o.put("gamma_q", format_vec(a.gamma_q));
  o.put("G(z,z_n)", a.lhs.value);
  o.put("G+(z,z_n)", a.direct_term.value);
  o.put("boundary_sum", a.boundary_sum);
  o.put("boundary_sum_error", a.boundary_sum_error);
  o.put("remainder", a.remainder);
  o.put("w_max", std::to_string(a.w_max));
  o.put("relative_gap", a.relative_gap);
  o.put("certified_bound", a.certified_bound);
  if (a.flagged) o.put("note", a.note);
  o.table = CsvTable({"delta", "principal", "principal_ratio", "relative_gap",
                      "certified_bound"});
  for (const auto& x : audits)
    o.table->add_row({format_double(x.delta), format_double(x.principal),
                      format_double(x.principal_ratio),
                      format_double(x.relative_gap),
                      format_double(x.certified_bound)});
  return o;
}

Output cmd_asymptotics(const WalkModel& m, const Common& c,
                       const std::string& qtext, const std::vector<double>& radii,
                       const std::string& z0text) {
  const Vec q = unit_direction(m, qtext);
  const AsymptoticsResult res =
      log_asymptotics_experiment(m, q, radii, site_of(m, z0text), linear_options(c));
  Output o;
  o.put("q", format_vec(q));
  o.put("slope", res.slope);
  o.put("predicted", res.predicted);
  o.put("slope_killed", res.slope_killed);
  o.put("predicted_killed", res.predicted_killed);
  o.table = CsvTable({"kernel", "r", "z_n", "method", "value", "error",
                      "log_value_over_r", "predicted_limit"});
  auto add = [&](const char* kernel, const std::vector<AsymptoticsRow>& rows) {
    for (const auto& r : rows)
      o.table->add_row({kernel, format_double(r.r), format_site(r.z_n),
                        to_string(r.estimate.method),
                        format_double(r.estimate.value),
                        format_double(r.estimate.error),
                        format_double(r.log_value_over_r),
                        format_double(r.predicted_limit)});
  };
  add("reflected", res.reflected);
  add("killed", res.killed);
  return o;
}

KernelOptions kernel_options(const Common& c, const std::string& policy,
                             std::uint64_t n_paths) {
  KernelOptions k;
  k.linear = linear_options(c);
  k.monte_carlo.seed = c.seed;
  k.monte_carlo.threads = c.threads;
  k.monte_carlo.n_paths = n_paths;
  if (policy == "exact") k.policy = MethodPolicy::exact;
  if (policy == "mc") k.policy = MethodPolicy::monte_carlo;
  return k;
}

void add_trace_rows(CsvTable& t, const KernelTrace& tr, const std::string& tag) {
  for (const auto& r : tr.rows)
    t.add_row({tag, format_site(tr.z), format_double(r.r), format_site(r.z_n),
               format_double(r.K), format_double(r.error),
               format_double(tr.predicted)});
}

Output cmd_martin(const WalkModel& m, const Common& c, const std::string& qtext,
                  const std::vector<std::string>& ztexts,
                  const std::string& z0text, const std::vector<double>& radii,
                  const std::string& policy, std::uint64_t n_paths, double tol) {
  const Vec q = unit_direction(m, qtext);
  const auto traces = kernel_traces(m, sites_of(m, ztexts), site_of(m, z0text), q,
                                    radii, kernel_options(c, policy, n_paths));
  Output o;
  o.put("q", format_vec(q));
  o.put("z0", z0text);
  o.put("tolerance", tol);
  o.table = CsvTable({"direction", "z", "r", "z_n", "K", "error", "predicted"});
  for (const auto& tr : traces) {
    const TraceVerdict v = verdict(tr, tol);
    o.put("verdict " + format_site(tr.z),
          "deviation " + format_double(v.last_deviation) + " within " +
              (v.within_tolerance ? "yes" : "no") + " monotone " +
              (v.monotone_tail ? "yes" : "no"));
    if (!tr.dropped_radii.empty())
      o.put("dropped " + format_site(tr.z), join_doubles(tr.dropped_radii));
    add_trace_rows(*o.table, tr, "q");
  }
  return o;
}

Output cmd_nonradial(const WalkModel& m, const Common& c, const std::string& q1,
                     const std::string& q2, const std::vector<std::string>& ztexts,
                     const std::string& z0text, const std::vector<double>& radii,
                     const std::string& policy, std::uint64_t n_paths) {
  const auto rep = nonradial_experiment(
      m, unit_direction(m, q1), unit_direction(m, q2), sites_of(m, ztexts),
      site_of(m, z0text), radii, kernel_options(c, policy, n_paths));
  Output o;
  o.put("q1", format_vec(rep.q1));
  o.put("q2", format_vec(rep.q2));
  o.put("a_hat", format_vec(rep.a_hat1));
  o.put("all_agree", rep.all_agree ? "yes" : "no");
  for (const auto& p : rep.probes)
    o.put("probe " + format_site(p.z),
          "k1 " + format_double(p.k1) + " k2 " + format_double(p.k2) +
              " predicted " + format_double(p.predicted) + " agree " +
              (p.agree ? "yes" : "no"));
  o.table = CsvTable({"direction", "z", "r", "z_n", "K", "error", "predicted"});
  for (const auto& tr : rep.traces1) add_trace_rows(*o.table, tr, "q1");
  for (const auto& tr : rep.traces2) add_trace_rows(*o.table, tr, "q2");
  return o;
}

Output cmd_ratio_limit(const WalkModel& m, const Common& c,
                       const std::string& tilt, const std::string& qtext,
                       const std::vector<std::string>& ztexts,
                       const std::vector<std::string>& zptexts,
                       const std::string& z0text, const std::vector<double>& radii,
                       const std::string& policy, std::uint64_t n_paths) {
  if (ztexts.size() != zptexts.size())
    throw DomainError("--z and --zp must have the same length");
  std::vector<std::pair<LatticeVector, LatticeVector>> pairs;
  for (std::size_t i = 0; i < ztexts.size(); ++i)
    pairs.emplace_back(site_of(m, ztexts[i]), site_of(m, zptexts[i]));
  const DualPoint a = parse_real_vector(tilt);
  if (a.size() != m.dim) throw DomainError("tilt has the wrong dimension");
  const auto rep = ratio_limit_probe(m, a, pairs, site_of(m, z0text),
                                     unit_direction(m, qtext), radii,
                                     kernel_options(c, policy, n_paths));
  Output o;
  o.put("tilt", format_vec(rep.tilt));
  o.put("interior_row_sum", rep.interior_row_sum);
  o.put("boundary_row_sum", rep.boundary_row_sum);
  o.put("log_green_slope", rep.slope);
  o.put("terminal_slope", rep.terminal_slope);
  o.table = CsvTable({"r", "z_n", "z", "zp", "ratio", "error", "predicted"});
  for (const auto& r : rep.rows)
    o.table->add_row({format_double(r.r), format_site(r.z_n), format_site(r.z),
                      format_site(r.zp), format_double(r.ratio),
                      format_double(r.error), format_double(r.predicted)});
  return o;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Martin boundary computations for reflected half-space walks",
               "halfwalk"};
  app.set_version_flag("--version", std::string(HALFWALK_VERSION));
  app.require_subcommand(1);

  Common c;
  std::string q, q1, q2, from, tilt, z0 = "0,1", z = "0,1", box_lo, box_hi;
  std::string method = "linear", kernel = "reflected", policy = "auto";
  std::vector<std::string> to, zs, zps;
  std::vector<double> radii{10, 20, 30, 45, 60}, deltas{0.1, 0.15, 0.25};
  double r = 20.0, tol = 0.1;
  int samples = 181, window = 8, horizon = 2000;
  std::uint64_t n_paths = 100000;

  auto common = [&](CLI::App* sub) {
    sub->add_option("model", c.model_path, "Model JSON file")->required();
    sub->add_option("--seed", c.seed, "Random seed")->capture_default_str();
    sub->add_option("--format", c.format, "Standard output format")
        ->check(CLI::IsMember({"text", "csv"}))
        ->capture_default_str();
    sub->add_option("--out", c.out_path, "Write CSV to this file");
    sub->add_option("--threads", c.threads, "Monte Carlo workers (0: default)");
    sub->add_option("--rel-tol", c.rel_tol, "Relative truncation tolerance")
        ->capture_default_str();
    sub->add_option("--window-radius", c.window,
                    "Irreducibility window radius (0: automatic)");
  };
  auto radii_opt = [&](CLI::App* sub) {
    sub->add_option("--radii", radii, "Radii ladder")
        ->delimiter(',')
        ->capture_default_str();
  };
  auto policy_opt = [&](CLI::App* sub) {
    sub->add_option("--policy", policy, "Green method policy")
        ->check(CLI::IsMember({"auto", "exact", "mc"}))
        ->capture_default_str();
    sub->add_option("--n-paths", n_paths, "Monte Carlo paths")->capture_default_str();
  };

  auto* validate = app.add_subcommand("validate", "Check the model hypotheses");
  common(validate);
  auto* geometry = app.add_subcommand("geometry", "Strata sweep and Theta sampling");
  common(geometry);
  geometry->add_option("--samples", samples, "Sample count")->capture_default_str();
  auto* ahat = app.add_subcommand("ahat", "Boundary point a_hat(q)");
  common(ahat);
  ahat->add_option("--q", q, "Direction")->required();
  auto* gamma = app.add_subcommand("gamma", "Breakpoint gamma_q and optimal path");
  common(gamma);
  gamma->add_option("--q", q, "Direction")->required();
  auto* qp = app.add_subcommand("quasipotential", "Quasi-potentials I and I+");
  common(qp);
  qp->add_option("--q", q, "Target point")->required();
  qp->add_option("--from", from, "Start point for I+");
  auto* atlas = app.add_subcommand("atlas", "Boundary atlas over the half-sphere");
  common(atlas);
  atlas->add_option("--samples", samples, "Sample count")->capture_default_str();
  auto* harm = app.add_subcommand("harmonic-check", "Harmonicity of h_a on a window");
  common(harm);
  auto* harm_q = harm->add_option("--q", q, "Direction; h is built at a_hat(q)");
  harm->add_option("--tilt", tilt, "Point a on the boundary of D")->excludes(harm_q);
  harm->add_option("--window", window, "Window radius")->capture_default_str();
  auto* green = app.add_subcommand("green", "Green function estimates");
  common(green);
  green->add_option("--from", from, "Source site")->required();
  green->add_option("--to", to, "Target sites")->required();
  green->add_option("--method", method, "Estimator")
      ->check(CLI::IsMember({"series", "linear", "mc"}))
      ->capture_default_str();
  green->add_option("--kernel", kernel, "Green kernel")
      ->check(CLI::IsMember({"reflected", "killed"}))
      ->capture_default_str();
  green->add_option("--horizon", horizon, "Series horizon")->capture_default_str();
  green->add_option("--n-paths", n_paths, "Monte Carlo paths")->capture_default_str();
  green->add_option("--box-lo", box_lo, "Lower corner of a killing box");
  green->add_option("--box-hi", box_hi, "Upper corner of a killing box");
  auto* renewal = app.add_subcommand("renewal", "Renewal decomposition audit");
  common(renewal);
  renewal->add_option("--q", q, "Direction")->required();
  renewal->add_option("--r", r, "Radius")->capture_default_str();
  renewal->add_option("--delta", deltas, "Window fractions")
      ->delimiter(',')
      ->capture_default_str();
  renewal->add_option("--z", z, "Source site")->capture_default_str();
  auto* asym = app.add_subcommand("asymptotics", "Logarithmic asymptotics of G");
  common(asym);
  asym->add_option("--q", q, "Direction")->required();
  radii_opt(asym);
  asym->add_option("--z0", z0, "Source site")->capture_default_str();
  auto* martin = app.add_subcommand("martin", "Martin kernel traces");
  common(martin);
  martin->add_option("--q", q, "Direction")->required();
  martin->add_option("--z", zs, "Probe sites")->required();
  martin->add_option("--z0", z0, "Base site")->capture_default_str();
  martin->add_option("--tol", tol, "Verdict tolerance")->capture_default_str();
  radii_opt(martin);
  policy_opt(martin);
  auto* nonradial = app.add_subcommand("nonradial", "Two directions in one fan");
  common(nonradial);
  nonradial->add_option("--q1", q1, "First direction")->required();
  nonradial->add_option("--q2", q2, "Second direction")->required();
  nonradial->add_option("--z", zs, "Probe sites")->required();
  nonradial->add_option("--z0", z0, "Base site")->capture_default_str();
  radii_opt(nonradial);
  policy_opt(nonradial);
  auto* ratio = app.add_subcommand("ratio-limit", "Tilted-kernel ratio limits");
  common(ratio);
  ratio->add_option("--tilt", tilt, "Tilt a on the lower boundary of D")->required();
  ratio->add_option("--q", q, "Direction")->required();
  ratio->add_option("--z", zs, "Numerator sites")->required();
  ratio->add_option("--zp", zps, "Denominator sites")->required();
  ratio->add_option("--z0", z0, "Base site")->capture_default_str();
  radii_opt(ratio);
  policy_opt(ratio);

  if (argc <= 1) {
    err << app.help();
    return kExitUsage;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    CLI::App* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    err << sub->help();
    return kExitUsage;
  }

  try {
    const WalkModel m = load_model_file(c.model_path, c.window);
    CLI::App* sub = app.get_subcommands().front();
    const std::string name = sub->get_name();
    Output o;
    Provenance prov = make_provenance(m, c.seed);
    prov.tolerances["rel_tol"] = c.rel_tol;
    if (name == "validate") {
      o = cmd_validate(m);
    } else if (name == "geometry") {
      o = cmd_geometry(m, samples);
    } else if (name == "ahat") {
      o = cmd_ahat(m, q);
    } else if (name == "gamma") {
      o = cmd_gamma(m, q);
    } else if (name == "quasipotential") {
      o = cmd_quasipotential(m, q, from);
    } else if (name == "atlas") {
      o = cmd_atlas(m, samples);
    } else if (name == "harmonic-check") {
      if (q.empty() && tilt.empty()) throw DomainError("give --q or --tilt");
      prov.tolerances["harmonic_tol"] = 1e-10;
      o = cmd_harmonic(m, q, tilt, window);
    } else if (name == "green") {
      o = cmd_green(m, c, from, to, method, kernel, horizon, n_paths, box_lo, box_hi);
    } else if (name == "renewal") {
      o = cmd_renewal(m, c, q, r, deltas, z);
    } else if (name == "asymptotics") {
      o = cmd_asymptotics(m, c, q, radii, z0);
    } else if (name == "martin") {
      prov.tolerances["verdict_tol"] = tol;
      o = cmd_martin(m, c, q, zs, z0, radii, policy, n_paths, tol);
    } else if (name == "nonradial") {
      o = cmd_nonradial(m, c, q1, q2, zs, z0, radii, policy, n_paths);
    } else if (name == "ratio-limit") {
      o = cmd_ratio_limit(m, c, tilt, q, zs, zps, z0, radii, policy, n_paths);
    }
    emit(o, prov, c, out);
    return o.exit_code;
  } catch (const DomainError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  }
}

}  // namespace halfwalk::cli
