// Copyright 2026 The halfwalk Authors
// SPDX-License-Identifier: Apache-2.0
#include "halfwalk/model.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <deque>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "halfwalk/errors.hpp"

namespace halfwalk {

namespace {

using json = nlohmann::json;

double parse_prob(const json& node) {
  if (node.is_number()) return node.get<double>();
  if (node.is_string()) {
    const std::string text = node.get<std::string>();
    char* end = nullptr;
    const double v = std::strtod(text.c_str(), &end);
    if (end == text.c_str() || *end != '\0')
      throw ParseError("probability is not a decimal: '" + text + "'");
    return v;
  }
  throw ParseError("probability must be a number or decimal string");
}

LatticeMeasure parse_measure(const json& doc, const char* key, int dim) {
  if (!doc.contains(key) || !doc.at(key).is_array())
    throw ParseError(std::string("missing list '") + key + "'");
  LatticeMeasure m;
  m.dim = dim;
  for (const auto& item : doc.at(key)) {
    if (!item.is_object() || !item.contains("step") || !item.contains("prob"))
      throw ParseError(std::string("atom of '") + key +
                       "' needs 'step' and 'prob'");
    const auto& s = item.at("step");
    if (!s.is_array()) throw ParseError("'step' must be a list of integers");
    Atom a;
    for (const auto& c : s) {
      if (!c.is_number_integer())
        throw ParseError("'step' must be a list of integers");
      a.step.push_back(c.get<int>());
    }
    if (static_cast<int>(a.step.size()) != dim)
      throw ValidationError(std::string("dimension mismatch in '") + key +
                            "': step " + to_string(a.step) + " vs dimension " +
                            std::to_string(dim));
    a.weight = parse_prob(item.at("prob"));
    m.atoms.push_back(std::move(a));
  }
  return m;
}

void validate_measure(const LatticeMeasure& m, const char* name) {
  if (m.dim < 2) throw ValidationError("dimension must be at least 2");
  if (m.atoms.empty())
    throw ValidationError(std::string(name) + " has no atoms");
  std::set<LatticeVector> seen;
  double total = 0.0;
  for (const auto& a : m.atoms) {
    if (static_cast<int>(a.step.size()) != m.dim)
      throw ValidationError(std::string("dimension mismatch in ") + name);
    if (!(a.weight > 0.0) || a.weight > 1.0)
      throw ValidationError(std::string(name) + " weight outside (0,1] at " +
                            to_string(a.step));
    if (!seen.insert(a.step).second)
      throw ValidationError(std::string(name) + " repeats support vector " +
                            to_string(a.step));
    total += a.weight;
  }
  if (std::abs(total - 1.0) > kWeightSumTol) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%s weights sum to %.17g, not 1", name,
                  total);
    throw ValidationError(buf);
  }
}

int last(const LatticeVector& v) { return v.back(); }

// Reachability inside the window [-R,R]^{d-1} x [lo_y,R].
class Window {
 public:
  Window(int dim, int radius, int lo_y) : dim_(dim), r_(radius), lo_y_(lo_y) {
    side_ = 2 * r_ + 1;
    size_ = 1;
    for (int k = 0; k + 1 < dim_; ++k) size_ *= side_;
    size_ *= (r_ - lo_y_ + 1);
  }

  bool contains(const LatticeVector& z) const {
    for (int k = 0; k + 1 < dim_; ++k)
      if (z[k] < -r_ || z[k] > r_) return false;
    return z.back() >= lo_y_ && z.back() <= r_;
  }

  std::size_t index(const LatticeVector& z) const {
    std::size_t idx = static_cast<std::size_t>(z.back() - lo_y_);
    for (int k = 0; k + 1 < dim_; ++k)
      idx = idx * side_ + static_cast<std::size_t>(z[k] + r_);
    return idx;
  }

  std::size_t size() const { return size_; }

 private:
  int dim_, r_, lo_y_;
  std::size_t side_ = 0, size_ = 0;
};

struct Reach {
  std::vector<char> seen;
  bool leaked = false;  // some step left the window
};

// Breadth-first search; `interior_only` kills the walk on the boundary row.
Reach bfs(const WalkModel& model, const LatticeVector& start, int radius,
          bool interior_only) {
  const int lo_y = interior_only ? 1 : 0;
  Window win(model.dim, radius, lo_y);
  Reach out;
  out.seen.assign(win.size(), 0);
  std::deque<LatticeVector> queue;
  out.seen[win.index(start)] = 1;
  queue.push_back(start);
  LatticeVector next(model.dim);
  while (!queue.empty()) {
    LatticeVector z = std::move(queue.front());
    queue.pop_front();
    const auto& atoms = (last(z) == 0) ? model.mu0.atoms : model.mu.atoms;
    for (const auto& a : atoms) {
      for (int k = 0; k < model.dim; ++k) next[k] = z[k] + a.step[k];
      if (next.back() < lo_y) continue;
      if (!win.contains(next)) {
        out.leaked = true;
        continue;
      }
      const auto idx = win.index(next);
      if (!out.seen[idx]) {
        out.seen[idx] = 1;
        queue.push_back(next);
      }
    }
  }
  return out;
}

long long gcd_ll(long long a, long long b) {
  a = std::llabs(a);
  b = std::llabs(b);
  while (b) {
    const long long t = a % b;
    a = b;
    b = t;
  }
  return a;
}

// Row-reduce integer vectors to echelon form; returns |det| of the
// generated lattice if it has full rank, 0 otherwise.
long long lattice_index(std::vector<std::vector<long long>> rows, int dim) {
  long long det = 1;
  std::size_t r0 = 0;
  for (int col = 0; col < dim; ++col) {
    // Euclid on column `col` among rows r0..end until one nonzero remains.
    while (true) {
      std::size_t piv = rows.size();
      for (std::size_t i = r0; i < rows.size(); ++i)
        if (rows[i][col] != 0 &&
            (piv == rows.size() ||
             std::llabs(rows[i][col]) < std::llabs(rows[piv][col])))
          piv = i;
      if (piv == rows.size()) return 0;
      std::swap(rows[r0], rows[piv]);
      bool done = true;
      for (std::size_t i = r0 + 1; i < rows.size(); ++i) {
        if (rows[i][col] == 0) continue;
        const long long f = rows[i][col] / rows[r0][col];
        for (int k = 0; k < dim; ++k) rows[i][k] -= f * rows[r0][k];
        if (rows[i][col] != 0) done = false;
      }
      if (done) break;
    }
    det *= std::llabs(rows[r0][col]);
    ++r0;
  }
  return det;
}

// Integer determinant by fraction-free elimination (small matrices).
long long det_int(std::vector<std::vector<long long>> m) {
  const int n = static_cast<int>(m.size());
  long long sign = 1, prev = 1;
  for (int k = 0; k < n - 1; ++k) {
    if (m[k][k] == 0) {
      int p = k + 1;
      while (p < n && m[p][k] == 0) ++p;
      if (p == n) return 0;
      std::swap(m[k], m[p]);
      sign = -sign;
    }
    for (int i = k + 1; i < n; ++i)
      for (int j = k + 1; j < n; ++j)
        m[i][j] = (m[i][j] * m[k][k] - m[i][k] * m[k][j]) / prev;
    prev = m[k][k];
  }
  return sign * m[n - 1][n - 1];
}

// True if every support vector lies in a closed half-space through 0.
bool in_closed_halfspace(const std::vector<LatticeVector>& pts, int dim) {
  const int n = static_cast<int>(pts.size());
  std::vector<int> pick(dim - 1);
  // Normals of hyperplanes spanned by d-1 support vectors are the extreme
  // rays of the dual cone when the support spans R^d.
  std::vector<bool> mask(n, false);
  std::fill(mask.begin(), mask.begin() + std::min(n, dim - 1), true);
  if (n < dim - 1) return true;
  do {
    int c = 0;
    for (int i = 0; i < n; ++i)
      if (mask[i]) pick[c++] = i;
    std::vector<long long> normal(dim);
    for (int j = 0; j < dim; ++j) {
      std::vector<std::vector<long long>> minor;
      for (int r = 0; r < dim - 1; ++r) {
        std::vector<long long> row;
        for (int k = 0; k < dim; ++k)
          if (k != j) row.push_back(pts[pick[r]][k]);
        minor.push_back(row);
      }
      const long long det = (dim == 2) ? minor[0][0] : det_int(minor);
      normal[j] = ((j % 2) ? -1 : 1) * det;
    }
    if (std::all_of(normal.begin(), normal.end(),
                    [](long long v) { return v == 0; }))
      continue;
    bool all_ge = true, all_le = true;
    for (const auto& p : pts) {
      long long dot = 0;
      for (int k = 0; k < dim; ++k) dot += normal[k] * p[k];
      if (dot < 0) all_ge = false;
      if (dot > 0) all_le = false;
    }
    if (all_ge || all_le) return true;
  } while (std::prev_permutation(mask.begin(), mask.end()));
  return false;
}

}  // namespace

const char* to_string(Status s) {
  switch (s) {
    case Status::pass:
      return "pass";
    case Status::fail:
      return "fail";
    case Status::inconclusive:
      return "inconclusive";
  }
  return "?";
}

Vec LatticeMeasure::mean() const {
  Vec m = Vec::Zero(dim);
  for (const auto& a : atoms)
    for (int k = 0; k < dim; ++k) m[k] += a.weight * a.step[k];
  return m;
}

int LatticeMeasure::max_step_norm() const {
  int best = 0;
  for (const auto& a : atoms)
    for (int c : a.step) best = std::max(best, std::abs(c));
  return best;
}

bool HypothesisReport::all_pass() const {
  for (const auto* h : {&h0, &h1, &h2, &h3, &h4})
    if (h->status != Status::pass) return false;
  return true;
}

std::string WalkModel::canonical() const {
  std::ostringstream os;
  os << "d=" << dim;
  auto dump = [&os](const char* name, const LatticeMeasure& m) {
    std::vector<Atom> atoms = m.atoms;
    std::sort(atoms.begin(), atoms.end(),
              [](const Atom& a, const Atom& b) { return a.step < b.step; });
    os << ";" << name << "=";
    for (const auto& a : atoms) {
      char buf[40];
      std::snprintf(buf, sizeof buf, "%.17g", a.weight);
      os << to_string(a.step) << ":" << buf << ",";
    }
  };
  dump("mu", mu);
  dump("mu0", mu0);
  return os.str();
}

std::uint64_t WalkModel::hash() const {
  // FNV-1a, 64 bit.
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : canonical()) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string WalkModel::hash_hex() const {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(hash()));
  return buf;
}

int default_window_radius(const WalkModel& model) {
  const int s =
      std::max(model.mu.max_step_norm(), model.mu0.max_step_norm());
  return std::max(8, 4 * s);
}

HypothesisCheck check_h0(const WalkModel& model) {
  for (const auto& a : model.mu.atoms)
    if (last(a.step) < -1)
      return {Status::fail, "mu atom " + to_string(a.step) +
                                " jumps down by more than one level"};
  for (const auto& a : model.mu0.atoms)
    if (last(a.step) < 0)
      return {Status::fail,
              "mu0 atom " + to_string(a.step) + " points below the boundary"};
  return {Status::pass, "mu steps have y >= -1, mu0 steps have y >= 0"};
}

IrreducibilityReport check_irreducibility(const WalkModel& model,
                                          int window_radius) {
  const int d = model.dim;
  const int smax = std::max(model.mu.max_step_norm(), model.mu0.max_step_norm());
  if (window_radius < smax || window_radius < 2)
    throw DomainError("window radius " + std::to_string(window_radius) +
                      " is smaller than the step size " + std::to_string(smax));

  IrreducibilityReport rep;

  // H1
  if (model.mu.atoms.size() == 1 || model.mu0.atoms.size() == 1) {
    rep.h1 = {Status::fail, "single-atom measure cannot be irreducible"};
  } else {
    const int R = window_radius;
    Window full(d, R, 0);
    Window inner(d, R, 1);
    LatticeVector origin(d, 0);
    const Reach fwd = bfs(model, origin, R, false);

    std::vector<std::string> missing;
    bool closed_fail = false;
    for (int k = 0; k + 1 < d; ++k) {
      for (int s : {1, -1}) {
        LatticeVector e(d, 0);
        e[k] = s;
        if (!fwd.seen[full.index(e)]) missing.push_back(to_string(e));
      }
    }
    bool level1 = false;
    for (std::size_t i = 0; i < fwd.seen.size() && !level1; ++i) {
      // Index order puts level y in a contiguous block.
      const std::size_t per_level = full.size() / (R + 1);
      if (fwd.seen[i] && i / per_level == 1) level1 = true;
    }
    if (!level1) missing.push_back("level 1");
    if (!missing.empty() && !fwd.leaked) closed_fail = true;

    LatticeVector one(d, 0);
    one.back() = 1;
    const Reach up = bfs(model, one, R, true);
    bool level2 = false;
    {
      const std::size_t per_level = inner.size() / R;
      for (std::size_t i = 0; i < up.seen.size() && !level2; ++i)
        if (up.seen[i] && i / per_level == 1) level2 = true;
    }
    if (!level2) {
      missing.push_back("level 2 from level 1 without touching the boundary");
      if (!up.leaked) closed_fail = true;
    }
    const bool down = std::any_of(model.mu.atoms.begin(), model.mu.atoms.end(),
                                  [](const Atom& a) { return last(a.step) < 0; });
    if (!down) {
      missing.push_back("a downward interior step");
      closed_fail = true;
    }

    if (missing.empty()) {
      rep.h1 = {Status::pass, "boundary row connected through +-e_i, every "
                              "level reachable and every level drains to 0"};
    } else {
      std::string what = "not reached within window R=" + std::to_string(R) +
                         ":";
      for (const auto& m : missing) what += " " + m + ";";
      rep.h1 = {closed_fail ? Status::fail : Status::inconclusive, what};
    }
  }

  // H2
  std::vector<std::string> problems;
  std::vector<std::vector<long long>> rows;
  std::vector<LatticeVector> pts;
  for (const auto& a : model.mu.atoms) {
    rows.emplace_back(a.step.begin(), a.step.end());
    pts.push_back(a.step);
  }
  const long long index = lattice_index(rows, d);
  if (index != 1) {
    problems.push_back(index == 0
                           ? "support of mu does not span R^d"
                           : "support of mu generates a sublattice of index " +
                                 std::to_string(index));
  } else if (in_closed_halfspace(pts, d)) {
    problems.push_back("support of mu lies in a closed half-space");
  }
  long long g = 0, gdiff = 0;
  int ymin = 0, ymax = 0;
  const int y0 = last(model.mu.atoms.front().step);
  for (const auto& a : model.mu.atoms) {
    const int y = last(a.step);
    g = gcd_ll(g, y);
    gdiff = gcd_ll(gdiff, y - y0);
    ymin = std::min(ymin, y);
    ymax = std::max(ymax, y);
  }
  if (g != 1 || ymin >= 0 || ymax <= 0)
    problems.push_back("last coordinate not irreducible on Z (gcd " +
                       std::to_string(g) + ")");
  if (gdiff != 1)
    problems.push_back("last coordinate periodic with period " +
                       std::to_string(gdiff));
  if (problems.empty()) {
    rep.h2 = {Status::pass, "mu generates Z^d, positive hull is R^d, last "
                            "coordinate aperiodic"};
  } else {
    std::string what;
    for (const auto& p : problems) what += (what.empty() ? "" : "; ") + p;
    rep.h2 = {Status::fail, what};
  }
  return rep;
}

HypothesisCheck check_h3(const Vec& m, const Vec& m0) {
  const double nm = m.norm();
  if (nm <= kMeanTol) return {Status::fail, "interior drift m is zero"};
  const double nm0 = m0.norm();
  if (nm0 <= kMeanTol) return {Status::fail, "boundary drift m0 is zero"};
  const Vec s = m / nm + m0 / nm0;
  if (s.norm() <= kMeanTol)
    return {Status::fail, "m/|m| + m0/|m0| vanishes"};
  return {Status::pass, "m != 0 and m/|m| + m0/|m0| != 0"};
}

HypothesisCheck check_h3(const WalkModel& model) {
  return check_h3(model.mu.mean(), model.mu0.mean());
}

WalkModel make_model(LatticeMeasure mu, LatticeMeasure mu0,
                     int window_radius) {
  if (mu.dim != mu0.dim)
    throw ValidationError("dimension mismatch between mu and mu0");
  validate_measure(mu, "mu");
  validate_measure(mu0, "mu0");
  WalkModel model;
  model.dim = mu.dim;
  model.mu = std::move(mu);
  model.mu0 = std::move(mu0);
  model.window_radius =
      window_radius > 0 ? window_radius : default_window_radius(model);
  auto& rep = model.report;
  rep.m = model.mu.mean();
  rep.m0 = model.mu0.mean();
  rep.h0 = check_h0(model);
  auto irr = check_irreducibility(model, model.window_radius);
  rep.h1 = irr.h1;
  rep.h2 = irr.h2;
  rep.h3 = check_h3(rep.m, rep.m0);
  rep.h4 = {Status::pass, "finite support"};
  return model;
}

WalkModel load_model(const std::string& document, int window_radius) {
  json doc;
  try {
    doc = json::parse(document);
  } catch (const json::exception& e) {
    throw ParseError(std::string("model document: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("dimension") ||
      !doc.at("dimension").is_number_integer())
    throw ParseError("model document needs an integer 'dimension'");
  const int dim = doc.at("dimension").get<int>();
  if (dim < 2) throw ValidationError("dimension must be at least 2");
  return make_model(parse_measure(doc, "mu", dim),
                    parse_measure(doc, "mu0", dim), window_radius);
}

WalkModel load_model_file(const std::string& path, int window_radius) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open model file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return load_model(ss.str(), window_radius);
}

TransitionRow transition_row(const WalkModel& model, const LatticeVector& z) {
  if (static_cast<int>(z.size()) != model.dim)
    throw DomainError("site " + to_string(z) + " has the wrong dimension");
  if (z.back() < 0)
    throw DomainError("site " + to_string(z) + " is below the half-space");
  const auto& atoms = (z.back() == 0) ? model.mu0.atoms : model.mu.atoms;
  TransitionRow row;
  row.reserve(atoms.size());
  for (const auto& a : atoms) {
    LatticeVector t(z);
    for (int k = 0; k < model.dim; ++k) t[k] += a.step[k];
    if (t.back() < 0)
      throw DomainError("step " + to_string(a.step) + " from " + to_string(z) +
                        " leaves the half-space (H0 violated)");
    row.emplace_back(std::move(t), a.weight);
  }
  return row;
}

void require_accepted(const WalkModel& model) {
  if (model.report.all_pass()) return;
  std::string what = "model not accepted:";
  const char* names[] = {"H0", "H1", "H2", "H3", "H4"};
  const HypothesisCheck* hs[] = {&model.report.h0, &model.report.h1,
                                 &model.report.h2, &model.report.h3,
                                 &model.report.h4};
  for (int i = 0; i < 5; ++i)
    if (hs[i]->status != Status::pass)
      what += std::string(" ") + names[i] + " " + to_string(hs[i]->status) +
              " (" + hs[i]->detail + ")";
  throw ValidationError(what);
}

std::string to_string(const LatticeVector& z) {
  std::string s = "(";
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(z[i]);
  }
  return s + ")";
}

LatticeVector parse_lattice_vector(const std::string& text) {
  LatticeVector out;
  std::string cleaned;
  for (char c : text)
    if (c != '(' && c != ')' && c != '[' && c != ']' && c != ' ') cleaned += c;
  std::stringstream ss(cleaned);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    char* end = nullptr;
    const long v = std::strtol(tok.c_str(), &end, 10);
    if (tok.empty() || *end != '\0')
      throw ParseError("not an integer vector: '" + text + "'");
    out.push_back(static_cast<int>(v));
  }
  if (out.empty()) throw ParseError("empty vector: '" + text + "'");
  return out;
}

Vec to_vec(const LatticeVector& z) {
  Vec v(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) v[i] = z[i];
  return v;
}

}  // namespace halfwalk
