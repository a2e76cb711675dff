// Copyright 2026 The halfwalk Authors
// SPDX-License-Identifier: Apache-2.0
#include "halfwalk/report.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "halfwalk/errors.hpp"
#include "halfwalk/geometry.hpp"
#include "halfwalk/green.hpp"

namespace halfwalk {

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  if (x == 0.0) return "0";
  char buf[40];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

std::string format_vec(const Vec& v) {
  std::string s;
  for (int k = 0; k < v.size(); ++k) {
    if (k) s += ' ';
    s += format_double(v[k]);
  }
  return s;
}

std::string format_site(const LatticeVector& z) {
  std::string s;
  for (std::size_t k = 0; k < z.size(); ++k) {
    if (k) s += ' ';
    s += std::to_string(z[k]);
  }
  return s;
}

std::string csv_quote(const std::string& field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::string Provenance::line() const {
  std::ostringstream os;
  os << "model_hash=" << model_hash << " version=" << version
     << " seed=" << seed;
  for (const auto& [name, value] : tolerances)
    os << ' ' << name << '=' << format_double(value);
  return os.str();
}

Provenance make_provenance(const WalkModel& model, std::uint64_t seed) {
  Provenance p;
  p.model_hash = model.hash_hex();
  p.version = HALFWALK_VERSION;
  p.seed = seed;
  p.tolerances = {{"strat_tol", kStratTol},   {"cone_tol", kConeTol},
                  {"qp_tol", kQpTol},         {"atlas_tol", kAtlasTol},
                  {"prune_mass", kPruneMass}, {"weight_sum_tol", kWeightSumTol}};
  return p;
}

CsvTable::CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

CsvTable& CsvTable::add_row(std::vector<std::string> row) {
  if (row.size() != header_.size())
    throw Error("csv row has " + std::to_string(row.size()) + " fields, expected " +
                std::to_string(header_.size()));
  rows_.push_back(std::move(row));
  return *this;
}

void CsvTable::write(std::ostream& out, const Provenance& prov) const {
  auto emit = [&out](const std::vector<std::string>& r) {
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (i) out << ',';
      out << csv_quote(r[i]);
    }
    out << "\r\n";
  };
  out << "# " << prov.line() << "\r\n";
  emit(header_);
  for (const auto& r : rows_) emit(r);
}

std::string CsvTable::str(const Provenance& prov) const {
  std::ostringstream os;
  write(os, prov);
  return os.str();
}

}  // namespace halfwalk
