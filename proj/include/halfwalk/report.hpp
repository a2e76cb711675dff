// Copyright 2026 The halfwalk Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "halfwalk/model.hpp"

namespace halfwalk {

// 17 significant digits; integers are printed without exponent.
std::string format_double(double x);
std::string format_vec(const Vec& v);
std::string format_site(const LatticeVector& z);

// RFC 4180 quoting when the field needs it.
std::string csv_quote(const std::string& field);

struct Provenance {
  std::string model_hash;
  std::string version;
  std::uint64_t seed = 0;
  std::map<std::string, double> tolerances;

  std::string line() const;
};

Provenance make_provenance(const WalkModel& model, std::uint64_t seed);

class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header);

  CsvTable& add_row(std::vector<std::string> row);
  std::size_t rows() const { return rows_.size(); }

  // The provenance line is written first as a comment.
  void write(std::ostream& out, const Provenance& prov) const;
  std::string str(const Provenance& prov) const;

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

}  // namespace halfwalk
