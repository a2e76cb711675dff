// Copyright 2026 The halfwalk Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

namespace halfwalk {

// Banded I - P for a substochastic P, factored without pivoting. Diagonal
// entries are never formed as 1 - P_ii: each row carries its deficit (the
// mass leaving the system), and pivots are rebuilt from deficits and
// off-diagonal magnitudes. Every solve is then a sum of nonnegative terms.
class BandedMMatrix {
 public:
  BandedMMatrix(std::size_t n, std::size_t bandwidth);

  std::size_t size() const { return n_; }
  std::size_t bandwidth() const { return bw_; }

  // P_ij += p for i != j, |i - j| <= bandwidth.
  void add_transition(std::size_t i, std::size_t j, double p);
  // Mass leaving the system from row i.
  void add_deficit(std::size_t i, double p);

  void factor();
  bool factored() const { return factored_; }

  // Solves (I - P) x = b in place.
  void solve(std::vector<double>& b) const;
  // Solves (I - P)^T x = b in place.
  void solve_transpose(std::vector<double>& b) const;

 private:
  double& at(std::size_t i, std::size_t j) { return a_[i * w_ + (j + bw_ - i)]; }
  double at(std::size_t i, std::size_t j) const {
    return a_[i * w_ + (j + bw_ - i)];
  }

  std::size_t n_, bw_, w_;
  std::vector<double> a_;  // off-diagonals of -P, then L and U
  std::vector<double> deficit_;
  std::vector<double> pivot_;
  bool factored_ = false;
};

}  // namespace halfwalk
