// Copyright 2026 The halfwalk Authors
// SPDX-License-Identifier: Apache-2.0
#include "halfwalk/band_solver.hpp"

#include <algorithm>
#include <cmath>

#include "halfwalk/errors.hpp"

namespace halfwalk {

BandedMMatrix::BandedMMatrix(std::size_t n, std::size_t bandwidth)
    : n_(n), bw_(bandwidth), w_(2 * bandwidth + 1) {
  a_.assign(n_ * w_, 0.0);
  deficit_.assign(n_, 0.0);
  pivot_.assign(n_, 0.0);
}

void BandedMMatrix::add_transition(std::size_t i, std::size_t j, double p) {
  if (i == j) return;
  if ((i > j ? i - j : j - i) > bw_)
    throw NumericalError("transition outside the band");
  at(i, j) -= p;
}

void BandedMMatrix::add_deficit(std::size_t i, double p) { deficit_[i] += p; }

void BandedMMatrix::factor() {
  if (factored_) return;
  for (std::size_t k = 0; k < n_; ++k) {
    const std::size_t jend = std::min(n_ - 1, k + bw_);
    double piv = deficit_[k];
    for (std::size_t j = k + 1; j <= jend; ++j) piv -= at(k, j);
    if (!(piv > 0.0))
      throw NumericalError(
          "singular system: no mass leaves a closed class of the box");
    pivot_[k] = piv;
    double* rowk = &a_[k * w_ + bw_];  // rowk[j - k]
    for (std::size_t i = k + 1; i <= jend; ++i) {
      double& aik = at(i, k);
      if (aik == 0.0) continue;
      const double l = aik / piv;
      aik = l;
      deficit_[i] -= l * deficit_[k];
      double* rowi = &a_[i * w_ + bw_ - i + k];  // rowi[j - k]
      for (std::size_t t = 1; t <= jend - k; ++t) rowi[t] -= l * rowk[t];
    }
  }
  // The j == i updates above landed in the unused diagonal slots.
  factored_ = true;
}

void BandedMMatrix::solve(std::vector<double>& b) const {
  if (!factored_) throw NumericalError("solve before factor");
  for (std::size_t i = 0; i < n_; ++i) {
    const std::size_t k0 = i > bw_ ? i - bw_ : 0;
    double s = b[i];
    for (std::size_t k = k0; k < i; ++k) s -= at(i, k) * b[k];
    b[i] = s;
  }
  for (std::size_t k = n_; k-- > 0;) {
    const std::size_t jend = std::min(n_ - 1, k + bw_);
    double s = b[k];
    for (std::size_t j = k + 1; j <= jend; ++j) s -= at(k, j) * b[j];
    b[k] = s / pivot_[k];
  }
}

void BandedMMatrix::solve_transpose(std::vector<double>& b) const {
  if (!factored_) throw NumericalError("solve before factor");
  for (std::size_t k = 0; k < n_; ++k) {
    const std::size_t j0 = k > bw_ ? k - bw_ : 0;
    double s = b[k];
    for (std::size_t j = j0; j < k; ++j) s -= at(j, k) * b[j];
    b[k] = s / pivot_[k];
  }
  for (std::size_t k = n_; k-- > 0;) {
    const std::size_t iend = std::min(n_ - 1, k + bw_);
    double s = b[k];
    for (std::size_t i = k + 1; i <= iend; ++i) s -= at(i, k) * b[i];
    b[k] = s;
  }
}

}  // namespace halfwalk
