// Copyright 2026 The halfwalk Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "halfwalk/model.hpp"

namespace halfwalk {

// Exponential tilt a = (alpha, beta); beta is the last coordinate.
using DualPoint = Vec;

inline double beta_of(const DualPoint& a) { return a[a.size() - 1]; }
inline Vec alpha_of(const DualPoint& a) { return a.head(a.size() - 1); }
DualPoint join(const Vec& alpha, double beta);

enum class Which { interior, boundary };

struct GenFuncValue {
  double value = 0.0;
  Vec gradient;
  Mat hessian;
};

inline constexpr double kExponentGuard = 700.0;
inline constexpr double kTolRoot = 1e-12;
inline constexpr double kTolArg = 1e-10;

const LatticeMeasure& measure(const WalkModel& model, Which which);

GenFuncValue phi(const WalkModel& model, const DualPoint& a, Which which);
double phi_value(const WalkModel& model, const DualPoint& a, Which which);
// Derivative in the last coordinate.
double phi_dbeta(const WalkModel& model, const DualPoint& a, Which which);
Vec phi_gradient(const WalkModel& model, const DualPoint& a, Which which);

// Minimizer of beta -> phi(alpha, beta).
double beta_minimizer(const WalkModel& model, const Vec& alpha);
// Lower (bar) and upper roots of phi(alpha, .) = 1.
double beta_bar(const WalkModel& model, const Vec& alpha);
double beta_plus(const WalkModel& model, const Vec& alpha);
DualPoint bar_a(const WalkModel& model, const DualPoint& a);
DualPoint plus_a(const WalkModel& model, const Vec& alpha);
// inf over beta of phi(alpha, beta).
double min_phi_over_beta(const WalkModel& model, const Vec& alpha);

double spectral_radius_lambda(const WalkModel& model, const Vec& alpha);
// The beta attaining the infimum in spectral_radius_lambda.
double spectral_radius_argmin(const WalkModel& model, const Vec& alpha);

// Cholesky-style check that a symmetric matrix is positive definite.
bool is_positive_definite(const Mat& m);

}  // namespace halfwalk
