// Copyright 2026 The halfwalk Authors
// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <random>

#include "halfwalk/errors.hpp"
#include "halfwalk/genfunc.hpp"
#include "support.hpp"

using namespace halfwalk;
using namespace halfwalk::testing;

TEST_SUITE("genfunc") {
  TEST_CASE("closed form values on the reference model") {
    const WalkModel m = model_named("reference");
    const Vec a = vec2(0.3, -0.2);
    const double want = .25 * std::exp(.3) + .15 * std::exp(-.3) +
                        .2 * std::exp(-.2) + .4 * std::exp(.2);
    CHECK(phi_value(m, a, Which::interior) == doctest::Approx(want).epsilon(1e-15));
    const double want0 = .5 * std::exp(.3) + .2 * std::exp(-.3) + .3 * std::exp(-.2);
    CHECK(phi_value(m, a, Which::boundary) == doctest::Approx(want0).epsilon(1e-15));
    CHECK(phi_value(m, vec2(0, 0), Which::interior) == doctest::Approx(1.0));
  }

  TEST_CASE("roots of phi(0, .) = 1 are 0 and log 2") {
    // .2 y + .4 / y = .6 has roots y = 1 and y = 2.
    const WalkModel m = model_named("reference");
    Vec alpha(1);
    alpha << 0.0;
    CHECK(std::abs(beta_bar(m, alpha)) < 1e-12);
    CHECK(beta_plus(m, alpha) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(beta_minimizer(m, alpha) == doctest::Approx(0.5 * std::log(2.0)).epsilon(1e-12));
    CHECK(min_phi_over_beta(m, alpha) ==
          doctest::Approx(0.4 + 2 * std::sqrt(0.08)).epsilon(1e-12));
  }

  TEST_CASE("gradient and hessian match finite differences") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (const char* name : {"reference", "d3"}) {
      const WalkModel m = model_named(name);
      for (int trial = 0; trial < 20; ++trial) {
        Vec a(m.dim);
        for (int k = 0; k < m.dim; ++k) a[k] = u(rng);
        for (Which w : {Which::interior, Which::boundary}) {
          const GenFuncValue f = phi(m, a, w);
          const double h = 1e-6;
          for (int k = 0; k < m.dim; ++k) {
            Vec e = Vec::Zero(m.dim);
            e[k] = h;
            const double fd = (phi_value(m, a + e, w) - phi_value(m, a - e, w)) / (2 * h);
            CHECK(f.gradient[k] == doctest::Approx(fd).epsilon(1e-7));
            const Vec gd = (phi_gradient(m, a + e, w) - phi_gradient(m, a - e, w)) / (2 * h);
            for (int j = 0; j < m.dim; ++j)
              CHECK(f.hessian(j, k) == doctest::Approx(gd[j]).epsilon(1e-6));
          }
          CHECK(phi_dbeta(m, a, w) == doctest::Approx(f.gradient[m.dim - 1]));
        }
      }
    }
  }

  TEST_CASE("phi is convex along random segments") {
    const WalkModel m = model_named("reference");
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int trial = 0; trial < 200; ++trial) {
      const Vec a = vec2(u(rng), u(rng)), b = vec2(u(rng), u(rng));
      const double t = 0.5 * (u(rng) + 2.0) / 2.0;
      const double mid = phi_value(m, t * a + (1 - t) * b, Which::interior);
      CHECK(mid <= t * phi_value(m, a, Which::interior) +
                       (1 - t) * phi_value(m, b, Which::interior) + 1e-14);
    }
    CHECK(is_positive_definite(phi(m, vec2(0.1, 0.2), Which::interior).hessian));
  }

  TEST_CASE("bar_a is idempotent and lands on phi = 1") {
    const WalkModel m = model_named("reference");
    for (double alpha : {-0.7, -0.3, 0.0, 0.1, 0.2}) {
      Vec al(1);
      al << alpha;
      const DualPoint top = plus_a(m, al);
      const DualPoint b = bar_a(m, top);
      CHECK(phi_value(m, b, Which::interior) == doctest::Approx(1.0).epsilon(1e-11));
      CHECK((bar_a(m, b) - b).norm() < 1e-12);
      CHECK(beta_of(b) <= beta_of(top) + 1e-12);
      CHECK(phi_dbeta(m, b, Which::interior) <= 1e-9);
      CHECK(phi_dbeta(m, top, Which::interior) >= -1e-9);
    }
  }

  TEST_CASE("outside the projection of D there is no root") {
    const WalkModel m = model_named("reference");
    Vec al(1);
    al << 2.0;
    CHECK_THROWS_AS(beta_bar(m, al), DomainError);
  }

  TEST_CASE("spectral radius sign matches phi0 at a_bar") {
    const WalkModel m = model_named("reference");
    for (double alpha = -0.74; alpha <= 0.23; alpha += 0.05) {
      Vec al(1);
      al << alpha;
      const double p0 = phi_value(m, bar_a(m, plus_a(m, al)), Which::boundary);
      const double lam = spectral_radius_lambda(m, al);
      CAPTURE(alpha);
      if (p0 < 1.0 - 1e-6) CHECK(lam < 0.0);
      if (p0 > 1.0 + 1e-6) CHECK(lam > 0.0);
    }
  }

  TEST_CASE("huge tilts are range errors") {
    const WalkModel m = model_named("reference");
    CHECK_THROWS_AS(phi_value(m, vec2(800, 0), Which::interior), RangeError);
    CHECK_THROWS_AS(phi_value(m, Vec::Zero(3), Which::interior), DomainError);
  }
}
