// Copyright 2026 The halfwalk Authors
// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "halfwalk/errors.hpp"
#include "halfwalk/geometry.hpp"
#include "support.hpp"

using namespace halfwalk;
using namespace halfwalk::testing;

namespace {

constexpr double kPi = 3.14159265358979323846;

// Reference model by hand: x = e^alpha, y = e^beta.
double side_sum(double x) { return 1.0 - .25 * x - .15 / x; }
double y_root(double x, bool upper) {
  const double s = side_sum(x);
  const double disc = std::sqrt(s * s - 4 * .2 * .4);
  return (s + (upper ? disc : -disc)) / (2 * .2);
}
double boundary_excess(double alpha) {
  const double x = std::exp(alpha);
  return .5 * x + .2 / x + .3 * y_root(x, false) - 1.0;
}

}  // namespace

TEST_SUITE("geometry") {
  TEST_CASE("projection of D and Theta match closed forms") {
    const WalkModel m = model_named("reference");
    Geometry g(m);
    const ThetaInterval& t = g.theta_interval();
    const double c = 1.0 - 2.0 * std::sqrt(0.08);
    const double disc = std::sqrt(c * c - 4 * .25 * .15);
    CHECK(t.proj_lo == doctest::Approx(std::log((c - disc) / .5)).epsilon(1e-10));
    CHECK(t.proj_hi == doctest::Approx(std::log((c + disc) / .5)).epsilon(1e-10));
    // Lower end of Theta: bisection on the hand-written boundary excess.
    double lo = t.proj_lo + 1e-12, hi = -0.1;
    REQUIRE(boundary_excess(lo) > 0.0);
    REQUIRE(boundary_excess(hi) < 0.0);
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      (boundary_excess(mid) > 0 ? lo : hi) = mid;
    }
    CHECK(t.theta_lo == doctest::Approx(lo).epsilon(1e-9));
    CHECK(std::abs(t.theta_hi) < 1e-9);
  }

  TEST_CASE("a_hat at the vertical and horizontal directions") {
    const WalkModel m = model_named("reference");
    Geometry g(m);
    const BoundaryPoint up = g.a_hat(vec2(0, 1));
    const double x = std::sqrt(0.6);
    CHECK(up.a[0] == doctest::Approx(0.5 * std::log(0.6)).epsilon(1e-9));
    CHECK(up.a[1] == doctest::Approx(std::log(y_root(x, true))).epsilon(1e-9));
    CHECK(up.stratum == Stratum::plus);
    CHECK(up.phi0_at_bar < 1.0);

    const BoundaryPoint right = g.a_hat(vec2(1, 0));
    CHECK(std::abs(right.a[0]) < 1e-9);
    CHECK(right.a[1] == doctest::Approx(std::log(2.0)).epsilon(1e-9));
    CHECK(right.phi0_at_bar == doctest::Approx(1.0).epsilon(1e-9));
  }

  TEST_CASE("support function of D against frozen constrained-optimizer values") {
    const WalkModel m = model_named("reference");
    Geometry g(m);
    const std::pair<double, double> oracle[] = {{0.0, 0.23247202255447},
                                                {0.13, 0.27837230976081},
                                                {1.0, 0.5861152018009},
                                                {2.5, 0.87347113710035}};
    for (const auto& [th, want] : oracle) {
      CAPTURE(th);
      const QuasiPotentialResult r = g.support_D(direction(th));
      CHECK(r.value == doctest::Approx(want).epsilon(1e-9));
      CHECK(phi_value(m, r.maximizer, Which::interior) ==
            doctest::Approx(1.0).epsilon(1e-9));
      CHECK_FALSE(r.flagged);
    }
  }

  TEST_CASE("I+ is positively homogeneous and subadditive") {
    const WalkModel m = model_named("reference");
    Geometry g(m);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    const Vec zero = Vec::Zero(2);
    for (int trial = 0; trial < 30; ++trial) {
      const Vec v = vec2(u(rng), u(rng)), w = vec2(u(rng), u(rng));
      const double t = std::abs(u(rng)) + 0.1;
      const double iv = g.quasi_potential_Iplus(zero, v).value;
      CHECK(g.quasi_potential_Iplus(zero, t * v).value ==
            doctest::Approx(t * iv).epsilon(1e-10));
      CHECK(g.quasi_potential_Iplus(zero, v + w).value <=
            iv + g.quasi_potential_Iplus(zero, w).value + 1e-10);
      CHECK(g.quasi_potential_Iplus(w, v + w).value ==
            doctest::Approx(iv).epsilon(1e-10));
    }
  }

  TEST_CASE("quasi-potential decomposition through gamma_q") {
    for (const char* name : {"reference", "fan"}) {
      const WalkModel m = model_named(name);
      Geometry g(m);
      for (int k = 1; k < 20; ++k) {
        const Vec q = direction(kPi * k / 20);
        const QuasiPotentialResult r = g.quasi_potential_I(q);
        REQUIRE(r.decomposition);
        CAPTURE(k);
        CHECK(std::abs(r.value - r.decomposition->first - r.decomposition->second) < 1e-8);
        CHECK(r.value == doctest::Approx(g.a_hat(q).a.dot(q)).epsilon(1e-10));
      }
    }
  }

  TEST_CASE("gamma_q vanishes off the saturated set and rejects boundary q") {
    const WalkModel m = model_named("reference");
    Geometry g(m);
    CHECK(g.gamma_q(vec2(0, 1)).gamma_q.norm() == 0.0);
    const ConeDecomposition cd = g.gamma_q(direction(0.2));
    CHECK(cd.active_phi0);
    CHECK(cd.gamma_q[0] > 0.0);
    CHECK(cd.gamma_q[1] == 0.0);
    CHECK_THROWS_AS(g.gamma_q(vec2(1, 0)), DomainError);
    CHECK_THROWS_AS(g.a_hat(vec2(0, -1)), DomainError);
  }

  TEST_CASE("normal cone certificate and restart uniqueness") {
    const WalkModel m = model_named("reference");
    Geometry g(m);
    for (int k = 0; k <= 12; ++k) {
      const Vec q = direction(kPi * k / 12);
      const BoundaryPoint bp = g.a_hat(q);
      CHECK(fit_cone(g.normal_cone(bp), q).residual < kConeTol);
      AHatOptions o;
      o.method = AHatOptions::Method::barrier;
      for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        o.start = g.random_barrier_start(seed);
        CHECK((g.a_hat(q, o).a - bp.a).norm() < 1e-7);
      }
    }
  }

  TEST_CASE("tangent companion model hits the zero stratum") {
    const WalkModel m = model_named("tangent");
    Geometry g(m);
    const BoundaryPoint bp = g.a_hat(vec2(1, 0));
    CHECK(bp.stratum == Stratum::zero);
    CHECK(bp.phi0_at_bar < 1.0);
    CHECK_FALSE(bp.kappa.has_value());
    CHECK(std::abs(g.theta_interval().theta_lo) < 1e-9);
  }

  TEST_CASE("strata of sampled boundary points") {
    const WalkModel m = model_named("reference");
    Geometry g(m);
    Vec al(1);
    al << -0.2;
    CHECK(g.classify(plus_a(m, al)).stratum == Stratum::plus);
    CHECK(g.classify(bar_a(m, plus_a(m, al))).stratum == Stratum::minus);
    CHECK(g.classify(vec2(0.0, 0.3)).stratum == Stratum::interior);
    CHECK_FALSE(g.classify(vec2(0.0, 0.3)).on_D_boundary);
  }

  TEST_CASE("boundary atlas of the reference model") {
    const WalkModel m = model_named("reference");
    Geometry g(m);
    const Atlas atlas = g.boundary_atlas(181);
    CHECK(atlas.rows.size() == 181);
    REQUIRE(atlas.fans.size() == 2);
    std::vector<double> widths;
    for (const auto& f : atlas.fans) widths.push_back(f.angular_width);
    std::sort(widths.begin(), widths.end());
    CHECK(widths[0] == doctest::Approx(0.5585).epsilon(2e-2));
    CHECK(widths[1] == doctest::Approx(1.0996).epsilon(2e-2));
    CHECK_FALSE(atlas.injective());
  }

  TEST_CASE("i_min on the reference model") {
    const WalkModel m = model_named("reference");
    const IMinResult r = Geometry(m).i_min();
    CHECK(r.value == doctest::Approx(0.7432976463204629).epsilon(1e-10));
    CHECK(r.gamma[0] == doctest::Approx(1.0));
  }

  TEST_CASE("Theta is strictly convex in d = 3") {
    const WalkModel m = model_named("d3");
    Geometry g(m);
    auto edge = [&](double th) {
      Vec u(2);
      u << std::cos(th), std::sin(th);
      double lo = 0.0, hi = 4.0;
      for (int it = 0; it < 80; ++it) {
        const double mid = 0.5 * (lo + hi);
        (g.theta_contains(mid * u) ? lo : hi) = mid;
      }
      return Vec(lo * u);
    };
    std::vector<Vec> rim;
    for (int k = 0; k < 24; ++k) {
      const Vec p = edge(2 * M_PI * k / 24);
      if (p.norm() > 0.05) rim.push_back(p);
    }
    REQUIRE(rim.size() >= 3);
    for (std::size_t i = 0; i + 2 < rim.size(); ++i) {
      const Vec mid = 0.5 * (rim[i] + rim[i + 2]);
      CHECK(spectral_radius_lambda(m, mid) < -1e-6);
    }
  }

  TEST_CASE("optimal path ends at q and costs I(0, q)") {
    const WalkModel m = model_named("reference");
    Geometry g(m);
    const Vec q = direction(0.2);
    const OptimalPath p = g.optimal_path(q, true);
    REQUIRE(p.segments.size() == 2);
    CHECK(p.segments.front().on_boundary);
    CHECK((p.segments.back().to - q).norm() < 1e-12);
    CHECK(p.total_cost == doctest::Approx(g.quasi_potential_I(q).value).epsilon(1e-8));
  }
}
