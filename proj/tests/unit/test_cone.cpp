#include <cmath>
#include <numbers>
#include <vector>

#include "doctest.h"

#include "conestable/cone.hpp"
#include "conestable/stats.hpp"

using namespace conestable;
using std::numbers::pi;

namespace {

Point random_point(int d, RngStream& rng, double lo = 1e-3, double hi = 1e3) {
  const double r = std::exp(std::log(lo) + (std::log(hi) - std::log(lo)) * rng.uniform());
  return rng.unit_vector(d) * r;
}

}  // namespace

TEST_CASE("contains: axis, antipode and apex") {
  const auto cone = ConeSpec::circular(Direction(Point::basis(3, 2)), pi / 4);
  CHECK(contains(cone, Point::basis(3, 2)));
  CHECK_FALSE(contains(cone, Point::basis(3, 2) * -1.0));
  CHECK_FALSE(contains(cone, Point(3)));
  CHECK_FALSE(contains(ConeSpec::half_space(Direction{0.0, 1.0}), Point(2)));
  CHECK_FALSE(contains(ConeSpec::punctured(2), Point(2)));
  CHECK_THROWS_AS(contains(cone, Point(2)), GeometryError);
}

TEST_CASE("contains is invariant under dilations") {
  RngStream rng(1, 0);
  const auto cone = ConeSpec::circular(Direction{0.3, -0.2, 1.0}, 1.1);
  for (int i = 0; i < 1000; ++i) {
    const Point x = random_point(3, rng);
    const double c = std::exp(6.0 * (rng.uniform() - 0.5));
    CHECK(contains(cone, x) == contains(cone, x * c));
  }
}

TEST_CASE("half-space agrees with the circular cone of half-angle pi/2") {
  RngStream rng(2, 0);
  const Direction n{0.2, 0.5, -1.0};
  const auto hs = ConeSpec::half_space(n);
  const auto cc = ConeSpec::circular(n, pi / 2);
  for (int i = 0; i < 2000; ++i) {
    const Point x = random_point(3, rng);
    CHECK(contains(hs, x) == contains(cc, x));
  }
}

TEST_CASE("arg normalises and is scale invariant") {
  const Direction u = arg(Point{3.0, 4.0});
  CHECK(u[0] == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(u[1] == doctest::Approx(0.8).epsilon(1e-15));
  const Direction e = arg(Point::basis(4, 1));
  CHECK(e.vec() == Point::basis(4, 1));
  RngStream rng(3, 0);
  for (int i = 0; i < 100; ++i) {
    const Point x = random_point(3, rng);
    const Direction a = arg(x), b = arg(x * 7.3);
    for (int k = 0; k < 3; ++k) CHECK(a[k] == doctest::Approx(b[k]).epsilon(1e-14));
  }
  CHECK_THROWS_AS(arg(Point(2)), GeometryError);
}

TEST_CASE("invert is a cone-preserving involution") {
  const Point y = invert(Point{2.0, 0.0});
  CHECK(y[0] == doctest::Approx(0.5));
  CHECK(y[1] == 0.0);
  CHECK_THROWS_AS(invert(Point(3)), GeometryError);
  RngStream rng(4, 0);
  const auto cone = ConeSpec::circular(Direction{0.0, 0.0, 1.0}, pi / 3);
  for (int i = 0; i < 1000; ++i) {
    const Point x = random_point(3, rng);
    const Point kk = invert(invert(x));
    CHECK(distance(kk, x) <= 1e-12 * x.norm());
    CHECK(invert(x).norm() == doctest::Approx(1.0 / x.norm()).epsilon(1e-12));
    CHECK(contains(cone, x) == contains(cone, invert(x)));
  }
}

TEST_CASE("boundary_distance: closed forms") {
  const auto hs = ConeSpec::half_space(Direction(Point::basis(3, 2)));
  CHECK(boundary_distance(hs, Point{0.0, 0.0, 1.0}) == doctest::Approx(1.0));
  CHECK(boundary_distance(ConeSpec::punctured(2), Point{3.0, 4.0}) == doctest::Approx(5.0));

  const auto cone = ConeSpec::circular(Direction(Point::basis(3, 2)), pi / 4);
  const Point on_surface{std::sin(pi / 4) * 2.0, 0.0, std::cos(pi / 4) * 2.0};
  // A point just inside the surface.
  const Point inside = on_surface * (1.0) + Point{-1e-12, 0.0, 1e-12};
  CHECK(boundary_distance(cone, inside) <= 1e-9);

  CHECK_THROWS_AS(boundary_distance(cone, Point{0.0, 0.0, -1.0}), GeometryError);
  const auto wide = ConeSpec::circular(Direction(Point::basis(3, 2)), 2.0);
  CHECK(contains(wide, Point{1.0, 0.0, 0.0}));
  CHECK_THROWS_AS(boundary_distance(wide, Point{0.0, 0.0, 1.0}), DomainError);
}

TEST_CASE("boundary_distance matches a brute-force nearest boundary point") {
  // Dense mesh over the boundary surface of the cone in the meridian plane
  // (the nearest point lies there by symmetry) plus the apex.
  for (double psi : {pi / 6, pi / 3, pi / 2}) {
    const auto cone = ConeSpec::circular(Direction(Point::basis(2, 1)), psi);
    for (double eta : {0.0, psi / 3, 0.9 * psi}) {
      const double r = 1.7;
      const Point x{r * std::sin(eta), r * std::cos(eta)};
      double best = x.norm();
      for (int side : {-1, 1}) {
        for (int k = 0; k <= 400000; ++k) {
          const double s = 4.0 * k / 400000.0;
          const Point b{side * s * std::sin(psi), s * std::cos(psi)};
          best = std::min(best, distance(x, b));
        }
      }
      const double got = boundary_distance(cone, x);
      CHECK(got <= best + 1e-6);
      CHECK(got == doctest::Approx(best).epsilon(1e-4));
    }
  }
}

TEST_CASE("ball of boundary_distance radius stays inside the cone") {
  RngStream rng(5, 0);
  const auto cone = ConeSpec::circular(Direction{0.0, 0.0, 1.0}, pi / 3);
  for (int trial = 0; trial < 20; ++trial) {
    Point x = surface_sample(cone, rng).vec() * (0.1 + 5.0 * rng.uniform());
    const double r = boundary_distance(cone, x);
    REQUIRE(r > 0.0);
    for (int i = 0; i < 1000; ++i) {
      const double s = r * std::pow(rng.uniform(), 1.0 / 3.0) * (1.0 - 1e-12);
      CHECK(contains(cone, x + rng.unit_vector(3) * s));
    }
  }
}

TEST_CASE("surface_sample: uniform on the full circle") {
  RngStream rng(6, 0);
  const auto cone = ConeSpec::punctured(2);
  const int bins = 20;
  std::vector<double> obs(bins, 0.0), exp(bins, 1e5 / bins);
  for (int i = 0; i < 100000; ++i) {
    const Direction u = surface_sample(cone, rng);
    double a = std::atan2(u[1], u[0]);
    if (a < 0) a += 2 * pi;
    obs[std::min(bins - 1, static_cast<int>(a / (2 * pi) * bins))] += 1.0;
  }
  CHECK(chi_square_gof_p(obs, exp) > 0.01);
}

TEST_CASE("surface_sample: cap support and hemisphere mean height") {
  RngStream rng(7, 0);
  const auto cap = ConeSpec::circular(Direction(Point::basis(3, 2)), pi / 4);
  for (int i = 0; i < 10000; ++i) CHECK(contains(cap, surface_sample(cap, rng).vec()));

  for (int d : {2, 3, 4}) {
    // Quadrature oracle: E[cos eta] under density sin^{d-2}(eta) on [0, pi/2].
    double num = 0.0, den = 0.0;
    const int m = 200000;
    for (int k = 0; k < m; ++k) {
      const double eta = (k + 0.5) * (pi / 2) / m;
      const double w = std::pow(std::sin(eta), d - 2);
      num += std::cos(eta) * w;
      den += w;
    }
    const double truth = num / den;
    const auto hs = ConeSpec::half_space(Direction(Point::basis(d, d - 1)));
    std::vector<double> h;
    for (int i = 0; i < 100000; ++i) h.push_back(surface_sample(hs, rng)[d - 1]);
    const auto m1 = mean_se(h);
    CHECK(std::fabs(m1.mean - truth) < 4.0 * m1.se);
  }
}

TEST_CASE("cone JSON round trip") {
  const auto cone = ConeSpec::circular(Direction{0.0, 0.6, 0.8}, 0.7);
  const auto j = to_json(cone);
  CHECK(j.at("kind") == "circular");
  CHECK(cone_from_json(j) == cone);
  CHECK(cone_from_json(to_json(ConeSpec::punctured(3))) == ConeSpec::punctured(3));
  CHECK_THROWS_AS(ConeSpec::circular(Direction{0.0, 1.0}, 3.5), DomainError);
}
