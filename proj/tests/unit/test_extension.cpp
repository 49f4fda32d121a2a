#include <cmath>
#include <numbers>
#include <vector>

#include "doctest.h"

#include "conestable/extension.hpp"

using namespace conestable;

namespace {
const ConeSpec kHalf2 = ConeSpec::half_space(Direction{0.0, 1.0});
const StableParams kP(1.5, 2);
constexpr double kBeta = 0.75;
}  // namespace

TEST_CASE("admissibility: half-space examples") {
  const auto apex = check_extension_conditions(1.5, 0.75, 2, ExtensionTarget::ApexConditioned, 0.5);
  CHECK(apex.exists);
  CHECK_FALSE(apex.continuous_allowed);  // needs beta < (2 alpha - d)/2 = 0.5
  CHECK(apex.gamma_hi == doctest::Approx(1.0));
  CHECK(apex.jump_allowed);
  CHECK_FALSE(check_extension_conditions(1.5, 0.75, 2, ExtensionTarget::ApexConditioned, 1.0).jump_allowed);

  const auto g = check_extension_conditions(1.5, 0.75, 2, ExtensionTarget::Gamma, 0.5);
  CHECK(g.continuous_allowed);
  CHECK_FALSE(g.jump_allowed);  // gamma = beta/alpha is excluded
  CHECK(check_extension_conditions(1.5, 0.75, 2, ExtensionTarget::Gamma, 0.49).jump_allowed);
  CHECK_FALSE(check_extension_conditions(1.5, 0.75, 2, ExtensionTarget::Gamma).jump_allowed);

  CHECK(check_extension_conditions(1.75, 0.5, 2, ExtensionTarget::ApexConditioned).continuous_allowed);
  CHECK(check_extension_conditions(1.75, 0.3125, 2, ExtensionTarget::ApexConditioned).gamma_hi == doctest::Approx(0.5));
}

TEST_CASE("admissibility: parameter domain") {
  CHECK_THROWS_AS(check_extension_conditions(2.0, 0.5, 2, ExtensionTarget::Gamma), DomainError);
  CHECK_THROWS_AS(check_extension_conditions(1.5, 0.0, 2, ExtensionTarget::Gamma), DomainError);
  CHECK_THROWS_AS(check_extension_conditions(1.5, 1.5, 2, ExtensionTarget::Gamma), DomainError);
  CHECK_THROWS_AS(check_extension_conditions(1.5, 0.7, 1, ExtensionTarget::Gamma), DomainError);
  const auto j = check_extension_conditions(1.5, 0.75, 2, ExtensionTarget::Gamma, 0.25).to_json();
  CHECK(j.contains("jump_allowed"));
}

TEST_CASE("excursion specs validate their truncation") {
  ExcursionSpec j;
  j.kind = ExtensionKind::Jump;
  j.gamma = 0.5;
  CHECK_THROWS_AS(j.validate(1.5, kBeta), DomainError);
  j.gamma = 0.25;
  CHECK_NOTHROW(j.validate(1.5, kBeta));
  CHECK(j.rate(1.5, kBeta) == doctest::Approx(std::pow(0.1, -0.375) / 0.375));

  ExcursionSpec c;
  c.delta = 0.1;
  c.zeta_min = 0.01;  // delta^alpha = 0.0316 > zeta_min
  CHECK_THROWS_AS(c.validate(1.5, kBeta), DomainError);
  c.delta = 1e-3;
  CHECK_NOTHROW(c.validate(1.5, kBeta));
  CHECK(c.rate(1.5, kBeta) == doctest::Approx(std::pow(0.01, -0.5)));
}

TEST_CASE("occupation bins and compound-Poisson errors") {
  const auto b = OccupationBins::log_spaced(0.1, 10.0, 2, std::numbers::pi / 2, 2);
  CHECK(b.count() == 4);
  CHECK(b.radial_edges[1] == doctest::Approx(1.0));
  CHECK(b.index(kHalf2, Point{0.0, 0.5}) == 0);
  CHECK(b.index(kHalf2, Point{3.0, 0.5}) == 3);
  CHECK(b.index(kHalf2, Point{0.0, 20.0}) == -1);

  OccupationHistogram h(b);
  h.add({1.0, 0.0, 2.0, 0.0});
  h.add({0.0, 3.0, 1.0, 0.0});
  const auto all = h.sum({true, true, true, true});
  CHECK(all.mean == doctest::Approx(7.0));
  CHECK(all.se == doctest::Approx(std::sqrt(9.0 + 16.0)));
  const auto radial = h.radial_mass();
  CHECK(radial[0].mean == doctest::Approx(4.0));
  CHECK(radial[1].mean == doctest::Approx(3.0));
  CHECK(h.window_mass(0.1, 1.0).mean == doctest::Approx(4.0));
}

TEST_CASE("jump extension: start law and structure") {
  ExcursionSpec s;
  s.kind = ExtensionKind::Jump;
  s.gamma = 0.25;
  s.r_min = 0.1;
  const double L = 1500.0 / s.rate(1.5, kBeta);
  const auto g = build_jump_extension(s, kP, kHalf2, kBeta, L, StepPolicy::relative(1.0 / 16.0, 1e300),
                                      RngStream(12, 0), nullptr, true, ExcursionCaps{60.0, 1e4});
  REQUIRE(g.count() > 1200);
  CHECK(g.paths.size() == g.count());
  WeightedSample r;
  double clock = 0.0;
  for (std::size_t k = 0; k < g.count(); ++k) {
    const auto& e = g.excursions[k];
    CHECK(e.start_time == doctest::Approx(clock));
    clock += e.lifetime;
    CHECK(e.start.norm() >= s.r_min);
    CHECK(contains(kHalf2, e.start));
    const auto& path = g.paths[k];
    for (std::size_t j = 0; j <= path.last_alive(); ++j) CHECK(contains(kHalf2, path.positions[j]));
    r.values.push_back(e.start.norm());
  }
  CHECK(g.total_time == doctest::Approx(clock));
  const auto ks = ks_one_sample(r, [](double x) { return x <= 0.1 ? 0.0 : 1.0 - std::pow(x / 0.1, -0.375); });
  CHECK(ks.p_value > 0.01);
  CHECK_THROWS_AS(build_jump_extension(ExcursionSpec{}, kP, kHalf2, kBeta, L, StepPolicy::relative(0.1), RngStream(1, 0)),
                  DomainError);
}

TEST_CASE("continuous extension: every excursion outlives the truncation and starts at delta") {
  ExcursionSpec s;
  s.zeta_min = 1e-2;
  s.delta = 1e-2;
  const auto bins = OccupationBins::log_spaced(0.05, 2.0, 6, std::numbers::pi / 2, 3);
  const auto g = build_continuous_extension(s, kP, kHalf2, kBeta, 300.0 / s.rate(1.5, kBeta),
                                            StepPolicy::relative(1.0 / 16.0, 1e300), RngStream(4, 0), &bins, true);
  REQUIRE(g.count() > 200);
  CHECK(g.acceptance() > kMinAcceptance);
  CHECK(g.acceptance() <= 1.0);
  for (const auto& e : g.excursions) {
    CHECK(e.lifetime >= s.zeta_min);
    CHECK(e.start.norm() == doctest::Approx(s.delta));
  }
  double occupied = 0.0;
  for (double m : g.occupation.mass) {
    CHECK(m >= 0.0);
    occupied += m;
  }
  CHECK(occupied <= g.total_time);
  // The stored paths give the same occupation as the streaming histogram.
  const auto again = occupation_histogram(g, kHalf2, bins);
  for (std::size_t b = 0; b < bins.count(); ++b)
    CHECK(again.mass[b] == doctest::Approx(g.occupation.mass[b]).epsilon(1e-9));
}
