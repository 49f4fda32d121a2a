#include <cmath>
#include <numbers>
#include <vector>

#include "doctest.h"

#include "conestable/conditioning.hpp"
#include "conestable/harmonic.hpp"

using namespace conestable;

namespace {
const ConeSpec kHalf2 = ConeSpec::half_space(Direction{0.0, 1.0});
}

TEST_CASE("closed-form harmonic functions") {
  const double alpha = 1.5;
  const auto M = HarmonicFunction::exact_for(kHalf2, alpha);
  CHECK(M.beta() == doctest::Approx(0.75));
  CHECK(M(Point{0.3, 2.0}) == doctest::Approx(std::pow(2.0, 0.75)).epsilon(1e-14));
  CHECK(M(Point{0.3, -2.0}) == 0.0);
  CHECK(M(Point{5.0, 0.0}) == 0.0);

  const auto cap = ConeSpec::circular(Direction{0.0, 1.0}, std::numbers::pi / 2);
  const auto Mc = HarmonicFunction::exact_for(cap, alpha);
  for (const Point& x : {Point{0.2, 0.7}, Point{-1.0, 0.1}, Point{3.0, 4.0}}) CHECK(Mc(x) == doctest::Approx(M(x)));

  const auto P = HarmonicFunction::exact_for(ConeSpec::punctured(3), alpha);
  CHECK(P.beta() == 0.0);
  CHECK(P(Point{0.1, -2.0, 7.0}) == 1.0);
  CHECK(P(Point{0.0, 0.0, 0.0}) == 0.0);

  CHECK_THROWS_AS(HarmonicFunction::exact_for(ConeSpec::circular(Direction{0.0, 1.0}, 1.0), alpha), DomainError);
}

TEST_CASE("tabulated harmonic functions are homogeneous and vanish off the cone") {
  const auto cone = ConeSpec::circular(Direction{0.0, 1.0}, 1.0);
  const auto M = HarmonicFunction::tabulated(cone, 0.6, {0.0, 0.5, 0.9}, {1.0, 0.8, 0.3});
  const Point x{0.3, 0.8};
  for (double c : {0.1, 2.0, 17.0}) CHECK(M(x * c) == doctest::Approx(std::pow(c, 0.6) * M(x)).epsilon(1e-12));
  CHECK(M(Point{1.0, 0.1}) == 0.0);
  CHECK(M.angular(1.0) == doctest::Approx(0.0));
  CHECK(M.angular(0.25) == doctest::Approx(0.9));
  CHECK(M.scaled(3.0)(x) == doctest::Approx(3.0 * M(x)));
  CHECK_THROWS_AS(HarmonicFunction::tabulated(cone, 0.6, {0.0, 1.2}, {1.0, 0.5}), DomainError);
  CHECK_THROWS_AS(M.scaled(0.0), DomainError);
}

TEST_CASE("harmonic estimate gauge change rescales values and the constant") {
  HarmonicEstimate e;
  e.beta = 0.5;
  e.eta = {0.0, 0.4, 0.8};
  e.m_hat = {1.0, 0.5, 0.25};
  e.m_se = {0.1, 0.05, 0.02};
  e.C_hat = 2.0;
  e.C_se = 0.2;
  const auto g = e.renormalised_at(1);
  CHECK(g.m_hat[1] == 1.0);
  CHECK(g.m_hat[0] == 2.0);
  CHECK(g.m_se[2] == doctest::Approx(0.04));
  // Survival C M(x) is gauge invariant.
  CHECK(g.C_hat * g.m_hat[0] == doctest::Approx(e.C_hat * e.m_hat[0]));
  e.m_hat[2] = 0.0;
  CHECK_THROWS_AS(e.renormalised_at(2), EstimationError);
}

TEST_CASE("beta estimate recovers an exact power law") {
  SurvivalCurve c;
  c.times = {1, 2, 4, 8, 16};
  c.N = 100000;
  for (double t : c.times) {
    c.p_hat.push_back(0.8 * std::pow(t, -0.5));
    c.se.push_back(0.001);
  }
  const auto b = estimate_beta(c, 1.5, 1, 16);
  CHECK(b.beta == doctest::Approx(0.75).epsilon(1e-9));
  CHECK_THROWS(estimate_beta(c, 1.5, 20, 40));
}

TEST_CASE("survival in the punctured space is one and gives beta = 0") {
  const StableParams p(1.5, 2);
  const auto c = estimate_survival(p, ConeSpec::punctured(2), Point{0.0, 1.0}, {1, 2, 4}, 500, 1.0 / 32.0,
                                   RngStream(5, 0), false);
  for (double v : c.p_hat) CHECK(v == 1.0);
  CHECK(estimate_beta(c, 1.5, 1, 4).beta == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("half-space survival decays and the grid overestimates it") {
  const StableParams p(1.5, 2);
  const auto c = estimate_survival(p, kHalf2, Point{0.0, 1.0}, {0.5, 1, 2}, 4000, 1.0 / 64.0, RngStream(6, 0), true);
  CHECK(c.p_hat[0] > c.p_hat[1]);
  CHECK(c.p_hat[1] > c.p_hat[2]);
  for (std::size_t k = 0; k < 3; ++k) CHECK(c.p_2h[k] >= c.p_hat[k]);
  CHECK(c.order >= kMinRichardsonOrder);
  CHECK(c.order <= kMaxRichardsonOrder);
}

TEST_CASE("exact half-space function passes the harmonicity check") {
  const StableParams p(1.5, 2);
  const auto M = HarmonicFunction::exact_for(kHalf2, 1.5);
  const auto r = verify_harmonicity(M, p, kHalf2, Point{0.2, 1.0}, Point{0.0, 1.0}, 0.5, 20000, RngStream(7, 0));
  CHECK(std::fabs(r.residual) < 4.0 * r.se);
  CHECK(r.se > 0.0);
  // A wrong exponent (x_d^{0.2}) is detected.
  std::vector<double> eta, m;
  for (int i = 0; i <= 64; ++i) {
    eta.push_back(std::numbers::pi / 2 * i / 64.0);
    m.push_back(std::pow(std::cos(eta.back()), 0.2));
  }
  const auto W = HarmonicFunction::tabulated(kHalf2, 0.2, eta, m);
  const auto w = verify_harmonicity(W, p, kHalf2, Point{0.0, 1.0}, Point{0.0, 1.0}, 0.9, 20000, RngStream(8, 0));
  CHECK(std::fabs(w.residual) > 4.0 * w.se);
}

// ---------------------------------------------------------------------------

TEST_CASE("weights: killed paths weigh zero, the punctured space weighs one") {
  const StableParams p(1.5, 2);
  RngStream rng(40, 0);
  const auto M = HarmonicFunction::exact_for(kHalf2, 1.5);
  const HFunction H(M, 1.5);
  int killed = 0;
  for (int i = 0; i < 200; ++i) {
    const auto path = simulate_killed_path(p, kHalf2, Point{0.0, 0.05}, 1.0, 1.0 / 64.0, rng);
    if (!path.killed()) continue;
    ++killed;
    CHECK(weight_stay(path, M, 1.0) == 0.0);
    CHECK(weight_absorb(path, H, 1.0) == 0.0);
  }
  CHECK(killed > 0);

  const auto cone = ConeSpec::punctured(2);
  const auto C = HarmonicFunction::exact_for(cone, 1.5);
  const auto path = simulate_killed_path(p, cone, Point{0.0, 1.0}, 2.0, 1.0 / 64.0, rng);
  CHECK(weight_stay(path, C, 2.0) == 1.0);
}

TEST_CASE("stay and absorb weights differ by a power of the radius") {
  const StableParams p(1.5, 2);
  const auto M = HarmonicFunction::exact_for(kHalf2, 1.5);
  const HFunction H(M, 1.5);
  CHECK(H.exponent() == doctest::Approx(1.5 - 0.75 - 2.0));
  CHECK(HFunction(M, 1.5, 0.3).beta() == doctest::Approx(1.05));
  const Point x0{0.2, 1.0};
  RngStream rng(41, 0);
  int alive = 0;
  for (int i = 0; i < 100; ++i) {
    const auto path = simulate_killed_path(p, kHalf2, x0, 0.5, 1.0 / 64.0, rng);
    if (path.killed()) continue;
    ++alive;
    const Point& y = path.positions.back();
    const double ratio = weight_absorb(path, H, 0.5) / weight_stay(path, M, 0.5);
    const double expected = std::pow(y.norm() / x0.norm(), 1.5 - 2.0 * 0.75 - 2.0);
    CHECK(ratio == doctest::Approx(expected).epsilon(1e-12));
  }
  CHECK(alive > 10);
}

TEST_CASE("stay-in-cone mean weight is one and the absorb weight decreases") {
  const StableParams p(1.5, 2);
  const auto M = HarmonicFunction::exact_for(kHalf2, 1.5);
  const auto m = martingale_check(Conditioning::StayInCone, p, kHalf2, M, Point{0.0, 1.0}, {1.0}, 20000,
                                  StepPolicy::relative(1.0 / 32.0), RngStream(42, 0));
  CHECK(std::fabs(m.extrapolated[0] - 1.0) < 4.0 * m.extrapolated_se[0]);
  const auto e = conditioned_ensemble(Conditioning::AbsorbAtApex, p, kHalf2, M, Point{0.0, 1.0}, {0.25, 1.0, 4.0},
                                      4000, StepPolicy::relative(1.0 / 32.0), RngStream(43, 0));
  CHECK(e.mean_weight(0).mean > e.mean_weight(1).mean);
  CHECK(e.mean_weight(1).mean > e.mean_weight(2).mean);
}

TEST_CASE("systematic resampling keeps every count within one of its share") {
  const std::vector<double> w{0.1, 2.0, 0.0, 0.7, 1.2};
  const double total = 4.0;
  for (double u : {0.01, 0.5, 0.99}) {
    const auto idx = systematic_resample(w, u);
    CHECK(idx.size() == w.size());
    std::vector<int> counts(w.size());
    for (auto i : idx) ++counts[i];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double share = w.size() * w[i] / total;
      CHECK(counts[i] >= std::floor(share));
      CHECK(counts[i] <= std::ceil(share));
    }
    CHECK(counts[2] == 0);
  }
}

TEST_CASE("entrance collapse of a population with itself is exactly zero") {
  const StableParams p(1.5, 2);
  const auto M = HarmonicFunction::exact_for(kHalf2, 1.5);
  CollapseBins bins;
  bins.radial_edges = {0.25, 0.5, 1.0, 2.0, 4.0};
  bins.angle_edges = {0.0, 0.8, std::numbers::pi / 2};
  const auto r = entrance_density_collapse(p, kHalf2, M, 1.0, 1.0, bins, 0.1, Point{0.0, 1.0}, 400, 5,
                                           StepPolicy::relative(1.0 / 16.0), RngStream(44, 0));
  CHECK(r.statistic == 0.0);
}
