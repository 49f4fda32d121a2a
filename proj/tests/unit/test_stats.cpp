#include <cmath>
#include <vector>

#include "doctest.h"

#include "conestable/rng.hpp"
#include "conestable/stats.hpp"

using namespace conestable;

TEST_CASE("KS: identical samples and shifted samples") {
  WeightedSample a;
  for (int i = 0; i < 100; ++i) a.values.push_back(i * 0.37);
  const auto same = ks_two_sample(a, a);
  CHECK(same.statistic == 0.0);
  CHECK(same.p_value == 1.0);

  RngStream rng(31, 0);
  WeightedSample u, v;
  for (int i = 0; i < 10000; ++i) {
    u.values.push_back(rng.uniform());
    v.values.push_back(rng.uniform() + 0.1);
  }
  CHECK(ks_two_sample(u, v).p_value < 1e-10);
}

TEST_CASE("KS: rejection rate at 1% is calibrated under the null") {
  RngStream rng(32, 0);
  int rejects = 0;
  for (int rep = 0; rep < 500; ++rep) {
    WeightedSample a, b;
    for (int i = 0; i < 400; ++i) a.values.push_back(rng.normal());
    for (int i = 0; i < 300; ++i) b.values.push_back(rng.normal());
    if (ks_two_sample(a, b).p_value < 0.01) ++rejects;
  }
  CHECK(rejects <= 15);
}

TEST_CASE("KS: weights act like replication") {
  RngStream rng(33, 0);
  WeightedSample a, b;
  // Weight 2 on [0, 0.5) and 1 on [0.5, 1) against the matching piecewise density.
  for (int i = 0; i < 20000; ++i) {
    const double x = rng.uniform();
    a.values.push_back(x);
    a.weights.push_back(x < 0.5 ? 2.0 : 1.0);
    const double y = rng.uniform() < 2.0 / 3.0 ? 0.5 * rng.uniform() : 0.5 + 0.5 * rng.uniform();
    b.values.push_back(y);
  }
  CHECK(ks_two_sample(a, b).p_value > 0.001);
  const auto one = ks_one_sample(b, [](double x) { return x < 0.5 ? 4.0 / 3.0 * x : 2.0 / 3.0 + 2.0 / 3.0 * (x - 0.5); });
  CHECK(one.p_value > 0.001);
}

TEST_CASE("KS: degenerate and undersized input") {
  WeightedSample c, small;
  c.values.assign(50, 1.0);
  small.values = {1.0, 2.0, 3.0};
  CHECK_THROWS_AS(ks_two_sample(c, c), EstimationError);
  CHECK_THROWS_AS(ks_two_sample(small, c), EstimationError);
}

TEST_CASE("log-log fit recovers exact power laws") {
  std::vector<double> x{1, 2, 4, 8, 16}, y;
  for (double t : x) y.push_back(3.0 * std::pow(t, -0.75));
  const auto f = loglog_fit(x, y);
  CHECK(f.slope == doctest::Approx(-0.75).epsilon(1e-12));
  CHECK(std::exp(f.intercept) == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(f.slope_se < 1e-10);
  std::vector<double> bad{1, -2, 4, 8, 16};
  CHECK_THROWS_AS(loglog_fit(x, bad), EstimationError);
}

TEST_CASE("weighted log-log fit: slope SE is calibrated") {
  RngStream rng(34, 0);
  std::vector<double> x{1, 2, 4, 8, 16, 32};
  std::vector<double> zs;
  for (int rep = 0; rep < 400; ++rep) {
    std::vector<double> y, se;
    for (double t : x) {
      const double truth = std::pow(t, -0.5);
      const double s = 0.02 * truth;
      y.push_back(truth + s * rng.normal());
      se.push_back(s);
    }
    const auto f = loglog_fit(x, y, se);
    zs.push_back((f.slope + 0.5) / f.slope_se);
  }
  const auto m = mean_se(zs);
  double var = 0;
  for (double z : zs) var += (z - m.mean) * (z - m.mean);
  var /= zs.size() - 1;
  CHECK(std::fabs(m.mean) < 0.2);
  CHECK(var == doctest::Approx(1.0).epsilon(0.2));
}

TEST_CASE("chi-square tail probabilities") {
  CHECK(chi_square_p_value(3.841458820694124, 1) == doctest::Approx(0.05).epsilon(1e-9));
  CHECK(chi_square_p_value(0.0, 3) == 1.0);
  std::vector<double> obs{10, 10, 10}, exp{10, 10, 10};
  CHECK(chi_square_gof_p(obs, exp) == 1.0);
}

TEST_CASE("weighted mean and effective size") {
  std::vector<double> v{1, 2, 3, 4}, w{1, 1, 1, 1};
  const auto m = weighted_mean(v, w);
  CHECK(m.mean == doctest::Approx(2.5));
  CHECK(effective_size(w) == doctest::Approx(4.0));
  std::vector<double> w2{1, 0, 0, 0};
  CHECK(effective_size(w2) == doctest::Approx(1.0));
  std::vector<double> z{0, 0, 0, 0};
  CHECK_THROWS_AS(weighted_mean(v, z), EstimationError);
}

TEST_CASE("gate reports are recomputable") {
  const auto g = make_upper_gate("x", 0.7, 0.01, 0.02, 0.05, "|x-0.72| < 0.05");
  CHECK(g.pass);
  const auto j = g.to_json();
  CHECK(j.at("pass") == (j.at("gate_value").get<double>() < j.at("threshold").get<double>()));
  const auto p = make_p_gate("ks", 0.1, 0.005, 100, 80, 0.01);
  CHECK_FALSE(p.pass);
}
