#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include <boost/math/special_functions/beta.hpp>

#include "conestable/conditioning.hpp"
#include "conestable/error.hpp"
#include "conestable/extension.hpp"
#include "conestable/harmonic.hpp"
#include "conestable/harness.hpp"
#include "conestable/map.hpp"
#include "conestable/parallel.hpp"

namespace conestable {

namespace {

using json = nlohmann::json;
using Rows = std::vector<std::vector<double>>;

/// Gate constants, fixed before any run.
constexpr double kSeGate = 4.0;          ///< |estimate - target| < 4 SE
constexpr double kPGate = 0.01;          ///< KS and chi-square gates: p > 0.01
constexpr double kControlP = 0.001;      ///< negative controls must reject at p < 0.001
constexpr double kBetaTolerance = 0.05;
constexpr double kSmallBallTolerance = 0.15;
constexpr double kTailTolerance = 0.1;
constexpr double kRadialTolerance = 0.15;
constexpr double kCountSlopeTolerance = 0.1;
constexpr double kPassFraction = 0.9;
constexpr double kWindowGrowthZ = 2.0;

const double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

Point point_from(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Point(std::span<const double>(v));
}

Point axis_point(const ConeSpec& cone, double r) { return cone.axis().vec() * r; }

StepPolicy policy_from(const json& doc, const std::string& key, const StepPolicy& fallback) {
  if (!doc.contains(key)) return fallback;
  const auto& j = doc.at(key);
  StepPolicy p = fallback;
  const std::string rule = j.value("rule", std::string(fallback.rule == StepRule::Fixed ? "fixed" : "relative"));
  const double h = j.value("h", fallback.h);
  if (rule == "fixed") p = StepPolicy::fixed(h);
  else if (rule == "relative") p = StepPolicy::relative(h, j.value("max_step", fallback.max_step));
  else throw DomainError("step policy: unknown rule " + rule);
  return p;
}

json policy_json(const StepPolicy& p) {
  return {{"rule", p.rule == StepRule::Fixed ? "fixed" : "relative"}, {"h", p.h}, {"max_step", p.max_step}};
}

json ks_json(const KsResult& k) {
  return {{"statistic", k.statistic}, {"p_value", k.p_value}, {"n_eff_a", k.n_eff_a}, {"n_eff_b", k.n_eff_b}};
}

json mean_json(const MeanEstimate& m) { return {{"mean", m.mean}, {"se", m.se}}; }

/// |value - target| < tol.
void gate_within(Artifacts& a, const std::string& name, double value, double se, double target, double tol) {
  a.gate(make_upper_gate(name, value, se, std::fabs(value - target), tol,
                         "|value - " + fmt(target) + "| < " + fmt(tol)));
}

/// |value - target| / se < 4.
void gate_se(Artifacts& a, const std::string& name, double value, double se, double target) {
  const double z = se > 0.0 ? std::fabs(value - target) / se : (value == target ? 0.0 : INFINITY);
  a.gate(make_upper_gate(name, value, se, z, kSeGate, "|value - " + fmt(target) + "| / se < " + fmt(kSeGate)));
}

void gate_ks(Artifacts& a, const std::string& name, const KsResult& k) {
  a.gate(make_p_gate(name, k.statistic, k.p_value, k.n_eff_a + k.n_eff_b, std::min(k.n_eff_a, k.n_eff_b), kPGate));
}

/// Harmonic function of a case: the closed form when one exists, else beta
/// (given or from a survival fit) and a tabulated angular part.
HarmonicFunction harmonic_for(const StableParams& p, const ConeSpec& cone, const json& spec, std::uint64_t seed,
                              std::uint64_t stream, json& record) {
  try {
    auto M = HarmonicFunction::exact_for(cone, p.alpha);
    record = M.to_json();
    return M;
  } catch (const DomainError&) {
  }
  const StepPolicy pol = policy_from(spec, "M_step", StepPolicy::relative(1.0 / 32.0));
  double beta;
  if (spec.contains("beta")) {
    beta = spec.at("beta").get<double>();
    record["beta_source"] = "config";
  } else {
    const auto times = spec.value("beta_times", std::vector<double>{1, 2, 4, 8, 16, 32});
    const auto window = spec.value("beta_window", std::vector<double>{2, 32});
    const auto curve = estimate_survival(p, cone, axis_point(cone, 1.0), times, spec.value("beta_N", 20000),
                                         spec.value("beta_h", 1.0 / 128.0), RngStream(seed, stream), true);
    const auto b = estimate_beta(curve, p.alpha, window.at(0), window.at(1));
    beta = b.beta;
    record["beta_source"] = "survival";
    record["beta_se"] = b.se;
  }
  const std::size_t grid = spec.value("M_grid", 8);
  std::vector<double> eta;
  for (std::size_t i = 0; i < grid; ++i)
    eta.push_back(cone.half_angle() * static_cast<double>(i) / static_cast<double>(grid));
  const auto est = estimate_M(p, cone, beta, spec.value("M_t_ref", 1.0), eta, spec.value("M_r_small", 0.02),
                              spec.value("M_N", 20000), pol, RngStream(seed, stream + 1));
  record["beta"] = beta;
  record["eta"] = est.eta;
  record["m_hat"] = est.m_hat;
  record["m_se"] = est.m_se;
  return est.function(cone);
}

/// Case list: "cases" entries carry "cone" and optionally "x"; without it the
/// top-level cone is the only case.
std::vector<json> cases_of(const ExperimentConfig& c) {
  if (c.has("cases")) return c.doc.at("cases").get<std::vector<json>>();
  json one = json::object();
  one["cone"] = to_json(c.cone);
  return {one};
}

ConeSpec case_cone(const json& j) { return cone_from_json(j.at("cone")); }

/// Cdf of the polar angle of the normalised surface measure of a cap of half-angle psi.
double cap_angle_cdf(int d, double psi, double eta) {
  const auto mass = [d](double e) {
    const double a = 0.5 * (d - 1), b = 0.5;
    if (e <= std::numbers::pi / 2) return 0.5 * boost::math::beta(a, b, std::pow(std::sin(e), 2));
    return boost::math::beta(a, b) - 0.5 * boost::math::beta(a, b, std::pow(std::sin(e), 2));
  };
  return mass(std::clamp(eta, 0.0, psi)) / mass(psi);
}

std::string case_tag(const ConeSpec& cone) { return describe(cone); }

}  // namespace

// ---------------------------------------------------------------------------

void run_sample_check(const ExperimentConfig& c, Artifacts& a) {
  const std::size_t N = c.get<std::size_t>("N", 100000);
  const auto alphas = c.get<std::vector<double>>("alphas", {0.5, 1.0, 1.5});
  const auto dims = c.get<std::vector<int>>("dims", {2, 3});
  const auto thetas = c.get<std::vector<double>>("thetas", {0.25, 0.5, 1.0, 2.0, 3.0});
  const auto scales = c.get<std::vector<double>>("scales", {0.5, 2.0});
  constexpr std::size_t kChunk = 4096;
  const std::size_t chunks = (N + kChunk - 1) / kChunk;

  // First coordinate (charfn) or radius of scale * X_{scale^{-alpha} t}.
  const auto draw = [&](const StableParams& p, double t, double scale, bool radius, const RngStream& base) {
    const IncrementSampler inc(p);
    const auto parts = parallel_map(chunks, [&](std::size_t k) {
      RngStream rng = base.split(k);
      std::vector<double> v;
      const std::size_t n = std::min(kChunk, N - k * kChunk);
      for (std::size_t i = 0; i < n; ++i) {
        const Point x = inc(t, rng) * scale;
        v.push_back(radius ? x.norm() : x[0]);
      }
      return v;
    });
    std::vector<double> out;
    out.reserve(N);
    for (const auto& v : parts) out.insert(out.end(), v.begin(), v.end());
    return out;
  };

  Rows charfn;
  std::uint64_t stream = 0;
  for (double alpha : alphas)
    for (int d : dims) {
      const StableParams p(alpha, d);
      const auto x1 = draw(p, 1.0, 1.0, false, RngStream(c.seed, stream++));
      for (double th : thetas) {
        std::vector<double> cs(x1.size());
        for (std::size_t i = 0; i < x1.size(); ++i) cs[i] = std::cos(th * x1[i]);
        const auto m = mean_se(cs);
        const double target = std::exp(-std::pow(th, alpha));
        charfn.push_back({alpha, static_cast<double>(d), th, m.mean, m.se, target});
        gate_se(a, "charfn/alpha=" + fmt(alpha) + "/d=" + std::to_string(d) + "/theta=" + fmt(th), m.mean, m.se,
                target);
      }
    }
  a.csv("charfn", {"alpha", "d", "theta", "mean_cos", "se", "target"}, charfn);

  Rows scaling;
  for (double s : scales) {
    const auto lhs = draw(c.params, std::pow(s, -c.params.alpha), s, true, RngStream(c.seed, 1000 + stream++));
    const auto rhs = draw(c.params, 1.0, 1.0, true, RngStream(c.seed, 1000 + stream++));
    const auto ks = ks_two_sample({lhs, {}}, {rhs, {}});
    scaling.push_back({c.params.alpha, static_cast<double>(c.params.d), s, ks.statistic, ks.p_value});
    gate_ks(a, "scaling/c=" + fmt(s), ks);
  }
  a.csv("scaling", {"alpha", "d", "c", "ks_statistic", "p_value"}, scaling);
  a.results()["N"] = N;
}

void run_survival(const ExperimentConfig& c, Artifacts& a) {
  const auto alphas = c.get<std::vector<double>>("alphas", {c.params.alpha});
  const std::size_t N = c.get<std::size_t>("N", 100000);
  const double h = c.get<double>("h", 1.0 / 256.0);
  const auto times = c.get<std::vector<double>>("times", {1, 2, 4, 8, 16, 32, 64});
  const auto window = c.get<std::vector<double>>("window", {4, 64});
  const bool extrapolate = c.get<bool>("extrapolate", true);
  const Point x = c.has("x") ? point_from(c.doc.at("x")) : axis_point(c.cone, 1.0);

  json fits = json::array();
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    const StableParams p(alphas[i], c.params.d);
    const auto curve = estimate_survival(p, c.cone, x, times, N, h, RngStream(c.seed, 100 + i), extrapolate);
    const auto b = estimate_beta(curve, p.alpha, window.at(0), window.at(1));
    Rows rows;
    for (std::size_t k = 0; k < times.size(); ++k)
      rows.push_back({times[k], curve.p_hat[k], curve.se[k], extrapolate ? curve.p_2h[k] : kNaN,
                      extrapolate ? curve.p_4h[k] : kNaN, curve.best()[k], curve.best_se()[k]});
    a.csv("survival_alpha" + fmt(p.alpha),
          {"t", "p_h", "se_h", "p_2h", "p_4h", "p_best", "se_best"}, rows);
    json f{{"alpha", p.alpha}, {"beta", b.beta}, {"beta_se", b.se}, {"order", curve.order},
           {"order_clamped", curve.order_clamped}, {"chi2", b.fit.chi2}, {"window", window}};
    try {
      const double target = HarmonicFunction::exact_for(c.cone, p.alpha).beta();
      f["target"] = target;
      gate_within(a, "survival/beta/alpha=" + fmt(p.alpha), b.beta, b.se, target, kBetaTolerance);
    } catch (const DomainError&) {
      f["target"] = nullptr;
    }
    fits.push_back(f);
  }
  a.results()["cone"] = to_json(c.cone);
  a.results()["fits"] = fits;
  a.results()["N"] = N;
  a.results()["h"] = h;
}

void run_harmonic(const ExperimentConfig& c, Artifacts& a) {
  json record;
  const auto M = harmonic_for(c.params, c.cone, c.doc, c.seed, 200, record);
  a.results()["M"] = record;
  const Point x = c.has("x") ? point_from(c.doc.at("x")) : axis_point(c.cone, 1.0);
  const Point center = c.has("center") ? point_from(c.doc.at("center")) : x;
  const double radius = c.get<double>("radius", 0.5);
  const std::size_t N = c.get<std::size_t>("N", 100000);
  const auto res = verify_harmonicity(M, c.params, c.cone, x, center, radius, N, RngStream(c.seed, 210));
  a.results()["harmonicity"] = {{"residual", res.residual}, {"se", res.se}, {"mean", res.mean},
                                {"target", res.target}, {"N", res.N}, {"stalled", res.stalled}};
  gate_se(a, "harmonicity/residual", res.residual, res.se, 0.0);

  if (c.has("smallball")) {
    const auto& sb = c.doc.at("smallball");
    const auto radii = sb.value("radii", std::vector<double>{0.02, 0.04, 0.08, 0.16});
    const Point xs = sb.contains("x") ? point_from(sb.at("x")) : axis_point(c.cone, 1.0);
    const auto r = estimate_smallball_hitting(c.params, c.cone, xs, radii, sb.value("N", 100000),
                                              RngStream(c.seed, 220), sb.value("escape_radius", 1e4));
    Rows rows;
    for (std::size_t k = 0; k < radii.size(); ++k) rows.push_back({radii[k], r.p_hat[k], r.se[k]});
    a.csv("smallball", {"radius", "p_hit", "se"}, rows);
    const double target = c.params.d + M.beta() - c.params.alpha;
    a.results()["smallball"] = {{"slope", r.fit.slope}, {"slope_se", r.fit.slope_se}, {"target", target},
                                {"escaped", r.escaped}, {"stalled", r.stalled}};
    gate_within(a, "smallball/exponent", r.fit.slope, r.fit.slope_se, target, kSmallBallTolerance);
  }
}

void run_conditioned(const ExperimentConfig& c, Artifacts& a) {
  const auto horizons = c.get<std::vector<double>>("horizons", {1.0, 4.0});
  const std::size_t N = c.get<std::size_t>("N", 100000);
  const StepPolicy pol = policy_from(c.doc, "step", StepPolicy::relative(1.0 / 64.0, 1.0));
  a.results()["step"] = policy_json(pol);

  Rows mart;
  json cases = json::array();
  std::uint64_t stream = 300;
  const auto list = cases_of(c);
  std::vector<HarmonicFunction> Ms;
  for (std::size_t i = 0; i < list.size(); ++i) {
    const ConeSpec cone = case_cone(list[i]);
    const StableParams p(c.params.alpha, cone.dim());
    json record;
    Ms.push_back(harmonic_for(p, cone, list[i], c.seed, stream, record));
    const auto& M = Ms.back();
    stream += 2;
    const Point x = list[i].contains("x") ? point_from(list[i].at("x")) : axis_point(cone, 1.0);
    json cj{{"cone", to_json(cone)}, {"M", record}};
    for (auto kind : {Conditioning::StayInCone, Conditioning::AbsorbAtApex}) {
      const auto m = martingale_check(kind, p, cone, M, x, horizons, N, pol, RngStream(c.seed, stream++));
      json per = json::array();
      for (std::size_t k = 0; k < horizons.size(); ++k) {
        mart.push_back({static_cast<double>(i), kind == Conditioning::StayInCone ? 0.0 : 1.0, horizons[k],
                        m.fine[k].mean, m.fine[k].se, m.coarse[k].mean, m.coarse[k].se, m.extrapolated[k],
                        m.extrapolated_se[k], m.ess[k]});
        per.push_back({{"t", horizons[k]}, {"mean_weight", m.extrapolated[k]}, {"se", m.extrapolated_se[k]}});
        if (kind == Conditioning::StayInCone)
          gate_se(a, "martingale/" + case_tag(cone) + "/t=" + fmt(horizons[k]), m.extrapolated[k],
                  m.extrapolated_se[k], 1.0);
      }
      cj[to_string(kind)] = per;
    }
    cases.push_back(cj);
  }
  a.csv("martingale",
        {"case", "absorb", "t", "fine", "fine_se", "coarse", "coarse_se", "extrapolated", "extrapolated_se", "ess"},
        mart);
  a.results()["cases"] = cases;

  // Self-similarity of the conditioned law: c X_{c^{-alpha} t} from x/c against X_t from x.
  const ConeSpec cone = case_cone(list.front());
  const StableParams p(c.params.alpha, cone.dim());
  const auto& M = Ms.front();
  const Point x = list.front().contains("x") ? point_from(list.front().at("x")) : axis_point(cone, 1.0);
  const double scale = c.get<double>("scale", 2.0);
  const double t = c.get<double>("selfsim_t", 1.0);
  const std::size_t Ns = c.get<std::size_t>("selfsim_N", N);
  const auto e1 = conditioned_ensemble(Conditioning::StayInCone, p, cone, M, x, {t}, Ns, pol, RngStream(c.seed, 392));
  const auto e2 = conditioned_ensemble(Conditioning::StayInCone, p, cone, M, x * (1.0 / scale),
                                       {std::pow(scale, -p.alpha) * t}, Ns, pol, RngStream(c.seed, 393));
  const auto lr1 = e1.sample(0, [](const Point& y) { return std::log(y.norm()); });
  const auto lr2 = e2.sample(0, [&](const Point& y) { return std::log(scale * y.norm()); });
  const auto an1 = e1.sample(0, [&](const Point& y) { return polar_angle(cone, y); });
  const auto an2 = e2.sample(0, [&](const Point& y) { return polar_angle(cone, y); });
  const auto ks_r = ks_two_sample(lr1, lr2);
  const auto ks_a = ks_two_sample(an1, an2);
  gate_ks(a, "selfsim/log_radius", ks_r);
  gate_ks(a, "selfsim/polar_angle", ks_a);

  // Reported only: growth of the conditioned log-radius.
  json growth = json::array();
  const auto eg = conditioned_ensemble(Conditioning::StayInCone, p, cone, M, x, horizons, Ns / 4, pol,
                                       RngStream(c.seed, 394));
  for (std::size_t k = 0; k < horizons.size(); ++k)
    growth.push_back({{"t", horizons[k]},
                      {"log_radius", mean_json(eg.expectation(k, [](const Point& y) { return std::log(y.norm()); }))}});
  a.results()["selfsim"] = {{"scale", scale}, {"t", t}, {"log_radius", ks_json(ks_r)}, {"polar_angle", ks_json(ks_a)}};
  a.results()["log_radius_growth"] = growth;
}

void run_entrance(const ExperimentConfig& c, Artifacts& a) {
  json record;
  const auto M = harmonic_for(c.params, c.cone, c.doc, c.seed, 400, record);
  const StepPolicy pol = policy_from(c.doc, "step", StepPolicy::relative(1.0 / 64.0, 1.0));
  const std::size_t particles = c.get<std::size_t>("particles", 5000);
  const std::size_t replicates = c.get<std::size_t>("replicates", 20);
  const double t = c.get<double>("t", 1.0);
  const auto deltas = c.get<std::vector<double>>("deltas", {0.2, 0.1, 0.05});
  const double alpha = c.params.alpha;
  const auto f = [alpha](const Point& x) { return std::min(std::pow(x.norm(), alpha / 4.0), 10.0); };

  std::vector<Point> dirs;
  if (c.has("directions"))
    for (const auto& j : c.doc.at("directions")) dirs.push_back(point_from(j));
  else
    dirs.push_back(c.cone.axis().vec());

  Rows rows;
  json stab = json::array();
  for (std::size_t i = 0; i < dirs.size(); ++i) {
    const Point u = Direction(dirs[i]).vec();
    const auto e = entrance_from_zero(c.params, c.cone, M, f, t, deltas, u, particles, replicates, pol,
                                      RngStream(c.seed, 410 + i));
    for (std::size_t j = 0; j < deltas.size(); ++j)
      rows.push_back({static_cast<double>(i), deltas[j], e.values[j].mean, e.values[j].se, e.ess[j]});
    stab.push_back({{"direction", std::vector<double>(dirs[i].coords().begin(), dirs[i].coords().end())}, {"max_successive_z", e.max_successive_z}});
    a.gate(make_upper_gate("entrance/delta_stability/dir" + std::to_string(i), e.max_successive_z, kNaN,
                           e.max_successive_z, kSeGate, "max successive |difference| / joint se < 4"));
  }
  a.csv("entrance_delta", {"direction", "delta", "value", "se", "ess"}, rows);

  CollapseBins bins;
  for (double r = 0.25; r <= 4.01; r *= std::sqrt(2.0)) bins.radial_edges.push_back(r);
  const double psi = c.cone.half_angle();
  bins.angle_edges = {0.0, psi / 3.0, 2.0 * psi / 3.0, psi};
  const double t2 = c.get<double>("t2", 2.0 * t);
  const double delta = c.get<double>("collapse_delta", 0.05);
  const double control = c.get<double>("control_exponent_error", 0.5);
  json coll = json::object();
  Rows crow;
  for (double err : {0.0, control}) {
    const auto r = entrance_density_collapse(c.params, c.cone, M, t, t2, bins, delta, c.cone.axis().vec(), particles,
                                             replicates, pol, RngStream(c.seed, 420), err);
    for (std::size_t b = 0; b < r.mass1.size(); ++b)
      crow.push_back({err, static_cast<double>(b), r.mass1[b], r.se1[b], r.mass2[b], r.se2[b], r.used[b] ? 1.0 : 0.0});
    coll[err == 0.0 ? "correct" : "control"] = {{"statistic", r.statistic}, {"used_bins", r.used_bins},
                                                {"exponent_error", err}};
    if (err == 0.0)
      a.gate(make_upper_gate("entrance/collapse", r.statistic, kNaN, r.statistic, kSeGate,
                             "max |m1 - m2| / joint se < 4"));
    else
      a.gate(make_lower_gate("entrance/collapse_control", r.statistic, kNaN, r.statistic, kSeGate,
                             "max |m1 - m2| / joint se > 4 (wrong exponent)"));
  }
  a.csv("entrance_collapse", {"exponent_error", "bin", "mass_t1", "se_t1", "mass_t2", "se_t2", "used"}, crow);
  a.results()["delta_stability"] = stab;
  a.results()["collapse"] = coll;
  a.results()["M"] = record;
}

void run_duality(const ExperimentConfig& c, Artifacts& a) {
  json record;
  const auto M = harmonic_for(c.params, c.cone, c.doc, c.seed, 500, record);
  const StepPolicy pol = policy_from(c.doc, "step", StepPolicy::relative(1.0 / 64.0, 1.0));
  const Point x = c.has("x") ? point_from(c.doc.at("x")) : axis_point(c.cone, 1.0);
  const auto times = c.get<std::vector<double>>("times", {0.25, 1.0});
  const std::size_t N = c.get<std::size_t>("N", 20000);
  const double shift = c.get<double>("control_beta_shift", 0.3);

  Rows rows;
  json out = json::object();
  for (double sh : {0.0, shift}) {
    const auto r = duality_test(c.params, c.cone, M, x, times, N, pol, RngStream(c.seed, 510), sh);
    json per = json::array();
    double min_p = 1.0;
    for (std::size_t k = 0; k < times.size(); ++k) {
      rows.push_back({sh, times[k], r.log_radius[k].statistic, r.log_radius[k].p_value, r.axis_angle[k].statistic,
                      r.axis_angle[k].p_value, r.mass_transformed[k].mean, r.mass_transformed[k].se,
                      r.mass_absorb[k].mean, r.mass_absorb[k].se, r.ess_transformed[k], r.ess_absorb[k]});
      per.push_back({{"t", times[k]}, {"log_radius", ks_json(r.log_radius[k])}, {"axis_angle", ks_json(r.axis_angle[k])},
                     {"mass_transformed", mean_json(r.mass_transformed[k])}, {"mass_absorb", mean_json(r.mass_absorb[k])}});
      min_p = std::min(min_p, r.log_radius[k].p_value);
      if (sh != 0.0) continue;
      gate_ks(a, "duality/log_radius/t=" + fmt(times[k]), r.log_radius[k]);
      gate_ks(a, "duality/axis_angle/t=" + fmt(times[k]), r.axis_angle[k]);
      const double se = std::hypot(r.mass_transformed[k].se, r.mass_absorb[k].se);
      gate_se(a, "duality/mass/t=" + fmt(times[k]), r.mass_transformed[k].mean - r.mass_absorb[k].mean, se, 0.0);
    }
    if (sh != 0.0)
      a.gate(make_upper_gate("duality/control", min_p, kNaN, min_p, kControlP,
                             "min p (log radius, beta + " + fmt(sh) + ") < " + fmt(kControlP)));
    out[sh == 0.0 ? "test" : "control"] = {{"beta_shift", sh}, {"times", per}, {"escaped", r.escaped}};
  }
  a.csv("duality",
        {"beta_shift", "t", "ks_log_radius", "p_log_radius", "ks_axis_angle", "p_axis_angle", "mass_transformed",
         "mass_transformed_se", "mass_absorb", "mass_absorb_se", "ess_transformed", "ess_absorb"},
        rows);
  a.results()["duality"] = out;
  a.results()["M"] = record;
}

void run_ladder(const ExperimentConfig& c, Artifacts& a) {
  const std::size_t particles = c.get<std::size_t>("particles", 2000);
  const std::size_t burn = c.get<std::size_t>("burn_in", 10);
  const std::size_t samples = c.get<std::size_t>("samples", 40);
  const StepPolicy pol = policy_from(c.doc, "step", StepPolicy::relative(1.0 / 32.0, 1.0));
  constexpr int kHistBins = 24;

  json out = json::array();
  const auto list = cases_of(c);
  for (std::size_t i = 0; i < list.size(); ++i) {
    const ConeSpec cone = case_cone(list[i]);
    const StableParams p(c.params.alpha, cone.dim());
    json record;
    const auto M = harmonic_for(p, cone, list[i], c.seed, 600 + 10 * i, record);
    const double psi = cone.half_angle();
    const double eta_a = list[i].value("eta_a", 0.0);
    const double eta_b = list[i].value("eta_b", 0.75 * psi);
    const auto r = ladder_stationary(p, cone, M, eta_a, eta_b, burn, samples, particles, pol,
                                     RngStream(c.seed, 605 + 10 * i));
    const std::string tag = "ladder/" + case_tag(cone);
    gate_ks(a, tag + "/xi_split", r.xi_split);
    gate_ks(a, tag + "/xi_start", r.xi_start);
    gate_ks(a, tag + "/theta_split", r.theta_split);
    gate_ks(a, tag + "/theta_start", r.theta_start);
    if (cone.kind() == ConeKind::HalfSpace) gate_ks(a, tag + "/xi_mirror", r.xi_mirror);

    std::vector<double> hx(kHistBins), ht(kHistBins), hr(kHistBins);
    const auto bin = [&](double eta) {
      return std::clamp(static_cast<int>((eta + psi) / (2.0 * psi) * kHistBins), 0, kHistBins - 1);
    };
    for (std::size_t k = 0; k < r.xi_pooled.size(); ++k) hx[bin(r.xi_pooled[k])] += r.xi_pooled_w[k];
    for (std::size_t k = 0; k < r.theta_pooled.size(); ++k) {
      ht[bin(r.theta_pooled[k])] += r.theta_pooled_w[k];
      hr[bin(r.theta_pooled[k])] += r.theta_reweighted_w[k];
    }
    const auto normalise = [](std::vector<double>& h) {
      double s = 0.0;
      for (double v : h) s += v;
      if (s > 0.0)
        for (double& v : h) v /= s;
    };
    normalise(hx);
    normalise(ht);
    normalise(hr);
    Rows rows;
    for (int b = 0; b < kHistBins; ++b)
      rows.push_back({-psi + (b + 0.5) * 2.0 * psi / kHistBins, hx[b], ht[b], hr[b]});
    a.csv("ladder_case" + std::to_string(i), {"eta", "xi_law", "theta_plus_law", "theta_plus_over_M"}, rows);

    out.push_back({{"cone", to_json(cone)},
                   {"M", record},
                   {"xi_split", ks_json(r.xi_split)},
                   {"xi_start", ks_json(r.xi_start)},
                   {"theta_split", ks_json(r.theta_split)},
                   {"theta_start", ks_json(r.theta_start)},
                   {"xi_mirror", ks_json(r.xi_mirror)},
                   {"xi_vs_theta", ks_json(r.xi_vs_theta)},
                   {"boundary_mass", r.boundary_mass},
                   {"boundary_sigma", r.boundary_sigma},
                   {"boundary_z", r.boundary_z},
                   {"stalled", r.stalled}});
  }
  a.results()["cases"] = out;
  a.results()["step"] = policy_json(pol);
}

void run_jumprate(const ExperimentConfig& c, Artifacts& a) {
  json record;
  const auto M = harmonic_for(c.params, c.cone, c.doc, c.seed, 700, record);
  const Point theta0 = c.has("theta0") ? Direction(point_from(c.doc.at("theta0"))).vec() : c.cone.axis().vec();
  const std::size_t N = c.get<std::size_t>("N", 25000);
  const double dt = c.get<double>("map_step", 1.0 / 1024.0);
  const double T = c.get<double>("map_horizon", 4.0);
  const JumpBins bins;
  const auto j = empirical_jump_rate(c.params, c.cone, M, theta0, T, dt, N, bins, RngStream(c.seed, 710));

  Rows rows;
  for (std::size_t b = 0; b < j.counts.size(); ++b) {
    const auto& yr = bins.y_ranges[b / static_cast<std::size_t>(bins.phi_bins)];
    rows.push_back({yr.first, yr.second, static_cast<double>(b % static_cast<std::size_t>(bins.phi_bins)), j.counts[b],
                    j.predicted[b], j.free_ratio[b], j.free_se[b], j.free_masked[b] ? 1.0 : 0.0, j.cond_counts[b],
                    j.cond_predicted[b], j.cond_ratio[b], j.cond_se[b], j.cond_masked[b] ? 1.0 : 0.0});
  }
  a.csv("jumprate",
        {"y_lo", "y_hi", "phi_bin", "count", "predicted", "free_ratio", "free_se", "free_masked", "cond_count",
         "cond_predicted", "cond_ratio", "cond_se", "cond_masked"},
        rows);
  const auto unmasked = [](const std::vector<bool>& m) {
    return static_cast<double>(std::count(m.begin(), m.end(), false));
  };
  StatReport fr = make_lower_gate("jumprate/free_pass_fraction", j.free_pass_fraction(), kNaN, j.free_pass_fraction(),
                                  kPassFraction, "fraction of unmasked bins with |ratio - 1| < 4 se >= 0.9", true);
  fr.n = unmasked(j.free_masked);
  StatReport cr = make_lower_gate("jumprate/cond_pass_fraction", j.cond_pass_fraction(), kNaN, j.cond_pass_fraction(),
                                  kPassFraction, "fraction of unmasked bins with |ratio - 1| < 4 se >= 0.9", true);
  cr.n = unmasked(j.cond_masked);
  a.gate(fr);
  a.gate(cr);
  a.results()["jumps"] = j.total_jumps;
  a.results()["map_time"] = j.map_time;
  a.results()["threshold"] = j.threshold;
  a.results()["sensitivity_counts"] = j.sensitivity_counts;
  a.results()["cond_ess_fraction"] = j.cond_ess;
  a.results()["kernel_constant"] = map_kernel_constant(c.params.alpha, c.params.d);
  a.results()["M"] = record;
}

void run_extension(const ExperimentConfig& c, Artifacts& a) {
  json record;
  const auto M = harmonic_for(c.params, c.cone, c.doc, c.seed, 800, record);
  const double alpha = c.params.alpha, beta = M.beta();
  const StepPolicy pol = policy_from(c.doc, "step", StepPolicy::relative(1.0 / 32.0, 1e300));
  a.results()["M"] = record;

  // Continuous type: length tail, radial exponent, window growth, angular profile.
  const auto cj = c.doc.value("continuous", json::object());
  ExcursionSpec cs;
  cs.kind = ExtensionKind::Continuous;
  cs.zeta_min = cj.value("zeta_min", 1e-3);
  cs.delta = cj.value("delta", 1e-3);
  const double K = cj.value("excursions", 20000.0);
  const double r_lo = cj.value("window_lo", 0.1), r_mid = cj.value("window_mid", 3.0), r_hi = cj.value("window_hi", 6.0);
  const auto bins = OccupationBins::log_spaced(r_mid / 32.0, r_hi, 18, c.cone.half_angle(), 6);
  const auto g = build_continuous_extension(cs, c.params, c.cone, beta, K / cs.rate(alpha, beta), pol,
                                            RngStream(c.seed, 810), &bins);
  const auto lt = length_tail(g);
  gate_within(a, "extension/length_tail_slope", lt.fit.slope, lt.fit.slope_se, -beta / alpha, kTailTolerance);
  const auto rad = radial_exponent(g.occupation, r_lo, r_mid);
  gate_within(a, "extension/radial_exponent", rad.slope, rad.slope_se, alpha - beta - 1.0, kRadialTolerance);
  const auto w1 = g.occupation.window_mass(r_lo, r_mid);
  const auto shell = g.occupation.window_mass(r_mid, r_hi);
  const auto w2 = g.occupation.window_mass(r_lo, r_hi);
  a.gate(make_lower_gate("extension/window_growth", shell.mean, shell.se, shell.se > 0 ? shell.mean / shell.se : 0.0,
                         kWindowGrowthZ, "mass gained from [" + fmt(r_lo) + "," + fmt(r_mid) + "] to [" + fmt(r_lo) +
                             "," + fmt(r_hi) + "] / se > 2"));
  const auto prof = angular_profile(g.occupation, M, r_lo, r_mid);
  a.gate(make_upper_gate("extension/angular_profile", prof.statistic, kNaN, prof.statistic, kSeGate,
                         "max |ratio - 1| / se < 4"));

  Rows rows;
  const auto rm = g.occupation.radial_mass();
  for (std::size_t k = 0; k < rm.size(); ++k)
    rows.push_back({bins.radial_edges[k], bins.radial_edges[k + 1], rm[k].mean, rm[k].se});
  a.csv("occupation_radial", {"r_lo", "r_hi", "mass", "se"}, rows);
  rows.clear();
  for (std::size_t k = 0; k < lt.s.size(); ++k) rows.push_back({lt.s[k], lt.p[k], lt.se[k]});
  a.csv("length_tail", {"s", "p", "se"}, rows);
  rows.clear();
  for (std::size_t k = 0; k < prof.ratio.size(); ++k)
    rows.push_back({bins.angle_edges[k], bins.angle_edges[k + 1], prof.ratio[k], prof.se[k]});
  a.csv("angular_profile", {"eta_lo", "eta_hi", "ratio", "se"}, rows);

  // Reported only: truncation sensitivity (delta halved).
  ExcursionSpec half = cs;
  half.delta = cs.delta / 2.0;
  const auto gh = build_continuous_extension(half, c.params, c.cone, beta, K / half.rate(alpha, beta), pol,
                                             RngStream(c.seed, 811), &bins);
  const auto rad_h = radial_exponent(gh.occupation, r_lo, r_mid);
  const auto lt_h = length_tail(gh);
  a.results()["continuous"] = {
      {"excursions", g.count()},
      {"acceptance", g.acceptance()},
      {"partial", g.partial},
      {"length_tail_slope", lt.fit.slope},
      {"length_tail_se", lt.fit.slope_se},
      {"radial_exponent", rad.slope},
      {"radial_exponent_se", rad.slope_se},
      {"window_mass", {mean_json(w1), mean_json(w2)}},
      {"window_ratio_expected", std::pow(r_hi / r_mid, alpha - beta)},
      {"angular_statistic", prof.statistic},
      {"delta_halved",
       {{"delta", half.delta},
        {"acceptance", gh.acceptance()},
        {"radial_exponent", rad_h.slope},
        {"radial_exponent_se", rad_h.slope_se},
        {"length_tail_slope", lt_h.fit.slope},
        {"radial_difference_z", (rad_h.slope - rad.slope) / std::hypot(rad.slope_se, rad_h.slope_se)}}}};

  // Jump type: start law and excursion count against the truncation radius.
  const auto jj = c.doc.value("jump", json::object());
  ExcursionSpec js;
  js.kind = ExtensionKind::Jump;
  js.gamma = jj.value("gamma", 0.5 * beta / alpha);
  js.r_min = jj.value("r_min", 0.1);
  const double KJ = jj.value("excursions", 10000.0);
  const double L = KJ / js.rate(alpha, beta);
  const auto gj = build_jump_extension(js, c.params, c.cone, beta, L, pol, RngStream(c.seed, 820));
  std::vector<double> radii, angles;
  for (const auto& e : gj.excursions) {
    radii.push_back(e.start.norm());
    angles.push_back(polar_angle(c.cone, e.start));
  }
  const double ag = alpha * js.gamma;
  const auto ks_r = ks_one_sample({radii, {}}, [&](double r) { return r <= js.r_min ? 0.0 : 1.0 - std::pow(r / js.r_min, -ag); });
  const int d = c.params.d;
  const double psi = c.cone.half_angle();
  const auto ks_a = ks_one_sample({angles, {}}, [&](double e) { return cap_angle_cdf(d, psi, e); });
  gate_ks(a, "extension/jump_start_radius", ks_r);
  gate_ks(a, "extension/jump_start_angle", ks_a);

  const auto rmins = jj.value("count_r_min", std::vector<double>{js.r_min, 2 * js.r_min, 4 * js.r_min});
  const double Lc = jj.value("count_excursions", 2000.0) / js.rate(alpha, beta);
  std::vector<double> counts;
  for (std::size_t k = 0; k < rmins.size(); ++k) {
    ExcursionSpec s = js;
    s.r_min = rmins[k];
    const auto gk = build_jump_extension(s, c.params, c.cone, beta, Lc, pol, RngStream(c.seed, 830 + k));
    counts.push_back(static_cast<double>(gk.count()));
  }
  std::vector<double> cse;
  for (double n : counts) cse.push_back(std::sqrt(std::max(n, 1.0)));
  const auto cf = loglog_fit(rmins, counts, cse);
  gate_within(a, "extension/jump_count_slope", cf.slope, cf.slope_se, -ag, kCountSlopeTolerance);
  rows.clear();
  for (std::size_t k = 0; k < rmins.size(); ++k) rows.push_back({rmins[k], counts[k]});
  a.csv("jump_counts", {"r_min", "count"}, rows);
  a.results()["jump"] = {{"gamma", js.gamma},
                         {"r_min", js.r_min},
                         {"excursions", gj.count()},
                         {"partial", gj.partial},
                         {"start_radius", ks_json(ks_r)},
                         {"start_angle", ks_json(ks_a)},
                         {"count_slope", cf.slope},
                         {"count_slope_se", cf.slope_se},
                         {"count_slope_target", -ag}};
}

namespace {

/// Exact rational parameters p/q used by the admissibility sweep.
struct Rational {
  long p;
  long q;
  double value() const { return static_cast<double>(p) / static_cast<double>(q); }
};

struct SweepPoint {
  Rational alpha, beta;
  int d;
  ExtensionTarget target;
  Rational gamma;  ///< negative numerator: not given
};

/// Independent integer evaluation of the admissibility inequalities. All
/// rationals share the denominator q; returns {domain ok, exists, cont, jump}.
struct Expected {
  bool domain_ok, exists, continuous, jump;
};

Expected expected_admissibility(const SweepPoint& s) {
  const long q = s.alpha.q, a = s.alpha.p, b = s.beta.p, g = s.gamma.p;
  Expected e{};
  e.domain_ok = a > 0 && a < 2 * q && b > 0 && b < a && s.d >= 2;
  if (!e.domain_ok) return e;
  const bool given = g >= 0;
  if (s.target == ExtensionTarget::Gamma) {
    e.exists = true;
    e.continuous = true;
    e.jump = given && g > 0 && g * a < b * q;  // gamma < beta/alpha
    return e;
  }
  const long sq = s.d * q + 2 * b - a;  // (d + 2 beta - alpha) q
  e.exists = sq > 0;
  if (!e.exists) return e;
  e.continuous = 2 * b < 2 * a - s.d * q;  // beta < (2 alpha - d)/2
  e.jump = given && g > 0 && g * a < sq * q && g < q;
  return e;
}

std::vector<SweepPoint> admissibility_sweep() {
  constexpr long q = 16;
  const auto R = [](long p) { return Rational{p, q}; };
  const auto G = ExtensionTarget::Gamma;
  const auto A = ExtensionTarget::ApexConditioned;
  std::vector<SweepPoint> s;
  // alpha = 1.5, d = 2, beta = 0.75: jump bound beta/alpha = 8/16, apex jump bound 1.
  for (long g : {-1L, 2L, 4L, 7L, 8L, 9L, 12L}) s.push_back({R(24), R(12), 2, G, R(g)});
  for (long g : {-1L, 2L, 8L, 15L, 16L, 17L}) s.push_back({R(24), R(12), 2, A, R(g)});
  // Apex continuous bound (2 alpha - d)/2: 8/16 at alpha = 1.5, 12/16 at alpha = 1.75.
  for (long b : {2L, 6L, 8L, 10L, 14L}) s.push_back({R(24), R(b), 2, A, R(-1)});
  for (long b : {4L, 11L, 12L, 13L, 20L}) s.push_back({R(28), R(b), 2, A, R(-1)});
  // Apex jump bound (d + 2 beta - alpha)/alpha = 8/16 below 1.
  for (long g : {4L, 7L, 8L, 9L, 15L}) s.push_back({R(28), R(5), 2, A, R(g)});
  // d = 3 and d = 4.
  for (long g : {-1L, 2L, 8L, 10L}) s.push_back({R(16), R(8), 3, G, R(g)});
  for (long b : {2L, 8L, 15L}) s.push_back({R(16), R(b), 3, A, R(4)});
  s.push_back({R(24), R(12), 3, A, R(16)});
  s.push_back({R(20), R(10), 4, G, R(8)});
  s.push_back({R(20), R(10), 4, A, R(16)});
  // Apex continuous bound 15/16 at alpha = 31/16.
  for (long b : {1L, 15L, 16L}) s.push_back({R(31), R(b), 2, A, R(-1)});
  // Small alpha, jump bound 8/16.
  for (long g : {4L, 7L, 8L}) s.push_back({R(8), R(4), 2, G, R(g)});
  // Domain violations: alpha = 2, alpha = 0, beta = 0, beta = alpha, beta > alpha, d = 1.
  s.push_back({R(32), R(12), 2, G, R(2)});
  s.push_back({R(0), R(0), 2, G, R(2)});
  s.push_back({R(24), R(0), 2, G, R(2)});
  s.push_back({R(24), R(24), 2, A, R(2)});
  s.push_back({R(24), R(26), 2, A, R(2)});
  s.push_back({R(24), R(12), 1, G, R(2)});
  return s;
}

}  // namespace

void run_admissibility(const ExperimentConfig& c, Artifacts& a) {
  (void)c;
  const auto sweep = admissibility_sweep();
  Rows rows;
  std::size_t mismatches = 0;
  json bad = json::array();
  for (std::size_t i = 0; i < sweep.size(); ++i) {
    const auto& s = sweep[i];
    const Expected e = expected_admissibility(s);
    Expected got{};
    try {
      const auto r = check_extension_conditions(s.alpha.value(), s.beta.value(), s.d, s.target,
                                                s.gamma.p >= 0 ? s.gamma.value() : -1.0);
      got = {true, r.exists, r.exists && r.continuous_allowed, r.exists && r.jump_allowed};
    } catch (const DomainError&) {
      got = {false, false, false, false};
    }
    const bool same = e.domain_ok == got.domain_ok && e.exists == got.exists && e.continuous == got.continuous &&
                      e.jump == got.jump;
    if (!same) {
      ++mismatches;
      bad.push_back(i);
    }
    rows.push_back({s.alpha.value(), s.beta.value(), static_cast<double>(s.d),
                    s.target == ExtensionTarget::Gamma ? 0.0 : 1.0, s.gamma.p >= 0 ? s.gamma.value() : kNaN,
                    got.domain_ok ? 1.0 : 0.0, got.exists ? 1.0 : 0.0, got.continuous ? 1.0 : 0.0,
                    got.jump ? 1.0 : 0.0, same ? 1.0 : 0.0});
  }
  a.csv("admissibility",
        {"alpha", "beta", "d", "apex_target", "gamma", "domain_ok", "exists", "continuous", "jump", "agrees"}, rows);
  StatReport g = make_upper_gate("admissibility/mismatches", static_cast<double>(mismatches), kNaN,
                                 static_cast<double>(mismatches), 1.0, "mismatches < 1");
  g.n = static_cast<double>(sweep.size());
  a.gate(g);
  a.results()["points"] = sweep.size();
  a.results()["mismatch_indices"] = bad;
}

void run_report(const ExperimentConfig& c, Artifacts& a) {
  const auto inputs = c.get<std::vector<std::string>>("inputs", {});
  if (inputs.empty()) throw DomainError("report: no inputs");
  Rows rows;
  json table = json::array();
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    std::ifstream in(std::filesystem::path(inputs[i]) / "results.json");
    if (!in) throw DomainError("report: cannot read results.json in " + inputs[i]);
    const json r = json::parse(in);
    double failed = 0.0, inconsistent = 0.0, total = 0.0;
    for (const auto& g : r.at("gates")) {
      StatReport s;
      s.gate_value = g.at("gate_value").is_number() ? g.at("gate_value").get<double>() : kNaN;
      s.threshold = g.at("threshold").get<double>();
      s.op = g.value("op", std::string("<"));
      const bool recomputed = s.recompute();
      total += 1.0;
      if (!recomputed) failed += 1.0;
      if (recomputed != g.at("pass").get<bool>()) inconsistent += 1.0;
    }
    if (r.contains("error")) failed += 1.0;
    const std::string exp = r.at("experiment").get<std::string>();
    rows.push_back({static_cast<double>(i), total, failed, inconsistent});
    table.push_back({{"input", inputs[i]}, {"experiment", exp}, {"gates", total}, {"failed", failed},
                     {"inconsistent", inconsistent}});
    a.gate(make_upper_gate("report/" + std::to_string(i) + "/" + exp, failed + inconsistent, kNaN,
                           failed + inconsistent, 1.0, "failed or non-recomputable gates < 1"));
  }
  a.csv("report", {"input", "gates", "failed", "inconsistent"}, rows);
  a.results()["inputs"] = table;
}

}  // namespace conestable
