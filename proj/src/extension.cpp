#include "conestable/extension.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <boost/math/quadrature/gauss.hpp>

#include "conestable/error.hpp"
#include "conestable/parallel.hpp"

namespace conestable {

void ExcursionSpec::validate(double alpha, double beta) const {
  if (kind == ExtensionKind::Jump) {
    if (!(gamma > 0.0 && gamma < beta / alpha))
      throw DomainError("jump extension: gamma must lie in (0, beta/alpha) = (0, " + std::to_string(beta / alpha) + ")");
    if (!(r_min > 0.0)) throw DomainError("jump extension: r_min must be positive");
  } else {
    if (!(zeta_min > 0.0) || !(delta > 0.0)) throw DomainError("continuous extension: zeta_min and delta must be positive");
    if (!(std::pow(delta, alpha) < zeta_min)) throw DomainError("continuous extension: requires delta^alpha < zeta_min");
    if (!(C_hat > 0.0)) throw DomainError("continuous extension: C_hat must be positive");
  }
}

double ExcursionSpec::rate(double alpha, double beta) const {
  if (kind == ExtensionKind::Jump) return std::pow(r_min, -alpha * gamma) / (alpha * gamma);
  return C_hat * std::pow(zeta_min, -beta / alpha);
}

long OccupationBins::index(const ConeSpec& cone, const Point& x) const {
  const double r = x.norm();
  if (r < radial_edges.front() || r >= radial_edges.back()) return -1;
  const auto ri = std::upper_bound(radial_edges.begin(), radial_edges.end(), r) - radial_edges.begin() - 1;
  const double eta = polar_angle(cone, x);
  if (eta < angle_edges.front() || eta >= angle_edges.back()) return -1;
  const auto ai = std::upper_bound(angle_edges.begin(), angle_edges.end(), eta) - angle_edges.begin() - 1;
  return static_cast<long>(ri * static_cast<long>(angle_edges.size() - 1) + ai);
}

OccupationBins OccupationBins::log_spaced(double r_lo, double r_hi, std::size_t radial, double psi,
                                          std::size_t angular) {
  if (!(r_lo > 0.0 && r_hi > r_lo) || radial == 0 || angular == 0) throw DomainError("occupation bins: invalid layout");
  OccupationBins b;
  for (std::size_t i = 0; i <= radial; ++i)
    b.radial_edges.push_back(r_lo * std::pow(r_hi / r_lo, static_cast<double>(i) / static_cast<double>(radial)));
  for (std::size_t i = 0; i <= angular; ++i)
    b.angle_edges.push_back(psi * static_cast<double>(i) / static_cast<double>(angular));
  return b;
}

OccupationHistogram::OccupationHistogram(OccupationBins b) : bins(std::move(b)) {
  const std::size_t n = bins.radial_edges.size() > 1 ? bins.count() : 0;
  mass.assign(n, 0.0);
  second.assign(n * n, 0.0);
}

void OccupationHistogram::add(const std::vector<double>& occ) {
  const std::size_t n = mass.size();
  std::vector<std::size_t> nz;
  for (std::size_t a = 0; a < n; ++a)
    if (occ[a] != 0.0) nz.push_back(a);
  for (std::size_t a : nz) {
    mass[a] += occ[a];
    for (std::size_t b : nz) second[a * n + b] += occ[a] * occ[b];
  }
}

void OccupationHistogram::merge(const OccupationHistogram& o) {
  for (std::size_t i = 0; i < mass.size(); ++i) mass[i] += o.mass[i];
  for (std::size_t i = 0; i < second.size(); ++i) second[i] += o.second[i];
  local_time += o.local_time;
}

MeanEstimate OccupationHistogram::sum(const std::vector<bool>& use) const {
  const std::size_t n = mass.size();
  MeanEstimate m;
  double v = 0.0;
  for (std::size_t a = 0; a < n; ++a) {
    if (!use[a]) continue;
    m.mean += mass[a];
    for (std::size_t b = 0; b < n; ++b)
      if (use[b]) v += second[a * n + b];
  }
  m.se = std::sqrt(std::max(0.0, v));
  m.n = n;
  return m;
}

std::vector<MeanEstimate> OccupationHistogram::radial_mass() const {
  const std::size_t na = bins.angle_edges.size() - 1, nr = bins.radial_edges.size() - 1;
  std::vector<MeanEstimate> out;
  for (std::size_t r = 0; r < nr; ++r) {
    std::vector<bool> use(mass.size(), false);
    for (std::size_t a = 0; a < na; ++a) use[r * na + a] = true;
    out.push_back(sum(use));
  }
  return out;
}

std::vector<MeanEstimate> OccupationHistogram::angular_mass(double r_lo, double r_hi) const {
  const std::size_t na = bins.angle_edges.size() - 1, nr = bins.radial_edges.size() - 1;
  std::vector<MeanEstimate> out;
  for (std::size_t a = 0; a < na; ++a) {
    std::vector<bool> use(mass.size(), false);
    for (std::size_t r = 0; r < nr; ++r)
      if (bins.radial_edges[r] >= r_lo * (1 - 1e-12) && bins.radial_edges[r + 1] <= r_hi * (1 + 1e-12))
        use[r * na + a] = true;
    out.push_back(sum(use));
  }
  return out;
}

MeanEstimate OccupationHistogram::window_mass(double r_lo, double r_hi) const {
  const std::size_t na = bins.angle_edges.size() - 1, nr = bins.radial_edges.size() - 1;
  std::vector<bool> use(mass.size(), false);
  for (std::size_t r = 0; r < nr; ++r)
    if (bins.radial_edges[r] >= r_lo * (1 - 1e-12) && bins.radial_edges[r + 1] <= r_hi * (1 + 1e-12))
      for (std::size_t a = 0; a < na; ++a) use[r * na + a] = true;
  return sum(use);
}

namespace {

/// Uniform random bit generator view of an RngStream.
struct Urbg {
  using result_type = std::uint64_t;
  RngStream& r;
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
  result_type operator()() { return r.bits(); }
};

struct RunResult {
  ExcursionRecord rec;
  std::vector<double> occ;
  PathGrid path;
  std::size_t attempts = 1;
};

/// Runs a killed path from x0 until exit or a cap. When `min_life` > 0 the
/// run reports failure (returns false) if killed before min_life.
bool run_excursion(const IncrementSampler& inc, const StableParams& params, const ConeSpec& cone, const Point& x0,
                   const StepPolicy& policy, const ExcursionCaps& caps, const OccupationBins* bins, bool keep,
                   double min_life, RngStream& r, RunResult& out) {
  if (bins) out.occ.assign(bins->count(), 0.0);
  if (keep) {
    out.path = PathGrid{};
    out.path.h = policy.h;
    out.path.start = x0;
    out.path.times.push_back(0.0);
    out.path.positions.push_back(x0);
  }
  Point x = x0;
  double t = 0.0;
  while (true) {
    if (t >= caps.time_cap || x.norm() > caps.far_radius) {
      out.rec.partial = true;
      break;
    }
    const double dt = step_length(policy, cone, params, x);
    if (bins) {
      const long b = bins->index(cone, x);
      if (b >= 0) out.occ[b] += dt;
    }
    x += inc(dt, r);
    t += dt;
    const bool in = contains(cone, x);
    if (keep) {
      out.path.times.push_back(t);
      out.path.positions.push_back(x);
      if (!in) {
        out.path.status = PathStatus::Killed;
        out.path.killed_index = out.path.positions.size() - 1;
      }
    }
    if (!in) {
      if (t < min_life) return false;
      break;
    }
  }
  out.rec.start = x0;
  out.rec.lifetime = t;
  return true;
}

GluedPath glue(const ExcursionSpec& spec, double local_time, double rate, std::vector<RunResult>&& runs,
               const OccupationBins* bins, bool keep) {
  GluedPath g;
  g.spec = spec;
  g.local_time = local_time;
  g.rate = rate;
  if (bins) {
    g.occupation = OccupationHistogram(*bins);
    g.occupation.local_time = local_time;
  }
  for (auto& r : runs) {
    r.rec.start_time = g.total_time;
    g.total_time += r.rec.lifetime;
    g.partial += r.rec.partial ? 1 : 0;
    g.attempts += r.attempts;
    if (bins) g.occupation.add(r.occ);
    g.excursions.push_back(r.rec);
    if (keep) g.paths.push_back(std::move(r.path));
  }
  return g;
}

std::size_t poisson_count(double mean, const RngStream& rng) {
  RngStream r = rng.split(0xC0FFEE);
  Urbg u{r};
  return static_cast<std::size_t>(std::poisson_distribution<long long>(mean)(u));
}

}  // namespace

GluedPath build_jump_extension(const ExcursionSpec& spec, const StableParams& params, const ConeSpec& cone,
                               double beta, double local_time, const StepPolicy& policy, const RngStream& rng,
                               const OccupationBins* bins, bool keep_paths, const ExcursionCaps& caps) {
  params.validate();
  if (spec.kind != ExtensionKind::Jump) throw DomainError("jump extension: spec is not of jump type");
  spec.validate(params.alpha, beta);
  if (!(local_time > 0.0)) throw DomainError("jump extension: local time must be positive");
  const double rate = spec.rate(params.alpha, beta);
  const std::size_t K = poisson_count(local_time * rate, rng);
  const IncrementSampler inc(params);
  const double ag = params.alpha * spec.gamma;
  auto runs = parallel_map(K, [&](std::size_t k) {
    RngStream r = rng.split(k);
    const double rad = spec.r_min * std::pow(r.uniform(), -1.0 / ag);
    const Point x0 = surface_sample(cone, r).vec() * rad;
    RunResult out;
    run_excursion(inc, params, cone, x0, policy, caps, bins, keep_paths, 0.0, r, out);
    return out;
  });
  return glue(spec, local_time, rate, std::move(runs), bins, keep_paths);
}

GluedPath build_continuous_extension(const ExcursionSpec& spec, const StableParams& params, const ConeSpec& cone,
                                     double beta, double local_time, const StepPolicy& policy, const RngStream& rng,
                                     const OccupationBins* bins, bool keep_paths, const ExcursionCaps& caps) {
  params.validate();
  if (spec.kind != ExtensionKind::Continuous) throw DomainError("continuous extension: spec is not of continuous type");
  spec.validate(params.alpha, beta);
  if (!(local_time > 0.0)) throw DomainError("continuous extension: local time must be positive");
  const double rate = spec.rate(params.alpha, beta);
  const std::size_t K = poisson_count(local_time * rate, rng);
  const IncrementSampler inc(params);
  const Point x0 = cone.axis().vec() * spec.delta;
  const auto max_attempts = static_cast<std::size_t>(std::ceil(1.0 / kMinAcceptance));
  auto runs = parallel_map(K, [&](std::size_t k) {
    RngStream r = rng.split(k);
    RunResult out;
    out.attempts = 0;
    while (out.attempts < max_attempts) {
      ++out.attempts;
      if (run_excursion(inc, params, cone, x0, policy, caps, bins, keep_paths, spec.zeta_min, r, out)) return out;
    }
    throw EstimationError("continuous extension: rejection acceptance below " + std::to_string(kMinAcceptance));
  });
  GluedPath g = glue(spec, local_time, rate, std::move(runs), bins, keep_paths);
  if (g.acceptance() < kMinAcceptance)
    throw EstimationError("continuous extension: rejection acceptance below " + std::to_string(kMinAcceptance));
  return g;
}

OccupationHistogram occupation_histogram(const GluedPath& glued, const ConeSpec& cone, const OccupationBins& bins) {
  if (glued.paths.size() != glued.excursions.size()) throw DomainError("occupation: glued path has no stored paths");
  OccupationHistogram occ(bins);
  occ.local_time = glued.local_time;
  std::vector<double> o(bins.count());
  for (const auto& p : glued.paths) {
    std::fill(o.begin(), o.end(), 0.0);
    const std::size_t last = p.killed() ? p.killed_index : p.size() - 1;
    for (std::size_t k = 0; k < last; ++k) {
      const long b = bins.index(cone, p.positions[k]);
      if (b >= 0) o[b] += p.times[k + 1] - p.times[k];
    }
    occ.add(o);
  }
  return occ;
}

SlopeFit radial_exponent(const OccupationHistogram& occ, double r_lo, double r_hi) {
  const auto rm = occ.radial_mass();
  const auto& e = occ.bins.radial_edges;
  std::vector<double> xs, ys, ses;
  for (std::size_t i = 0; i + 1 < e.size(); ++i) {
    if (e[i] < r_lo * (1 - 1e-12) || e[i + 1] > r_hi * (1 + 1e-12)) continue;
    if (!(rm[i].mean > 0.0)) throw EstimationError("occupation: empty radial bin inside the fit window");
    const double w = e[i + 1] - e[i];
    xs.push_back(std::sqrt(e[i] * e[i + 1]));
    ys.push_back(rm[i].mean / w);
    ses.push_back(rm[i].se / w);
  }
  if (xs.size() < 3) throw EstimationError("occupation: fewer than 3 radial bins in the fit window");
  return loglog_fit(xs, ys, ses);
}

LengthTail length_tail(const GluedPath& glued, double decades, std::size_t points) {
  const double zmin = glued.spec.zeta_min;
  const auto n = static_cast<double>(glued.count());
  if (glued.count() < 20) throw EstimationError("length tail: fewer than 20 excursions");
  LengthTail lt;
  for (std::size_t k = 1; k <= points; ++k) {
    const double s = zmin * std::pow(10.0, decades * static_cast<double>(k) / static_cast<double>(points));
    double c = 0.0;
    for (const auto& e : glued.excursions) c += e.lifetime > s ? 1.0 : 0.0;
    const double p = c / n;
    lt.s.push_back(s);
    lt.p.push_back(p);
    lt.se.push_back(std::sqrt(std::max(p * (1.0 - p), 0.25 / n) / n));
  }
  lt.fit = loglog_fit(lt.s, lt.p, lt.se);
  return lt;
}

AngularProfile angular_profile(const OccupationHistogram& occ, const HarmonicFunction& M, double r_lo, double r_hi) {
  using Gauss = boost::math::quadrature::gauss<double, 20>;
  const auto am = occ.angular_mass(r_lo, r_hi);
  const auto& e = occ.bins.angle_edges;
  const int d = M.cone().dim();
  std::vector<double> q(am.size());
  double tq = 0.0, tm = 0.0;
  for (std::size_t a = 0; a < am.size(); ++a) {
    q[a] = Gauss::integrate([&](double t) { return M.angular(t) * std::pow(std::sin(t), d - 2); }, e[a], e[a + 1]);
    tq += q[a];
    tm += am[a].mean;
  }
  if (!(tm > 0.0)) throw EstimationError("angular profile: no occupation inside the window");
  AngularProfile ap;
  for (std::size_t a = 0; a < am.size(); ++a) {
    const double norm = tq / (q[a] * tm);
    ap.ratio.push_back(am[a].mean * norm);
    ap.se.push_back(am[a].se * norm);
    if (ap.se.back() > 0.0) ap.statistic = std::max(ap.statistic, std::fabs(ap.ratio.back() - 1.0) / ap.se.back());
  }
  return ap;
}

// ---------------------------------------------------------------------------

const char* to_string(ExtensionTarget t) { return t == ExtensionTarget::Gamma ? "gamma" : "apex_conditioned"; }

nlohmann::json Admissibility::to_json() const {
  nlohmann::json j{{"target", to_string(target)},
                   {"alpha", alpha},
                   {"beta", beta},
                   {"d", d},
                   {"exists", exists},
                   {"continuous_allowed", continuous_allowed},
                   {"gamma_interval", {gamma_lo, gamma_hi}},
                   {"reason", reason}};
  if (gamma_given) {
    j["gamma"] = gamma;
    j["jump_allowed"] = jump_allowed;
  }
  return j;
}

Admissibility check_extension_conditions(double alpha, double beta, int d, ExtensionTarget target, double gamma) {
  if (!(alpha > 0.0 && alpha < 2.0)) throw DomainError("admissibility: alpha must lie in (0, 2)");
  if (!(beta > 0.0 && beta < alpha)) throw DomainError("admissibility: beta must lie in (0, alpha)");
  if (d < 2) throw DomainError("admissibility: d must be at least 2");
  Admissibility a;
  a.target = target;
  a.alpha = alpha;
  a.beta = beta;
  a.d = d;
  a.gamma_given = gamma >= 0.0;
  a.gamma = gamma;
  if (target == ExtensionTarget::Gamma) {
    a.continuous_allowed = true;
    a.gamma_hi = beta / alpha;
    a.reason = "jump type needs gamma in (0, beta/alpha)";
  } else {
    const double s = d + 2.0 * beta - alpha;
    a.exists = s > 0.0;
    if (!a.exists) {
      a.reason = "d + 2 beta - alpha <= 0";
      return a;
    }
    a.gamma_hi = std::min(s / alpha, 1.0);
    a.continuous_allowed = beta < (2.0 * alpha - d) / 2.0;
    a.reason = a.continuous_allowed ? "jump type needs gamma in (0, min((d + 2 beta - alpha)/alpha, 1))"
                                     : "continuous type needs beta < (2 alpha - d)/2";
  }
  a.jump_allowed = a.gamma_given && gamma > a.gamma_lo && gamma < a.gamma_hi;
  return a;
}

}  // namespace conestable
