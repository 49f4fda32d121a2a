#include "conestable/harmonic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "conestable/parallel.hpp"

namespace conestable {

// ---------------------------------------------------------------------------
// HarmonicFunction

HarmonicFunction HarmonicFunction::half_space_exact(const ConeSpec& cone, double alpha) {
  const bool flat = cone.kind() == ConeKind::HalfSpace ||
                    (cone.kind() == ConeKind::Circular && cone.half_angle() == std::numbers::pi / 2);
  if (!flat) throw DomainError("half-space harmonic function needs a half-space cone");
  if (!(alpha > 0.0 && alpha < 2.0)) throw DomainError("alpha must lie in (0, 2)");
  HarmonicFunction f(cone);
  f.source_ = Source::HalfSpaceExact;
  f.beta_ = alpha / 2.0;
  return f;
}

HarmonicFunction HarmonicFunction::constant(const ConeSpec& cone) {
  HarmonicFunction f(cone);
  f.source_ = Source::Constant;
  f.beta_ = 0.0;
  return f;
}

HarmonicFunction HarmonicFunction::tabulated(const ConeSpec& cone, double beta, std::vector<double> eta,
                                             std::vector<double> values) {
  if (eta.size() != values.size() || eta.empty()) throw DomainError("harmonic table: grid and values differ in size");
  if (!std::is_sorted(eta.begin(), eta.end())) throw DomainError("harmonic table: polar angles must increase");
  if (eta.front() < 0.0 || eta.back() > cone.half_angle()) throw DomainError("harmonic table: angle outside the cone");
  for (double v : values)
    if (!(v >= 0.0) || !std::isfinite(v)) throw DomainError("harmonic table: values must be finite and nonnegative");
  HarmonicFunction f(cone);
  f.source_ = Source::Tabulated;
  f.beta_ = beta;
  f.eta_ = std::move(eta);
  f.m_ = std::move(values);
  if (cone.kind() != ConeKind::Punctured && f.eta_.back() < cone.half_angle()) {
    f.eta_.push_back(cone.half_angle());
    f.m_.push_back(0.0);
  }
  return f;
}

HarmonicFunction HarmonicFunction::exact_for(const ConeSpec& cone, double alpha) {
  switch (cone.kind()) {
    case ConeKind::HalfSpace:
      return half_space_exact(cone, alpha);
    case ConeKind::Punctured:
      return constant(cone);
    case ConeKind::Circular:
      if (cone.half_angle() == std::numbers::pi / 2) return half_space_exact(cone, alpha);
      break;
  }
  throw DomainError("no closed-form harmonic function for " + describe(cone));
}

double HarmonicFunction::angular(double eta) const {
  switch (source_) {
    case Source::HalfSpaceExact:
      return eta < std::numbers::pi / 2 ? scale_ * std::pow(std::cos(eta), beta_) : 0.0;
    case Source::Constant:
      return scale_;
    case Source::Tabulated: {
      if (eta <= eta_.front()) return scale_ * m_.front();
      if (eta >= eta_.back()) return cone_.kind() == ConeKind::Punctured ? scale_ * m_.back() : 0.0;
      const auto it = std::upper_bound(eta_.begin(), eta_.end(), eta);
      const std::size_t j = static_cast<std::size_t>(it - eta_.begin());
      const double w = (eta - eta_[j - 1]) / (eta_[j] - eta_[j - 1]);
      return scale_ * ((1.0 - w) * m_[j - 1] + w * m_[j]);
    }
  }
  return 0.0;
}

double HarmonicFunction::operator()(const Point& x) const {
  switch (source_) {
    case Source::HalfSpaceExact: {
      const double v = dot(x, cone_.axis().vec());
      return v > 0.0 ? scale_ * std::pow(v, beta_) : 0.0;
    }
    case Source::Constant:
      return contains(cone_, x) ? scale_ : 0.0;
    case Source::Tabulated:
      if (!contains(cone_, x)) return 0.0;
      return std::pow(x.norm(), beta_) * angular(polar_angle(cone_, x));
  }
  return 0.0;
}

HarmonicFunction HarmonicFunction::scaled(double c) const {
  if (!(c > 0.0)) throw DomainError("harmonic function scale must be positive");
  HarmonicFunction f = *this;
  f.scale_ *= c;
  return f;
}

nlohmann::json HarmonicFunction::to_json() const {
  nlohmann::json j;
  j["source"] = source_ == Source::HalfSpaceExact ? "halfspace_exact" : source_ == Source::Constant ? "constant" : "tabulated";
  j["beta"] = beta_;
  j["scale"] = scale_;
  if (source_ == Source::Tabulated) {
    j["eta"] = eta_;
    j["m"] = m_;
  }
  return j;
}

// ---------------------------------------------------------------------------
// Survival

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct KillTimes {
  double t1 = kInf, t2 = kInf, t4 = kInf;
};

// First grid times outside the cone on the h, 2h and 4h grids of one path.
KillTimes coupled_kill_times(const IncrementSampler& inc, const ConeSpec& cone, const Point& x0, std::size_t n,
                             double h, bool all_levels, RngStream& rng) {
  KillTimes k;
  Point x = x0;
  for (std::size_t i = 1; i <= n; ++i) {
    x += inc(h, rng);
    if (contains(cone, x)) continue;
    const double t = static_cast<double>(i) * h;
    if (k.t1 == kInf) k.t1 = t;
    if (!all_levels) break;
    if (i % 2 == 0 && k.t2 == kInf) k.t2 = t;
    if (i % 4 == 0) {
      k.t4 = t;
      break;
    }
  }
  return k;
}

double floored_se(double se, std::size_t N) {
  if (se > 0.0) return se;
  const double q = 0.5 / static_cast<double>(N);
  return std::sqrt(q * (1.0 - q) / static_cast<double>(N));
}

}  // namespace

SurvivalCurve estimate_survival(const StableParams& params, const ConeSpec& cone, const Point& x,
                                const std::vector<double>& times, std::size_t N, double h, const RngStream& rng,
                                bool extrapolate) {
  params.validate();
  if (times.empty()) throw DomainError("survival: empty time list");
  if (N == 0) throw DomainError("survival: N must be positive");
  if (!(h > 0.0)) throw DomainError("survival: step must be positive");
  if (!std::is_sorted(times.begin(), times.end()) || times.front() <= 0.0)
    throw DomainError("survival: times must be positive and increasing");
  if (!contains(cone, x)) throw GeometryError("survival: start outside the cone");

  const IncrementSampler inc(params);
  const auto n = static_cast<std::size_t>(std::ceil(times.back() / h - 1e-9));
  const auto kills = parallel_map(N, [&](std::size_t i) {
    RngStream r = rng.split(i);
    return coupled_kill_times(inc, cone, x, n, h, extrapolate, r);
  });

  SurvivalCurve c;
  c.start = x;
  c.times = times;
  c.h = h;
  c.N = N;
  c.extrapolated = extrapolate;
  const double nn = static_cast<double>(N);
  const double tol = 1e-9 * h;
  auto alive = [&](double kt, double t) { return kt > t + tol ? 1.0 : 0.0; };
  for (double t : times) {
    double s1 = 0, s2 = 0, s4 = 0;
    for (const auto& k : kills) {
      s1 += alive(k.t1, t);
      s2 += alive(k.t2, t);
      s4 += alive(k.t4, t);
    }
    const double p = s1 / nn;
    c.p_hat.push_back(p);
    c.se.push_back(std::sqrt(p * (1.0 - p) / nn));
    if (extrapolate) {
      c.p_2h.push_back(s2 / nn);
      c.p_4h.push_back(s4 / nn);
    }
  }
  if (!extrapolate) return c;

  double d1 = 0.0, d2 = 0.0;
  for (std::size_t j = 0; j < times.size(); ++j) {
    d1 += c.p_2h[j] - c.p_hat[j];
    d2 += c.p_4h[j] - c.p_2h[j];
  }
  double q = (d1 > 0.0 && d2 > 0.0) ? std::log2(d2 / d1) : kMaxRichardsonOrder;
  if (!std::isfinite(q)) q = kMaxRichardsonOrder;
  c.order_clamped = q < kMinRichardsonOrder || q > kMaxRichardsonOrder;
  c.order = std::clamp(q, kMinRichardsonOrder, kMaxRichardsonOrder);
  const double f = 1.0 / (std::pow(2.0, c.order) - 1.0);

  std::vector<double> z(N);
  for (double t : times) {
    for (std::size_t i = 0; i < N; ++i) {
      const double a1 = alive(kills[i].t1, t), a2 = alive(kills[i].t2, t);
      z[i] = a1 - (a2 - a1) * f;
    }
    const auto m = mean_se(z);
    c.p_extrap.push_back(m.mean);
    c.se_extrap.push_back(m.se);
  }
  return c;
}

BetaEstimate estimate_beta(const SurvivalCurve& curve, double alpha, double t_lo, double t_hi) {
  std::vector<double> ts, ps, ses;
  const auto& p = curve.best();
  const auto& se = curve.best_se();
  for (std::size_t j = 0; j < curve.times.size(); ++j) {
    const double t = curve.times[j];
    if (t < t_lo * (1 - 1e-12) || t > t_hi * (1 + 1e-12)) continue;
    if (!(p[j] > 0.0)) throw EstimationError("estimate_beta: zero survival inside the fit window");
    ts.push_back(t);
    ps.push_back(p[j]);
    ses.push_back(floored_se(se[j], curve.N));
  }
  if (ts.size() < 3) throw EstimationError("estimate_beta: fewer than 3 times in the fit window");
  BetaEstimate b;
  b.fit = loglog_fit(ts, ps, ses);
  b.beta = -alpha * b.fit.slope;
  b.se = alpha * b.fit.slope_se;
  b.t_lo = t_lo;
  b.t_hi = t_hi;
  return b;
}

// ---------------------------------------------------------------------------
// Harmonic function estimate

namespace {

bool survives(const IncrementSampler& inc, const ConeSpec& cone, const Point& x0, double T, const StepPolicy& policy,
              RngStream& rng) {
  Point x = x0;
  double t = 0.0;
  while (t < T) {
    const double dt = std::min(step_length(policy, cone, inc.params(), x), T - t);
    x += inc(dt, rng);
    t = (T - t <= dt) ? T : t + dt;
    if (!contains(cone, x)) return false;
  }
  return true;
}

}  // namespace

HarmonicFunction HarmonicEstimate::function(const ConeSpec& cone) const {
  return HarmonicFunction::tabulated(cone, beta, eta, m_hat);
}

HarmonicEstimate HarmonicEstimate::renormalised_at(std::size_t k) const {
  if (k >= m_hat.size() || !(m_hat[k] > 0.0)) throw EstimationError("renormalisation point has zero value");
  HarmonicEstimate e = *this;
  const double c = 1.0 / m_hat[k];
  for (auto& v : e.m_hat) v *= c;
  for (auto& v : e.m_se) v *= c;
  e.C_hat /= c;
  e.C_se /= c;
  return e;
}

HarmonicEstimate estimate_M(const StableParams& params, const ConeSpec& cone, double beta, double t_ref,
                            const std::vector<double>& eta_grid, double r_small, std::size_t N,
                            const StepPolicy& policy, const RngStream& rng) {
  params.validate();
  if (eta_grid.empty() || eta_grid.front() != 0.0) throw DomainError("estimate_M: angular grid must start at 0");
  if (!std::is_sorted(eta_grid.begin(), eta_grid.end()) || eta_grid.back() >= cone.half_angle())
    throw DomainError("estimate_M: angular grid must increase and stay inside the cone");
  if (!(r_small > 0.0) || !(std::pow(r_small, params.alpha) <= t_ref / 100.0))
    throw EstimationError("estimate_M: r_small^alpha must be at most t_ref/100 (asymptotic regime)");
  if (N == 0) throw DomainError("estimate_M: N must be positive");

  const IncrementSampler inc(params);
  const Point towards = meridian_direction(cone);
  const double nn = static_cast<double>(N);
  std::vector<double> p(eta_grid.size()), pse(eta_grid.size());
  for (std::size_t g = 0; g < eta_grid.size(); ++g) {
    const Point x = direction_at_polar_angle(cone, eta_grid[g], towards) * r_small;
    const RngStream base = rng.split(g);
    const auto alive = parallel_map(N, [&](std::size_t i) {
      RngStream r = base.split(i);
      return survives(inc, cone, x, t_ref, policy, r) ? 1 : 0;
    });
    double s = 0;
    for (int a : alive) s += a;
    p[g] = s / nn;
    pse[g] = std::sqrt(p[g] * (1 - p[g]) / nn);
  }
  if (!(p[0] > 0.0)) throw EstimationError("estimate_M: no survivors from the axis start");

  HarmonicEstimate e;
  e.beta = beta;
  e.eta = eta_grid;
  e.r_small = r_small;
  e.t_ref = t_ref;
  e.x0 = cone.axis().vec() * kNormalisationRadius;
  const double norm = 1.0 / (p[0] * std::pow(kNormalisationRadius, beta));
  for (std::size_t g = 0; g < eta_grid.size(); ++g) {
    e.m_hat.push_back(p[g] * norm);
    if (g == 0) {
      e.m_se.push_back(0.0);
    } else {
      const double rel = p[g] > 0.0 ? std::hypot(pse[g] / p[g], pse[0] / p[0]) : 0.0;
      e.m_se.push_back(p[g] * norm * rel);
    }
  }
  const double m_axis = std::pow(r_small, beta) * e.m_hat[0];
  e.C_hat = p[0] * std::pow(t_ref, beta / params.alpha) / m_axis;
  e.C_se = pse[0] * std::pow(t_ref, beta / params.alpha) / m_axis;
  return e;
}

// ---------------------------------------------------------------------------
// Harmonicity

HarmonicityResult verify_harmonicity(const HarmonicFunction& M, const StableParams& params, const ConeSpec& cone,
                                     const Point& x, const Point& center, double radius, std::size_t N,
                                     const RngStream& rng, ExitMethod method, double h) {
  params.validate();
  if (!(radius > 0.0)) throw DomainError("harmonicity: ball radius must be positive");
  if (!contains(cone, x) || !((x - center).norm() < radius))
    throw GeometryError("harmonicity: start must lie in the ball and the cone");
  if (N == 0) throw DomainError("harmonicity: N must be positive");
  if (method == ExitMethod::WalkOnSpheres && !supports_ball_walks(cone))
    throw DomainError("harmonicity: walk on spheres unsupported for this cone; use the grid method");

  auto inside = [&](const Point& y) { return (y - center).norm() < radius && contains(cone, y); };
  const IncrementSampler inc(params);
  struct Out {
    double value;
    bool stalled;
  };
  const auto vals = parallel_map(N, [&](std::size_t i) -> Out {
    RngStream r = rng.split(i);
    if (method == ExitMethod::Grid) {
      Point y = x;
      do {
        y += inc(h, r);
      } while (inside(y));
      return {M(y), false};
    }
    WalkOptions opts;
    opts.min_radius = 1e-12;
    const auto res = walk_on_spheres(
        params, x, [&](const Point& y) { return std::min(radius - (y - center).norm(), boundary_distance(cone, y)); },
        inside, opts, r);
    return {M(res.position), res.status != WalkStatus::Exited};
  });

  HarmonicityResult out;
  out.N = N;
  out.target = M(x);
  std::vector<double> v(N);
  for (std::size_t i = 0; i < N; ++i) {
    v[i] = vals[i].value;
    out.stalled += vals[i].stalled ? 1 : 0;
  }
  const auto m = mean_se(v);
  out.mean = m.mean;
  out.se = m.se;
  out.residual = m.mean - out.target;
  return out;
}

// ---------------------------------------------------------------------------
// Small-ball hitting

SmallBallResult estimate_smallball_hitting(const StableParams& params, const ConeSpec& cone, const Point& x,
                                           const std::vector<double>& radii, std::size_t N, const RngStream& rng,
                                           double escape_radius) {
  params.validate();
  if (!supports_ball_walks(cone)) throw DomainError("small-ball hitting needs walk-on-spheres support");
  if (!contains(cone, x)) throw GeometryError("small-ball hitting: start outside the cone");
  if (radii.empty() || N == 0) throw DomainError("small-ball hitting: empty radii or N = 0");
  const double rx = x.norm();
  for (double a : radii)
    if (!(a > 0.0 && a < rx)) throw DomainError("small-ball hitting: radii must lie in (0, |x|)");
  if (!(escape_radius > rx)) throw DomainError("small-ball hitting: escape radius must exceed |x|");

  SmallBallResult out;
  out.radii = radii;
  const double nn = static_cast<double>(N);
  for (std::size_t k = 0; k < radii.size(); ++k) {
    const double a = radii[k];
    const RngStream base = rng.split(k);
    struct Out {
      int hit, escaped, stalled;
    };
    const auto res = parallel_map(N, [&](std::size_t i) -> Out {
      RngStream r = base.split(i);
      WalkOptions opts;
      opts.min_radius = 0.0;
      opts.escape_radius = escape_radius;
      const auto w = walk_on_spheres(
          params, x, [&](const Point& y) { return std::min(boundary_distance(cone, y), y.norm() - a); },
          [&](const Point& y) { return y.norm() >= a && contains(cone, y); }, opts, r);
      if (w.status == WalkStatus::Escaped) return {0, 1, 0};
      if (w.status != WalkStatus::Exited) return {0, 0, 1};
      const bool hit = w.position.norm() < a && contains(cone, w.position);
      return {hit ? 1 : 0, 0, 0};
    });
    double s = 0;
    for (const auto& o : res) {
      s += o.hit;
      out.escaped += o.escaped;
      out.stalled += o.stalled;
    }
    const double p = s / nn;
    out.p_hat.push_back(p);
    out.se.push_back(std::sqrt(p * (1 - p) / nn));
  }
  bool positive = radii.size() >= 3;
  for (double p : out.p_hat) positive = positive && p > 0.0;
  if (positive) out.fit = loglog_fit(out.radii, out.p_hat, out.se);
  return out;
}

}  // namespace conestable
