#include "conestable/stable.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace conestable {

void StableParams::validate() const {
  if (!(alpha > 0.0 && alpha < 2.0)) throw DomainError("stable index alpha must lie in (0, 2)");
  if (d < 2 || d > kMaxDim) throw DomainError("dimension must satisfy 2 <= d <= " + std::to_string(kMaxDim));
}

double sample_positive_stable(double rho, RngStream& rng) {
  if (!(rho > 0.0 && rho < 1.0)) throw DomainError("positive stable index must lie in (0, 1)");
  const double u = std::numbers::pi * rng.uniform();
  const double e = rng.exponential();
  const double lw = std::log(std::sin(rho * u)) - std::log(std::sin(u)) / rho +
                    (1.0 - rho) / rho * (std::log(std::sin((1.0 - rho) * u)) - std::log(e));
  return std::exp(lw);
}

IncrementSampler::IncrementSampler(const StableParams& p) : p_(p) {
  p_.validate();
  rho_ = p_.alpha / 2.0;
  inv_rho_ = 1.0 / rho_;
  ratio_ = (1.0 - rho_) / rho_;
  inv_alpha_ = 1.0 / p_.alpha;
}

Point sample_isotropic_increment(const StableParams& params, double t, RngStream& rng) {
  if (!(t >= 0.0)) throw DomainError("increment time must be nonnegative");
  return IncrementSampler(params)(t, rng);
}

double step_length(const StepPolicy& policy, const ConeSpec& cone, const StableParams& params, const Point& x) {
  if (policy.rule == StepRule::Fixed) return policy.h;
  const double dist = boundary_distance(cone, x);
  return std::clamp(policy.h * std::pow(dist, params.alpha), policy.min_step, policy.max_step);
}

std::size_t PathGrid::index_at(double t) const {
  if (times.empty()) return 0;
  auto it = std::upper_bound(times.begin(), times.end(), t + 1e-12 * std::max(1.0, std::fabs(t)));
  if (it == times.begin()) return 0;
  return static_cast<std::size_t>(std::distance(times.begin(), it) - 1);
}

PathGrid simulate_killed_path(const StableParams& params, const ConeSpec& cone, const Point& x0, double horizon,
                              const StepPolicy& policy, RngStream& rng) {
  params.validate();
  if (!(policy.h > 0.0)) throw DomainError("step size must be positive");
  if (!(horizon >= policy.h) && policy.rule == StepRule::Fixed) throw DomainError("horizon must be at least one step");
  if (x0.dim() != params.d) throw GeometryError("start point has wrong dimension");
  if (!contains(cone, x0)) throw GeometryError("start point outside the cone");
  if (policy.rule == StepRule::BoundaryRelative && !supports_ball_walks(cone))
    throw DomainError("relative step rule requires a cone with a closed-form boundary distance");

  IncrementSampler inc(params);
  PathGrid path;
  path.h = policy.h;
  path.start = x0;
  path.seed = rng.seed();
  path.stream_id = rng.stream_id();
  path.times.push_back(0.0);
  path.positions.push_back(x0);

  Point x = x0;
  if (policy.rule == StepRule::Fixed) {
    const auto n = static_cast<std::size_t>(std::ceil(horizon / policy.h - 1e-9));
    path.times.reserve(n + 1);
    path.positions.reserve(n + 1);
    for (std::size_t k = 1; k <= n; ++k) {
      x += inc(policy.h, rng);
      path.times.push_back(static_cast<double>(k) * policy.h);
      path.positions.push_back(x);
      if (!contains(cone, x)) {
        path.status = PathStatus::Killed;
        path.killed_index = k;
        return path;
      }
    }
    return path;
  }

  double t = 0.0;
  while (t < horizon) {
    double dt = std::min(step_length(policy, cone, params, x), horizon - t);
    x += inc(dt, rng);
    t = (horizon - t <= dt) ? horizon : t + dt;
    path.times.push_back(t);
    path.positions.push_back(x);
    if (!contains(cone, x)) {
      path.status = PathStatus::Killed;
      path.killed_index = path.positions.size() - 1;
      return path;
    }
  }
  return path;
}

PathGrid simulate_killed_path(const StableParams& params, const ConeSpec& cone, const Point& x0, double horizon,
                              double h, RngStream& rng) {
  return simulate_killed_path(params, cone, x0, horizon, StepPolicy::fixed(h), rng);
}

std::size_t simulate_snapshots(const IncrementSampler& inc, const ConeSpec& cone, const Point& x0,
                               std::span<const double> times, const StepPolicy& policy, RngStream& rng,
                               std::vector<Point>& out, double* kill_time) {
  out.clear();
  Point x = x0;
  double t = 0.0;
  for (double target : times) {
    while (t < target) {
      const double dt = std::min(step_length(policy, cone, inc.params(), x), target - t);
      x += inc(dt, rng);
      t = (target - t <= dt) ? target : t + dt;
      if (!contains(cone, x)) {
        if (kill_time) *kill_time = t;
        return out.size();
      }
    }
    out.push_back(x);
  }
  return out.size();
}

namespace {

// Radial part of the ball exit: u = 1/|y|^2 has density proportional to
// u^{alpha/2-1} (1-u)^{-alpha/2} / (1 - a u) on (0,1), a = |x|^2. This follows
// from integrating the exit density over spheres with the Poisson-kernel
// identity  int |r phi - x|^{-d} sigma_1(d phi) = r^{2-d} / (r^2 - |x|^2).
// Sampled by Beta(alpha/2, 1-alpha/2) proposals accepted with (1-a)/(1-a u).
double sample_exit_radius(double alpha, double a, RngStream& rng) {
  for (;;) {
    const double u = rng.beta(alpha / 2.0, 1.0 - alpha / 2.0);
    if (!(u > 0.0 && u < 1.0)) continue;
    const double r = 1.0 / std::sqrt(u);
    if (!(r > 1.0)) continue;
    if (a == 0.0 || rng.uniform() * (1.0 - a * u) <= 1.0 - a) return r;
  }
}

// Unit vector orthogonal to the unit vector `e`.
Point orthogonal_unit(const Point& e, RngStream& rng) {
  const int d = e.dim();
  for (;;) {
    Point g(d);
    for (int i = 0; i < d; ++i) g[i] = rng.normal();
    g -= e * dot(g, e);
    const double n = g.norm();
    if (n > 1e-12) return g * (1.0 / n);
  }
}

// Direction phi on the sphere of radius r with density proportional to
// |r phi - x|^{-d} w.r.t. sigma_1 (harmonic measure of the ball of radius r
// seen from x, |x| < r).
Point sample_exit_direction(const Point& x, double r, RngStream& rng) {
  const int d = x.dim();
  const double b = x.norm();
  if (b == 0.0) return rng.unit_vector(d);
  const Point e = x * (1.0 / b);
  if (d == 2) {
    // Wrapped Cauchy with concentration b/r around e.
    const double q = b / r;
    const double w = 2.0 * std::atan((1.0 - q) / (1.0 + q) * std::tan(std::numbers::pi * (rng.uniform() - 0.5)));
    const Point v(Point{-e[1], e[0]});
    return e * std::cos(w) + v * std::sin(w);
  }
  if (d == 3) {
    // cos(angle) has density proportional to (A - B c)^{-3/2}; closed-form inverse.
    const double lo = 1.0 / (r + b);
    const double hi = 1.0 / (r - b);
    const double q = lo + rng.uniform() * (hi - lo);
    double c = ((r * r + b * b) - 1.0 / (q * q)) / (2.0 * r * b);
    c = std::clamp(c, -1.0, 1.0);
    const Point v = orthogonal_unit(e, rng);
    return e * c + v * std::sqrt(std::max(0.0, 1.0 - c * c));
  }
  // General d: uniform proposal, accept with ((r-b)/|r phi - x|)^d.
  for (;;) {
    const Point phi = rng.unit_vector(d);
    const double dist = (phi * r - x).norm();
    if (rng.uniform() <= std::pow((r - b) / dist, d)) return phi;
  }
}

}  // namespace

Point sample_ball_exit(const StableParams& params, const Point& x_rel, RngStream& rng) {
  params.validate();
  if (x_rel.dim() != params.d) throw GeometryError("ball exit start has wrong dimension");
  const double a = x_rel.norm2();
  if (!(a < 1.0)) throw GeometryError("ball exit start must satisfy |x| < 1");
  const double r = sample_exit_radius(params.alpha, a, rng);
  return sample_exit_direction(x_rel, r, rng) * r;
}

Point sample_ball_exit_from_center(const StableParams& params, RngStream& rng) {
  const double r = sample_exit_radius(params.alpha, 0.0, rng);
  return rng.unit_vector(params.d) * r;
}

double ball_exit_density_constant(const StableParams& params) {
  const double d = params.d;
  return std::tgamma(d / 2.0) * std::pow(std::numbers::pi, -d / 2.0 - 1.0) * std::sin(std::numbers::pi * params.alpha / 2.0);
}

double ball_exit_density(const StableParams& params, const Point& x_rel, const Point& y) {
  const double y2 = y.norm2();
  if (!(y2 > 1.0)) return 0.0;
  const double x2 = x_rel.norm2();
  const double a2 = params.alpha / 2.0;
  return ball_exit_density_constant(params) * std::pow((1.0 - x2) / (y2 - 1.0), a2) *
         std::pow((y - x_rel).norm(), -static_cast<double>(params.d));
}

WalkResult walk_on_spheres_exit(const StableParams& params, const ConeSpec& cone, const Point& x0,
                                double min_radius, std::size_t max_steps, RngStream& rng) {
  params.validate();
  if (!supports_ball_walks(cone)) throw DomainError("walk on spheres needs a supported boundary distance");
  if (!contains(cone, x0)) throw GeometryError("walk start outside the cone");
  WalkOptions opts;
  opts.min_radius = min_radius;
  opts.max_steps = max_steps;
  return walk_on_spheres(
      params, x0, [&](const Point& x) { return boundary_distance(cone, x); },
      [&](const Point& x) { return contains(cone, x); }, opts, rng);
}

}  // namespace conestable
