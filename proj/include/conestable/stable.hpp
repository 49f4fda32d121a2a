#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

#include "conestable/cone.hpp"
#include "conestable/geometry.hpp"
#include "conestable/rng.hpp"

namespace conestable {

/// Index alpha in (0,2) and dimension d >= 2 of an isotropic stable process.
struct StableParams {
  double alpha = 1.5;
  int d = 2;

  StableParams() = default;
  StableParams(double a, int dim) : alpha(a), d(dim) { validate(); }
  void validate() const;
};

/// One-sided stable variate with Laplace transform E[exp(-lambda W)] = exp(-lambda^rho).
/// Kanter's representation of the Chambers-Mallows-Stuck construction.
double sample_positive_stable(double rho, RngStream& rng);

/// Fast sampler of isotropic stable increments: X_t = t^{1/alpha} sqrt(2W) Z
/// with W one-sided stable of index alpha/2 and Z standard Gaussian in R^d.
class IncrementSampler {
 public:
  explicit IncrementSampler(const StableParams& p);

  const StableParams& params() const { return p_; }

  /// Increment over a time span t >= 0.
  Point operator()(double t, RngStream& rng) const {
    Point z(p_.d);
    if (t == 0.0) return z;
    const double w = subordinator(rng);
    const double s = std::pow(t, inv_alpha_) * std::sqrt(2.0 * w);
    for (int i = 0; i < p_.d; ++i) z[i] = s * rng.normal();
    return z;
  }

  /// One-sided stable variate of index alpha/2.
  double subordinator(RngStream& rng) const {
    const double u = std::numbers::pi * rng.uniform();
    const double e = rng.exponential();
    const double lw = std::log(std::sin(rho_ * u)) - inv_rho_ * std::log(std::sin(u)) +
                      ratio_ * (std::log(std::sin((1.0 - rho_) * u)) - std::log(e));
    return std::exp(lw);
  }

 private:
  StableParams p_;
  double rho_;
  double inv_rho_;
  double ratio_;
  double inv_alpha_;
};

/// X_t under P_0, t >= 0.
Point sample_isotropic_increment(const StableParams& params, double t, RngStream& rng);

/// How the time grid of a simulated path is laid out.
///
/// Fixed: uniform steps of size h. BoundaryRelative: the step taken from x is
/// h * dist(x)^alpha, dist being the boundary distance of the cone (|x| for the
/// punctured space). The relative rule has the same resolution at every scale,
/// which is the natural grid for a self-similar process.
enum class StepRule { Fixed, BoundaryRelative };

struct StepPolicy {
  StepRule rule = StepRule::Fixed;
  double h = 1.0 / 256.0;
  /// Upper bound on a single step (relative rule only).
  double max_step = 1.0;
  /// Lower bound on a single step (relative rule only).
  double min_step = 1e-12;

  static StepPolicy fixed(double h) { return {StepRule::Fixed, h, h, h}; }
  static StepPolicy relative(double h, double max_step = 1.0) { return {StepRule::BoundaryRelative, h, max_step, 1e-12}; }
};

/// Step length prescribed by `policy` at x.
double step_length(const StepPolicy& policy, const ConeSpec& cone, const StableParams& params, const Point& x);

enum class PathStatus { Alive, Killed };

/// A discretised killed path.
///
/// positions[k] is the state at times[k]; times[0] = 0 and positions[0] =
/// start. For fixed grids times[k] = k*h. If status == Killed, positions[j]
/// lies in the cone for j < killed_index and positions[killed_index] does not.
struct PathGrid {
  double h = 0.0;
  Point start;
  std::vector<double> times;
  std::vector<Point> positions;
  PathStatus status = PathStatus::Alive;
  std::size_t killed_index = 0;
  std::uint64_t seed = 0;
  std::uint64_t stream_id = 0;

  std::size_t size() const { return positions.size(); }
  bool killed() const { return status == PathStatus::Killed; }
  /// Last index at which the path is alive.
  std::size_t last_alive() const { return killed() ? killed_index - 1 : positions.size() - 1; }
  /// Index of the grid point at time t (fixed grids) or the last grid time <= t.
  std::size_t index_at(double t) const;
};

/// Killed path on a time grid up to horizon T. Fixed grids produce ceil(T/h)+1
/// positions when the path survives; relative grids stop at T exactly.
PathGrid simulate_killed_path(const StableParams& params, const ConeSpec& cone, const Point& x0, double horizon,
                              const StepPolicy& policy, RngStream& rng);

/// Convenience overload for a fixed grid of step h.
PathGrid simulate_killed_path(const StableParams& params, const ConeSpec& cone, const Point& x0, double horizon,
                              double h, RngStream& rng);

/// Killed path read only at the increasing `times` (no full path storage).
///
/// out[k] is the position at times[k] for the horizons reached alive; the
/// return value is the number of such horizons. Steps follow `policy` and are
/// truncated so that every horizon is hit exactly. When the path is killed
/// before times.back(), *kill_time receives the first grid time outside Gamma.
std::size_t simulate_snapshots(const IncrementSampler& inc, const ConeSpec& cone, const Point& x0,
                               std::span<const double> times, const StepPolicy& policy, RngStream& rng,
                               std::vector<Point>& out, double* kill_time = nullptr);

/// First exit position from the unit ball centred at the origin, started at
/// x_rel with |x_rel| < 1 (Blumenthal-Getoor-Ray law). The result satisfies |y| > 1.
Point sample_ball_exit(const StableParams& params, const Point& x_rel, RngStream& rng);

/// Exit position relative to the centre of a unit ball entered at its centre.
Point sample_ball_exit_from_center(const StableParams& params, RngStream& rng);

/// Normalising constant of the ball-exit density
/// C (1-|x|^2)^{alpha/2} (|y|^2-1)^{-alpha/2} |y-x|^{-d}.
double ball_exit_density_constant(const StableParams& params);

/// Ball-exit density at y for a start x_rel inside the unit ball.
double ball_exit_density(const StableParams& params, const Point& x_rel, const Point& y);

enum class WalkStatus { Exited, ApexStalled, MaxSteps, Escaped };

struct WalkResult {
  WalkStatus status = WalkStatus::Exited;
  Point position;
  std::size_t steps = 0;
};

struct WalkOptions {
  double min_radius = 1e-9;          ///< apex stall threshold on |x|
  std::size_t max_steps = 100000;
  double escape_radius = 0.0;        ///< 0 disables escape detection
};

/// Generic jump-aware walk on spheres: repeatedly jumps to the exact exit
/// point of the largest admissible ball and stops at the first point for
/// which `inside` is false. `radius(x)` must return the radius of a ball
/// around x contained in the domain.
template <class RadiusFn, class InsideFn>
WalkResult walk_on_spheres(const StableParams& params, const Point& x0, RadiusFn&& radius, InsideFn&& inside,
                           const WalkOptions& opts, RngStream& rng) {
  WalkResult res;
  Point x = x0;
  while (true) {
    if (res.steps >= opts.max_steps) {
      res.status = WalkStatus::MaxSteps;
      res.position = x;
      return res;
    }
    const double rx = x.norm();
    if (rx < opts.min_radius) {
      res.status = WalkStatus::ApexStalled;
      res.position = x;
      return res;
    }
    if (opts.escape_radius > 0.0 && rx > opts.escape_radius) {
      res.status = WalkStatus::Escaped;
      res.position = x;
      return res;
    }
    const double r = radius(x);
    x += sample_ball_exit_from_center(params, rng) * r;
    ++res.steps;
    if (!inside(x)) {
      res.status = WalkStatus::Exited;
      res.position = x;
      return res;
    }
  }
}

/// Exit position X_{kappa_Gamma} from the cone by walk on spheres.
/// Requires supports_ball_walks(cone) and contains(cone, x0).
WalkResult walk_on_spheres_exit(const StableParams& params, const ConeSpec& cone, const Point& x0,
                                double min_radius, std::size_t max_steps, RngStream& rng);

}  // namespace conestable
