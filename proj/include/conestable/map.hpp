#pragma once

#include <cstddef>
#include <vector>

#include <nlohmann/json.hpp>

#include "conestable/conditioning.hpp"
#include "conestable/harmonic.hpp"
#include "conestable/stable.hpp"
#include "conestable/stats.hpp"

namespace conestable {

/// Radius below which time-change integrands are clipped.
inline constexpr double kClipRadius = 1e-6;

/// Lamperti-Kiu pair on a uniform MAP-time grid: xi = log(|X|/|X_0|), theta = arg X.
struct MapPath {
  double step = 0.0;
  std::vector<double> times;
  std::vector<double> xi;
  std::vector<Point> theta;
  std::size_t clipped = 0;  ///< grid points whose radius was clipped

  std::size_t size() const { return xi.size(); }
};

/// MAP of the alive part of `path`. The clock A(s) = int_0^s |X_u|^{-alpha} du
/// is the cumulative trapezoid over the path grid and is inverted piecewise
/// linearly. map_step <= 0 selects h |X_0|^{-alpha}.
MapPath to_map(const PathGrid& path, double alpha, double map_step = 0.0);

/// X_t = |x0| e^{xi_{phi(t)}} Theta_{phi(t)} on a uniform real-time grid of
/// step h, phi inverting |x0|^alpha int_0^s e^{alpha xi_u} du.
PathGrid from_map(const MapPath& map, const Point& x0, double alpha, double h);

/// K X_{eta(t)} on a uniform grid, eta inverting int_0^s |X_u|^{-2 alpha} du.
/// out_step <= 0 selects h |X_0|^{-2 alpha}, which makes the double
/// transform return to the original step. The output is shorter when the
/// clock range is exhausted.
PathGrid rbz_transform(const PathGrid& path, double alpha, double out_step = 0.0, std::size_t* clipped = nullptr);

// ---------------------------------------------------------------------------
// Duality

struct DualityReport {
  std::vector<double> times;
  std::vector<KsResult> log_radius;
  std::vector<KsResult> axis_angle;
  /// Surviving mass on each side: P(not absorbed by t) after the transform
  /// and the mean absorb-weight.
  std::vector<MeanEstimate> mass_transformed;
  std::vector<MeanEstimate> mass_absorb;
  std::vector<double> ess_transformed;
  std::vector<double> ess_absorb;
  std::size_t escaped = 0;  ///< paths stopped beyond the escape radius
};

/// Weighted two-sample KS between the inversion transform of
/// StayInCone-weighted paths from x and AbsorbAtApex-weighted paths from Kx,
/// at each time t. The StayInCone side runs a streaming clock
/// int |X|^{-2 alpha} and stops at eta(t); paths beyond escape_factor |x| are
/// treated as absorbed. `beta_shift` perturbs the AbsorbAtApex exponent
/// (negative control).
DualityReport duality_test(const StableParams& params, const ConeSpec& cone, const HarmonicFunction& M,
                           const Point& x, const std::vector<double>& times, std::size_t N, const StepPolicy& policy,
                           const RngStream& rng, double beta_shift = 0.0, double escape_factor = 1000.0);

// ---------------------------------------------------------------------------
// Jump kernel (d = 2)

/// Bins of MAP jumps: jump size y = Delta xi in `y_edges` segments (pairs of
/// consecutive edges, the gap around zero excluded), post-jump polar angle in
/// `phi_bins` equal bins over (-psi, psi).
struct JumpBins {
  std::vector<std::pair<double, double>> y_ranges{{-2.0, -1.0}, {-1.0, -0.5}, {-0.5, -0.25},
                                                  {0.25, 0.5},  {0.5, 1.0},   {1.0, 2.0}};
  int phi_bins = 12;
  std::size_t count() const { return y_ranges.size() * static_cast<std::size_t>(phi_bins); }
};

/// Minimum count for a bin to enter a ratio test.
inline constexpr double kMinJumpCount = 50.0;
/// Replicates and stage length (MAP time) of the conditioned jump population.
inline constexpr std::size_t kJumpReplicates = 20;
inline constexpr double kJumpStage = 0.25;

struct JumpHistogram {
  JumpBins bins;
  double map_step = 0.0;
  double threshold = 0.0;  ///< 3 x median |Delta xi|
  std::vector<double> counts;            ///< free detected jumps per bin
  std::vector<double> predicted;         ///< free compensator per bin
  std::vector<double> free_ratio;        ///< (counts/predicted) / global ratio
  std::vector<double> free_se;
  std::vector<double> cond_counts;       ///< StayInCone-weighted counts
  std::vector<double> cond_raw;          ///< unweighted population counts
  std::vector<double> cond_predicted;    ///< StayInCone compensator
  std::vector<double> cond_ratio;        ///< (cond ratio)/(free ratio) per bin
  std::vector<double> cond_se;
  std::vector<bool> free_masked;
  std::vector<bool> cond_masked;
  double map_time = 0.0;  ///< total alive MAP time
  double total_jumps = 0.0;
  std::vector<double> sensitivity_counts;  ///< detected counts at 2x and 4x threshold
  double cond_ess = 0.0;  ///< mean stage ESS fraction of the conditioned population

  /// Fraction of unmasked bins with |ratio - 1| < 4 SE.
  double free_pass_fraction() const;
  double cond_pass_fraction() const;
};

/// The L-kernel constant c(alpha) (reporting only; tests use ratios).
double map_kernel_constant(double alpha, int d);

/// Bins detected MAP jumps and compares them with the kernel compensator.
///
/// The free counts come from N killed MAPs started at theta0 and run with
/// MAP step `map_step` up to MAP time `map_horizon`. The StayInCone counts
/// come from kJumpReplicates resampled populations of N/kJumpReplicates
/// particles over the same MAP horizon, with stage weights M(X_new)/M(X_old).
/// Each observed/predicted ratio is normalised by the free ratio. d = 2 only.
JumpHistogram empirical_jump_rate(const StableParams& params, const ConeSpec& cone, const HarmonicFunction& M,
                                  const Point& theta0, double map_horizon, double map_step, std::size_t N,
                                  const JumpBins& bins, const RngStream& rng);

// ---------------------------------------------------------------------------
// Ladders

/// e-folding ladder: T_n the first grid time with |X| > e |X_{T_{n-1}}|.
struct LadderSequence {
  std::vector<double> S;      ///< log(|X_{T_n}|/|X_0|), S_0 = 0
  std::vector<Point> Xi;      ///< arg X_{T_n}
  std::vector<double> T;      ///< path times
};

/// Ladder records of a path; EstimationError when fewer than n_max are found.
LadderSequence discrete_ladder(const PathGrid& path, std::size_t n_max);

/// Ascending ladder: grid times at which |X| exceeds its running maximum.
struct AscLadder {
  std::vector<double> times;
  std::vector<double> H;       ///< running-max log radius
  std::vector<Point> Theta;    ///< directions at records
};

AscLadder ascending_ladder(const MapPath& map);

/// Particle approximation of the StayInCone ladder chains.
///
/// Each stage moves every particle (renormalised to unit radius) until its
/// radius exceeds e or it is killed, weighted by M(X_exit)/M(theta). The
/// population is resampled every stage. Stage exits give Xi; grid records
/// inside a stage give Theta+ (ascending ladder directions).
struct LadderRun {
  std::vector<std::vector<double>> xi_eta;     ///< [stage][particle] signed polar angle of Xi
  std::vector<std::vector<double>> xi_w;       ///< [stage][particle] incremental weight (0 if killed)
  std::vector<std::vector<double>> theta_eta;  ///< [stage] signed polar angles of Theta+ records (weighted)
  std::vector<std::vector<double>> theta_w;
  std::vector<std::vector<double>> overshoot;  ///< [stage][particle] A_n = S_n - S_{n-1}
  std::size_t particles = 0;
  std::size_t stalled = 0;  ///< particle stages stopped by the step cap
};

LadderRun ladder_chain(const StableParams& params, const ConeSpec& cone, const HarmonicFunction& M,
                       const Point& theta0, std::size_t stages, std::size_t particles, const StepPolicy& policy,
                       const RngStream& rng);

struct StationarityReport {
  KsResult xi_split;          ///< first vs second half of the post burn-in window
  KsResult xi_start;          ///< two start angles
  KsResult theta_split;
  KsResult theta_start;
  KsResult xi_mirror;         ///< symmetry about the axis (half-space)
  double boundary_mass = 0.0; ///< pooled fraction of Xi in the outer angular bin
  double boundary_sigma = 0.0;///< same bin under the surface measure
  double boundary_z = 0.0;    ///< one-sided binomial z (negative = less mass)
  KsResult xi_vs_theta;       ///< informative comparison of the two laws
  std::size_t stalled = 0;
  std::vector<double> xi_pooled;
  std::vector<double> xi_pooled_w;
  std::vector<double> theta_pooled;
  std::vector<double> theta_pooled_w;
  /// Theta+ law reweighted by 1/M (derived output).
  std::vector<double> theta_reweighted_w;
};

/// Post burn-in window diagnostics from two chains started at different angles.
/// KS effective sizes are capped at particles/2 per window.
StationarityReport ladder_stationary(const StableParams& params, const ConeSpec& cone, const HarmonicFunction& M,
                                     double eta_a, double eta_b, std::size_t burn_in, std::size_t n_samples,
                                     std::size_t particles, const StepPolicy& policy, const RngStream& rng);

/// Signed polar angle in the plane spanned by the axis and the meridian direction.
double signed_polar_angle(const ConeSpec& cone, const Point& x);

}  // namespace conestable
