#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "conestable/cone.hpp"
#include "conestable/stable.hpp"
#include "conestable/stats.hpp"

namespace conestable {

/// Positive harmonic function of a cone, homogeneous of degree beta:
/// M(x) = |x|^beta m(eta(x)) with eta the polar angle from the axis, and
/// M = 0 off the cone.
///
/// Three sources: the exact half-space function <x,n>^{alpha/2}, the constant
/// function of the punctured space (beta = 0), and a table of m on a grid of
/// polar angles (linear interpolation, pinned to 0 at the boundary angle).
class HarmonicFunction {
 public:
  enum class Source { HalfSpaceExact, Constant, Tabulated };

  static HarmonicFunction half_space_exact(const ConeSpec& cone, double alpha);
  static HarmonicFunction constant(const ConeSpec& cone);
  static HarmonicFunction tabulated(const ConeSpec& cone, double beta, std::vector<double> eta,
                                    std::vector<double> values);
  /// Closed form where one is known (half-space, circular cone with
  /// half-angle pi/2, punctured space); DomainError otherwise.
  static HarmonicFunction exact_for(const ConeSpec& cone, double alpha);

  double beta() const { return beta_; }
  Source source() const { return source_; }
  const ConeSpec& cone() const { return cone_; }

  double operator()(const Point& x) const;
  /// Angular part m at polar angle eta.
  double angular(double eta) const;

  /// Same function multiplied by c > 0.
  HarmonicFunction scaled(double c) const;

  nlohmann::json to_json() const;

 private:
  HarmonicFunction(const ConeSpec& cone) : cone_(cone) {}
  ConeSpec cone_;
  Source source_ = Source::Constant;
  double beta_ = 0.0;
  double scale_ = 1.0;
  std::vector<double> eta_;
  std::vector<double> m_;
};

/// Survival probabilities of the grid-killed process at a list of times.
///
/// p_hat uses the grid of step h. When extrapolation is requested the same
/// paths are also read on their 2h and 4h subgrids; the step-halving order q
/// is estimated from the pooled level differences and p_extrap is the
/// Richardson value p_h - (p_2h - p_h)/(2^q - 1).
struct SurvivalCurve {
  Point start;
  std::vector<double> times;
  std::vector<double> p_hat;
  std::vector<double> se;
  double h = 0.0;
  std::size_t N = 0;

  bool extrapolated = false;
  std::vector<double> p_2h;
  std::vector<double> p_4h;
  std::vector<double> p_extrap;
  std::vector<double> se_extrap;
  double order = 0.0;
  bool order_clamped = false;

  /// Extrapolated values when present, else the raw grid values.
  const std::vector<double>& best() const { return extrapolated ? p_extrap : p_hat; }
  const std::vector<double>& best_se() const { return extrapolated ? se_extrap : se; }
};

/// Step-halving order bounds used when the estimate is noisy.
inline constexpr double kMinRichardsonOrder = 0.25;
inline constexpr double kMaxRichardsonOrder = 1.5;

SurvivalCurve estimate_survival(const StableParams& params, const ConeSpec& cone, const Point& x,
                                const std::vector<double>& times, std::size_t N, double h, const RngStream& rng,
                                bool extrapolate = true);

struct BetaEstimate {
  double beta = 0.0;
  double se = 0.0;
  SlopeFit fit;
  double t_lo = 0.0;
  double t_hi = 0.0;
};

/// beta = -alpha * slope of log p against log t over the window [t_lo, t_hi].
/// Zero binomial SEs (p = 0 or 1) are replaced by the SE at p = 1/(2N).
BetaEstimate estimate_beta(const SurvivalCurve& curve, double alpha, double t_lo, double t_hi);

struct HarmonicEstimate {
  double beta = 0.0;
  std::vector<double> eta;    ///< polar angles of the grid
  std::vector<double> m_hat;  ///< angular values normalised so M(x0) = 1
  std::vector<double> m_se;
  Point x0;                   ///< normalisation point (axis, radius 0.4)
  double r_small = 0.0;
  double t_ref = 0.0;
  /// P_x(kappa > t_ref) / (M(x) t_ref^{-beta/alpha}) at the axis start.
  double C_hat = 0.0;
  double C_se = 0.0;

  HarmonicFunction function(const ConeSpec& cone) const;
  /// Rescale so that the value at grid index k equals 1 (gauge change).
  HarmonicEstimate renormalised_at(std::size_t k) const;
};

/// Radius of the normalisation point on the axis.
inline constexpr double kNormalisationRadius = 0.4;

/// M(theta) proportional to P_{r_small theta}(kappa > t_ref) on a grid of polar
/// angles in the meridian plane, simulated with `policy`. Requires
/// r_small^alpha <= t_ref / 100.
HarmonicEstimate estimate_M(const StableParams& params, const ConeSpec& cone, double beta, double t_ref,
                            const std::vector<double>& eta_grid, double r_small, std::size_t N,
                            const StepPolicy& policy, const RngStream& rng);

enum class ExitMethod { WalkOnSpheres, Grid };

struct HarmonicityResult {
  double residual = 0.0;  ///< E_x[M(X_exit)] - M(x)
  double se = 0.0;
  double mean = 0.0;
  double target = 0.0;
  std::size_t N = 0;
  std::size_t stalled = 0;
};

/// Monte Carlo E_x[M(X_{tau_B}) 1{tau_B < kappa}] - M(x) for the ball B(center, radius).
/// The walk-on-spheres method uses exact ball exits; the grid method uses a
/// fixed step h and reads M at the first grid point outside B intersect Gamma.
HarmonicityResult verify_harmonicity(const HarmonicFunction& M, const StableParams& params, const ConeSpec& cone,
                                     const Point& x, const Point& center, double radius, std::size_t N,
                                     const RngStream& rng, ExitMethod method = ExitMethod::WalkOnSpheres,
                                     double h = 1.0 / 256.0);

struct SmallBallResult {
  std::vector<double> radii;
  std::vector<double> p_hat;
  std::vector<double> se;
  SlopeFit fit;
  std::size_t escaped = 0;
  std::size_t stalled = 0;
};

/// P_x(the process enters B(0, a) before leaving Gamma) for each radius a, by
/// walk on spheres in Gamma minus B(0, a). Walks beyond `escape_radius`
/// count as misses; the resulting relative bias is the same for every a.
SmallBallResult estimate_smallball_hitting(const StableParams& params, const ConeSpec& cone, const Point& x,
                                           const std::vector<double>& radii, std::size_t N, const RngStream& rng,
                                           double escape_radius = 1e4);

}  // namespace conestable
