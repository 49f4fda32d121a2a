#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "conestable/harmonic.hpp"
#include "conestable/stable.hpp"
#include "conestable/stats.hpp"

namespace conestable {

enum class ExtensionKind { Continuous, Jump };

/// Truncated excursion law of a recurrent extension from the apex.
///
/// Jump type: excursions start at r theta with density proportional to
/// r^{-1-alpha gamma} on r >= r_min and theta from the normalised surface
/// measure of Omega. Continuous type: excursions start at delta times the
/// axis and are kept when their lifetime exceeds zeta_min (rejection).
struct ExcursionSpec {
  ExtensionKind kind = ExtensionKind::Continuous;
  double gamma = 0.0;
  double r_min = 0.1;
  double zeta_min = 1e-3;
  double delta = 1e-3;
  /// Rate calibration: excursions longer than zeta_min arrive at rate
  /// C_hat zeta_min^{-beta/alpha} per unit local time (continuous type).
  double C_hat = 1.0;

  void validate(double alpha, double beta) const;
  /// Arrival rate of untruncated excursions per unit local time.
  double rate(double alpha, double beta) const;
};

/// Radial (log-spaced) times polar-angle bins of the occupation measure.
struct OccupationBins {
  std::vector<double> radial_edges;
  std::vector<double> angle_edges;
  std::size_t count() const { return (radial_edges.size() - 1) * (angle_edges.size() - 1); }
  long index(const ConeSpec& cone, const Point& x) const;
  static OccupationBins log_spaced(double r_lo, double r_hi, std::size_t radial, double psi, std::size_t angular);
};

/// Occupied time per bin summed over excursions. Excursions arrive as a
/// Poisson process, so the variance of any sum of bins is the sum over
/// excursions of its squared per-excursion occupation; `second` keeps the
/// matrix of per-excursion cross-products for that purpose.
struct OccupationHistogram {
  OccupationBins bins;
  std::vector<double> mass;
  std::vector<double> second;  ///< [a * count() + b] = sum_k o_ka o_kb
  double local_time = 0.0;

  explicit OccupationHistogram(OccupationBins b = {});
  /// Adds one excursion's per-bin occupation.
  void add(const std::vector<double>& occ);
  void merge(const OccupationHistogram& o);

  /// Mass of the bins selected by `use` with its compound-Poisson SE.
  MeanEstimate sum(const std::vector<bool>& use) const;
  /// Radial marginal per radial bin.
  std::vector<MeanEstimate> radial_mass() const;
  /// Angular marginal per angular bin over the radial bins inside [r_lo, r_hi].
  std::vector<MeanEstimate> angular_mass(double r_lo, double r_hi) const;
  /// Total mass of the radial bins inside [r_lo, r_hi].
  MeanEstimate window_mass(double r_lo, double r_hi) const;
};

struct ExcursionRecord {
  double start_time = 0.0;  ///< on the glued timeline
  Point start;
  double lifetime = 0.0;
  bool partial = false;     ///< stopped by the time or radius cap
};

/// Concatenated excursions; between excursions the process sits at the apex.
struct GluedPath {
  ExcursionSpec spec;
  std::vector<ExcursionRecord> excursions;
  std::vector<PathGrid> paths;  ///< only when requested
  double local_time = 0.0;
  double total_time = 0.0;
  std::size_t partial = 0;
  std::size_t attempts = 0;     ///< rejection attempts (continuous type)
  double rate = 0.0;            ///< arrival rate of the simulated excursions per unit local time
  OccupationHistogram occupation;

  std::size_t count() const { return excursions.size(); }
  double acceptance() const { return attempts ? static_cast<double>(count()) / static_cast<double>(attempts) : 1.0; }
};

/// Caps on a single excursion: the simulation stops (partial) beyond
/// `far_radius` or after `time_cap`.
struct ExcursionCaps {
  double far_radius = 600.0;
  double time_cap = 1e6;
};

/// Minimum rejection acceptance of the continuous-type construction.
inline constexpr double kMinAcceptance = 1e-3;

/// Jump-type extension over a local-time budget: the excursion count is
/// Poisson with mean local_time * rate; excursions are killed paths run to
/// their exit time. Occupation is accumulated when `bins` is given.
GluedPath build_jump_extension(const ExcursionSpec& spec, const StableParams& params, const ConeSpec& cone,
                               double beta, double local_time, const StepPolicy& policy, const RngStream& rng,
                               const OccupationBins* bins = nullptr, bool keep_paths = false,
                               const ExcursionCaps& caps = {});

/// Continuous-type extension over a local-time budget (see ExcursionSpec).
GluedPath build_continuous_extension(const ExcursionSpec& spec, const StableParams& params, const ConeSpec& cone,
                                     double beta, double local_time, const StepPolicy& policy, const RngStream& rng,
                                     const OccupationBins* bins = nullptr, bool keep_paths = false,
                                     const ExcursionCaps& caps = {});

/// Occupation of stored paths (requires keep_paths).
OccupationHistogram occupation_histogram(const GluedPath& glued, const ConeSpec& cone, const OccupationBins& bins);

/// Log-log fit of the radial occupation density (mass per unit radius) on
/// the radial bins inside [r_lo, r_hi].
SlopeFit radial_exponent(const OccupationHistogram& occ, double r_lo, double r_hi);

/// Empirical lifetime tail P(zeta > s | zeta > zeta_min) at s = zeta_min 10^{k/points}.
struct LengthTail {
  std::vector<double> s;
  std::vector<double> p;
  std::vector<double> se;
  SlopeFit fit;
};

LengthTail length_tail(const GluedPath& glued, double decades = 1.0, std::size_t points = 6);

/// Ratio of angular occupation to M(theta) sigma_1 per angular bin,
/// normalised to mean 1, with SEs; max |ratio - 1|/SE is the statistic.
struct AngularProfile {
  std::vector<double> ratio;
  std::vector<double> se;
  double statistic = 0.0;
};

AngularProfile angular_profile(const OccupationHistogram& occ, const HarmonicFunction& M, double r_lo, double r_hi);

// ---------------------------------------------------------------------------

enum class ExtensionTarget { Gamma, ApexConditioned };

struct Admissibility {
  ExtensionTarget target = ExtensionTarget::Gamma;
  double alpha = 0.0, beta = 0.0;
  int d = 0;
  bool exists = true;            ///< the target extension problem is posed (ApexConditioned needs d + 2 beta - alpha > 0)
  bool continuous_allowed = false;
  double gamma_lo = 0.0;         ///< open interval of admissible jump exponents
  double gamma_hi = 0.0;
  bool gamma_given = false;
  double gamma = 0.0;
  bool jump_allowed = false;     ///< gamma inside (gamma_lo, gamma_hi)
  std::string reason;

  nlohmann::json to_json() const;
};

/// Admissibility of recurrent extensions. Gamma: continuous type always,
/// jump type iff gamma in (0, beta/alpha). ApexConditioned: requires
/// d + 2 beta - alpha > 0; jump type iff gamma in (0, min((d + 2 beta -
/// alpha)/alpha, 1)); continuous type iff 0 < beta < (2 alpha - d)/2.
/// A negative gamma means "not given".
Admissibility check_extension_conditions(double alpha, double beta, int d, ExtensionTarget target,
                                         double gamma = -1.0);

const char* to_string(ExtensionTarget t);

}  // namespace conestable
