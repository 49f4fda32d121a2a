#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "conestable/harmonic.hpp"
#include "conestable/stable.hpp"
#include "conestable/stats.hpp"

namespace conestable {

/// StayInCone is the h-transform by M (the process conditioned to stay in
/// Gamma); AbsorbAtApex is the h-transform by H (conditioned to be absorbed
/// continuously at the apex).
enum class Conditioning { StayInCone, AbsorbAtApex };

const char* to_string(Conditioning c);

/// H(x) = |x|^{alpha-beta-d} M(arg x), optionally with beta shifted by
/// `beta_shift` in the radial exponent (used only for negative controls).
class HFunction {
 public:
  HFunction(HarmonicFunction M, double alpha, double beta_shift = 0.0);

  double beta() const { return M_.beta() + shift_; }
  /// Radial exponent alpha - beta - d.
  double exponent() const { return alpha_ - beta() - M_.cone().dim(); }
  const HarmonicFunction& M() const { return M_; }

  double operator()(const Point& x) const;

 private:
  HarmonicFunction M_;
  double alpha_;
  double shift_;
};

/// 1{t < kappa} M(X_t)/M(X_0) read off a grid path; t must be a grid time.
double weight_stay(const PathGrid& path, const HarmonicFunction& M, double t);
/// 1{t < kappa} H(X_t)/H(X_0) read off a grid path; t must be a grid time.
double weight_absorb(const PathGrid& path, const HFunction& H, double t);

/// Effective sample size below which an ensemble is flagged as degenerate.
inline constexpr double kMinEss = 50.0;

/// Killed-path ensemble plus h-transform weights at a list of horizons.
///
/// weights[k][i] = 1{t_k < kappa} h(X_{t_k})/h(x0) for path i; positions[k][i]
/// is X_{t_k} for paths alive at t_k (unspecified otherwise).
struct WeightedEnsemble {
  Conditioning kind = Conditioning::StayInCone;
  Point start;
  std::vector<double> horizons;
  std::vector<std::vector<Point>> positions;
  std::vector<std::vector<double>> weights;
  std::vector<PathGrid> paths;  ///< full paths, only when requested
  nlohmann::json weight_source;

  std::size_t size() const { return weights.empty() ? 0 : weights.front().size(); }
  double ess(std::size_t k) const { return effective_size(weights[k]); }
  bool degenerate(std::size_t k) const { return ess(k) < kMinEss; }
  /// Raw mean weight (the martingale check) with its SE.
  MeanEstimate mean_weight(std::size_t k) const { return mean_se(weights[k]); }
  /// Values f(X_{t_k}) of alive paths with their raw weights.
  WeightedSample sample(std::size_t k, const std::function<double(const Point&)>& f) const;
  /// Self-normalised weighted mean of f(X_{t_k}).
  MeanEstimate expectation(std::size_t k, const std::function<double(const Point&)>& f) const;
};

/// Ensemble of N killed paths from x0 simulated with `policy`, weighted for
/// the given conditioning. `beta_shift` perturbs H only (negative controls).
WeightedEnsemble conditioned_ensemble(Conditioning kind, const StableParams& params, const ConeSpec& cone,
                                      const HarmonicFunction& M, const Point& x0,
                                      const std::vector<double>& horizons, std::size_t N, const StepPolicy& policy,
                                      const RngStream& rng, double beta_shift = 0.0, bool keep_paths = false);

/// Mean weight at each horizon at steps h and 2h (independent ensembles),
/// and the step-halving extrapolation with the given order.
struct MartingaleCheck {
  std::vector<double> horizons;
  std::vector<MeanEstimate> fine;
  std::vector<MeanEstimate> coarse;
  std::vector<double> extrapolated;
  std::vector<double> extrapolated_se;
  std::vector<double> ess;
  double order = 1.0;
};

MartingaleCheck martingale_check(Conditioning kind, const StableParams& params, const ConeSpec& cone,
                                 const HarmonicFunction& M, const Point& x0, const std::vector<double>& horizons,
                                 std::size_t N, const StepPolicy& policy, const RngStream& rng, double order = 1.0);

/// Systematic resampling: n ancestor indices for weights w (not necessarily
/// normalised) and a uniform offset u0 in (0, 1).
std::vector<std::size_t> systematic_resample(const std::vector<double>& w, double u0);

/// StayInCone law realised by a resampled particle population.
///
/// Particles are propagated between stages on a geometric time schedule and
/// reweighted by M(X_new)/M(X_old); the population is resampled
/// (systematic) whenever its ESS drops below half its size. Weights keep
/// their scale across resampling, so the mean weight still estimates the
/// conserved mass. Independent replicates give standard errors for any
/// self-normalised functional.
struct PopulationSnapshot {
  std::vector<Point> positions;
  std::vector<double> weights;
};

struct ConditionedPopulation {
  std::vector<double> horizons;
  /// snapshots[r][k]: replicate r at horizon k.
  std::vector<std::vector<PopulationSnapshot>> snapshots;
  std::size_t resamplings = 0;

  std::size_t replicates() const { return snapshots.size(); }
  /// Replicate-mean of the self-normalised mean of f at horizon k, with the
  /// SE from the spread across replicates.
  MeanEstimate expectation(std::size_t k, const std::function<double(const Point&)>& f) const;
  /// Kish ESS summed over replicates at horizon k.
  double ess(std::size_t k) const;
};

/// Stage times: x0-scale start |x0|^alpha doubling up to the last horizon,
/// merged with the horizons.
ConditionedPopulation conditioned_population(const StableParams& params, const ConeSpec& cone,
                                             const HarmonicFunction& M, const Point& x0,
                                             const std::vector<double>& horizons, std::size_t particles,
                                             std::size_t replicates, const StepPolicy& policy, const RngStream& rng);

/// E^StayInCone_{delta theta}[f(X_t)] for each delta (start on the ray of
/// `direction`).
struct EntranceEstimate {
  std::vector<double> deltas;
  std::vector<MeanEstimate> values;
  std::vector<double> ess;
  /// Largest |difference| / joint SE between successive deltas.
  double max_successive_z = 0.0;
};

EntranceEstimate entrance_from_zero(const StableParams& params, const ConeSpec& cone, const HarmonicFunction& M,
                                    const std::function<double(const Point&)>& f, double t,
                                    const std::vector<double>& deltas, const Point& direction,
                                    std::size_t particles, std::size_t replicates, const StepPolicy& policy,
                                    const RngStream& rng);

/// Bin layout in rescaled coordinates z = t^{-1/alpha} y: |z| edges times
/// polar-angle edges.
struct CollapseBins {
  std::vector<double> radial_edges;
  std::vector<double> angle_edges;
  std::size_t count() const { return (radial_edges.size() - 1) * (angle_edges.size() - 1); }
  long index(const ConeSpec& cone, const Point& z) const;
};

/// Bin masses per replicate for one horizon: mass[r][b] is the
/// self-normalised weight in bin b, ess[b] the pooled Kish ESS of the bin.
struct BinnedMass {
  std::vector<std::vector<double>> mass;
  std::vector<double> ess;
};

BinnedMass bin_population(const ConditionedPopulation& pop, std::size_t k, double scale, const ConeSpec& cone,
                          const CollapseBins& bins);

struct CollapseResult {
  std::vector<double> mass1, mass2, se1, se2;
  std::vector<bool> used;  ///< bins with more than 100 effective counts on both sides
  double statistic = 0.0;  ///< max over used bins of |m1 - m2| / joint SE
  std::size_t used_bins = 0;
  double mass_factor = 1.0;
};

/// Sup over bins of |m1 - factor * m2| / joint SE, masses averaged over replicates.
CollapseResult collapse_statistic(const BinnedMass& a, const BinnedMass& b, double mass_factor2 = 1.0);

/// Compare the rescaled entrance laws at t1 and t2 from delta * direction.
/// Bin masses at t2 are multiplied by (t2/t1)^{exponent_error/alpha}, the
/// mismatch a wrong exponent beta + exponent_error in the n_t scaling would
/// introduce (0 for the correct exponent). Both horizons come from one
/// population when t1 == t2, otherwise from independent populations.
CollapseResult entrance_density_collapse(const StableParams& params, const ConeSpec& cone, const HarmonicFunction& M,
                                         double t1, double t2, const CollapseBins& bins, double delta,
                                         const Point& direction, std::size_t particles, std::size_t replicates,
                                         const StepPolicy& policy, const RngStream& rng,
                                         double exponent_error = 0.0);

}  // namespace conestable
