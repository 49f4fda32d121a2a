#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace conestable {

/// A sample with nonnegative weights; empty weights mean unit weights.
struct WeightedSample {
  std::vector<double> values;
  std::vector<double> weights;

  std::size_t size() const { return values.size(); }
  double weight(std::size_t i) const { return weights.empty() ? 1.0 : weights[i]; }
  double total_weight() const;
  /// Kish effective size (sum w)^2 / sum w^2.
  double effective_size() const;
};

/// Kish effective sample size of a weight vector.
double effective_size(std::span<const double> w);

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
  double n_eff_a = 0.0;
  double n_eff_b = 0.0;
};

/// Kolmogorov limiting survival function Q(lambda) = 2 sum (-1)^{k-1} exp(-2 k^2 lambda^2).
double kolmogorov_q(double lambda);

/// Weighted two-sample Kolmogorov-Smirnov test. The statistic is the sup
/// distance of the weighted empirical cdfs; the p-value uses the asymptotic
/// law with the Kish effective sizes. Requires effective sizes >= 20 and
/// non-degenerate pooled data.
KsResult ks_two_sample(const WeightedSample& a, const WeightedSample& b);

/// Same statistic with the p-value recomputed for the given effective sizes
/// (used when the samples are positively correlated and Kish sizes overstate).
KsResult ks_with_sizes(const KsResult& r, double n_eff_a, double n_eff_b);

/// One-sample KS test of (optionally weighted) data against a continuous cdf.
KsResult ks_one_sample(const WeightedSample& a, const std::function<double(double)>& cdf);

struct SlopeFit {
  double slope = 0.0;
  double slope_se = 0.0;
  double intercept = 0.0;
  double chi2 = 0.0;
  std::size_t points = 0;
};

/// Weighted least squares of log y on log x. `ses` are standard errors of y
/// (propagated to log y as se/y); empty `ses` means an unweighted fit whose
/// slope SE comes from the residual variance.
SlopeFit loglog_fit(std::span<const double> xs, std::span<const double> ys, std::span<const double> ses = {});

/// Ordinary weighted linear regression y = a + b x with per-point SEs.
SlopeFit linear_fit(std::span<const double> xs, std::span<const double> ys, std::span<const double> ses = {});

/// Upper tail probability of a chi-square statistic with `dof` degrees of freedom.
double chi_square_p_value(double statistic, double dof);

/// Pearson chi-square goodness of fit of observed counts against expected counts.
double chi_square_gof_p(std::span<const double> observed, std::span<const double> expected, int extra_constraints = 0);

struct MeanEstimate {
  double mean = 0.0;
  double se = 0.0;
  std::size_t n = 0;
};

/// Sample mean and standard error.
MeanEstimate mean_se(std::span<const double> xs);

/// Self-normalised weighted mean of f with a delta-method standard error.
MeanEstimate weighted_mean(std::span<const double> values, std::span<const double> weights);

/// One statistical gate outcome; pass/fail is recomputable from the stored fields.
struct StatReport {
  std::string name;
  double value = 0.0;
  double se = 0.0;           ///< standard error (NaN if a p-value gate)
  double p_value = -1.0;     ///< -1 when not applicable
  double n = 0.0;
  double ess = 0.0;
  std::string gate;          ///< human readable gate, e.g. "|value-0.75| < 0.05"
  double threshold = 0.0;
  double gate_value = 0.0;   ///< quantity compared against the threshold
  std::string op = "<";      ///< comparison gate_value op threshold: "<", ">" or ">="
  bool pass = false;

  /// Re-derives pass from gate_value, op and threshold.
  bool recompute() const;

  nlohmann::json to_json() const;
};

/// Gate "quantity < threshold".
StatReport make_upper_gate(std::string name, double value, double se, double gate_value, double threshold,
                           std::string gate);
/// Gate "quantity > threshold" (or ">=" when inclusive).
StatReport make_lower_gate(std::string name, double value, double se, double gate_value, double threshold,
                           std::string gate, bool inclusive = false);
/// Gate "p_value > threshold".
StatReport make_p_gate(std::string name, double statistic, double p_value, double n, double ess, double threshold);

}  // namespace conestable
