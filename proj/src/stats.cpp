#include "conestable/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include <boost/math/distributions/chi_squared.hpp>

#include "conestable/error.hpp"

namespace conestable {

double WeightedSample::total_weight() const {
  if (weights.empty()) return static_cast<double>(values.size());
  return std::accumulate(weights.begin(), weights.end(), 0.0);
}

double WeightedSample::effective_size() const {
  if (weights.empty()) return static_cast<double>(values.size());
  return conestable::effective_size(weights);
}

double effective_size(std::span<const double> w) {
  double s = 0.0, s2 = 0.0;
  for (double x : w) {
    s += x;
    s2 += x * x;
  }
  return s2 > 0.0 ? s * s / s2 : 0.0;
}

double kolmogorov_q(double lambda) {
  if (lambda < 1e-3) return 1.0;
  double sum = 0.0;
  double sign = 1.0;
  for (int k = 1; k <= 200; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += sign * term;
    if (term < 1e-16) break;
    sign = -sign;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

namespace {

struct SortedCdf {
  std::vector<std::pair<double, double>> pts;  // value, normalised weight
};

SortedCdf sorted_normalised(const WeightedSample& s) {
  SortedCdf out;
  out.pts.reserve(s.size());
  const double tw = s.total_weight();
  if (!(tw > 0.0)) throw EstimationError("KS test: sample has zero total weight");
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double w = s.weight(i);
    if (w < 0.0) throw EstimationError("KS test: negative weight");
    if (w > 0.0) out.pts.emplace_back(s.values[i], w / tw);
  }
  std::sort(out.pts.begin(), out.pts.end());
  return out;
}

double ks_p(double d, double ne) {
  const double sq = std::sqrt(ne);
  return kolmogorov_q((sq + 0.12 + 0.11 / sq) * d);
}

}  // namespace

KsResult ks_two_sample(const WeightedSample& a, const WeightedSample& b) {
  KsResult r;
  r.n_eff_a = a.effective_size();
  r.n_eff_b = b.effective_size();
  if (r.n_eff_a < 20.0 || r.n_eff_b < 20.0) throw EstimationError("KS test: effective sizes below 20");
  const auto ca = sorted_normalised(a);
  const auto cb = sorted_normalised(b);
  if (ca.pts.front().first == ca.pts.back().first && cb.pts.front().first == cb.pts.back().first &&
      ca.pts.front().first == cb.pts.front().first)
    throw EstimationError("KS test: degenerate (constant) samples");

  std::size_t i = 0, j = 0;
  double fa = 0.0, fb = 0.0, dmax = 0.0;
  while (i < ca.pts.size() || j < cb.pts.size()) {
    double v;
    if (j >= cb.pts.size() || (i < ca.pts.size() && ca.pts[i].first <= cb.pts[j].first)) v = ca.pts[i].first;
    else v = cb.pts[j].first;
    while (i < ca.pts.size() && ca.pts[i].first == v) fa += ca.pts[i++].second;
    while (j < cb.pts.size() && cb.pts[j].first == v) fb += cb.pts[j++].second;
    dmax = std::max(dmax, std::fabs(fa - fb));
  }
  r.statistic = dmax;
  r.p_value = dmax == 0.0 ? 1.0 : ks_p(dmax, r.n_eff_a * r.n_eff_b / (r.n_eff_a + r.n_eff_b));
  return r;
}

KsResult ks_with_sizes(const KsResult& r, double n_eff_a, double n_eff_b) {
  KsResult out = r;
  out.n_eff_a = std::min(r.n_eff_a, n_eff_a);
  out.n_eff_b = std::min(r.n_eff_b, n_eff_b);
  out.p_value = r.statistic == 0.0 ? 1.0 : ks_p(r.statistic, out.n_eff_a * out.n_eff_b / (out.n_eff_a + out.n_eff_b));
  return out;
}

KsResult ks_one_sample(const WeightedSample& a, const std::function<double(double)>& cdf) {
  KsResult r;
  r.n_eff_a = a.effective_size();
  r.n_eff_b = std::numeric_limits<double>::infinity();
  if (r.n_eff_a < 20.0) throw EstimationError("KS test: effective size below 20");
  const auto ca = sorted_normalised(a);
  double f = 0.0, dmax = 0.0;
  std::size_t i = 0;
  while (i < ca.pts.size()) {
    const double v = ca.pts[i].first;
    const double F = cdf(v);
    const double before = f;
    while (i < ca.pts.size() && ca.pts[i].first == v) f += ca.pts[i++].second;
    dmax = std::max({dmax, std::fabs(before - F), std::fabs(f - F)});
  }
  r.statistic = dmax;
  r.p_value = ks_p(dmax, r.n_eff_a);
  return r;
}

SlopeFit linear_fit(std::span<const double> xs, std::span<const double> ys, std::span<const double> ses) {
  if (xs.size() != ys.size() || (!ses.empty() && ses.size() != xs.size()))
    throw EstimationError("fit: mismatched input lengths");
  if (xs.size() < 3) throw EstimationError("fit: at least 3 points required");
  const bool weighted = !ses.empty();
  double sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    double w = 1.0;
    if (weighted) {
      if (!(ses[i] > 0.0)) throw EstimationError("fit: standard errors must be positive");
      w = 1.0 / (ses[i] * ses[i]);
    }
    sw += w;
    sx += w * xs[i];
    sy += w * ys[i];
    sxx += w * xs[i] * xs[i];
    sxy += w * xs[i] * ys[i];
  }
  const double det = sw * sxx - sx * sx;
  if (!(std::fabs(det) > 0.0)) throw EstimationError("fit: degenerate abscissae");
  SlopeFit f;
  f.points = xs.size();
  f.slope = (sw * sxy - sx * sy) / det;
  f.intercept = (sy - f.slope * sx) / sw;
  double chi2 = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double r = ys[i] - f.intercept - f.slope * xs[i];
    chi2 += weighted ? r * r / (ses[i] * ses[i]) : r * r;
  }
  f.chi2 = chi2;
  if (weighted) {
    f.slope_se = std::sqrt(sw / det);
  } else {
    const double s2 = chi2 / static_cast<double>(xs.size() - 2);
    f.slope_se = std::sqrt(s2 * sw / det);
  }
  return f;
}

SlopeFit loglog_fit(std::span<const double> xs, std::span<const double> ys, std::span<const double> ses) {
  std::vector<double> lx(xs.size()), ly(ys.size()), lse;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!(xs[i] > 0.0) || !(ys[i] > 0.0)) throw EstimationError("log-log fit: nonpositive input");
    lx[i] = std::log(xs[i]);
    ly[i] = std::log(ys[i]);
  }
  if (!ses.empty()) {
    lse.resize(ses.size());
    for (std::size_t i = 0; i < ses.size(); ++i) lse[i] = ses[i] / ys[i];
  }
  return linear_fit(lx, ly, lse);
}

double chi_square_p_value(double statistic, double dof) {
  if (!(dof > 0.0)) throw EstimationError("chi-square: nonpositive degrees of freedom");
  if (statistic <= 0.0) return 1.0;
  return boost::math::cdf(boost::math::complement(boost::math::chi_squared(dof), statistic));
}

double chi_square_gof_p(std::span<const double> observed, std::span<const double> expected, int extra_constraints) {
  if (observed.size() != expected.size() || observed.size() < 2) throw EstimationError("chi-square: bad bins");
  double stat = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    if (!(expected[i] > 0.0)) throw EstimationError("chi-square: empty expected bin");
    const double r = observed[i] - expected[i];
    stat += r * r / expected[i];
  }
  return chi_square_p_value(stat, static_cast<double>(observed.size()) - 1.0 - extra_constraints);
}

MeanEstimate mean_se(std::span<const double> xs) {
  MeanEstimate m;
  m.n = xs.size();
  if (xs.empty()) return m;
  double s = 0.0;
  for (double x : xs) s += x;
  m.mean = s / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double v = 0.0;
    for (double x : xs) v += (x - m.mean) * (x - m.mean);
    v /= static_cast<double>(xs.size() - 1);
    m.se = std::sqrt(v / static_cast<double>(xs.size()));
  }
  return m;
}

MeanEstimate weighted_mean(std::span<const double> values, std::span<const double> weights) {
  if (values.size() != weights.size()) throw EstimationError("weighted mean: size mismatch");
  MeanEstimate m;
  m.n = values.size();
  double sw = 0.0, swx = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    sw += weights[i];
    swx += weights[i] * values[i];
  }
  if (!(sw > 0.0)) throw EstimationError("weighted mean: zero total weight");
  m.mean = swx / sw;
  // Linearisation of the ratio estimator sum(w f)/sum(w).
  double v = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double r = weights[i] * (values[i] - m.mean);
    v += r * r;
  }
  m.se = std::sqrt(v) / sw;
  return m;
}

nlohmann::json StatReport::to_json() const {
  nlohmann::json j;
  j["name"] = name;
  j["value"] = value;
  j["se"] = std::isfinite(se) ? nlohmann::json(se) : nlohmann::json(nullptr);
  j["p_value"] = p_value;
  j["n"] = n;
  j["ess"] = ess;
  j["gate"] = gate;
  j["threshold"] = threshold;
  j["gate_value"] = gate_value;
  j["op"] = op;
  j["pass"] = pass;
  return j;
}

bool StatReport::recompute() const {
  if (op == "<") return gate_value < threshold;
  if (op == ">") return gate_value > threshold;
  if (op == ">=") return gate_value >= threshold;
  throw DomainError("gate: unknown comparison " + op);
}

StatReport make_upper_gate(std::string name, double value, double se, double gate_value, double threshold,
                           std::string gate) {
  StatReport r;
  r.name = std::move(name);
  r.value = value;
  r.se = se;
  r.gate_value = gate_value;
  r.threshold = threshold;
  r.gate = std::move(gate);
  r.pass = r.recompute();
  return r;
}

StatReport make_lower_gate(std::string name, double value, double se, double gate_value, double threshold,
                           std::string gate, bool inclusive) {
  StatReport r;
  r.name = std::move(name);
  r.value = value;
  r.se = se;
  r.gate_value = gate_value;
  r.threshold = threshold;
  r.gate = std::move(gate);
  r.op = inclusive ? ">=" : ">";
  r.pass = r.recompute();
  return r;
}

StatReport make_p_gate(std::string name, double statistic, double p_value, double n, double ess, double threshold) {
  StatReport r;
  r.name = std::move(name);
  r.value = statistic;
  r.se = std::numeric_limits<double>::quiet_NaN();
  r.p_value = p_value;
  r.n = n;
  r.ess = ess;
  r.threshold = threshold;
  r.gate_value = p_value;
  char buf[48];
  std::snprintf(buf, sizeof buf, "p > %g", threshold);
  r.gate = buf;
  r.op = ">";
  r.pass = r.recompute();
  return r;
}

}  // namespace conestable
