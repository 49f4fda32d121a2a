#include "conestable/conditioning.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "conestable/parallel.hpp"

namespace conestable {

const char* to_string(Conditioning c) { return c == Conditioning::StayInCone ? "stay" : "absorb"; }

HFunction::HFunction(HarmonicFunction M, double alpha, double beta_shift)
    : M_(std::move(M)), alpha_(alpha), shift_(beta_shift) {}

double HFunction::operator()(const Point& x) const {
  const double m = M_(x);
  if (m == 0.0) return 0.0;
  // M(arg x) = M(x) |x|^{-beta_M}.
  return m * std::pow(x.norm(), exponent() - M_.beta());
}

namespace {

double grid_weight(const PathGrid& path, double t, const std::function<double(const Point&)>& h) {
  if (path.times.empty()) throw DomainError("weight: empty path");
  if (t > path.times.back() * (1 + 1e-12) && !path.killed()) throw DomainError("weight: horizon beyond the simulated range");
  const std::size_t k = path.index_at(t);
  if (std::fabs(path.times[k] - t) > 1e-9 * std::max(1.0, t)) {
    if (path.killed() && t > path.times[path.killed_index]) return 0.0;
    throw DomainError("weight: horizon is not a grid time");
  }
  if (path.killed() && k >= path.killed_index) return 0.0;
  return h(path.positions[k]) / h(path.start);
}

}  // namespace

double weight_stay(const PathGrid& path, const HarmonicFunction& M, double t) {
  return grid_weight(path, t, [&](const Point& x) { return M(x); });
}

double weight_absorb(const PathGrid& path, const HFunction& H, double t) {
  return grid_weight(path, t, [&](const Point& x) { return H(x); });
}

WeightedSample WeightedEnsemble::sample(std::size_t k, const std::function<double(const Point&)>& f) const {
  WeightedSample s;
  for (std::size_t i = 0; i < weights[k].size(); ++i) {
    if (weights[k][i] > 0.0) {
      s.values.push_back(f(positions[k][i]));
      s.weights.push_back(weights[k][i]);
    }
  }
  return s;
}

MeanEstimate WeightedEnsemble::expectation(std::size_t k, const std::function<double(const Point&)>& f) const {
  std::vector<double> v(weights[k].size(), 0.0);
  for (std::size_t i = 0; i < v.size(); ++i)
    if (weights[k][i] > 0.0) v[i] = f(positions[k][i]);
  return weighted_mean(v, weights[k]);
}

WeightedEnsemble conditioned_ensemble(Conditioning kind, const StableParams& params, const ConeSpec& cone,
                                      const HarmonicFunction& M, const Point& x0,
                                      const std::vector<double>& horizons, std::size_t N, const StepPolicy& policy,
                                      const RngStream& rng, double beta_shift, bool keep_paths) {
  params.validate();
  if (!contains(cone, x0)) throw GeometryError("conditioned ensemble: start outside the cone");
  if (horizons.empty() || !std::is_sorted(horizons.begin(), horizons.end()) || !(horizons.front() > 0.0))
    throw DomainError("conditioned ensemble: horizons must be positive and increasing");
  if (N == 0) throw DomainError("conditioned ensemble: N must be positive");

  const HFunction H(M, params.alpha, beta_shift);
  std::function<double(const Point&)> h;
  if (kind == Conditioning::StayInCone) h = [&](const Point& x) { return M(x); };
  else h = [&](const Point& x) { return H(x); };
  const double h0 = h(x0);
  if (!(h0 > 0.0)) throw EstimationError("conditioned ensemble: h vanishes at the start point");

  const IncrementSampler inc(params);
  struct Out {
    std::vector<Point> pos;
    std::size_t reached;
    PathGrid path;
  };
  auto runs = parallel_map(N, [&](std::size_t i) {
    RngStream r = rng.split(i);
    Out o;
    if (keep_paths) {
      // Full path: fixed grids keep their layout; relative grids are forced
      // through each horizon so weights can be read at grid times.
      o.path.start = x0;
      o.path.h = policy.h;
      o.path.seed = r.seed();
      o.path.stream_id = r.stream_id();
      o.path.times.push_back(0.0);
      o.path.positions.push_back(x0);
      Point x = x0;
      double t = 0.0;
      o.reached = 0;
      for (double target : horizons) {
        bool dead = false;
        while (t < target - 1e-12 * target) {
          const double dt = std::min(step_length(policy, cone, params, x), target - t);
          x += inc(dt, r);
          t = (target - t <= dt * (1 + 1e-12)) ? target : t + dt;
          o.path.times.push_back(t);
          o.path.positions.push_back(x);
          if (!contains(cone, x)) {
            o.path.status = PathStatus::Killed;
            o.path.killed_index = o.path.positions.size() - 1;
            dead = true;
            break;
          }
        }
        if (dead) break;
        o.pos.push_back(x);
        ++o.reached;
      }
    } else {
      o.reached = simulate_snapshots(inc, cone, x0, horizons, policy, r, o.pos);
    }
    return o;
  });

  WeightedEnsemble e;
  e.kind = kind;
  e.start = x0;
  e.horizons = horizons;
  e.positions.assign(horizons.size(), std::vector<Point>(N, Point(params.d)));
  e.weights.assign(horizons.size(), std::vector<double>(N, 0.0));
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t k = 0; k < runs[i].reached; ++k) {
      e.positions[k][i] = runs[i].pos[k];
      e.weights[k][i] = h(runs[i].pos[k]) / h0;
    }
    if (keep_paths) e.paths.push_back(std::move(runs[i].path));
  }
  e.weight_source = M.to_json();
  e.weight_source["conditioning"] = to_string(kind);
  if (kind == Conditioning::AbsorbAtApex) e.weight_source["h_exponent"] = H.exponent();
  return e;
}

MartingaleCheck martingale_check(Conditioning kind, const StableParams& params, const ConeSpec& cone,
                                 const HarmonicFunction& M, const Point& x0, const std::vector<double>& horizons,
                                 std::size_t N, const StepPolicy& policy, const RngStream& rng, double order) {
  if (!(order > 0.0)) throw DomainError("martingale check: order must be positive");
  StepPolicy coarse = policy;
  coarse.h *= 2.0;
  if (policy.rule == StepRule::Fixed) {
    coarse.max_step = coarse.h;
    coarse.min_step = coarse.h;
  }
  const auto fine_e = conditioned_ensemble(kind, params, cone, M, x0, horizons, N, policy, rng.split(0));
  const auto coarse_e = conditioned_ensemble(kind, params, cone, M, x0, horizons, N, coarse, rng.split(1));
  MartingaleCheck c;
  c.horizons = horizons;
  c.order = order;
  const double f = 1.0 / (std::pow(2.0, order) - 1.0);
  for (std::size_t k = 0; k < horizons.size(); ++k) {
    const auto a = fine_e.mean_weight(k);
    const auto b = coarse_e.mean_weight(k);
    c.fine.push_back(a);
    c.coarse.push_back(b);
    c.extrapolated.push_back(a.mean - (b.mean - a.mean) * f);
    c.extrapolated_se.push_back(std::hypot((1.0 + f) * a.se, f * b.se));
    c.ess.push_back(fine_e.ess(k));
  }
  return c;
}

std::vector<std::size_t> systematic_resample(const std::vector<double>& w, double u0) {
  const std::size_t n = w.size();
  double total = 0.0;
  for (double x : w) total += x;
  std::vector<std::size_t> idx(n);
  double cum = w[0] / total;
  std::size_t j = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double u = (static_cast<double>(i) + u0) / static_cast<double>(n);
    while (u > cum && j + 1 < n) cum += w[++j] / total;
    idx[i] = j;
  }
  return idx;
}

ConditionedPopulation conditioned_population(const StableParams& params, const ConeSpec& cone,
                                             const HarmonicFunction& M, const Point& x0,
                                             const std::vector<double>& horizons, std::size_t particles,
                                             std::size_t replicates, const StepPolicy& policy, const RngStream& rng) {
  params.validate();
  if (!contains(cone, x0)) throw GeometryError("population: start outside the cone");
  if (horizons.empty() || !std::is_sorted(horizons.begin(), horizons.end()) || !(horizons.front() > 0.0))
    throw DomainError("population: horizons must be positive and increasing");
  if (particles < 2 || replicates == 0) throw DomainError("population: need at least 2 particles and 1 replicate");
  const double m0 = M(x0);
  if (!(m0 > 0.0)) throw EstimationError("population: M vanishes at the start point");

  std::vector<double> stages;
  for (double s = 2.0 * std::pow(x0.norm(), params.alpha); s < horizons.back(); s *= 2.0) stages.push_back(s);
  stages.insert(stages.end(), horizons.begin(), horizons.end());
  std::sort(stages.begin(), stages.end());
  stages.erase(std::unique(stages.begin(), stages.end()), stages.end());

  const IncrementSampler inc(params);
  ConditionedPopulation pop;
  pop.horizons = horizons;
  pop.snapshots.resize(replicates);
  for (std::size_t r = 0; r < replicates; ++r) {
    const RngStream rep = rng.split(r);
    std::vector<Point> x(particles, x0);
    std::vector<double> w(particles, 1.0);
    double t = 0.0;
    std::size_t next_h = 0;
    for (std::size_t j = 0; j < stages.size(); ++j) {
      const double dt = stages[j] - t;
      const RngStream stage = rep.split(j);
      const auto moved = parallel_map(particles, [&](std::size_t i) -> std::pair<Point, double> {
        if (!(w[i] > 0.0)) return {x[i], 0.0};
        RngStream pr = stage.split(i);
        std::vector<Point> out;
        const double span[1] = {dt};
        if (simulate_snapshots(inc, cone, x[i], span, policy, pr, out) == 0) return {x[i], 0.0};
        return {out[0], w[i] * M(out[0]) / M(x[i])};
      });
      for (std::size_t i = 0; i < particles; ++i) {
        x[i] = moved[i].first;
        w[i] = moved[i].second;
      }
      t = stages[j];
      double total = 0.0;
      for (double v : w) total += v;
      if (!(total > 0.0)) throw EstimationError("population: every particle was killed");
      if (next_h < horizons.size() && stages[j] == horizons[next_h]) {
        pop.snapshots[r].push_back({x, w});
        ++next_h;
      }
      if (effective_size(w) < 0.5 * static_cast<double>(particles) && j + 1 < stages.size()) {
        RngStream ur = stage.split(particles);
        const auto idx = systematic_resample(w, ur.uniform());
        const double mean_w = total / static_cast<double>(particles);
        std::vector<Point> nx(particles);
        for (std::size_t i = 0; i < particles; ++i) nx[i] = x[idx[i]];
        x = std::move(nx);
        std::fill(w.begin(), w.end(), mean_w);
        ++pop.resamplings;
      }
    }
  }
  return pop;
}

MeanEstimate ConditionedPopulation::expectation(std::size_t k, const std::function<double(const Point&)>& f) const {
  std::vector<double> est;
  for (const auto& rep : snapshots) {
    const auto& s = rep[k];
    double sw = 0.0, swf = 0.0;
    for (std::size_t i = 0; i < s.weights.size(); ++i) {
      if (!(s.weights[i] > 0.0)) continue;
      sw += s.weights[i];
      swf += s.weights[i] * f(s.positions[i]);
    }
    est.push_back(swf / sw);
  }
  return mean_se(est);
}

double ConditionedPopulation::ess(std::size_t k) const {
  double e = 0.0;
  for (const auto& rep : snapshots) e += effective_size(rep[k].weights);
  return e;
}

EntranceEstimate entrance_from_zero(const StableParams& params, const ConeSpec& cone, const HarmonicFunction& M,
                                    const std::function<double(const Point&)>& f, double t,
                                    const std::vector<double>& deltas, const Point& direction,
                                    std::size_t particles, std::size_t replicates, const StepPolicy& policy,
                                    const RngStream& rng) {
  if (deltas.empty()) throw DomainError("entrance: empty delta list");
  for (std::size_t j = 0; j < deltas.size(); ++j) {
    if (!(deltas[j] > 0.0) || (j > 0 && !(deltas[j] < deltas[j - 1])))
      throw DomainError("entrance: deltas must be positive and decreasing");
    if (!(std::pow(deltas[j], params.alpha) < t)) throw DomainError("entrance: regime violation delta^alpha >= t");
  }
  if (replicates < 2) throw DomainError("entrance: at least 2 replicates are needed for standard errors");
  const Point u = arg(direction).vec();
  EntranceEstimate out;
  out.deltas = deltas;
  for (std::size_t j = 0; j < deltas.size(); ++j) {
    const auto pop =
        conditioned_population(params, cone, M, u * deltas[j], {t}, particles, replicates, policy, rng.split(j));
    out.values.push_back(pop.expectation(0, f));
    out.ess.push_back(pop.ess(0));
  }
  for (std::size_t j = 1; j < deltas.size(); ++j) {
    const double joint = std::hypot(out.values[j].se, out.values[j - 1].se);
    const double diff = std::fabs(out.values[j].mean - out.values[j - 1].mean);
    const double z = joint > 0.0 ? diff / joint : (diff > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
    out.max_successive_z = std::max(out.max_successive_z, z);
  }
  return out;
}

long CollapseBins::index(const ConeSpec& cone, const Point& z) const {
  const double r = z.norm();
  const auto& re = radial_edges;
  const auto& ae = angle_edges;
  if (!(r >= re.front() && r < re.back())) return -1;
  const double eta = polar_angle(cone, z);
  if (!(eta >= ae.front() && eta < ae.back())) return -1;
  const long ir = std::upper_bound(re.begin(), re.end(), r) - re.begin() - 1;
  const long ia = std::upper_bound(ae.begin(), ae.end(), eta) - ae.begin() - 1;
  return ir * static_cast<long>(ae.size() - 1) + ia;
}

BinnedMass bin_population(const ConditionedPopulation& pop, std::size_t k, double scale, const ConeSpec& cone,
                          const CollapseBins& bins) {
  if (bins.radial_edges.size() < 2 || bins.angle_edges.size() < 2) throw DomainError("collapse: need at least one bin");
  const std::size_t B = bins.count();
  BinnedMass out;
  out.ess.assign(B, 0.0);
  for (const auto& rep : pop.snapshots) {
    const auto& s = rep[k];
    std::vector<double> m(B, 0.0), sw(B, 0.0), sw2(B, 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < s.weights.size(); ++i) {
      const double w = s.weights[i];
      if (!(w > 0.0)) continue;
      total += w;
      const long b = bins.index(cone, s.positions[i] * scale);
      if (b < 0) continue;
      m[b] += w;
      sw[b] += w;
      sw2[b] += w * w;
    }
    for (std::size_t b = 0; b < B; ++b) {
      m[b] /= total;
      if (sw2[b] > 0.0) out.ess[b] += sw[b] * sw[b] / sw2[b];
    }
    out.mass.push_back(std::move(m));
  }
  return out;
}

CollapseResult collapse_statistic(const BinnedMass& a, const BinnedMass& b, double mass_factor2) {
  if (a.ess.size() != b.ess.size()) throw DomainError("collapse: bin layouts differ");
  if (a.mass.size() < 2 || b.mass.size() < 2) throw DomainError("collapse: at least 2 replicates per side");
  const std::size_t B = a.ess.size();
  CollapseResult res;
  res.mass_factor = mass_factor2;
  auto summarize = [&](const BinnedMass& m, double factor, std::vector<double>& mean, std::vector<double>& se) {
    mean.resize(B);
    se.resize(B);
    std::vector<double> col(m.mass.size());
    for (std::size_t k = 0; k < B; ++k) {
      for (std::size_t r = 0; r < m.mass.size(); ++r) col[r] = m.mass[r][k] * factor;
      const auto e = mean_se(col);
      mean[k] = e.mean;
      se[k] = e.se;
    }
  };
  summarize(a, 1.0, res.mass1, res.se1);
  summarize(b, mass_factor2, res.mass2, res.se2);
  res.used.assign(B, false);
  for (std::size_t k = 0; k < B; ++k) {
    if (a.ess[k] <= 100.0 || b.ess[k] <= 100.0) continue;
    res.used[k] = true;
    ++res.used_bins;
    const double joint = std::hypot(res.se1[k], res.se2[k]);
    const double diff = std::fabs(res.mass1[k] - res.mass2[k]);
    if (joint > 0.0) res.statistic = std::max(res.statistic, diff / joint);
    else if (diff > 0.0) res.statistic = std::numeric_limits<double>::infinity();
  }
  if (res.used_bins == 0) throw EstimationError("collapse: no bin has more than 100 effective counts");
  return res;
}

CollapseResult entrance_density_collapse(const StableParams& params, const ConeSpec& cone, const HarmonicFunction& M,
                                         double t1, double t2, const CollapseBins& bins, double delta,
                                         const Point& direction, std::size_t particles, std::size_t replicates,
                                         const StepPolicy& policy, const RngStream& rng, double exponent_error) {
  if (!(t1 > 0.0 && t2 >= t1)) throw DomainError("collapse: need 0 < t1 <= t2");
  if (!(std::pow(delta, params.alpha) < t1 / 10.0)) throw DomainError("collapse: delta^alpha must be well below t1");
  const Point x0 = arg(direction).vec() * delta;
  const double factor = std::pow(t2 / t1, exponent_error / params.alpha);
  const auto p1 = conditioned_population(params, cone, M, x0, {t1}, particles, replicates, policy, rng.split(0));
  const auto b1 = bin_population(p1, 0, std::pow(t1, -1.0 / params.alpha), cone, bins);
  if (t2 == t1) return collapse_statistic(b1, b1, factor);
  const auto p2 = conditioned_population(params, cone, M, x0, {t2}, particles, replicates, policy, rng.split(1));
  const auto b2 = bin_population(p2, 0, std::pow(t2, -1.0 / params.alpha), cone, bins);
  return collapse_statistic(b1, b2, factor);
}

}  // namespace conestable
