#include "conestable/map.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "conestable/error.hpp"
#include "conestable/parallel.hpp"

namespace conestable {

namespace {

Point lerp_direction(const Point& a, const Point& b, double w) {
  Point p = a * (1.0 - w) + b * w;
  const double n = p.norm();
  return n > 0.0 ? p * (1.0 / n) : a;
}

/// Index k with c[k] <= v <= c[k+1], scanning forward from k.
std::size_t advance(const std::vector<double>& c, std::size_t k, double v) {
  while (k + 2 < c.size() && c[k + 1] < v) ++k;
  return k;
}

double segment_fraction(const std::vector<double>& c, std::size_t k, double v) {
  const double den = c[k + 1] - c[k];
  return den > 0.0 ? std::clamp((v - c[k]) / den, 0.0, 1.0) : 0.0;
}

/// Cumulative trapezoid of max(|X|, clip)^{-p} over the alive part of a path.
std::vector<double> clock(const PathGrid& path, double p, std::size_t& clipped) {
  const std::size_t n = path.last_alive() + 1;
  std::vector<double> c(n, 0.0);
  auto f = [&](std::size_t k) {
    const double r = path.positions[k].norm();
    if (r < kClipRadius) ++clipped;
    return std::pow(std::max(r, kClipRadius), -p);
  };
  double prev = f(0);
  for (std::size_t k = 1; k < n; ++k) {
    const double cur = f(k);
    c[k] = c[k - 1] + 0.5 * (prev + cur) * (path.times[k] - path.times[k - 1]);
    prev = cur;
  }
  return c;
}

}  // namespace

double signed_polar_angle(const ConeSpec& cone, const Point& x) {
  const Point m = meridian_direction(cone);
  const double a = dot(x, cone.axis().vec());
  const double side = dot(x, m);
  if (cone.dim() == 2) return std::atan2(side, a);
  const double eta = polar_angle(cone, x);
  return side < 0.0 ? -eta : eta;
}

MapPath to_map(const PathGrid& path, double alpha, double map_step) {
  if (path.positions.empty()) throw DomainError("to_map: empty path");
  const double r0 = path.start.norm();
  if (!(r0 > 0.0)) throw DomainError("to_map: path starts at the apex");
  MapPath m;
  const auto A = clock(path, alpha, m.clipped);
  m.step = map_step > 0.0 ? map_step : path.h * std::pow(r0, -alpha);
  if (!(m.step > 0.0)) throw DomainError("to_map: MAP step must be positive");

  const std::size_t n = A.size();
  std::vector<double> lr(n);
  std::vector<Point> dir(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double r = path.positions[k].norm();
    lr[k] = std::log(std::max(r, kClipRadius) / r0);
    dir[k] = r > 0.0 ? path.positions[k] * (1.0 / r) : (k > 0 ? dir[k - 1] : Point::basis(path.start.dim(), 0));
  }
  std::size_t k = 0;
  const double end = A.back() * (1.0 + 1e-12);
  for (std::size_t j = 0;; ++j) {
    const double tau = static_cast<double>(j) * m.step;
    if (tau > end) break;
    if (n == 1) {
      m.times.push_back(0.0);
      m.xi.push_back(lr[0]);
      m.theta.push_back(dir[0]);
      break;
    }
    k = advance(A, k, tau);
    const double w = segment_fraction(A, k, tau);
    m.times.push_back(tau);
    m.xi.push_back(lr[k] + w * (lr[k + 1] - lr[k]));
    m.theta.push_back(lerp_direction(dir[k], dir[k + 1], w));
  }
  return m;
}

PathGrid from_map(const MapPath& map, const Point& x0, double alpha, double h) {
  if (map.xi.empty()) throw DomainError("from_map: empty MAP");
  if (!(h > 0.0)) throw DomainError("from_map: step must be positive");
  const double r0 = x0.norm();
  const std::size_t n = map.xi.size();
  std::vector<double> S(n, 0.0);
  const double ra = std::pow(r0, alpha);
  for (std::size_t j = 1; j < n; ++j)
    S[j] = S[j - 1] + 0.5 * ra * (std::exp(alpha * map.xi[j - 1]) + std::exp(alpha * map.xi[j])) * map.step;

  PathGrid out;
  out.h = h;
  out.start = x0;
  std::size_t j = 0;
  const double end = S.back() * (1.0 + 1e-12);
  for (std::size_t k = 0;; ++k) {
    const double t = static_cast<double>(k) * h;
    if (t > end) break;
    if (n == 1) {
      out.times.push_back(0.0);
      out.positions.push_back(map.theta[0] * (r0 * std::exp(map.xi[0])));
      break;
    }
    j = advance(S, j, t);
    const double w = segment_fraction(S, j, t);
    const double xi = map.xi[j] + w * (map.xi[j + 1] - map.xi[j]);
    out.times.push_back(t);
    out.positions.push_back(lerp_direction(map.theta[j], map.theta[j + 1], w) * (r0 * std::exp(xi)));
  }
  return out;
}

PathGrid rbz_transform(const PathGrid& path, double alpha, double out_step, std::size_t* clipped) {
  if (path.positions.empty()) throw DomainError("rbz_transform: empty path");
  const double r0 = path.start.norm();
  if (!(r0 > 0.0)) throw DomainError("rbz_transform: path starts at the apex");
  std::size_t clip = 0;
  const auto C = clock(path, 2.0 * alpha, clip);
  if (clipped) *clipped = clip;
  const double step = out_step > 0.0 ? out_step : path.h * std::pow(r0, -2.0 * alpha);
  if (!(step > 0.0)) throw DomainError("rbz_transform: output step must be positive");

  PathGrid out;
  out.h = step;
  out.start = invert(path.start);
  out.seed = path.seed;
  out.stream_id = path.stream_id;
  std::size_t k = 0;
  const std::size_t n = C.size();
  const double end = C.back() * (1.0 + 1e-12);
  for (std::size_t j = 0;; ++j) {
    const double t = static_cast<double>(j) * step;
    if (t > end) break;
    Point x = path.positions[0];
    if (n > 1) {
      k = advance(C, k, t);
      const double w = segment_fraction(C, k, t);
      x = path.positions[k] * (1.0 - w) + path.positions[k + 1] * w;
    }
    out.times.push_back(t);
    out.positions.push_back(invert(x));
    if (n == 1) break;
  }
  return out;
}

// ---------------------------------------------------------------------------

DualityReport duality_test(const StableParams& params, const ConeSpec& cone, const HarmonicFunction& M,
                           const Point& x, const std::vector<double>& times, std::size_t N, const StepPolicy& policy,
                           const RngStream& rng, double beta_shift, double escape_factor) {
  params.validate();
  if (!contains(cone, x)) throw GeometryError("duality: start outside the cone");
  if (times.empty() || !std::is_sorted(times.begin(), times.end()) || !(times.front() > 0.0))
    throw DomainError("duality: times must be positive and increasing");
  const double m0 = M(x);
  if (!(m0 > 0.0)) throw EstimationError("duality: M vanishes at the start point");
  const double a2 = 2.0 * params.alpha;
  const double escape = escape_factor * x.norm();
  const double clock_cap = policy.h * times.front();
  StepPolicy free_policy = policy;
  free_policy.max_step = std::numeric_limits<double>::infinity();
  const std::size_t K = times.size();

  // StayInCone side: stop at eta(t) through the streaming clock.
  const IncrementSampler inc(params);
  struct Stop {
    std::vector<Point> y;
    std::vector<double> w;
    bool escaped = false;
  };
  const RngStream rs = rng.split(0);
  const auto stops = parallel_map(N, [&](std::size_t i) {
    RngStream r = rs.split(i);
    Stop s;
    Point z = x;
    double c = 0.0;
    std::size_t k = 0;
    while (k < K) {
      const double rz = z.norm();
      if (rz > escape) {
        s.escaped = true;
        break;
      }
      const double scale = std::pow(rz, a2);
      double dt = std::min(step_length(free_policy, cone, params, z), clock_cap * scale);
      bool reach = false;
      if (c + dt / scale >= times[k]) {
        dt = (times[k] - c) * scale;
        reach = true;
      }
      z += inc(dt, r);
      if (!contains(cone, z)) break;
      c = reach ? times[k] : c + dt / scale;
      if (reach) {
        // Several horizons may share the same stopping point only if they coincide.
        while (k < K && times[k] <= c) {
          s.y.push_back(invert(z));
          s.w.push_back(M(z) / m0);
          ++k;
        }
      }
    }
    return s;
  });

  const Point kx = invert(x);
  const auto absorb = conditioned_ensemble(Conditioning::AbsorbAtApex, params, cone, M, kx, times, N, policy,
                                           rng.split(1), beta_shift);
  DualityReport rep;
  rep.times = times;
  for (const auto& s : stops) rep.escaped += s.escaped ? 1 : 0;
  for (std::size_t k = 0; k < K; ++k) {
    WeightedSample lr_a, ang_a;
    std::vector<double> mass(N, 0.0);
    for (std::size_t i = 0; i < N; ++i) {
      if (stops[i].y.size() <= k || !(stops[i].w[k] > 0.0)) continue;
      const Point& y = stops[i].y[k];
      lr_a.values.push_back(std::log(y.norm()));
      ang_a.values.push_back(polar_angle(cone, y));
      lr_a.weights.push_back(stops[i].w[k]);
      mass[i] = stops[i].w[k];
    }
    ang_a.weights = lr_a.weights;
    const auto lr_b = absorb.sample(k, [](const Point& p) { return std::log(p.norm()); });
    const auto ang_b = absorb.sample(k, [&](const Point& p) { return polar_angle(cone, p); });
    rep.log_radius.push_back(ks_two_sample(lr_a, lr_b));
    rep.axis_angle.push_back(ks_two_sample(ang_a, ang_b));
    rep.mass_transformed.push_back(mean_se(mass));
    rep.mass_absorb.push_back(absorb.mean_weight(k));
    rep.ess_transformed.push_back(lr_a.effective_size());
    rep.ess_absorb.push_back(absorb.ess(k));
  }
  return rep;
}

// ---------------------------------------------------------------------------

double map_kernel_constant(double alpha, int d) {
  // Levy density constant of the isotropic stable process times |S^{d-1}|,
  // i.e. the constant for the normalised surface measure.
  const double levy = alpha * std::pow(2.0, alpha - 1.0) * boost::math::tgamma(0.5 * (d + alpha)) /
                      (std::pow(std::numbers::pi, 0.5 * d) * boost::math::tgamma(1.0 - 0.5 * alpha));
  const double area = 2.0 * std::pow(std::numbers::pi, 0.5 * d) / boost::math::tgamma(0.5 * d);
  return levy * area;
}

namespace {

double pass_fraction(const std::vector<double>& ratio, const std::vector<double>& se, const std::vector<bool>& masked) {
  std::size_t used = 0, ok = 0;
  for (std::size_t b = 0; b < ratio.size(); ++b) {
    if (masked[b]) continue;
    ++used;
    if (std::fabs(ratio[b] - 1.0) < 4.0 * se[b]) ++ok;
  }
  return used ? static_cast<double>(ok) / static_cast<double>(used) : 0.0;
}

/// Integrals of the MAP kernel over each bin at a table of pre-jump angles.
struct KernelTable {
  std::vector<double> nodes;
  std::vector<std::vector<double>> free;  ///< [node][bin]
  std::vector<std::vector<double>> cond;  ///< [node][bin], includes M(phi)/M(theta) e^{beta y}

  static constexpr int kSub = 6;
};

KernelTable kernel_table(const StableParams& params, const ConeSpec& cone, const HarmonicFunction& M,
                         const JumpBins& bins, std::size_t n_nodes) {
  using Gauss = boost::math::quadrature::gauss<double, 8>;
  const double psi = cone.half_angle();
  const double a = params.alpha;
  const double beta = M.beta();
  const double levy = a * std::pow(2.0, a - 1.0) * boost::math::tgamma(0.5 * (2.0 + a)) /
                      (std::numbers::pi * boost::math::tgamma(1.0 - 0.5 * a));
  // Composite Gauss-Legendre nodes on [-1, 1] split into kSub cells.
  std::vector<double> gx, gw;
  const auto& ab = Gauss::abscissa();
  const auto& wt = Gauss::weights();
  for (int c = 0; c < KernelTable::kSub; ++c) {
    const double lo = -1.0 + 2.0 * c / KernelTable::kSub, half = 1.0 / KernelTable::kSub;
    for (std::size_t q = 0; q < ab.size(); ++q) {
      for (int s : {-1, 1}) {
        if (ab[q] == 0.0 && s == 1) continue;
        gx.push_back(lo + half + s * ab[q] * half);
        gw.push_back(wt[q] * half);
      }
    }
  }
  KernelTable t;
  t.nodes.resize(n_nodes);
  for (std::size_t j = 0; j < n_nodes; ++j)
    t.nodes[j] = -psi + (static_cast<double>(j) + 0.5) * 2.0 * psi / static_cast<double>(n_nodes);
  const double dphi = 2.0 * psi / bins.phi_bins;
  const std::size_t nb = bins.count();
  const auto rows = parallel_map(n_nodes, [&](std::size_t j) {
    const double th = t.nodes[j];
    const double mth = M.angular(std::fabs(th));
    std::vector<double> f(nb, 0.0), c(nb, 0.0);
    for (std::size_t yb = 0; yb < bins.y_ranges.size(); ++yb) {
      const auto [y0, y1] = bins.y_ranges[yb];
      for (int pb = 0; pb < bins.phi_bins; ++pb) {
        const double p0 = -psi + pb * dphi;
        double sf = 0.0, sc = 0.0;
        for (std::size_t u = 0; u < gx.size(); ++u) {
          const double y = 0.5 * (y0 + y1) + 0.5 * (y1 - y0) * gx[u];
          const double ey = std::exp(y);
          for (std::size_t v = 0; v < gx.size(); ++v) {
            const double phi = p0 + 0.5 * dphi * (1.0 + gx[v]);
            const double dist2 = ey * ey - 2.0 * ey * std::cos(phi - th) + 1.0;
            const double k = gw[u] * gw[v] * ey * ey * std::pow(dist2, -0.5 * (a + 2.0));
            sf += k;
            sc += k * std::exp(beta * y) * M.angular(std::fabs(phi));
          }
        }
        const double jac = 0.25 * (y1 - y0) * dphi * levy;
        const std::size_t b = yb * bins.phi_bins + pb;
        f[b] = sf * jac;
        c[b] = sc * jac / mth;
      }
    }
    return std::pair{f, c};
  });
  for (auto& r : rows) {
    t.free.push_back(r.first);
    t.cond.push_back(r.second);
  }
  return t;
}

struct BinSums {
  std::vector<double> a, b, aa, ab, bb;
  explicit BinSums(std::size_t n = 0) : a(n), b(n), aa(n), ab(n), bb(n) {}
  void add(std::size_t k, double x, double y) {
    a[k] += x;
    b[k] += y;
    aa[k] += x * x;
    ab[k] += x * y;
    bb[k] += y * y;
  }
  void merge(const BinSums& o) {
    for (std::size_t k = 0; k < a.size(); ++k) {
      a[k] += o.a[k];
      b[k] += o.b[k];
      aa[k] += o.aa[k];
      ab[k] += o.ab[k];
      bb[k] += o.bb[k];
    }
  }
  /// Ratio sum(a)/sum(b) and its delta-method SE.
  std::pair<double, double> ratio(std::size_t k) const {
    if (!(b[k] > 0.0)) return {0.0, std::numeric_limits<double>::infinity()};
    const double r = a[k] / b[k];
    const double v = std::max(0.0, aa[k] - 2.0 * r * ab[k] + r * r * bb[k]);
    return {r, std::sqrt(v) / b[k]};
  }
};

}  // namespace

double JumpHistogram::free_pass_fraction() const { return pass_fraction(free_ratio, free_se, free_masked); }
double JumpHistogram::cond_pass_fraction() const { return pass_fraction(cond_ratio, cond_se, cond_masked); }

JumpHistogram empirical_jump_rate(const StableParams& params, const ConeSpec& cone, const HarmonicFunction& M,
                                  const Point& theta0, double map_horizon, double map_step, std::size_t N,
                                  const JumpBins& bins, const RngStream& rng) {
  params.validate();
  if (params.d != 2 || cone.dim() != 2) throw DomainError("jump rate: implemented for d = 2 only");
  if (!contains(cone, theta0)) throw GeometryError("jump rate: start outside the cone");
  if (!(map_step > 0.0) || !(map_horizon >= map_step)) throw DomainError("jump rate: invalid MAP step or horizon");
  if (N < 2 * kJumpReplicates) throw DomainError("jump rate: N too small for the replicate split");
  const double psi = cone.half_angle();
  const std::size_t nb = bins.count();
  const std::size_t n_nodes = 240;
  const KernelTable table = kernel_table(params, cone, M, bins, n_nodes);
  const double node_w = 2.0 * psi / static_cast<double>(n_nodes);
  const double dphi = 2.0 * psi / bins.phi_bins;
  const IncrementSampler inc(params);
  const auto steps = static_cast<std::size_t>(std::llround(map_horizon / map_step));
  const Point u0 = theta0 * (1.0 / theta0.norm());

  auto bin_of = [&](double y, double phi) -> long {
    long yb = -1;
    for (std::size_t q = 0; q < bins.y_ranges.size(); ++q)
      if (y >= bins.y_ranges[q].first && y < bins.y_ranges[q].second) yb = static_cast<long>(q);
    if (yb < 0) return -1;
    const long pb = std::clamp(static_cast<long>(std::floor((phi + psi) / dphi)), 0L, bins.phi_bins - 1L);
    return yb * bins.phi_bins + pb;
  };

  // Detection threshold from the median |Delta xi| of a pilot set of paths.
  std::vector<double> pilot;
  {
    RngStream r = rng.split(0).split(N + 1);
    for (int p = 0; p < 200; ++p) {
      Point th = u0;
      for (std::size_t s = 0; s < steps; ++s) {
        const Point z = th + inc(map_step, r);
        if (!contains(cone, z)) break;
        const double n = z.norm();
        pilot.push_back(std::fabs(std::log(n)));
        th = z * (1.0 / n);
      }
    }
  }
  if (pilot.empty()) throw EstimationError("jump rate: no pilot increments");
  std::nth_element(pilot.begin(), pilot.begin() + pilot.size() / 2, pilot.end());
  const double threshold = 3.0 * pilot[pilot.size() / 2];

  // One MAP segment of `n_steps` from th: detected jumps per bin, occupation
  // of the angle table, sum of y, survival.
  struct Segment {
    std::vector<std::pair<long, double>> jumps;  ///< (bin, |y|)
    std::vector<double> occ;
    double xi = 0.0;
    double time = 0.0;
    bool alive = true;
    Point end;
  };
  auto run_segment = [&](Point th, std::size_t n_steps, RngStream& r) {
    Segment sg;
    sg.occ.assign(n_nodes, 0.0);
    for (std::size_t s = 0; s < n_steps; ++s) {
      const double eta = signed_polar_angle(cone, th);
      const double pos = (eta + psi) / node_w - 0.5;
      const long j0 = std::clamp(static_cast<long>(std::floor(pos)), 0L, static_cast<long>(n_nodes) - 2);
      const double f = std::clamp(pos - static_cast<double>(j0), 0.0, 1.0);
      sg.occ[j0] += (1.0 - f) * map_step;
      sg.occ[j0 + 1] += f * map_step;
      sg.time += map_step;
      const Point z = th + inc(map_step, r);
      if (!contains(cone, z)) {
        sg.alive = false;
        return sg;
      }
      const double n = z.norm();
      const double y = std::log(n);
      th = z * (1.0 / n);
      sg.xi += y;
      const long b = bin_of(y, signed_polar_angle(cone, th));
      if (b >= 0 && std::fabs(y) > threshold) sg.jumps.emplace_back(b, std::fabs(y));
    }
    sg.end = th;
    return sg;
  };

  JumpHistogram hst;
  hst.bins = bins;
  hst.map_step = map_step;
  hst.threshold = threshold;
  hst.sensitivity_counts.assign(3, 0.0);

  // Free kernel: independent killed MAPs, one ratio unit per path.
  struct FreeChunk {
    BinSums sums;
    std::vector<double> sens;
    double time = 0.0, jumps = 0.0;
  };
  const std::size_t chunks = std::min<std::size_t>(N, 256);
  const RngStream rf = rng.split(0);
  const auto parts = parallel_map(chunks, [&](std::size_t c) {
    FreeChunk out{BinSums(nb), std::vector<double>(3, 0.0)};
    std::vector<double> cnt(nb), pf(nb);
    for (std::size_t i = c; i < N; i += chunks) {
      RngStream r = rf.split(i);
      const Segment sg = run_segment(u0, steps, r);
      out.time += sg.time;
      std::fill(cnt.begin(), cnt.end(), 0.0);
      for (const auto& [b, ay] : sg.jumps) {
        cnt[b] += 1.0;
        out.jumps += 1.0;
        for (int q = 0; q < 3; ++q)
          if (ay > threshold * (1 << q)) out.sens[q] += 1.0;
      }
      std::fill(pf.begin(), pf.end(), 0.0);
      for (std::size_t j = 0; j < n_nodes; ++j) {
        if (sg.occ[j] == 0.0) continue;
        for (std::size_t b = 0; b < nb; ++b) pf[b] += sg.occ[j] * table.free[j][b];
      }
      for (std::size_t b = 0; b < nb; ++b) out.sums.add(b, cnt[b], pf[b]);
    }
    return out;
  });
  BinSums free(nb);
  for (const auto& p : parts) {
    free.merge(p.sums);
    for (int q = 0; q < 3; ++q) hst.sensitivity_counts[q] += p.sens[q];
    hst.map_time += p.time;
    hst.total_jumps += p.jumps;
  }

  // StayInCone kernel: resampled populations in MAP time, one ratio unit per
  // replicate. Stage weights are M(X_new)/M(X_old) = e^{beta y} m(new)/m(old).
  const std::size_t particles = N / kJumpReplicates;
  const auto stage_steps = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(kJumpStage / map_step)));
  const std::size_t stages = std::max<std::size_t>(1, steps / stage_steps);
  BinSums cond(nb);
  std::vector<double> raw(nb, 0.0);
  double ess_frac = 0.0;
  for (std::size_t rep = 0; rep < kJumpReplicates; ++rep) {
    const RngStream rr = rng.split(1).split(rep);
    std::vector<Point> th(particles, u0);
    std::vector<double> a(nb, 0.0), occw(n_nodes, 0.0);
    for (std::size_t s = 0; s < stages; ++s) {
      const RngStream rs = rr.split(s);
      const auto segs = parallel_map(particles, [&](std::size_t i) {
        RngStream r = rs.split(i);
        return run_segment(th[i], stage_steps, r);
      });
      std::vector<double> w(particles, 0.0);
      double tot = 0.0;
      for (std::size_t i = 0; i < particles; ++i) {
        if (!segs[i].alive) continue;
        const double m_old = M.angular(std::fabs(signed_polar_angle(cone, th[i])));
        const double m_new = M.angular(std::fabs(signed_polar_angle(cone, segs[i].end)));
        w[i] = std::exp(M.beta() * segs[i].xi) * m_new / m_old;
        tot += w[i];
      }
      if (!(tot > 0.0)) throw EstimationError("jump rate: every particle was killed");
      ess_frac += effective_size(w) / static_cast<double>(particles);
      const double mean_w = tot / static_cast<double>(particles);
      for (std::size_t i = 0; i < particles; ++i) {
        const double wi = w[i] / mean_w;
        for (const auto& jb : segs[i].jumps) raw[jb.first] += 1.0;
        if (wi == 0.0) continue;
        for (const auto& jb : segs[i].jumps) a[jb.first] += wi;
        for (std::size_t j = 0; j < n_nodes; ++j) occw[j] += wi * segs[i].occ[j];
      }
      RngStream ur = rs.split(particles);
      const auto idx = systematic_resample(w, ur.uniform());
      for (std::size_t i = 0; i < particles; ++i) th[i] = segs[idx[i]].end;
    }
    std::vector<double> pc(nb, 0.0);
    for (std::size_t j = 0; j < n_nodes; ++j)
      for (std::size_t b = 0; b < nb; ++b) pc[b] += occw[j] * table.cond[j][b];
    for (std::size_t b = 0; b < nb; ++b) cond.add(b, a[b], pc[b]);
  }
  hst.cond_ess = ess_frac / static_cast<double>(kJumpReplicates * stages);

  double sa = 0.0, sb = 0.0;
  for (std::size_t b = 0; b < nb; ++b) {
    sa += free.a[b];
    sb += free.b[b];
  }
  const double global = sb > 0.0 ? sa / sb : 0.0;
  hst.counts = free.a;
  hst.predicted = free.b;
  hst.cond_counts = cond.a;
  hst.cond_raw = raw;
  hst.cond_predicted = cond.b;
  hst.free_ratio.assign(nb, 0.0);
  hst.free_se.assign(nb, 0.0);
  hst.cond_ratio.assign(nb, 0.0);
  hst.cond_se.assign(nb, 0.0);
  hst.free_masked.assign(nb, false);
  hst.cond_masked.assign(nb, false);
  for (std::size_t b = 0; b < nb; ++b) {
    hst.free_masked[b] = free.a[b] < kMinJumpCount;
    hst.cond_masked[b] = hst.free_masked[b] || raw[b] < kMinJumpCount;
    const auto [rf_, sf] = free.ratio(b);
    const auto [rc, sc] = cond.ratio(b);
    if (global > 0.0) {
      hst.free_ratio[b] = rf_ / global;
      hst.free_se[b] = sf / global;
    }
    if (rf_ > 0.0 && rc > 0.0) {
      hst.cond_ratio[b] = rc / rf_;
      hst.cond_se[b] = hst.cond_ratio[b] * std::hypot(sc / rc, sf / rf_);
    } else {
      hst.cond_masked[b] = true;
    }
  }
  return hst;
}

// ---------------------------------------------------------------------------

LadderSequence discrete_ladder(const PathGrid& path, std::size_t n_max) {
  if (path.positions.empty()) throw DomainError("ladder: empty path");
  LadderSequence l;
  const double r0 = path.start.norm();
  l.S.push_back(0.0);
  l.Xi.push_back(arg(path.start).vec());
  l.T.push_back(0.0);
  double level = r0 * std::numbers::e;
  for (std::size_t k = 1; k <= path.last_alive() && l.S.size() <= n_max; ++k) {
    const double r = path.positions[k].norm();
    if (r > level) {
      l.S.push_back(std::log(r / r0));
      l.Xi.push_back(arg(path.positions[k]).vec());
      l.T.push_back(path.times[k]);
      level = r * std::numbers::e;
    }
  }
  if (l.S.size() <= n_max)
    throw EstimationError("ladder: path ended after " + std::to_string(l.S.size() - 1) + " e-folds");
  return l;
}

AscLadder ascending_ladder(const MapPath& map) {
  AscLadder a;
  if (map.xi.empty()) return a;
  double best = map.xi[0];
  a.times.push_back(map.times[0]);
  a.H.push_back(best);
  a.Theta.push_back(map.theta[0]);
  for (std::size_t j = 1; j < map.xi.size(); ++j) {
    if (map.xi[j] > best) {
      best = map.xi[j];
      a.times.push_back(map.times[j]);
      a.H.push_back(best);
      a.Theta.push_back(map.theta[j]);
    }
  }
  return a;
}

LadderRun ladder_chain(const StableParams& params, const ConeSpec& cone, const HarmonicFunction& M,
                       const Point& theta0, std::size_t stages, std::size_t particles, const StepPolicy& policy,
                       const RngStream& rng) {
  params.validate();
  if (!contains(cone, theta0)) throw GeometryError("ladder: start outside the cone");
  if (particles < 2) throw DomainError("ladder: need at least 2 particles");
  const IncrementSampler inc(params);
  const double e = std::numbers::e;
  constexpr std::size_t kMaxStageSteps = 2000000;

  LadderRun run;
  run.particles = particles;
  std::vector<Point> x(particles, theta0 * (1.0 / theta0.norm()));
  for (std::size_t s = 0; s < stages; ++s) {
    const RngStream st = rng.split(s);
    struct Move {
      Point exit;
      double w = 0.0;
      std::vector<double> records;
      bool stalled = false;
    };
    const auto moves = parallel_map(particles, [&](std::size_t i) {
      RngStream r = st.split(i);
      Move mv;
      Point z = x[i];
      const double m_start = M(z);
      double rmax = 1.0;
      for (std::size_t k = 0; k < kMaxStageSteps; ++k) {
        z += inc(step_length(policy, cone, params, z), r);
        if (!contains(cone, z)) return mv;
        const double rz = z.norm();
        if (rz > rmax) {
          rmax = rz;
          mv.records.push_back(signed_polar_angle(cone, z));
        }
        if (rz > e) {
          mv.exit = z;
          mv.w = M(z) / m_start;
          return mv;
        }
      }
      mv.stalled = true;
      return mv;
    });
    std::vector<double> w(particles), xi_eta(particles, 0.0), over(particles, 0.0);
    std::vector<double> th, thw;
    double total = 0.0;
    for (std::size_t i = 0; i < particles; ++i) {
      w[i] = moves[i].w;
      total += w[i];
      run.stalled += moves[i].stalled ? 1 : 0;
      if (w[i] > 0.0) {
        xi_eta[i] = signed_polar_angle(cone, moves[i].exit);
        over[i] = std::log(moves[i].exit.norm());
        for (double v : moves[i].records) {
          th.push_back(v);
          thw.push_back(w[i]);
        }
      }
    }
    if (!(total > 0.0)) throw EstimationError("ladder: every particle was killed");
    run.xi_eta.push_back(xi_eta);
    run.xi_w.push_back(w);
    run.overshoot.push_back(over);
    run.theta_eta.push_back(std::move(th));
    run.theta_w.push_back(std::move(thw));
    RngStream ur = st.split(particles);
    const auto idx = systematic_resample(w, ur.uniform());
    for (std::size_t i = 0; i < particles; ++i) {
      const Point& p = moves[idx[i]].exit;
      x[i] = p * (1.0 / p.norm());
    }
  }
  return run;
}

namespace {

/// Stage-normalised pooled sample of stages [s0, s1); `parity` selects
/// even (0), odd (1) or all (-1) particles for Xi.
WeightedSample pool_xi(const LadderRun& run, std::size_t s0, std::size_t s1, int parity = -1, bool mirror = false) {
  WeightedSample out;
  for (std::size_t s = s0; s < s1; ++s) {
    double tot = 0.0;
    for (std::size_t i = 0; i < run.particles; ++i)
      if (parity < 0 || static_cast<int>(i % 2) == parity) tot += run.xi_w[s][i];
    if (!(tot > 0.0)) continue;
    for (std::size_t i = 0; i < run.particles; ++i) {
      if (parity >= 0 && static_cast<int>(i % 2) != parity) continue;
      if (!(run.xi_w[s][i] > 0.0)) continue;
      out.values.push_back(mirror ? -run.xi_eta[s][i] : run.xi_eta[s][i]);
      out.weights.push_back(run.xi_w[s][i] / tot);
    }
  }
  return out;
}

WeightedSample pool_theta(const LadderRun& run, std::size_t s0, std::size_t s1) {
  WeightedSample out;
  for (std::size_t s = s0; s < s1; ++s) {
    double tot = 0.0;
    for (double v : run.theta_w[s]) tot += v;
    if (!(tot > 0.0)) continue;
    for (std::size_t i = 0; i < run.theta_eta[s].size(); ++i) {
      out.values.push_back(run.theta_eta[s][i]);
      out.weights.push_back(run.theta_w[s][i] / tot);
    }
  }
  return out;
}

/// Surface-measure probability of polar angles in (lo, psi) within the cap of half-angle psi.
double cap_band_probability(int d, double lo, double psi) {
  using Gauss = boost::math::quadrature::gauss<double, 20>;
  auto f = [d](double t) { return std::pow(std::sin(t), d - 2); };
  return Gauss::integrate(f, lo, psi) / Gauss::integrate(f, 0.0, psi);
}

}  // namespace

StationarityReport ladder_stationary(const StableParams& params, const ConeSpec& cone, const HarmonicFunction& M,
                                     double eta_a, double eta_b, std::size_t burn_in, std::size_t n_samples,
                                     std::size_t particles, const StepPolicy& policy, const RngStream& rng) {
  if (n_samples < 2) throw DomainError("ladder: need at least 2 post burn-in stages");
  const Point m = meridian_direction(cone);
  const Point a = direction_at_polar_angle(cone, std::fabs(eta_a), eta_a < 0.0 ? m * -1.0 : m);
  const Point b = direction_at_polar_angle(cone, std::fabs(eta_b), eta_b < 0.0 ? m * -1.0 : m);
  const std::size_t stages = burn_in + n_samples;
  const LadderRun ra = ladder_chain(params, cone, M, a, stages, particles, policy, rng.split(0));
  const LadderRun rb = ladder_chain(params, cone, M, b, stages, particles, policy, rng.split(1));
  const std::size_t mid = burn_in + n_samples / 2;
  const double cap = 0.5 * static_cast<double>(particles);

  StationarityReport rep;
  rep.stalled = ra.stalled + rb.stalled;
  rep.xi_split = ks_with_sizes(ks_two_sample(pool_xi(ra, burn_in, mid), pool_xi(ra, mid, stages)), cap, cap);
  rep.xi_start = ks_with_sizes(ks_two_sample(pool_xi(ra, burn_in, stages), pool_xi(rb, burn_in, stages)), cap, cap);
  rep.theta_split = ks_with_sizes(ks_two_sample(pool_theta(ra, burn_in, mid), pool_theta(ra, mid, stages)), cap, cap);
  rep.theta_start =
      ks_with_sizes(ks_two_sample(pool_theta(ra, burn_in, stages), pool_theta(rb, burn_in, stages)), cap, cap);
  rep.xi_mirror = ks_with_sizes(
      ks_two_sample(pool_xi(ra, burn_in, stages, 0), pool_xi(ra, burn_in, stages, 1, true)), 0.5 * cap, 0.5 * cap);

  WeightedSample xi = pool_xi(ra, burn_in, stages);
  const WeightedSample xb = pool_xi(rb, burn_in, stages);
  xi.values.insert(xi.values.end(), xb.values.begin(), xb.values.end());
  xi.weights.insert(xi.weights.end(), xb.weights.begin(), xb.weights.end());
  WeightedSample th = pool_theta(ra, burn_in, stages);
  const WeightedSample tb = pool_theta(rb, burn_in, stages);
  th.values.insert(th.values.end(), tb.values.begin(), tb.values.end());
  th.weights.insert(th.weights.end(), tb.weights.begin(), tb.weights.end());
  rep.xi_vs_theta = ks_with_sizes(ks_two_sample(xi, th), 2.0 * cap, 2.0 * cap);

  const double psi = cone.half_angle();
  if (cone.kind() != ConeKind::Punctured) {
    const double lo = psi * 11.0 / 12.0;
    double in = 0.0, tot = 0.0;
    for (std::size_t i = 0; i < xi.size(); ++i) {
      tot += xi.weights[i];
      if (std::fabs(xi.values[i]) > lo) in += xi.weights[i];
    }
    rep.boundary_mass = in / tot;
    rep.boundary_sigma = cap_band_probability(cone.dim(), lo, psi);
    const double n = 2.0 * cap;
    rep.boundary_z =
        (rep.boundary_mass - rep.boundary_sigma) / std::sqrt(rep.boundary_sigma * (1.0 - rep.boundary_sigma) / n);
  }
  rep.xi_pooled = xi.values;
  rep.xi_pooled_w = xi.weights;
  rep.theta_pooled = th.values;
  rep.theta_pooled_w = th.weights;
  rep.theta_reweighted_w.resize(th.size());
  double tot = 0.0;
  for (std::size_t i = 0; i < th.size(); ++i) {
    const double mv = M.angular(std::fabs(th.values[i]));
    rep.theta_reweighted_w[i] = mv > 0.0 ? th.weights[i] / mv : 0.0;
    tot += rep.theta_reweighted_w[i];
  }
  if (tot > 0.0)
    for (double& v : rep.theta_reweighted_w) v /= tot;
  return rep;
}

}  // namespace conestable
