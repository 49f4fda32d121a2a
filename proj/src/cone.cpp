#include "conestable/cone.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace conestable {

namespace {

void check_dim(const ConeSpec& cone, const Point& x) {
  if (x.dim() != cone.dim())
    throw GeometryError("dimension mismatch: cone d=" + std::to_string(cone.dim()) +
                        ", point d=" + std::to_string(x.dim()));
}

}  // namespace

ConeSpec ConeSpec::circular(const Direction& axis, double half_angle) {
  if (!(half_angle > 0.0 && half_angle < std::numbers::pi))
    throw DomainError("cone half-angle must lie in (0, pi)");
  ConeSpec c;
  c.d_ = axis.dim();
  c.kind_ = ConeKind::Circular;
  c.axis_ = axis;
  c.psi_ = half_angle;
  c.cos_psi_ = std::cos(half_angle);
  c.sin_psi_ = std::sin(half_angle);
  return c;
}

ConeSpec ConeSpec::half_space(const Direction& normal) {
  ConeSpec c;
  c.d_ = normal.dim();
  c.kind_ = ConeKind::HalfSpace;
  c.axis_ = normal;
  c.psi_ = std::numbers::pi / 2;
  c.cos_psi_ = 0.0;
  return c;
}

ConeSpec ConeSpec::punctured(int d) {
  if (d < 2 || d > kMaxDim) throw DomainError("dimension out of supported range");
  ConeSpec c;
  c.d_ = d;
  c.kind_ = ConeKind::Punctured;
  c.axis_ = Direction(Point::basis(d, d - 1));
  c.psi_ = std::numbers::pi;
  c.cos_psi_ = -1.0;
  c.sin_psi_ = 0.0;
  return c;
}

bool ConeSpec::operator==(const ConeSpec& o) const {
  return d_ == o.d_ && kind_ == o.kind_ && axis_.vec() == o.axis_.vec() && psi_ == o.psi_;
}

namespace {

// r sin(psi - eta) written without inverse trig, so that membership and the
// boundary distance agree to the last bit: positive exactly inside the cone.
double circular_margin(const ConeSpec& cone, const Point& x) {
  const Point& a = cone.axis().vec();
  const double along = dot(x, a);
  const double perp = (x - a * along).norm();
  return cone.sin_half_angle() * along - cone.cos_half_angle() * perp;
}

}  // namespace

bool contains(const ConeSpec& cone, const Point& x) {
  check_dim(cone, x);
  switch (cone.kind()) {
    case ConeKind::Punctured:
      return x.norm2() > 0.0;
    case ConeKind::HalfSpace:
      return dot(x, cone.axis().vec()) > 0.0;
    case ConeKind::Circular:
      return circular_margin(cone, x) > 0.0;
  }
  return false;
}

Direction arg(const Point& x) {
  if (!(x.norm2() > 0.0)) throw GeometryError("arg of the zero vector");
  return Direction(x);
}

Point invert(const Point& x) {
  const double r2 = x.norm2();
  if (!(r2 > 0.0)) throw GeometryError("inversion of the zero vector");
  return x * (1.0 / r2);
}

double polar_angle(const ConeSpec& cone, const Point& x) {
  check_dim(cone, x);
  const double r = x.norm();
  if (!(r > 0.0)) throw GeometryError("polar angle of the zero vector");
  double c = dot(x, cone.axis().vec()) / r;
  c = std::fmax(-1.0, std::fmin(1.0, c));
  return std::acos(c);
}

bool supports_ball_walks(const ConeSpec& cone) {
  return cone.kind() != ConeKind::Circular || cone.half_angle() <= std::numbers::pi / 2;
}

double boundary_distance(const ConeSpec& cone, const Point& x) {
  if (!contains(cone, x)) throw GeometryError("boundary_distance: point outside the cone");
  switch (cone.kind()) {
    case ConeKind::Punctured:
      return x.norm();
    case ConeKind::HalfSpace:
      return dot(x, cone.axis().vec());
    case ConeKind::Circular: {
      if (!supports_ball_walks(cone))
        throw DomainError("boundary_distance: half-angle above pi/2 is not supported; use grid simulation");
      return circular_margin(cone, x);
    }
  }
  return 0.0;
}

Point meridian_direction(const ConeSpec& cone) {
  const Point& a = cone.axis().vec();
  // Pick the coordinate axis least aligned with the cone axis.
  int k = 0;
  for (int i = 1; i < cone.dim(); ++i)
    if (std::fabs(a[i]) < std::fabs(a[k])) k = i;
  Point e = Point::basis(cone.dim(), k);
  e -= a * dot(e, a);
  return e * (1.0 / e.norm());
}

Point direction_at_polar_angle(const ConeSpec& cone, double eta, const Point& towards) {
  const Point& a = cone.axis().vec();
  Point v = towards - a * dot(towards, a);
  const double n = v.norm();
  if (!(n > 1e-14)) v = meridian_direction(cone);
  else v *= 1.0 / n;
  return a * std::cos(eta) + v * std::sin(eta);
}

Direction surface_sample(const ConeSpec& cone, RngStream& rng) {
  const int d = cone.dim();
  if (cone.kind() == ConeKind::Punctured) return Direction(rng.unit_vector(d));
  const double psi = cone.half_angle();
  // Polar angle has density proportional to sin^{d-2}(eta) on [0, psi].
  double eta = 0.0;
  if (d == 2) {
    eta = psi * rng.uniform();
  } else if (d == 3) {
    eta = std::acos(1.0 - rng.uniform() * (1.0 - std::cos(psi)));
  } else {
    const double smax = std::sin(std::fmin(psi, std::numbers::pi / 2));
    for (;;) {
      eta = psi * rng.uniform();
      if (rng.uniform() <= std::pow(std::sin(eta) / smax, d - 2)) break;
    }
  }
  return Direction(direction_at_polar_angle(cone, eta, rng.unit_vector(d)));
}

nlohmann::json to_json(const ConeSpec& cone) {
  nlohmann::json j;
  j["d"] = cone.dim();
  std::vector<double> axis(cone.axis().vec().coords().begin(), cone.axis().vec().coords().end());
  switch (cone.kind()) {
    case ConeKind::Circular:
      j["kind"] = "circular";
      break;
    case ConeKind::HalfSpace:
      j["kind"] = "halfspace";
      break;
    case ConeKind::Punctured:
      j["kind"] = "punctured";
      break;
  }
  j["axis"] = axis;
  j["half_angle"] = cone.half_angle();
  return j;
}

ConeSpec cone_from_json(const nlohmann::json& j) {
  const int d = j.at("d").get<int>();
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "punctured") return ConeSpec::punctured(d);
  Point axis = Point::basis(d, d - 1);
  if (j.contains("axis")) {
    const auto v = j.at("axis").get<std::vector<double>>();
    if (static_cast<int>(v.size()) != d) throw GeometryError("cone axis has wrong dimension");
    axis = Point(std::span<const double>(v));
  }
  if (kind == "halfspace") return ConeSpec::half_space(Direction(axis));
  if (kind == "circular") return ConeSpec::circular(Direction(axis), j.at("half_angle").get<double>());
  throw DomainError("unknown cone kind: " + kind);
}

std::string describe(const ConeSpec& cone) {
  std::ostringstream os;
  switch (cone.kind()) {
    case ConeKind::Circular:
      os << "circular(d=" << cone.dim() << ", psi=" << cone.half_angle() << ")";
      break;
    case ConeKind::HalfSpace:
      os << "halfspace(d=" << cone.dim() << ")";
      break;
    case ConeKind::Punctured:
      os << "punctured(d=" << cone.dim() << ")";
      break;
  }
  return os.str();
}

}  // namespace conestable
