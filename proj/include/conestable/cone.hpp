#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "conestable/geometry.hpp"
#include "conestable/rng.hpp"

namespace conestable {

enum class ConeKind { Circular, HalfSpace, Punctured };

/// Cone Gamma = {x != 0 : arg(x) in Omega} with apex at the origin.
///
/// Omega is either a spherical cap {theta : angle(theta, axis) < half_angle},
/// an open hemisphere (half-space, stored as a cap of half-angle pi/2), or the
/// whole sphere (punctured space). The axis is used as the reference
/// direction by every angular grid in the library; for the punctured space it
/// defaults to e_d.
class ConeSpec {
 public:
  static ConeSpec circular(const Direction& axis, double half_angle);
  static ConeSpec half_space(const Direction& normal);
  static ConeSpec punctured(int d);

  int dim() const { return d_; }
  ConeKind kind() const { return kind_; }
  const Direction& axis() const { return axis_; }
  /// Half-angle of the cap; pi/2 for the half-space and pi for the punctured space.
  double half_angle() const { return psi_; }
  double cos_half_angle() const { return cos_psi_; }
  double sin_half_angle() const { return sin_psi_; }

  bool operator==(const ConeSpec& o) const;

 private:
  ConeSpec() = default;
  int d_ = 0;
  ConeKind kind_ = ConeKind::Punctured;
  Direction axis_;
  double psi_ = 0.0;
  double cos_psi_ = 0.0;
  double sin_psi_ = 1.0;
};

/// x != 0 and arg(x) in Omega. Throws GeometryError on a dimension mismatch.
bool contains(const ConeSpec& cone, const Point& x);

/// x/|x|. Throws GeometryError for x = 0.
Direction arg(const Point& x);

/// Sphere inversion Kx = x/|x|^2.
Point invert(const Point& x);

/// Angle between x and the cone axis, in [0, pi].
double polar_angle(const ConeSpec& cone, const Point& x);

/// Radius of the largest open ball centred at x inside Gamma.
///
/// Requires contains(cone, x). Circular cones are supported for half-angles
/// up to pi/2 only; wider apertures raise DomainError so the caller can fall
/// back to grid simulation.
double boundary_distance(const ConeSpec& cone, const Point& x);

/// True when boundary_distance is available for this cone.
bool supports_ball_walks(const ConeSpec& cone);

/// Direction distributed as the normalised surface measure restricted to Omega.
Direction surface_sample(const ConeSpec& cone, RngStream& rng);

/// Point on the sphere at polar angle `eta` from the axis, rotated towards the
/// (normalised) component of `towards` orthogonal to the axis.
Point direction_at_polar_angle(const ConeSpec& cone, double eta, const Point& towards);

/// Default reference direction orthogonal to the axis (used to lay out
/// angular grids in a fixed meridian plane).
Point meridian_direction(const ConeSpec& cone);

nlohmann::json to_json(const ConeSpec& cone);
ConeSpec cone_from_json(const nlohmann::json& j);

std::string describe(const ConeSpec& cone);

}  // namespace conestable
