#pragma once

// CAD primitives, their segment approximations and the per-vertex /
// per-edge geometric features consumed by the network.
//
// Coordinates are millimeters with +y pointing up. Angles are radians.

#include <array>
#include <cmath>
#include <numbers>
#include <string_view>
#include <variant>

namespace symspot {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend Vec2 operator*(Vec2 a, double s) { return {s * a.x, s * a.y}; }
  friend bool operator==(Vec2, Vec2) = default;
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }
inline double distance(Vec2 a, Vec2 b) { return norm(b - a); }
inline Vec2 rotate(Vec2 a, double theta) {
  const double c = std::cos(theta), s = std::sin(theta);
  return {c * a.x - s * a.y, s * a.x + c * a.y};
}

enum class PrimitiveKind { Segment = 0, Arc = 1, Circle = 2, Ellipse = 3 };
inline constexpr int kPrimitiveKindCount = 4;

std::string_view to_string(PrimitiveKind kind);

struct SegmentShape {
  Vec2 start;
  Vec2 end;
  friend bool operator==(const SegmentShape&, const SegmentShape&) = default;
};

/// Counter-clockwise arc from start_angle to end_angle.
struct ArcShape {
  Vec2 center;
  double radius = 0.0;
  double start_angle = 0.0;
  double end_angle = 0.0;
  friend bool operator==(const ArcShape&, const ArcShape&) = default;
};

struct CircleShape {
  Vec2 center;
  double radius = 0.0;
  friend bool operator==(const CircleShape&, const CircleShape&) = default;
};

/// semi_axis_x lies along the direction `rotation`, semi_axis_y
/// perpendicular to it.
struct EllipseShape {
  Vec2 center;
  double semi_axis_x = 0.0;
  double semi_axis_y = 0.0;
  double rotation = 0.0;
  friend bool operator==(const EllipseShape&, const EllipseShape&) = default;
};

using Shape = std::variant<SegmentShape, ArcShape, CircleShape, EllipseShape>;

/// One raw graphic element with its ground-truth labels. `instance` is -1
/// for stuff and background primitives.
struct Primitive {
  Shape shape;
  int label = 0;
  int instance = -1;

  PrimitiveKind kind() const { return static_cast<PrimitiveKind>(shape.index()); }
  friend bool operator==(const Primitive&, const Primitive&) = default;
};

/// Throws InvalidPrimitive when geometry is unusable (non-positive radius,
/// coincident endpoints, non-finite numbers) and DegeneratePrimitive for
/// zero-sweep arcs.
void validate(const Primitive& primitive);

struct ApproxSegment {
  Vec2 p;
  Vec2 q;
  PrimitiveKind source_kind = PrimitiveKind::Segment;

  Vec2 midpoint() const { return 0.5 * (p + q); }
  double length() const { return distance(p, q); }
};

/// Segment stands in for itself; arcs become their chord, circles their
/// horizontal diameter and ellipses their major axis.
ApproxSegment approximate_segment(const Primitive& primitive);

inline constexpr double kLengthScale = 1000.0;  // mm per network unit
inline constexpr int kVertexFeatureWidth = 7;
inline constexpr int kEdgeFeatureWidth = 7;

struct VertexFeature {
  double cos2a = 1.0;
  double sin2a = 0.0;
  double len = 0.0;
  std::array<double, kPrimitiveKindCount> type_onehot{};

  std::array<double, kVertexFeatureWidth> to_array() const;
};

VertexFeature vertex_feature(const ApproxSegment& segment);

struct RegularityConfig {
  double angle_tol_deg = 5.0;
  double endpoint_tol_mm = 100.0;
};

struct EdgeFeature {
  Vec2 delta;
  double angle = 0.0;  // acute angle between the two lines, [0, pi/2]
  double ratio = 0.5;
  bool parallel = false;
  bool orthogonal = false;
  bool shared_endpoint = false;

  std::array<double, kEdgeFeatureWidth> to_array() const;
};

/// Undirected line angle in [0, pi).
double line_angle(const ApproxSegment& segment);

/// Acute angle between the undirected lines of two segments.
double acute_angle_between(const ApproxSegment& a, const ApproxSegment& b);

EdgeFeature edge_feature(const ApproxSegment& from, const ApproxSegment& to,
                         const RegularityConfig& cfg = {});

inline double degrees_to_radians(double deg) { return deg * std::numbers::pi / 180.0; }

}  // namespace symspot
