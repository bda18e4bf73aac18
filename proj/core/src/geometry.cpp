#include "symspot/geometry.hpp"

#include <algorithm>
#include <string>

#include "symspot/errors.hpp"

namespace symspot {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

bool finite(Vec2 v) { return std::isfinite(v.x) && std::isfinite(v.y); }

double wrap_two_pi(double a) {
  double r = std::fmod(a, kTwoPi);
  if (r < 0) r += kTwoPi;
  return r;
}

struct Validator {
  void operator()(const SegmentShape& s) const {
    if (!finite(s.start) || !finite(s.end)) throw InvalidPrimitive("segment has non-finite endpoint");
    if (s.start == s.end) throw InvalidPrimitive("segment endpoints coincide");
  }
  void operator()(const ArcShape& a) const {
    if (!finite(a.center) || !std::isfinite(a.radius) || !std::isfinite(a.start_angle) ||
        !std::isfinite(a.end_angle))
      throw InvalidPrimitive("arc has non-finite parameter");
    if (a.radius <= 0) throw InvalidPrimitive("arc radius must be positive");
    const double sweep = wrap_two_pi(a.end_angle - a.start_angle);
    if (sweep < 1e-12 || kTwoPi - sweep < 1e-12)
      throw DegeneratePrimitive("arc start and end angles coincide");
  }
  void operator()(const CircleShape& c) const {
    if (!finite(c.center) || !std::isfinite(c.radius))
      throw InvalidPrimitive("circle has non-finite parameter");
    if (c.radius <= 0) throw InvalidPrimitive("circle radius must be positive");
  }
  void operator()(const EllipseShape& e) const {
    if (!finite(e.center) || !std::isfinite(e.semi_axis_x) || !std::isfinite(e.semi_axis_y) ||
        !std::isfinite(e.rotation))
      throw InvalidPrimitive("ellipse has non-finite parameter");
    if (e.semi_axis_x <= 0 || e.semi_axis_y <= 0)
      throw InvalidPrimitive("ellipse semi-axes must be positive");
  }
};

}  // namespace

std::string_view to_string(PrimitiveKind kind) {
  switch (kind) {
    case PrimitiveKind::Segment: return "segment";
    case PrimitiveKind::Arc: return "arc";
    case PrimitiveKind::Circle: return "circle";
    case PrimitiveKind::Ellipse: return "ellipse";
  }
  return "unknown";
}

void validate(const Primitive& primitive) { std::visit(Validator{}, primitive.shape); }

ApproxSegment approximate_segment(const Primitive& primitive) {
  validate(primitive);
  ApproxSegment out;
  out.source_kind = primitive.kind();
  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, SegmentShape>) {
          out.p = s.start;
          out.q = s.end;
        } else if constexpr (std::is_same_v<T, ArcShape>) {
          out.p = s.center + s.radius * Vec2{std::cos(s.start_angle), std::sin(s.start_angle)};
          out.q = s.center + s.radius * Vec2{std::cos(s.end_angle), std::sin(s.end_angle)};
        } else if constexpr (std::is_same_v<T, CircleShape>) {
          out.p = s.center - Vec2{s.radius, 0.0};
          out.q = s.center + Vec2{s.radius, 0.0};
        } else {
          const bool x_major = s.semi_axis_x >= s.semi_axis_y;
          const double half = x_major ? s.semi_axis_x : s.semi_axis_y;
          const double dir = x_major ? s.rotation : s.rotation + std::numbers::pi / 2;
          const Vec2 axis = half * Vec2{std::cos(dir), std::sin(dir)};
          out.p = s.center - axis;
          out.q = s.center + axis;
        }
      },
      primitive.shape);
  if (out.p == out.q) throw DegeneratePrimitive("segment approximation collapsed to a point");
  return out;
}

double line_angle(const ApproxSegment& segment) {
  const Vec2 d = segment.q - segment.p;
  double a = std::atan2(d.y, d.x);
  if (a < 0) a += std::numbers::pi;
  if (a >= std::numbers::pi) a -= std::numbers::pi;
  return a;
}

double acute_angle_between(const ApproxSegment& a, const ApproxSegment& b) {
  const Vec2 da = a.q - a.p;
  const Vec2 db = b.q - b.p;
  // atan2 of |cross| and |dot| is well conditioned near 0 and pi/2.
  return std::atan2(std::abs(cross(da, db)), std::abs(dot(da, db)));
}

VertexFeature vertex_feature(const ApproxSegment& segment) {
  VertexFeature f;
  const double alpha = line_angle(segment);
  f.cos2a = std::cos(2.0 * alpha);
  f.sin2a = std::sin(2.0 * alpha);
  f.len = segment.length() / kLengthScale;
  f.type_onehot[static_cast<int>(segment.source_kind)] = 1.0;
  return f;
}

std::array<double, kVertexFeatureWidth> VertexFeature::to_array() const {
  return {cos2a, sin2a, len, type_onehot[0], type_onehot[1], type_onehot[2], type_onehot[3]};
}

EdgeFeature edge_feature(const ApproxSegment& from, const ApproxSegment& to,
                         const RegularityConfig& cfg) {
  EdgeFeature e;
  e.delta = (1.0 / kLengthScale) * (to.midpoint() - from.midpoint());
  e.angle = acute_angle_between(from, to);
  const double li = from.length();
  const double lj = to.length();
  e.ratio = li / (li + lj);
  const double tol = degrees_to_radians(cfg.angle_tol_deg);
  e.parallel = e.angle <= tol;
  e.orthogonal = !e.parallel && std::abs(e.angle - std::numbers::pi / 2) <= tol;
  const double d = std::min({distance(from.p, to.p), distance(from.p, to.q),
                             distance(from.q, to.p), distance(from.q, to.q)});
  e.shared_endpoint = d <= cfg.endpoint_tol_mm;
  return e;
}

std::array<double, kEdgeFeatureWidth> EdgeFeature::to_array() const {
  return {delta.x,
          delta.y,
          angle,
          ratio,
          parallel ? 1.0 : 0.0,
          orthogonal ? 1.0 : 0.0,
          shared_endpoint ? 1.0 : 0.0};
}

}  // namespace symspot
