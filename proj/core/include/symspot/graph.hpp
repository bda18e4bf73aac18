#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "symspot/adjacency.hpp"
#include "symspot/geometry.hpp"

namespace symspot {

inline constexpr std::size_t kMaxVertices = 4096;

struct GraphConfig {
  double epsilon_mm = 300.0;
  std::size_t max_degree = 30;
  double collinear_angle_tol_deg = 5.0;
  double collinear_lateral_tol_mm = 100.0;
  RegularityConfig regularity{};
  std::uint64_t rng_seed = 0;

  void validate() const;
};

struct GraphVertex {
  ApproxSegment segment;
  VertexFeature feature;
  int label = 0;
  int instance = -1;
};

/// Vertex i corresponds to primitive i of the input drawing.
struct DrawingGraph {
  std::vector<GraphVertex> vertices;
  Adjacency adjacency;
  std::vector<EdgeFeature> edge_features;  // aligned with adjacency edges

  std::size_t num_vertices() const { return vertices.size(); }
  std::size_t num_edges() const { return adjacency.num_edges(); }
  std::vector<double> lengths_mm() const;
  std::vector<int> labels() const;
};

/// Exact minimum distance between two closed segments.
double segment_distance(const ApproxSegment& a, const ApproxSegment& b);

/// Direction within the angular tolerance and both endpoints of `b` within
/// the lateral tolerance of the infinite line through `a`.
bool collinear(const ApproxSegment& a, const ApproxSegment& b, const GraphConfig& cfg);

/// Epsilon-neighborhood plus collinearity edges, capped to max_degree per
/// vertex by seeded random dropping. An edge survives only if both of its
/// endpoints kept it, so the result stays symmetric.
DrawingGraph build_graph(std::span<const Primitive> primitives, const GraphConfig& cfg);

/// Same as build_graph but from pre-approximated segments (labels default
/// to background).
DrawingGraph build_graph_from_segments(std::span<const ApproxSegment> segments,
                                       const GraphConfig& cfg);

struct GraphStats {
  std::size_t vertices = 0;
  std::size_t edges = 0;
  std::size_t max_degree = 0;
  std::size_t isolated = 0;
  std::vector<std::size_t> degree_histogram;  // index = out-degree
};

GraphStats graph_stats(const DrawingGraph& graph);

}  // namespace symspot
