#include "symspot/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <unordered_map>

#include "symspot/errors.hpp"
#include "symspot/rng.hpp"

namespace symspot {
namespace {

double point_segment_distance(Vec2 pt, const ApproxSegment& s) {
  const Vec2 d = s.q - s.p;
  const double len2 = dot(d, d);
  double t = len2 > 0 ? dot(pt - s.p, d) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return distance(pt, s.p + t * d);
}

int orientation(Vec2 a, Vec2 b, Vec2 c) {
  const double v = cross(b - a, c - a);
  return (v > 0) - (v < 0);
}

bool segments_cross(const ApproxSegment& a, const ApproxSegment& b) {
  const int o1 = orientation(a.p, a.q, b.p);
  const int o2 = orientation(a.p, a.q, b.q);
  const int o3 = orientation(b.p, b.q, a.p);
  const int o4 = orientation(b.p, b.q, a.q);
  // Touching and collinear-overlap cases report distance 0 through the
  // endpoint distances below.
  return o1 * o2 < 0 && o3 * o4 < 0;
}

double point_line_distance(Vec2 pt, const ApproxSegment& line) {
  const Vec2 d = line.q - line.p;
  return std::abs(cross(d, pt - line.p)) / norm(d);
}

struct CellKey {
  std::int64_t x, y;
  bool operator==(const CellKey&) const = default;
};

struct CellHash {
  std::size_t operator()(const CellKey& k) const {
    return std::hash<std::int64_t>()(k.x * 0x9E3779B97F4A7C15LL ^ k.y);
  }
};

/// Uniform grid over segment bounding boxes; cell size = epsilon.
class SegmentGrid {
 public:
  SegmentGrid(std::span<const ApproxSegment> segments, double cell) : cell_(cell) {
    for (std::size_t i = 0; i < segments.size(); ++i) {
      for_cells(segments[i], 0.0, [&](CellKey k) { cells_[k].push_back(static_cast<int>(i)); });
    }
  }

  template <class F>
  void for_cells(const ApproxSegment& s, double pad, F&& f) const {
    const auto lo_x = static_cast<std::int64_t>(std::floor((std::min(s.p.x, s.q.x) - pad) / cell_));
    const auto hi_x = static_cast<std::int64_t>(std::floor((std::max(s.p.x, s.q.x) + pad) / cell_));
    const auto lo_y = static_cast<std::int64_t>(std::floor((std::min(s.p.y, s.q.y) - pad) / cell_));
    const auto hi_y = static_cast<std::int64_t>(std::floor((std::max(s.p.y, s.q.y) + pad) / cell_));
    for (auto x = lo_x; x <= hi_x; ++x)
      for (auto y = lo_y; y <= hi_y; ++y) f(CellKey{x, y});
  }

  template <class F>
  void query(const ApproxSegment& s, double pad, F&& f) const {
    for_cells(s, pad, [&](CellKey k) {
      if (auto it = cells_.find(k); it != cells_.end())
        for (int j : it->second) f(j);
    });
  }

 private:
  double cell_;
  std::unordered_map<CellKey, std::vector<int>, CellHash> cells_;
};

void add_collinear_candidates(std::span<const ApproxSegment> segs, const GraphConfig& cfg,
                              std::vector<std::vector<int>>& cand) {
  const std::size_t n = segs.size();
  std::vector<double> angle(n);
  std::vector<int> order(n);
  for (std::size_t i = 0; i < n; ++i) {
    angle[i] = line_angle(segs[i]);
    order[i] = static_cast<int>(i);
  }
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return angle[a] < angle[b] || (angle[a] == angle[b] && a < b);
  });
  const double window = degrees_to_radians(cfg.collinear_angle_tol_deg) + 1e-12;
  const auto try_pair = [&](int i, int j) {
    if (collinear(segs[i], segs[j], cfg) || collinear(segs[j], segs[i], cfg)) {
      cand[i].push_back(j);
      cand[j].push_back(i);
    }
  };
  for (std::size_t a = 0; a < n; ++a) {
    const int i = order[a];
    // Forward window in sorted angle order, wrapping around pi.
    for (std::size_t step = 1; step < n; ++step) {
      const std::size_t b = (a + step) % n;
      const int j = order[b];
      const double diff = angle[j] - angle[i] + (b < a ? std::numbers::pi : 0.0);
      if (diff > window) break;
      try_pair(i, j);
    }
  }
}

void finish_edges(DrawingGraph& graph, std::vector<std::vector<int>> cand, const GraphConfig& cfg) {
  const std::size_t n = graph.vertices.size();
  std::vector<std::vector<int>> kept(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& c = cand[i];
    std::sort(c.begin(), c.end());
    c.erase(std::unique(c.begin(), c.end()), c.end());
    if (c.size() > cfg.max_degree) {
      auto rng = SplitMix64::keyed(cfg.rng_seed, i);
      rng.shuffle(std::span<int>(c));
      c.resize(cfg.max_degree);
      std::sort(c.begin(), c.end());
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (int j : cand[i]) {
      if (std::binary_search(cand[j].begin(), cand[j].end(), static_cast<int>(i)))
        kept[i].push_back(j);
    }
  }
  graph.adjacency = Adjacency::from_neighbor_lists(std::move(kept));
  const auto& adj = graph.adjacency;
  graph.edge_features.resize(adj.num_edges());
  for (std::size_t e = 0; e < adj.num_edges(); ++e) {
    graph.edge_features[e] = edge_feature(graph.vertices[adj.source[e]].segment,
                                          graph.vertices[adj.target[e]].segment, cfg.regularity);
  }
}

DrawingGraph build_from_vertices(std::vector<GraphVertex> vertices, const GraphConfig& cfg) {
  cfg.validate();
  if (vertices.empty()) throw EmptyDrawing();
  if (vertices.size() > kMaxVertices) throw TooManyVertices(vertices.size(), kMaxVertices);
  DrawingGraph graph;
  graph.vertices = std::move(vertices);
  const std::size_t n = graph.vertices.size();
  std::vector<ApproxSegment> segs(n);
  for (std::size_t i = 0; i < n; ++i) segs[i] = graph.vertices[i].segment;

  std::vector<std::vector<int>> cand(n);
  SegmentGrid grid(segs, cfg.epsilon_mm);
  std::vector<std::size_t> stamp(n, static_cast<std::size_t>(-1));
  for (std::size_t i = 0; i < n; ++i) {
    grid.query(segs[i], cfg.epsilon_mm, [&](int j) {
      if (static_cast<std::size_t>(j) <= i || stamp[j] == i) return;
      stamp[j] = i;
      if (segment_distance(segs[i], segs[j]) <= cfg.epsilon_mm) {
        cand[i].push_back(j);
        cand[j].push_back(static_cast<int>(i));
      }
    });
  }
  add_collinear_candidates(segs, cfg, cand);
  finish_edges(graph, std::move(cand), cfg);
  return graph;
}

}  // namespace

void GraphConfig::validate() const {
  if (!(epsilon_mm > 0)) throw ConfigError("graph epsilon must be positive");
  if (max_degree < 1) throw ConfigError("graph max degree must be at least 1");
  if (collinear_angle_tol_deg < 0 || collinear_lateral_tol_mm < 0)
    throw ConfigError("collinearity tolerances must be non-negative");
}

std::optional<std::size_t> Adjacency::find(int from, int to) const {
  const auto nb = neighbors(static_cast<std::size_t>(from));
  const auto it = std::lower_bound(nb.begin(), nb.end(), to);
  if (it == nb.end() || *it != to) return std::nullopt;
  return offsets[from] + static_cast<std::size_t>(it - nb.begin());
}

Adjacency Adjacency::from_neighbor_lists(std::vector<std::vector<int>> lists) {
  Adjacency adj;
  adj.offsets.assign(lists.size() + 1, 0);
  for (std::size_t i = 0; i < lists.size(); ++i) {
    auto& l = lists[i];
    std::sort(l.begin(), l.end());
    l.erase(std::unique(l.begin(), l.end()), l.end());
    adj.offsets[i + 1] = adj.offsets[i] + l.size();
    for (int j : l) {
      if (static_cast<std::size_t>(j) == i) throw ShapeMismatch("self loop in neighbor list");
      adj.source.push_back(static_cast<int>(i));
      adj.target.push_back(j);
    }
  }
  adj.reverse.resize(adj.target.size());
  for (std::size_t e = 0; e < adj.target.size(); ++e) {
    const auto rev = adj.find(adj.target[e], adj.source[e]);
    if (!rev) throw ShapeMismatch("neighbor lists are not symmetric");
    adj.reverse[e] = *rev;
  }
  return adj;
}

std::vector<double> DrawingGraph::lengths_mm() const {
  std::vector<double> out(vertices.size());
  for (std::size_t i = 0; i < vertices.size(); ++i) out[i] = vertices[i].segment.length();
  return out;
}

std::vector<int> DrawingGraph::labels() const {
  std::vector<int> out(vertices.size());
  for (std::size_t i = 0; i < vertices.size(); ++i) out[i] = vertices[i].label;
  return out;
}

double segment_distance(const ApproxSegment& a, const ApproxSegment& b) {
  if (segments_cross(a, b)) return 0.0;
  return std::min({point_segment_distance(a.p, b), point_segment_distance(a.q, b),
                   point_segment_distance(b.p, a), point_segment_distance(b.q, a)});
}

bool collinear(const ApproxSegment& a, const ApproxSegment& b, const GraphConfig& cfg) {
  if (acute_angle_between(a, b) > degrees_to_radians(cfg.collinear_angle_tol_deg)) return false;
  return point_line_distance(b.p, a) <= cfg.collinear_lateral_tol_mm &&
         point_line_distance(b.q, a) <= cfg.collinear_lateral_tol_mm;
}

DrawingGraph build_graph(std::span<const Primitive> primitives, const GraphConfig& cfg) {
  if (primitives.empty()) throw EmptyDrawing();
  if (primitives.size() > kMaxVertices) throw TooManyVertices(primitives.size(), kMaxVertices);
  std::vector<GraphVertex> vertices(primitives.size());
  for (std::size_t i = 0; i < primitives.size(); ++i) {
    auto& v = vertices[i];
    v.segment = approximate_segment(primitives[i]);
    v.feature = vertex_feature(v.segment);
    v.label = primitives[i].label;
    v.instance = primitives[i].instance;
  }
  return build_from_vertices(std::move(vertices), cfg);
}

DrawingGraph build_graph_from_segments(std::span<const ApproxSegment> segments,
                                       const GraphConfig& cfg) {
  std::vector<GraphVertex> vertices(segments.size());
  for (std::size_t i = 0; i < segments.size(); ++i) {
    if (segments[i].p == segments[i].q) throw InvalidPrimitive("segment endpoints coincide");
    vertices[i].segment = segments[i];
    vertices[i].feature = vertex_feature(segments[i]);
  }
  return build_from_vertices(std::move(vertices), cfg);
}

GraphStats graph_stats(const DrawingGraph& graph) {
  GraphStats s;
  s.vertices = graph.num_vertices();
  s.edges = graph.num_edges();
  for (std::size_t v = 0; v < s.vertices; ++v) {
    const std::size_t d = graph.adjacency.degree(v);
    s.max_degree = std::max(s.max_degree, d);
    if (d == 0) ++s.isolated;
    if (s.degree_histogram.size() <= d) s.degree_histogram.resize(d + 1, 0);
    ++s.degree_histogram[d];
  }
  return s;
}

}  // namespace symspot
