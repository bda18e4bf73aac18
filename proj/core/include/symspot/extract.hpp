#pragma once

#include <span>
#include <vector>

#include "symspot/classes.hpp"
#include "symspot/graph.hpp"
#include "symspot/model.hpp"

namespace symspot {

struct Box {
  double min_x = 0, min_y = 0, max_x = 0, max_y = 0;
  double area() const { return (max_x - min_x) * (max_y - min_y); }
  bool contains(Vec2 p) const { return p.x >= min_x && p.x <= max_x && p.y >= min_y && p.y <= max_y; }
  friend bool operator==(const Box&, const Box&) = default;
};

/// A predicted or ground-truth symbol: a class plus the graph vertices
/// (primitives) it owns.
struct SymbolInstance {
  int label = 0;
  std::vector<int> members;  // ascending vertex indices, nonempty
  double confidence = 1.0;
  Box box;
  friend bool operator==(const SymbolInstance&, const SymbolInstance&) = default;
};

struct PanopticPrediction {
  std::vector<int> vertex_class;
  std::vector<SymbolInstance> instances;  // thing classes
  std::vector<SymbolInstance> stuff;      // one region per stuff class present
};

inline constexpr double kDefaultPruneThreshold = 0.7;

Box bounding_box(const DrawingGraph& graph, std::span<const int> members);

/// (Z_ij + Z_ji) / 2 for every directed edge.
std::vector<double> symmetrize_adjacency(std::span<const double> adjacency, const Adjacency& adj);

/// Vertices take the argmax class of their probability row. Edges whose
/// symmetrized probability exceeds `prune_threshold` and whose endpoints
/// share a predicted thing class are kept; connected components of the kept
/// edges become instances, with confidence equal to the mean symmetrized
/// probability over their kept edges (1 for singletons). Stuff vertices are
/// pooled into one region per class; background vertices are left out.
PanopticPrediction extract(const Matrix& semantic_probs, std::span<const double> adjacency,
                           const DrawingGraph& graph, const ClassTable& classes,
                           double prune_threshold = kDefaultPruneThreshold);

/// Instances and stuff regions from the graph's ground-truth labels.
PanopticPrediction ground_truth_panoptic(const DrawingGraph& graph, const ClassTable& classes);

}  // namespace symspot
