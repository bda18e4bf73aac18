#include "symspot/extract.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <numeric>

#include "symspot/errors.hpp"

namespace symspot {
namespace {

class UnionFind {
 public:
  explicit UnionFind(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }

  int find(int v) {
    int root = v;
    while (parent_[root] != root) root = parent_[root];
    while (parent_[v] != root) {
      const int next = parent_[v];
      parent_[v] = root;
      v = next;
    }
    return root;
  }

  // Smaller index becomes the root so component order is stable.
  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (b < a) std::swap(a, b);
    parent_[b] = a;
  }

 private:
  std::vector<int> parent_;
};

std::vector<SymbolInstance> stuff_regions(const DrawingGraph& graph, const std::vector<int>& cls,
                                          const ClassTable& classes) {
  std::map<int, std::vector<int>> by_class;
  for (std::size_t i = 0; i < cls.size(); ++i)
    if (classes.is_stuff(cls[i])) by_class[cls[i]].push_back(static_cast<int>(i));
  std::vector<SymbolInstance> out;
  for (auto& [label, members] : by_class) {
    SymbolInstance s;
    s.label = label;
    s.box = bounding_box(graph, members);
    s.members = std::move(members);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

Box bounding_box(const DrawingGraph& graph, std::span<const int> members) {
  Box b{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
        -std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (int m : members) {
    const auto& s = graph.vertices.at(static_cast<std::size_t>(m)).segment;
    for (Vec2 p : {s.p, s.q}) {
      b.min_x = std::min(b.min_x, p.x);
      b.min_y = std::min(b.min_y, p.y);
      b.max_x = std::max(b.max_x, p.x);
      b.max_y = std::max(b.max_y, p.y);
    }
  }
  return b;
}

std::vector<double> symmetrize_adjacency(std::span<const double> adjacency, const Adjacency& adj) {
  if (adjacency.size() != adj.num_edges())
    throw MismatchedEdgeLists("adjacency prediction is not aligned with the edge list");
  std::vector<double> out(adjacency.size());
  for (std::size_t e = 0; e < adjacency.size(); ++e)
    out[e] = 0.5 * (adjacency[e] + adjacency[adj.reverse[e]]);
  return out;
}

PanopticPrediction extract(const Matrix& semantic_probs, std::span<const double> adjacency,
                           const DrawingGraph& graph, const ClassTable& classes,
                           double prune_threshold) {
  const std::size_t n = graph.num_vertices();
  if (static_cast<std::size_t>(semantic_probs.rows()) != n)
    throw ShapeMismatch("semantic probabilities do not match the vertex count");
  if (semantic_probs.cols() != classes.size())
    throw ShapeMismatch("semantic probabilities do not match the class table");
  const auto& adj = graph.adjacency;
  const std::vector<double> zbar = symmetrize_adjacency(adjacency, adj);

  PanopticPrediction out;
  out.vertex_class.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    Eigen::Index best = 0;
    semantic_probs.row(static_cast<Eigen::Index>(i)).maxCoeff(&best);
    out.vertex_class[i] = static_cast<int>(best);
  }
  const auto& cls = out.vertex_class;

  UnionFind uf(n);
  for (std::size_t e = 0; e < adj.num_edges(); ++e) {
    const int i = adj.source[e], j = adj.target[e];
    if (i < j && zbar[e] > prune_threshold && cls[i] == cls[j] && classes.is_thing(cls[i]))
      uf.unite(i, j);
  }
  std::map<int, std::size_t> slot;  // root -> instance index
  for (std::size_t i = 0; i < n; ++i) {
    if (!classes.is_thing(cls[i])) continue;
    const int root = uf.find(static_cast<int>(i));
    auto [it, inserted] = slot.try_emplace(root, out.instances.size());
    if (inserted) out.instances.push_back(SymbolInstance{cls[i], {}, 1.0, {}});
    out.instances[it->second].members.push_back(static_cast<int>(i));
  }
  std::vector<double> conf_sum(out.instances.size(), 0.0);
  std::vector<int> conf_count(out.instances.size(), 0);
  for (std::size_t e = 0; e < adj.num_edges(); ++e) {
    const int i = adj.source[e], j = adj.target[e];
    if (i < j && zbar[e] > prune_threshold && cls[i] == cls[j] && classes.is_thing(cls[i])) {
      const std::size_t k = slot.at(uf.find(i));
      conf_sum[k] += zbar[e];
      ++conf_count[k];
    }
  }
  for (std::size_t k = 0; k < out.instances.size(); ++k) {
    auto& inst = out.instances[k];
    inst.confidence = conf_count[k] > 0 ? conf_sum[k] / conf_count[k] : 1.0;
    inst.box = bounding_box(graph, inst.members);
  }
  out.stuff = stuff_regions(graph, cls, classes);
  return out;
}

PanopticPrediction ground_truth_panoptic(const DrawingGraph& graph, const ClassTable& classes) {
  PanopticPrediction out;
  out.vertex_class = graph.labels();
  std::map<std::pair<int, int>, std::vector<int>> groups;
  for (std::size_t i = 0; i < graph.num_vertices(); ++i) {
    const auto& v = graph.vertices[i];
    if (!classes.contains(v.label))
      throw LabelOutOfRange("vertex " + std::to_string(i) + " has label " + std::to_string(v.label));
    if (classes.is_thing(v.label)) groups[{v.instance, v.label}].push_back(static_cast<int>(i));
  }
  for (auto& [key, members] : groups) {
    SymbolInstance s;
    s.label = key.second;
    s.box = bounding_box(graph, members);
    s.members = std::move(members);
    out.instances.push_back(std::move(s));
  }
  std::sort(out.instances.begin(), out.instances.end(),
            [](const SymbolInstance& a, const SymbolInstance& b) { return a.members[0] < b.members[0]; });
  out.stuff = stuff_regions(graph, out.vertex_class, classes);
  return out;
}

}  // namespace symspot
