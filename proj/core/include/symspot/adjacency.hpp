#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace symspot {

/// Directed edge list in compressed-row form: the outgoing edges of vertex
/// i occupy [offsets[i], offsets[i+1]) and are sorted by target. Every
/// edge-indexed array in the library (edge features, attention scores,
/// adjacency predictions) uses this order.
struct Adjacency {
  std::vector<std::size_t> offsets{0};
  std::vector<int> source;
  std::vector<int> target;
  std::vector<std::size_t> reverse;  // index of (j,i) for edge (i,j)

  std::size_t num_vertices() const { return offsets.size() - 1; }
  std::size_t num_edges() const { return target.size(); }
  std::size_t degree(std::size_t v) const { return offsets[v + 1] - offsets[v]; }
  std::span<const int> neighbors(std::size_t v) const {
    return std::span<const int>(target).subspan(offsets[v], degree(v));
  }
  std::optional<std::size_t> find(int from, int to) const;

  /// Builds the CSR layout from per-vertex neighbor lists. The lists must be
  /// symmetric; each is sorted and deduplicated here.
  static Adjacency from_neighbor_lists(std::vector<std::vector<int>> lists);
};

}  // namespace symspot
