#include <doctest.h>

#include <algorithm>
#include <set>

#include "support.hpp"
#include "symspot/errors.hpp"
#include "symspot/graph.hpp"

using namespace symspot;

namespace {

ApproxSegment seg(Vec2 p, Vec2 q) { return {p, q, PrimitiveKind::Segment}; }

std::set<std::pair<int, int>> edge_set(const DrawingGraph& g) {
  std::set<std::pair<int, int>> out;
  for (std::size_t e = 0; e < g.num_edges(); ++e) out.insert({g.adjacency.source[e], g.adjacency.target[e]});
  return out;
}

}  // namespace

TEST_CASE("segment distance hand cases") {
  CHECK(segment_distance(seg({0, 0}, {1000, 0}), seg({200, 200}, {900, 200})) == doctest::Approx(200));
  CHECK(segment_distance(seg({0, 0}, {10, 10}), seg({0, 10}, {10, 0})) == 0.0);
  CHECK(segment_distance(seg({0, 0}, {1, 0}), seg({3, 0}, {5, 0})) == doctest::Approx(2));
  CHECK(segment_distance(seg({0, 0}, {1, 0}), seg({1, 0}, {1, 5})) == 0.0);
}

TEST_CASE("segment distance agrees with dense sampling") {
  SplitMix64 rng(3);
  const auto cloud = testing::random_segment_cloud(rng, 80, 3000, 1500);
  for (std::size_t i = 0; i + 1 < cloud.size(); i += 2) {
    const auto& a = cloud[i];
    const auto& b = cloud[i + 1];
    const double exact = segment_distance(a, b);
    CHECK(exact == segment_distance(b, a));
    const int m = 400;
    const double spacing = std::max(a.length(), b.length()) / (m - 1);
    CHECK(std::abs(exact - testing::sampled_segment_distance(a, b, m)) <= 2 * spacing);
  }
}

TEST_CASE("collinearity") {
  const GraphConfig cfg;
  CHECK(collinear(seg({0, 0}, {1000, 0}), seg({5000, 0}, {9000, 0}), cfg));
  CHECK_FALSE(collinear(seg({0, 0}, {1000, 0}), seg({0, 500}, {1000, 500}), cfg));
  CHECK_FALSE(collinear(seg({0, 0}, {1000, 0}), seg({0, 0}, {0, 1000}), cfg));
  CHECK(collinear(seg({0, 0}, {1000, 0}), seg({5000, 90}, {6000, 90}), cfg));
}

TEST_CASE("edge construction on the reference layout") {
  const auto prims = testing::as_primitives(testing::layout_segments());
  const auto g = build_graph(prims, GraphConfig{});
  const auto nb = g.adjacency.neighbors(0);
  CHECK(std::vector<int>(nb.begin(), nb.end()) == std::vector<int>{1, 2, 3, 6});
}

TEST_CASE("distant non-collinear segments have no edges") {
  const std::vector<Primitive> prims{{SegmentShape{{0, 0}, {100, 0}}, 0, -1},
                                     {SegmentShape{{5000, 5000}, {5000, 5100}}, 0, -1}};
  const auto g = build_graph(prims, GraphConfig{});
  CHECK(g.num_edges() == 0);
  CHECK(graph_stats(g).isolated == 2);
}

TEST_CASE("degree cap on a dense cluster") {
  std::vector<Primitive> prims;
  for (int i = 0; i < 40; ++i) prims.push_back({SegmentShape{{i * 5.0, 0}, {i * 5.0 + 7, 200}}, 0, -1});
  GraphConfig cfg;
  cfg.rng_seed = 99;
  const auto g = build_graph(prims, cfg);
  for (std::size_t v = 0; v < g.num_vertices(); ++v) CHECK(g.adjacency.degree(v) <= 30);
  const auto edges = edge_set(g);
  for (const auto& [i, j] : edges) CHECK(edges.count({j, i}) == 1);
  const auto again = build_graph(prims, cfg);
  CHECK(again.adjacency.target == g.adjacency.target);
  CHECK(again.adjacency.offsets == g.adjacency.offsets);
}

TEST_CASE("reverse edges and features line up") {
  SplitMix64 rng(8);
  const auto cloud = testing::random_segment_cloud(rng, 50, 2000, 800);
  const auto g = build_graph_from_segments(cloud, GraphConfig{});
  REQUIRE(g.edge_features.size() == g.num_edges());
  for (std::size_t e = 0; e < g.num_edges(); ++e) {
    const std::size_t r = g.adjacency.reverse[e];
    CHECK(g.adjacency.source[r] == g.adjacency.target[e]);
    CHECK(g.adjacency.target[r] == g.adjacency.source[e]);
    CHECK(g.adjacency.find(g.adjacency.source[e], g.adjacency.target[e]) == e);
    CHECK(g.edge_features[e].ratio + g.edge_features[r].ratio == doctest::Approx(1.0));
    CHECK(g.adjacency.source[e] != g.adjacency.target[e]);
  }
}

TEST_CASE("vertex count limits") {
  CHECK_THROWS_AS(build_graph(std::vector<Primitive>{}, GraphConfig{}), EmptyDrawing);
  std::vector<ApproxSegment> many(kMaxVertices + 1, seg({0, 0}, {1, 0}));
  CHECK_THROWS_AS(build_graph_from_segments(many, GraphConfig{}), TooManyVertices);
}

TEST_CASE("graph config validation") {
  GraphConfig cfg;
  cfg.epsilon_mm = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.max_degree = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.collinear_lateral_tol_mm = -1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("graph stats") {
  const auto g = build_graph(testing::as_primitives(testing::layout_segments()), GraphConfig{});
  const auto st = graph_stats(g);
  CHECK(st.vertices == 7);
  CHECK(st.edges == g.num_edges());
  std::size_t total = 0;
  for (std::size_t k = 0; k < st.degree_histogram.size(); ++k) total += st.degree_histogram[k];
  CHECK(total == 7);
  CHECK(st.degree_histogram.size() == st.max_degree + 1);
}
