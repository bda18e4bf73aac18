#include <doctest.h>

#include <map>
#include <set>

#include "support.hpp"
#include "symspot/errors.hpp"
#include "symspot/synthetic.hpp"

using namespace symspot;

namespace {

// Instances keyed by (label, instance id) with their primitive indices.
std::map<std::pair<int, int>, std::vector<int>> instances_of(const DrawingRecord& rec) {
  std::map<std::pair<int, int>, std::vector<int>> out;
  for (std::size_t i = 0; i < rec.primitives.size(); ++i)
    if (rec.primitives[i].instance >= 0)
      out[{rec.primitives[i].label, rec.primitives[i].instance}].push_back(static_cast<int>(i));
  return out;
}

bool connected_within(const DrawingGraph& g, const std::vector<int>& members) {
  const std::set<int> inside(members.begin(), members.end());
  std::set<int> seen{members.front()};
  std::vector<int> stack{members.front()};
  while (!stack.empty()) {
    const int v = stack.back();
    stack.pop_back();
    for (int u : g.adjacency.neighbors(static_cast<std::size_t>(v)))
      if (inside.count(u) && seen.insert(u).second) stack.push_back(u);
  }
  return seen.size() == inside.size();
}

}  // namespace

TEST_CASE("generation is deterministic per seed and index") {
  const SyntheticSpec spec;
  CHECK(generate_drawing(4, 1, spec) == generate_drawing(4, 1, spec));
  CHECK_FALSE(generate_drawing(4, 1, spec) == generate_drawing(4, 2, spec));
  CHECK_FALSE(generate_drawing(4, 1, spec) == generate_drawing(5, 1, spec));
  CHECK(tiny_drawing(3) == tiny_drawing(3));
}

TEST_CASE("generated labels are consistent") {
  SyntheticSpec spec;
  spec.num_classes = 9;
  const auto classes = ClassTable::synthetic(9);
  for (int i = 0; i < 30; ++i) {
    const auto rec = generate_drawing(12, i, spec);
    CHECK(rec.out_of_extent().empty());
    for (const auto& p : rec.primitives) {
      CHECK(classes.contains(p.label));
      CHECK((p.instance >= 0) == classes.is_thing(p.label));
      CHECK_NOTHROW(validate(p));
    }
  }
}

TEST_CASE("every generated instance is connected in the graph") {
  SyntheticSpec spec;
  spec.num_classes = 8;
  for (int i = 0; i < 40; ++i) {
    const auto rec = generate_drawing(21, i, spec);
    GraphConfig gc;
    gc.max_degree = rec.primitives.size();
    const auto g = build_graph(rec.primitives, gc);
    for (const auto& [key, members] : instances_of(rec)) CHECK(connected_within(g, members));
  }
}

TEST_CASE("class proportions follow the generator settings") {
  SyntheticSpec spec;
  spec.num_classes = 8;
  std::map<int, double> counts;
  for (int i = 0; i < 1000; ++i)
    for (const auto& [key, members] : instances_of(generate_drawing(77, i, spec))) counts[key.first] += 1;

  // Openings: door with probability door_probability.
  const double openings = counts[2] + counts[3];
  const double expected_doors = openings * spec.door_probability;
  const double chi_openings = (counts[2] - expected_doors) * (counts[2] - expected_doors) / expected_doors +
                              (counts[3] - (openings - expected_doors)) * (counts[3] - (openings - expected_doors)) /
                                  (openings - expected_doors);
  CHECK(chi_openings < 10.83);  // df 1, p = 0.001

  // Furniture classes are uniform.
  double furniture = 0;
  for (int c = 4; c < 8; ++c) furniture += counts[c];
  double chi = 0;
  for (int c = 4; c < 8; ++c) chi += (counts[c] - furniture / 4) * (counts[c] - furniture / 4) / (furniture / 4);
  CHECK(chi < 16.27);  // df 3, p = 0.001
  CHECK(furniture > 500);
}

TEST_CASE("tiny drawing") {
  const auto rec = tiny_drawing(1);
  CHECK(rec.primitives.size() == 12);
  const auto g = build_graph(rec.primitives, GraphConfig{});
  CHECK(graph_stats(g).isolated == 0);
}

TEST_CASE("generator settings validation") {
  SyntheticSpec spec;
  spec.num_classes = 3;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec = {};
  spec.room_min_mm = 5000;
  spec.room_max_mm = 4000;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec = {};
  spec.door_probability = 1.5;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
}
