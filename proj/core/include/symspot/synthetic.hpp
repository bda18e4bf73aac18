#pragma once

// Procedural floor plans: a grid of rooms bounded by double-line walls, with
// doors and windows in wall openings, furniture inside rooms and background
// annotation strokes.

#include <cstdint>
#include <filesystem>

#include "symspot/dataset.hpp"

namespace symspot {

struct SyntheticSpec {
  int num_classes = 4;  // see ClassTable::synthetic
  int rooms_x_min = 1, rooms_x_max = 2;
  int rooms_y_min = 1, rooms_y_max = 2;
  double room_min_mm = 2800.0;
  double room_max_mm = 3800.0;
  double wall_thickness_mm = 200.0;
  double opening_min_mm = 700.0;
  double opening_max_mm = 1100.0;
  int max_openings_per_wall = 2;
  double door_probability = 0.5;  // otherwise a window
  int furniture_per_room_max = 2;
  int hatch_groups_max = 2;
  bool dimension_lines = true;

  void validate() const;
};

/// Deterministic in (seed, index).
DrawingRecord generate_drawing(std::uint64_t seed, int index, const SyntheticSpec& spec);

/// A 12-primitive drawing (wall pieces, a door, a window and one
/// background stroke) with seed-jittered geometry, small enough for
/// exhaustive gradient checks.
DrawingRecord tiny_drawing(std::uint64_t seed);

/// Writes `count` records named <split>_<index>.json and <split>.json (the
/// manifest) into `out_dir`.
DatasetManifest generate_synthetic(std::uint64_t seed, int count, const SyntheticSpec& spec,
                                   const std::filesystem::path& out_dir,
                                   const std::string& split = "train");

}  // namespace symspot
