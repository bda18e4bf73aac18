#pragma once

#include <string>

#include "symspot/classes.hpp"
#include "symspot/dataset.hpp"
#include "symspot/extract.hpp"

namespace symspot {

struct RenderOptions {
  double stroke_mm = 20.0;
  /// Pixel width of the SVG viewport; height follows the block aspect.
  double width_px = 1000.0;
  /// Draw translucent boxes with class and confidence over thing instances.
  bool instance_boxes = true;
};

/// "#rrggbb" color for a class id. Background is light gray.
std::string class_color(int id, const ClassTable& classes);

/// SVG 1.1 document with y pointing up. Primitives are colored by the
/// predicted class when `prediction` is given, otherwise by their label.
std::string render_svg(const DrawingRecord& record, const ClassTable& classes,
                       const PanopticPrediction* prediction = nullptr,
                       const RenderOptions& options = {});

}  // namespace symspot
