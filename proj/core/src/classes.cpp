#include "symspot/classes.hpp"

#include <array>

#include "symspot/errors.hpp"

namespace symspot {

std::string_view to_string(ClassKind kind) {
  switch (kind) {
    case ClassKind::Background: return "background";
    case ClassKind::Thing: return "thing";
    case ClassKind::Stuff: return "stuff";
  }
  return "unknown";
}

ClassKind class_kind_from_string(std::string_view s) {
  if (s == "background") return ClassKind::Background;
  if (s == "thing") return ClassKind::Thing;
  if (s == "stuff") return ClassKind::Stuff;
  throw ParseError("unknown class kind '" + std::string(s) + "'");
}

ClassTable::ClassTable(std::vector<ClassInfo> classes) : classes_(std::move(classes)) {
  int backgrounds = 0;
  for (std::size_t i = 0; i < classes_.size(); ++i) {
    if (classes_[i].id != static_cast<int>(i))
      throw ConfigError("class ids must be dense from 0; entry " + std::to_string(i) + " has id " +
                        std::to_string(classes_[i].id));
    if (classes_[i].kind == ClassKind::Background) {
      ++backgrounds;
      background_ = static_cast<int>(i);
    }
  }
  if (backgrounds != 1) throw ConfigError("class table needs exactly one background class");
}

ClassTable ClassTable::floorplan() {
  static constexpr std::array<const char*, 30> kThings = {
      "single door",    "double door",  "sliding door",  "folding door",  "revolving door",
      "rolling door",   "window",       "bay window",    "blind window",  "opening symbol",
      "sofa",           "bed",          "chair",         "table",         "TV cabinet",
      "wardrobe",       "cabinet",      "gas stove",     "sink",          "refrigerator",
      "air conditioner", "bath",        "bath tub",      "washing machine", "squat toilet",
      "urinal",         "toilet",       "stairs",        "elevator",      "escalator"};
  static constexpr std::array<const char*, 5> kStuff = {"row chairs", "parking spot", "wall",
                                                        "curtain wall", "railing"};
  std::vector<ClassInfo> c;
  c.push_back({0, "background", ClassKind::Background});
  for (const char* n : kThings) c.push_back({static_cast<int>(c.size()), n, ClassKind::Thing});
  for (const char* n : kStuff) c.push_back({static_cast<int>(c.size()), n, ClassKind::Stuff});
  return ClassTable(std::move(c));
}

ClassTable ClassTable::synthetic(int count) {
  if (count < 4 || count > 36) throw ConfigError("synthetic class count must be in [4, 36]");
  std::vector<ClassInfo> c = {{0, "background", ClassKind::Background},
                              {1, "wall", ClassKind::Stuff},
                              {2, "door", ClassKind::Thing},
                              {3, "window", ClassKind::Thing}};
  if (count > 4) c.push_back({4, "table", ClassKind::Thing});
  while (static_cast<int>(c.size()) < count) {
    const int id = static_cast<int>(c.size());
    c.push_back({id, "fixture " + std::to_string(id - 4), ClassKind::Thing});
  }
  return ClassTable(std::move(c));
}

int ClassTable::find(std::string_view name) const {
  for (const auto& c : classes_)
    if (c.name == name) return c.id;
  return -1;
}

}  // namespace symspot
