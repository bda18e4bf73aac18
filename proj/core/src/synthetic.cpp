#include "symspot/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "symspot/errors.hpp"
#include "symspot/rng.hpp"

namespace symspot {
namespace {

constexpr int kBackground = 0;
constexpr int kWall = 1;
constexpr int kDoor = 2;
constexpr int kWindow = 3;
constexpr int kTable = 4;
// Keeps separate symbols farther apart than the default graph radius.
constexpr double kClearance = 350.0;
constexpr double kPi = std::numbers::pi;

struct Opening {
  double start;
  double end;
};

struct Rect {
  double x0, y0, x1, y1;
  Rect grown(double d) const { return {x0 - d, y0 - d, x1 + d, y1 + d}; }
  bool overlaps(const Rect& o) const { return x0 < o.x1 && o.x0 < x1 && y0 < o.y1 && o.y0 < y1; }
};

Rect rect_of(std::initializer_list<Vec2> pts) {
  Rect r{1e300, 1e300, -1e300, -1e300};
  for (Vec2 p : pts) {
    r.x0 = std::min(r.x0, p.x);
    r.y0 = std::min(r.y0, p.y);
    r.x1 = std::max(r.x1, p.x);
    r.y1 = std::max(r.y1, p.y);
  }
  return r;
}

double wrap_angle(double a) {
  a = std::fmod(a, 2 * kPi);
  return a < 0 ? a + 2 * kPi : a;
}

class Builder {
 public:
  Builder(const SyntheticSpec& spec, SplitMix64& rng) : spec_(spec), rng_(rng) {}

  DrawingRecord build(std::string id);

 private:
  void segment(Vec2 a, Vec2 b, int label, int instance = -1) {
    record_.primitives.push_back({SegmentShape{a, b}, label, instance});
  }

  std::vector<Opening> openings_on_span(double a, double b);
  void grid_line(Vec2 from, Vec2 to, const std::vector<double>& junctions);
  void door(Vec2 origin, Vec2 u, Vec2 n, const Opening& o);
  void window(Vec2 origin, Vec2 u, Vec2 n, const Opening& o);
  bool reserve(const Rect& r);
  void furniture(const Rect& room);
  void table(const Rect& room, int instance);
  void fixture(const Rect& room, int label, int instance);
  void hatch(const Rect& room);
  void dimension(Vec2 from, Vec2 to, Vec2 offset, const std::vector<double>& ticks);

  const SyntheticSpec& spec_;
  SplitMix64& rng_;
  DrawingRecord record_;
  std::vector<Rect> occupied_;
  int instance_ = 0;
};

std::vector<Opening> Builder::openings_on_span(double a, double b) {
  const double margin = spec_.wall_thickness_mm / 2 + 250.0;
  const int wanted = static_cast<int>(rng_.below(static_cast<std::uint64_t>(spec_.max_openings_per_wall) + 1));
  std::vector<Opening> out;
  double cursor = a + margin;
  for (int k = 0; k < wanted; ++k) {
    const double width = rng_.uniform(spec_.opening_min_mm, spec_.opening_max_mm);
    const double slack = (b - margin) - cursor - width;
    if (slack < 0) break;
    const double start = cursor + rng_.uniform(0.0, slack / static_cast<double>(wanted - k));
    out.push_back({start, start + width});
    cursor = start + width + 600.0;
  }
  return out;
}

// One straight wall through the grid. `junctions` are the distances along
// the line where crossing walls meet; openings stay clear of them.
void Builder::grid_line(Vec2 from, Vec2 to, const std::vector<double>& junctions) {
  const Vec2 u = (1.0 / distance(from, to)) * (to - from);
  const Vec2 n{-u.y, u.x};
  const double half = spec_.wall_thickness_mm / 2;
  std::vector<Opening> openings;
  for (std::size_t k = 0; k + 1 < junctions.size(); ++k) {
    const auto span = openings_on_span(junctions[k], junctions[k + 1]);
    openings.insert(openings.end(), span.begin(), span.end());
  }
  const auto at = [&](double s, double offset) { return from + s * u + offset * n; };
  for (double offset : {-half, half}) {
    double cursor = junctions.front();
    for (const auto& o : openings) {
      segment(at(cursor, offset), at(o.start, offset), kWall);
      cursor = o.end;
    }
    segment(at(cursor, offset), at(junctions.back(), offset), kWall);
  }
  for (const auto& o : openings) {
    segment(at(o.start, -half), at(o.start, half), kWall);
    segment(at(o.end, -half), at(o.end, half), kWall);
    if (rng_.chance(spec_.door_probability))
      door(from, u, n, o);
    else
      window(from, u, n, o);
  }
}

void Builder::door(Vec2 origin, Vec2 u, Vec2 n, const Opening& o) {
  const int inst = instance_++;
  const double w = o.end - o.start;
  const double side = rng_.chance(0.5) ? 1.0 : -1.0;
  const bool hinge_at_start = rng_.chance(0.5);
  const Vec2 face = origin + (side * spec_.wall_thickness_mm / 2) * n;
  const Vec2 hinge = face + (hinge_at_start ? o.start : o.end) * u;
  const Vec2 latch = face + (hinge_at_start ? o.end : o.start) * u;
  const Vec2 leaf_end = hinge + (side * w) * n;
  segment(hinge, leaf_end, kDoor, inst);
  segment(face + o.start * u, face + o.end * u, kDoor, inst);
  const double a1 = wrap_angle(std::atan2(latch.y - hinge.y, latch.x - hinge.x));
  const double a2 = wrap_angle(std::atan2(leaf_end.y - hinge.y, leaf_end.x - hinge.x));
  // Quarter swing, stored counter-clockwise.
  const bool ccw = std::abs(wrap_angle(a2 - a1) - kPi / 2) < 1e-6;
  record_.primitives.push_back({ArcShape{hinge, w, ccw ? a1 : a2, ccw ? a2 : a1}, kDoor, inst});
  occupied_.push_back(rect_of({hinge, latch, leaf_end, latch + (side * w) * n}));
}

void Builder::window(Vec2 origin, Vec2 u, Vec2 n, const Opening& o) {
  const int inst = instance_++;
  const double t = spec_.wall_thickness_mm;
  for (double f : {-0.5, -1.0 / 6.0, 1.0 / 6.0, 0.5})
    segment(origin + o.start * u + (f * t) * n, origin + o.end * u + (f * t) * n, kWindow, inst);
}

bool Builder::reserve(const Rect& r) {
  const Rect g = r.grown(kClearance);
  for (const auto& o : occupied_)
    if (g.overlaps(o)) return false;
  occupied_.push_back(r);
  return true;
}

void Builder::table(const Rect& room, int instance) {
  for (int attempt = 0; attempt < 20; ++attempt) {
    double w = rng_.uniform(800.0, 1400.0), h = rng_.uniform(600.0, 900.0);
    if (rng_.chance(0.5)) std::swap(w, h);
    if (room.x1 - room.x0 < w || room.y1 - room.y0 < h) continue;
    const double x = rng_.uniform(room.x0, room.x1 - w), y = rng_.uniform(room.y0, room.y1 - h);
    if (!reserve({x, y, x + w, y + h})) continue;
    const Vec2 c[4] = {{x, y}, {x + w, y}, {x + w, y + h}, {x, y + h}};
    for (int k = 0; k < 4; ++k) segment(c[k], c[(k + 1) % 4], kTable, instance);
    const double inset = 60.0;
    for (Vec2 leg : {Vec2{x + inset, y + inset}, Vec2{x + w - inset, y + inset}, Vec2{x + w - inset, y + h - inset},
                     Vec2{x + inset, y + h - inset}})
      record_.primitives.push_back({CircleShape{leg, 25.0}, kTable, instance});
    return;
  }
}

void Builder::fixture(const Rect& room, int label, int instance) {
  for (int attempt = 0; attempt < 20; ++attempt) {
    const double r = rng_.uniform(200.0, 350.0);
    if (room.x1 - room.x0 < 2 * r || room.y1 - room.y0 < 2 * r) continue;
    const Vec2 c{rng_.uniform(room.x0 + r, room.x1 - r), rng_.uniform(room.y0 + r, room.y1 - r)};
    if (!reserve({c.x - r, c.y - r, c.x + r, c.y + r})) continue;
    const int sides = 3 + label % 4;
    const double phase = rng_.uniform(0.0, 2 * kPi);
    for (int k = 0; k < sides; ++k) {
      const double a = phase + 2 * kPi * k / sides, b = phase + 2 * kPi * (k + 1) / sides;
      segment(c + r * Vec2{std::cos(a), std::sin(a)}, c + r * Vec2{std::cos(b), std::sin(b)}, label, instance);
    }
    if (label % 2 == 1)
      record_.primitives.push_back({CircleShape{c, 0.4 * r}, label, instance});
    else
      record_.primitives.push_back({EllipseShape{c, 0.45 * r, 0.25 * r, rng_.uniform(0.0, kPi)}, label, instance});
    return;
  }
}

void Builder::furniture(const Rect& room) {
  const int furniture_classes = spec_.num_classes - kTable;
  if (furniture_classes <= 0) return;
  const int count = static_cast<int>(rng_.below(static_cast<std::uint64_t>(spec_.furniture_per_room_max) + 1));
  for (int k = 0; k < count; ++k) {
    const int label = kTable + static_cast<int>(rng_.below(static_cast<std::uint64_t>(furniture_classes)));
    const std::size_t before = record_.primitives.size();
    if (label == kTable)
      table(room, instance_);
    else
      fixture(room, label, instance_);
    if (record_.primitives.size() > before) ++instance_;
  }
}

void Builder::hatch(const Rect& room) {
  for (int attempt = 0; attempt < 20; ++attempt) {
    const int strokes = 3 + static_cast<int>(rng_.below(4));
    const double len = rng_.uniform(200.0, 350.0), gap = rng_.uniform(80.0, 120.0);
    const Vec2 d = (len / std::sqrt(2.0)) * Vec2{1.0, 1.0};
    const double w = d.x + gap * strokes, h = d.y;
    if (room.x1 - room.x0 < w || room.y1 - room.y0 < h) continue;
    const double x = rng_.uniform(room.x0, room.x1 - w), y = rng_.uniform(room.y0, room.y1 - h);
    if (!reserve({x, y, x + w, y + h})) continue;
    for (int k = 0; k < strokes; ++k) {
      const Vec2 a{x + gap * k, y};
      segment(a, a + d, kBackground);
    }
    return;
  }
}

void Builder::dimension(Vec2 from, Vec2 to, Vec2 offset, const std::vector<double>& ticks) {
  const Vec2 u = (1.0 / distance(from, to)) * (to - from);
  segment(from + offset, to + offset, kBackground);
  const Vec2 diag = 75.0 * (u + Vec2{-u.y, u.x});
  for (double s : ticks) {
    const Vec2 p = from + offset + s * u;
    segment(p - diag, p + diag, kBackground);
  }
}

DrawingRecord Builder::build(std::string id) {
  record_ = {};
  record_.id = std::move(id);
  const int nx = spec_.rooms_x_min + static_cast<int>(rng_.below(spec_.rooms_x_max - spec_.rooms_x_min + 1));
  const int ny = spec_.rooms_y_min + static_cast<int>(rng_.below(spec_.rooms_y_max - spec_.rooms_y_min + 1));
  std::vector<double> xs{0.0}, ys{0.0};
  for (int i = 0; i < nx; ++i) xs.push_back(xs.back() + rng_.uniform(spec_.room_min_mm, spec_.room_max_mm));
  for (int j = 0; j < ny; ++j) ys.push_back(ys.back() + rng_.uniform(spec_.room_min_mm, spec_.room_max_mm));
  const double width = xs.back(), height = ys.back();
  const double margin = 1200.0;
  const Vec2 origin{rng_.uniform(margin, std::max(margin, kDefaultBlockExtent - margin - width)),
                    rng_.uniform(margin, std::max(margin, kDefaultBlockExtent - margin - height))};
  record_.block_extent = {std::max(kDefaultBlockExtent, origin.x + width + margin),
                          std::max(kDefaultBlockExtent, origin.y + height + margin)};

  for (double y : ys) grid_line(origin + Vec2{0, y}, origin + Vec2{width, y}, xs);
  for (double x : xs) grid_line(origin + Vec2{x, 0}, origin + Vec2{x, height}, ys);

  const double inner = spec_.wall_thickness_mm / 2 + 100.0;
  std::vector<Rect> rooms;
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < ny; ++j)
      rooms.push_back({origin.x + xs[i] + inner, origin.y + ys[j] + inner, origin.x + xs[i + 1] - inner,
                       origin.y + ys[j + 1] - inner});
  for (const auto& room : rooms) furniture(room);
  const int hatches = static_cast<int>(rng_.below(static_cast<std::uint64_t>(spec_.hatch_groups_max) + 1));
  for (int k = 0; k < hatches; ++k) hatch(rooms[rng_.below(rooms.size())]);
  if (spec_.dimension_lines) {
    dimension(origin, origin + Vec2{width, 0}, Vec2{0, -700.0}, xs);
    dimension(origin, origin + Vec2{0, height}, Vec2{-700.0, 0}, ys);
  }
  return std::move(record_);
}

}  // namespace

void SyntheticSpec::validate() const {
  if (num_classes < 4 || num_classes > 36) throw ConfigError("synthetic class count must be in [4, 36]");
  if (rooms_x_min < 1 || rooms_x_max < rooms_x_min || rooms_y_min < 1 || rooms_y_max < rooms_y_min)
    throw ConfigError("room counts must satisfy 1 <= min <= max");
  if (!(room_min_mm > 0) || room_max_mm < room_min_mm) throw ConfigError("room size range is invalid");
  if (!(wall_thickness_mm > 0)) throw ConfigError("wall thickness must be positive");
  if (!(opening_min_mm > 0) || opening_max_mm < opening_min_mm) throw ConfigError("opening width range is invalid");
  if (max_openings_per_wall < 0 || furniture_per_room_max < 0 || hatch_groups_max < 0)
    throw ConfigError("per-room counts must be non-negative");
  if (!(door_probability >= 0 && door_probability <= 1)) throw ConfigError("door probability must lie in [0, 1]");
}

DrawingRecord generate_drawing(std::uint64_t seed, int index, const SyntheticSpec& spec) {
  spec.validate();
  SplitMix64 rng = SplitMix64::keyed(seed, static_cast<std::uint64_t>(index));
  char id[64];
  std::snprintf(id, sizeof id, "synth-%llu-%04d", static_cast<unsigned long long>(seed), index);
  return Builder(spec, rng).build(id);
}

DatasetManifest generate_synthetic(std::uint64_t seed, int count, const SyntheticSpec& spec,
                                   const std::filesystem::path& out_dir, const std::string& split) {
  spec.validate();
  if (count < 0) throw ConfigError("drawing count must be non-negative");
  DatasetManifest manifest;
  manifest.split = split;
  manifest.classes = ClassTable::synthetic(spec.num_classes);
  for (int i = 0; i < count; ++i) {
    char name[64];
    std::snprintf(name, sizeof name, "%s_%04d.json", split.c_str(), i);
    save_record(generate_drawing(seed, i, spec), out_dir / name);
    manifest.records.push_back(name);
  }
  save_manifest(manifest, out_dir / (split + ".json"));
  return manifest;
}

}  // namespace symspot

namespace symspot {

DrawingRecord tiny_drawing(std::uint64_t seed) {
  SplitMix64 rng = SplitMix64::keyed(seed, 0x7e57ULL);
  const auto j = [&](double v) { return v + rng.uniform(-40.0, 40.0); };
  DrawingRecord r;
  r.id = "tiny-" + std::to_string(seed);
  r.block_extent = {4000.0, 3000.0};
  const double t = 200.0;
  const double y = j(1000.0);
  const double door0 = j(900.0), door1 = door0 + j(900.0);
  const double win0 = door1 + j(700.0), win1 = win0 + j(1000.0);
  const auto seg = [&](Vec2 a, Vec2 b, int label, int inst = -1) {
    r.primitives.push_back({SegmentShape{a, b}, label, inst});
  };
  // Wall faces left of the door and right of the window.
  seg({200.0, y}, {door0, y}, kWall);
  seg({200.0, y + t}, {door0, y + t}, kWall);
  seg({win1, y}, {3800.0, y}, kWall);
  seg({win1, y + t}, {3800.0, y + t}, kWall);
  // Door at [door0, door1] swinging up from the inner face.
  const double w = door1 - door0;
  const Vec2 hinge{door0, y + t};
  seg(hinge, hinge + Vec2{0.0, w}, kDoor, 0);
  seg(hinge, hinge + Vec2{w, 0.0}, kDoor, 0);
  r.primitives.push_back({ArcShape{hinge, w, 0.0, kPi / 2}, kDoor, 0});
  // Window at [win0, win1].
  for (double f : {0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0}) seg({win0, y + f * t}, {win1, y + f * t}, kWindow, 1);
  // A dimension stroke below the wall.
  seg({j(1500.0), y - 250.0}, {j(2500.0), y - 250.0}, kBackground);
  return r;
}

}  // namespace symspot
