#include "symspot/render.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>

namespace symspot {
namespace {

std::string hex(double r, double g, double b) {
  char buf[8];
  const auto c = [](double v) { return static_cast<int>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); };
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", c(r), c(g), c(b));
  return buf;
}

std::string hsl(double h, double s, double l) {
  const double c = (1 - std::abs(2 * l - 1)) * s;
  const double hp = std::fmod(h, 360.0) / 60.0;
  const double x = c * (1 - std::abs(std::fmod(hp, 2.0) - 1));
  double r = 0, g = 0, b = 0;
  if (hp < 1) r = c, g = x;
  else if (hp < 2) r = x, g = c;
  else if (hp < 3) g = c, b = x;
  else if (hp < 4) g = x, b = c;
  else if (hp < 5) r = x, b = c;
  else r = c, b = x;
  const double m = l - c / 2;
  return hex(r + m, g + m, b + m);
}

std::string escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

// Writes numbers with enough digits for drafting units without noise.
std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  std::string s = buf;
  while (!s.empty() && s.back() == '0') s.pop_back();
  if (!s.empty() && s.back() == '.') s.pop_back();
  return s == "-0" ? "0" : s;
}

class Flip {
 public:
  explicit Flip(double height) : height_(height) {}
  std::string pt(Vec2 p) const { return num(p.x) + " " + num(height_ - p.y); }

 private:
  double height_;
};

std::string path_data(const Primitive& prim, const Flip& f) {
  std::string d;
  std::visit(
      [&](const auto& s) {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, SegmentShape>) {
          d = "M " + f.pt(s.start) + " L " + f.pt(s.end);
        } else if constexpr (std::is_same_v<S, ArcShape>) {
          double sweep = std::fmod(s.end_angle - s.start_angle, 2 * std::numbers::pi);
          if (sweep < 0) sweep += 2 * std::numbers::pi;
          const Vec2 a = s.center + s.radius * Vec2{std::cos(s.start_angle), std::sin(s.start_angle)};
          const Vec2 b = s.center + s.radius * Vec2{std::cos(s.end_angle), std::sin(s.end_angle)};
          // Mirroring y turns counter-clockwise into sweep-flag 0.
          d = "M " + f.pt(a) + " A " + num(s.radius) + " " + num(s.radius) + " 0 " +
              (sweep > std::numbers::pi ? "1" : "0") + " 0 " + f.pt(b);
        } else if constexpr (std::is_same_v<S, CircleShape>) {
          const Vec2 a = s.center + Vec2{s.radius, 0}, b = s.center - Vec2{s.radius, 0};
          const std::string r = num(s.radius) + " " + num(s.radius);
          d = "M " + f.pt(a) + " A " + r + " 0 1 0 " + f.pt(b) + " A " + r + " 0 1 0 " + f.pt(a) + " Z";
        } else {
          const Vec2 ax = rotate({s.semi_axis_x, 0}, s.rotation);
          const Vec2 a = s.center + ax, b = s.center - ax;
          const double deg = -s.rotation * 180.0 / std::numbers::pi;
          const std::string r = num(s.semi_axis_x) + " " + num(s.semi_axis_y) + " " + num(deg);
          d = "M " + f.pt(a) + " A " + r + " 1 0 " + f.pt(b) + " A " + r + " 1 0 " + f.pt(a) + " Z";
        }
      },
      prim.shape);
  return d;
}

}  // namespace

std::string class_color(int id, const ClassTable& classes) {
  if (id == classes.background()) return "#c8c8c8";
  if (classes.is_stuff(id)) return hsl(30.0 + 25.0 * id, 0.35, 0.35);
  return hsl(137.508 * id, 0.75, 0.45);
}

std::string render_svg(const DrawingRecord& record, const ClassTable& classes,
                       const PanopticPrediction* prediction, const RenderOptions& options) {
  const double w = record.block_extent.x, h = record.block_extent.y;
  const Flip flip(h);
  std::ostringstream out;
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << num(options.width_px)
      << "\" height=\"" << num(options.width_px * h / w) << "\" viewBox=\"0 0 " << num(w) << " " << num(h)
      << "\">\n";
  out << "<title>" << escape(record.id) << "</title>\n";
  out << "<rect x=\"0\" y=\"0\" width=\"" << num(w) << "\" height=\"" << num(h) << "\" fill=\"#ffffff\"/>\n";
  out << "<g fill=\"none\" stroke-width=\"" << num(options.stroke_mm) << "\" stroke-linecap=\"round\">\n";
  const bool use_pred = prediction && prediction->vertex_class.size() == record.primitives.size();
  for (std::size_t i = 0; i < record.primitives.size(); ++i) {
    const auto& p = record.primitives[i];
    const int cls = use_pred ? prediction->vertex_class[i] : p.label;
    out << "<path d=\"" << path_data(p, flip) << "\" stroke=\"" << class_color(cls, classes) << "\"/>\n";
  }
  out << "</g>\n";
  if (prediction && options.instance_boxes) {
    const double font = std::max(w, h) / 60.0;
    out << "<g font-family=\"sans-serif\" font-size=\"" << num(font) << "\">\n";
    for (const auto& inst : prediction->instances) {
      const std::string color = class_color(inst.label, classes);
      const std::string name = classes.contains(inst.label) ? classes[inst.label].name : std::to_string(inst.label);
      char conf[16];
      std::snprintf(conf, sizeof conf, "%.2f", inst.confidence);
      const double top = h - inst.box.max_y;
      out << "<rect x=\"" << num(inst.box.min_x) << "\" y=\"" << num(top) << "\" width=\""
          << num(inst.box.max_x - inst.box.min_x) << "\" height=\"" << num(inst.box.max_y - inst.box.min_y)
          << "\" fill=\"" << color << "\" fill-opacity=\"0.15\" stroke=\"" << color << "\" stroke-width=\""
          << num(options.stroke_mm / 2) << "\"/>\n";
      out << "<text x=\"" << num(inst.box.min_x) << "\" y=\"" << num(top - font * 0.25) << "\" fill=\"" << color
          << "\">" << escape(name) << " " << conf << "</text>\n";
    }
    out << "</g>\n";
  }
  out << "</svg>\n";
  return out.str();
}

}  // namespace symspot
