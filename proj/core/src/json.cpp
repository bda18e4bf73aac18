#include "symspot/json.hpp"

#include <algorithm>
#include <fstream>
#include <initializer_list>
#include <sstream>

#include "symspot/errors.hpp"

namespace symspot {
namespace {

void require_object(const Json& j, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
}

void reject_unknown(const Json& j, const std::string& where, std::initializer_list<const char*> known) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const bool ok = std::any_of(known.begin(), known.end(), [&](const char* k) { return it.key() == k; });
    if (!ok) throw ConfigError(where + ": unknown key '" + it.key() + "'");
  }
}

template <class T>
void read(const Json& j, const char* key, T& out, const std::string& where) {
  const auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->template get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(where + "." + key + ": wrong type");
  }
}

Json vec2(Vec2 v) { return Json::array({v.x, v.y}); }

double number_field(const Json& j, const char* key, const std::string& where) {
  const auto it = j.find(key);
  if (it == j.end()) throw ParseError(where + "." + key + ": missing");
  if (!it->is_number()) throw ParseError(where + "." + key + ": expected a number");
  return it->get<double>();
}

Vec2 point_field(const Json& j, const char* key, const std::string& where) {
  const auto it = j.find(key);
  if (it == j.end()) throw ParseError(where + "." + key + ": missing");
  if (!it->is_array() || it->size() != 2 || !(*it)[0].is_number() || !(*it)[1].is_number())
    throw ParseError(where + "." + key + ": expected [x, y]");
  return {(*it)[0].get<double>(), (*it)[1].get<double>()};
}

int int_field(const Json& j, const char* key, const std::string& where) {
  const auto it = j.find(key);
  if (it == j.end()) throw ParseError(where + "." + key + ": missing");
  if (!it->is_number_integer()) throw ParseError(where + "." + key + ": expected an integer");
  return it->get<int>();
}

}  // namespace

std::string to_string(CeeMode mode) {
  switch (mode) {
    case CeeMode::Off: return "off";
    case CeeMode::Sum: return "sum";
    case CeeMode::SingleStage: return "single";
  }
  return "sum";
}

CeeMode cee_mode_from_string(const std::string& s) {
  if (s == "off") return CeeMode::Off;
  if (s == "sum") return CeeMode::Sum;
  if (s == "single") return CeeMode::SingleStage;
  throw ConfigError("unknown CEE mode '" + s + "' (expected off, sum or single)");
}

Json to_json(const GraphConfig& c) {
  return {{"epsilon_mm", c.epsilon_mm},
          {"max_degree", c.max_degree},
          {"collinear_angle_tol_deg", c.collinear_angle_tol_deg},
          {"collinear_lateral_tol_mm", c.collinear_lateral_tol_mm},
          {"regularity_angle_tol_deg", c.regularity.angle_tol_deg},
          {"shared_endpoint_tol_mm", c.regularity.endpoint_tol_mm},
          {"seed", c.rng_seed}};
}

void from_json(const Json& j, GraphConfig& c, const std::string& where) {
  require_object(j, where);
  reject_unknown(j, where,
                 {"epsilon_mm", "max_degree", "collinear_angle_tol_deg", "collinear_lateral_tol_mm",
                  "regularity_angle_tol_deg", "shared_endpoint_tol_mm", "seed"});
  read(j, "epsilon_mm", c.epsilon_mm, where);
  read(j, "max_degree", c.max_degree, where);
  read(j, "collinear_angle_tol_deg", c.collinear_angle_tol_deg, where);
  read(j, "collinear_lateral_tol_mm", c.collinear_lateral_tol_mm, where);
  read(j, "regularity_angle_tol_deg", c.regularity.angle_tol_deg, where);
  read(j, "shared_endpoint_tol_mm", c.regularity.endpoint_tol_mm, where);
  read(j, "seed", c.rng_seed, where);
}

Json to_json(const ModelConfig& c) {
  return {{"stages", c.stages},           {"heads", c.heads},
          {"width", c.width},             {"num_classes", c.num_classes},
          {"instance_hidden", c.instance_hidden}, {"scaled_attention", c.scaled_attention}};
}

void from_json(const Json& j, ModelConfig& c, const std::string& where) {
  require_object(j, where);
  reject_unknown(j, where, {"stages", "heads", "width", "num_classes", "instance_hidden", "scaled_attention"});
  read(j, "stages", c.stages, where);
  read(j, "heads", c.heads, where);
  read(j, "width", c.width, where);
  read(j, "num_classes", c.num_classes, where);
  read(j, "instance_hidden", c.instance_hidden, where);
  read(j, "scaled_attention", c.scaled_attention, where);
}

Json to_json(const Ablation& a) {
  return {{"rse", a.rse}, {"cee", to_string(a.cee)}, {"cee_stage", a.cee_stage}};
}

void from_json(const Json& j, Ablation& a, const std::string& where) {
  require_object(j, where);
  reject_unknown(j, where, {"rse", "cee", "cee_stage"});
  read(j, "rse", a.rse, where);
  std::string cee = to_string(a.cee);
  read(j, "cee", cee, where);
  a.cee = cee_mode_from_string(cee);
  read(j, "cee_stage", a.cee_stage, where);
}

Json to_json(const TrainConfig& c) {
  Json j = {{"lr", c.lr},
            {"beta1", c.beta1},
            {"beta2", c.beta2},
            {"adam_epsilon", c.adam_epsilon},
            {"decay", c.decay},
            {"decay_every", c.decay_every},
            {"epochs", c.epochs},
            {"lambda", c.lambda},
            {"seed", c.seed},
            {"weights",
             {{"same_class_diff_instance", c.weights.same_class_diff_instance},
              {"same_class_same_instance", c.weights.same_class_same_instance},
              {"diff_class_not_adjacent", c.weights.diff_class_not_adjacent},
              {"diff_class_adjacent", c.weights.diff_class_adjacent}}}};
  j["stop_at_pq"] = c.stop_at_pq ? Json(*c.stop_at_pq) : Json(nullptr);
  j["stop_at_accuracy"] = c.stop_at_accuracy ? Json(*c.stop_at_accuracy) : Json(nullptr);
  return j;
}

void from_json(const Json& j, TrainConfig& c, const std::string& where) {
  require_object(j, where);
  reject_unknown(j, where,
                 {"lr", "beta1", "beta2", "adam_epsilon", "decay", "decay_every", "epochs", "lambda", "seed",
                  "weights", "stop_at_pq", "stop_at_accuracy"});
  read(j, "lr", c.lr, where);
  read(j, "beta1", c.beta1, where);
  read(j, "beta2", c.beta2, where);
  read(j, "adam_epsilon", c.adam_epsilon, where);
  read(j, "decay", c.decay, where);
  read(j, "decay_every", c.decay_every, where);
  read(j, "epochs", c.epochs, where);
  read(j, "lambda", c.lambda, where);
  read(j, "seed", c.seed, where);
  if (const auto it = j.find("weights"); it != j.end()) {
    const std::string w = where + ".weights";
    require_object(*it, w);
    reject_unknown(*it, w,
                   {"same_class_diff_instance", "same_class_same_instance", "diff_class_not_adjacent",
                    "diff_class_adjacent"});
    read(*it, "same_class_diff_instance", c.weights.same_class_diff_instance, w);
    read(*it, "same_class_same_instance", c.weights.same_class_same_instance, w);
    read(*it, "diff_class_not_adjacent", c.weights.diff_class_not_adjacent, w);
    read(*it, "diff_class_adjacent", c.weights.diff_class_adjacent, w);
  }
  for (auto [key, slot] : {std::pair{"stop_at_pq", &c.stop_at_pq}, std::pair{"stop_at_accuracy", &c.stop_at_accuracy}}) {
    const auto it = j.find(key);
    if (it == j.end()) continue;
    if (it->is_null()) {
      slot->reset();
    } else if (it->is_number()) {
      *slot = it->get<double>();
    } else {
      throw ConfigError(where + "." + key + ": wrong type");
    }
  }
}

Json to_json(const ClassTable& classes) {
  Json arr = Json::array();
  for (const auto& c : classes.all())
    arr.push_back({{"id", c.id}, {"name", c.name}, {"kind", std::string(to_string(c.kind))}});
  return arr;
}

ClassTable class_table_from_json(const Json& j, const std::string& where) {
  if (!j.is_array()) throw ParseError(where + ": expected an array");
  std::vector<ClassInfo> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string w = where + "[" + std::to_string(i) + "]";
    const Json& e = j[i];
    if (!e.is_object()) throw ParseError(w + ": expected an object");
    ClassInfo info;
    info.id = int_field(e, "id", w);
    const auto name = e.find("name");
    if (name == e.end() || !name->is_string()) throw ParseError(w + ".name: expected a string");
    info.name = name->get<std::string>();
    const auto kind = e.find("kind");
    if (kind == e.end() || !kind->is_string()) throw ParseError(w + ".kind: expected a string");
    try {
      info.kind = class_kind_from_string(kind->get<std::string>());
    } catch (const ParseError& err) {
      throw ParseError(w + ".kind: " + err.what());
    }
    out.push_back(std::move(info));
  }
  try {
    return ClassTable(std::move(out));
  } catch (const ConfigError& err) {
    throw ParseError(where + ": " + err.what());
  }
}

Json to_json(const Primitive& p) {
  Json j;
  j["kind"] = std::string(to_string(p.kind()));
  std::visit(
      [&](const auto& s) {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, SegmentShape>) {
          j["start"] = vec2(s.start);
          j["end"] = vec2(s.end);
        } else if constexpr (std::is_same_v<S, ArcShape>) {
          j["center"] = vec2(s.center);
          j["radius"] = s.radius;
          j["start_angle"] = s.start_angle;
          j["end_angle"] = s.end_angle;
        } else if constexpr (std::is_same_v<S, CircleShape>) {
          j["center"] = vec2(s.center);
          j["radius"] = s.radius;
        } else {
          j["center"] = vec2(s.center);
          j["semi_axis_x"] = s.semi_axis_x;
          j["semi_axis_y"] = s.semi_axis_y;
          j["rotation"] = s.rotation;
        }
      },
      p.shape);
  j["label"] = p.label;
  if (p.instance >= 0) j["instance"] = p.instance;
  return j;
}

Primitive primitive_from_json(const Json& j, const std::string& where) {
  if (!j.is_object()) throw ParseError(where + ": expected an object");
  const auto kind_it = j.find("kind");
  if (kind_it == j.end() || !kind_it->is_string()) throw ParseError(where + ".kind: expected a string");
  const std::string kind = kind_it->get<std::string>();
  Primitive p;
  if (kind == "segment") {
    p.shape = SegmentShape{point_field(j, "start", where), point_field(j, "end", where)};
  } else if (kind == "arc") {
    p.shape = ArcShape{point_field(j, "center", where), number_field(j, "radius", where),
                       number_field(j, "start_angle", where), number_field(j, "end_angle", where)};
  } else if (kind == "circle") {
    p.shape = CircleShape{point_field(j, "center", where), number_field(j, "radius", where)};
  } else if (kind == "ellipse") {
    p.shape = EllipseShape{point_field(j, "center", where), number_field(j, "semi_axis_x", where),
                           number_field(j, "semi_axis_y", where), number_field(j, "rotation", where)};
  } else {
    throw ParseError(where + ".kind: unknown primitive kind '" + kind + "'");
  }
  p.label = int_field(j, "label", where);
  if (j.contains("instance")) p.instance = int_field(j, "instance", where);
  try {
    validate(p);
  } catch (const InvalidPrimitive& e) {
    throw ParseError(where + ": " + e.what());
  }
  return p;
}

Json to_json(const PanopticPrediction& pred) {
  const auto symbols = [](const std::vector<SymbolInstance>& items) {
    Json arr = Json::array();
    for (const auto& s : items)
      arr.push_back({{"label", s.label},
                     {"members", s.members},
                     {"confidence", s.confidence},
                     {"box", {s.box.min_x, s.box.min_y, s.box.max_x, s.box.max_y}}});
    return arr;
  };
  return {{"vertex_class", pred.vertex_class}, {"instances", symbols(pred.instances)}, {"stuff", symbols(pred.stuff)}};
}

PanopticPrediction prediction_from_json(const Json& j, const std::string& where) {
  if (!j.is_object()) throw ParseError(where + ": expected an object");
  PanopticPrediction out;
  try {
    out.vertex_class = j.at("vertex_class").get<std::vector<int>>();
  } catch (const nlohmann::json::exception&) {
    throw ParseError(where + ".vertex_class: expected an integer array");
  }
  const auto symbols = [&](const char* key) {
    std::vector<SymbolInstance> items;
    const auto it = j.find(key);
    if (it == j.end() || !it->is_array()) throw ParseError(where + "." + key + ": expected an array");
    for (std::size_t i = 0; i < it->size(); ++i) {
      const std::string w = where + "." + key + "[" + std::to_string(i) + "]";
      const Json& e = (*it)[i];
      SymbolInstance s;
      s.label = int_field(e, "label", w);
      s.confidence = number_field(e, "confidence", w);
      try {
        s.members = e.at("members").get<std::vector<int>>();
        const auto b = e.at("box").get<std::vector<double>>();
        if (b.size() != 4) throw ParseError(w + ".box: expected 4 numbers");
        s.box = {b[0], b[1], b[2], b[3]};
      } catch (const nlohmann::json::exception&) {
        throw ParseError(w + ": malformed members or box");
      }
      items.push_back(std::move(s));
    }
    return items;
  };
  out.instances = symbols("instances");
  out.stuff = symbols("stuff");
  return out;
}

Json parse_json_text(const std::string& text, const std::string& source) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    const std::size_t upto = std::min<std::size_t>(e.byte, text.size());
    const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto), '\n');
    throw ParseError(source + ":" + std::to_string(line) + ": malformed JSON (" + e.what() + ")");
  }
}

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_json_text(buf.str(), path.string());
}

void write_json_file(const Json& j, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace symspot
