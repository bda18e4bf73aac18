#include <algorithm>
#include <array>
#include <type_traits>
#include <initializer_list>

#include "symspot/errors.hpp"
#include "symspot_cli/cli.hpp"

namespace symspot::cli {
namespace {

void require_object(const Json& j, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
}

void reject_unknown(const Json& j, const std::string& where, std::initializer_list<const char*> known) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return it.key() == k; }))
      throw ConfigError(where + ": unknown key '" + it.key() + "'");
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

}  // namespace

Json to_json(const SyntheticSpec& s) {
  return {{"num_classes", s.num_classes},
          {"rooms_x", {s.rooms_x_min, s.rooms_x_max}},
          {"rooms_y", {s.rooms_y_min, s.rooms_y_max}},
          {"room_mm", {s.room_min_mm, s.room_max_mm}},
          {"wall_thickness_mm", s.wall_thickness_mm},
          {"opening_mm", {s.opening_min_mm, s.opening_max_mm}},
          {"max_openings_per_wall", s.max_openings_per_wall},
          {"door_probability", s.door_probability},
          {"furniture_per_room_max", s.furniture_per_room_max},
          {"hatch_groups_max", s.hatch_groups_max},
          {"dimension_lines", s.dimension_lines}};
}

void from_json(const Json& j, SyntheticSpec& s, const std::string& where) {
  require_object(j, where);
  reject_unknown(j, where,
                 {"num_classes", "rooms_x", "rooms_y", "room_mm", "wall_thickness_mm", "opening_mm",
                  "max_openings_per_wall", "door_probability", "furniture_per_room_max", "hatch_groups_max",
                  "dimension_lines"});
  read(j, "num_classes", s.num_classes, where);
  const auto range = [&](const char* key, auto& lo, auto& hi) {
    using T = std::decay_t<decltype(lo)>;
    std::array<T, 2> pair{lo, hi};
    read(j, key, pair, where);
    lo = pair[0];
    hi = pair[1];
  };
  range("rooms_x", s.rooms_x_min, s.rooms_x_max);
  range("rooms_y", s.rooms_y_min, s.rooms_y_max);
  range("room_mm", s.room_min_mm, s.room_max_mm);
  range("opening_mm", s.opening_min_mm, s.opening_max_mm);
  read(j, "wall_thickness_mm", s.wall_thickness_mm, where);
  read(j, "max_openings_per_wall", s.max_openings_per_wall, where);
  read(j, "door_probability", s.door_probability, where);
  read(j, "furniture_per_room_max", s.furniture_per_room_max, where);
  read(j, "hatch_groups_max", s.hatch_groups_max, where);
  read(j, "dimension_lines", s.dimension_lines, where);
}

Json to_json(const RunConfig& c) {
  return {{"seed", c.seed},
          {"jobs", c.jobs},
          {"prune_threshold", c.prune_threshold},
          {"tile", c.tile},
          {"classes", c.classes},
          {"graph", symspot::to_json(c.graph)},
          {"model", symspot::to_json(c.model)},
          {"ablation", symspot::to_json(c.ablation)},
          {"train", symspot::to_json(c.train)},
          {"synthetic", to_json(c.synthetic)}};
}

void from_json(const Json& j, RunConfig& c) {
  require_object(j, "config");
  reject_unknown(j, "config",
                 {"seed", "jobs", "prune_threshold", "tile", "classes", "graph", "model", "ablation", "train",
                  "synthetic"});
  read(j, "seed", c.seed, "config");
  read(j, "jobs", c.jobs, "config");
  read(j, "prune_threshold", c.prune_threshold, "config");
  read(j, "tile", c.tile, "config");
  read(j, "classes", c.classes, "config");
  if (j.contains("graph")) symspot::from_json(j["graph"], c.graph, "config.graph");
  if (j.contains("model")) {
    symspot::from_json(j["model"], c.model, "config.model");
    c.num_classes_explicit = c.num_classes_explicit || j["model"].contains("num_classes");
  }
  if (j.contains("ablation")) symspot::from_json(j["ablation"], c.ablation, "config.ablation");
  if (j.contains("train")) symspot::from_json(j["train"], c.train, "config.train");
  if (j.contains("synthetic")) from_json(j["synthetic"], c.synthetic, "config.synthetic");
}

void apply_override(Json& tree, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  Json value = Json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  Json* node = &tree;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ConfigError("override '" + assignment + "' has an empty key");
    if (node->is_null()) *node = Json::object();
    if (!node->is_object()) throw ConfigError("override '" + assignment + "': '" + key + "' is not inside an object");
    if (dot == std::string::npos) {
      (*node)[key] = std::move(value);
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

RunConfig load_run_config(const std::string& config_path, const std::vector<std::string>& overrides) {
  RunConfig cfg;
  Json given = Json::object();
  if (!config_path.empty()) given = read_json_file(config_path);
  for (const auto& o : overrides) apply_override(given, o);
  from_json(given, cfg);
  cfg.graph.validate();
  cfg.model.validate();
  cfg.ablation.validate(cfg.model);
  cfg.train.validate();
  cfg.synthetic.validate();
  if (cfg.jobs < 1) throw ConfigError("config.jobs must be at least 1");
  if (!(cfg.prune_threshold >= 0 && cfg.prune_threshold <= 1))
    throw ConfigError("config.prune_threshold must lie in [0, 1]");
  class_table_from_name(cfg.classes);
  return cfg;
}

ClassTable class_table_from_name(const std::string& name) {
  if (name == "floorplan") return ClassTable::floorplan();
  const std::string prefix = "synthetic:";
  if (name.rfind(prefix, 0) == 0) {
    try {
      std::size_t used = 0;
      const int count = std::stoi(name.substr(prefix.size()), &used);
      if (used + prefix.size() == name.size()) return ClassTable::synthetic(count);
    } catch (const std::logic_error&) {
    }
  }
  throw ConfigError("unknown class table '" + name + "' (expected floorplan or synthetic:<count>)");
}

Ablation ablation_from_name(const std::string& name) {
  if (name == "full") return Ablation::full();
  if (name == "baseline") return Ablation::baseline();
  if (name == "rse_only") return Ablation::rse_only();
  if (name == "cee_only") return Ablation::cee_only();
  const std::string prefix = "single_stage:";
  if (name.rfind(prefix, 0) == 0) {
    try {
      return Ablation::single_stage(std::stoi(name.substr(prefix.size())));
    } catch (const std::logic_error&) {
    }
  }
  throw ConfigError("unknown ablation '" + name +
                    "' (expected full, baseline, rse_only, cee_only or single_stage:<n>)");
}

}  // namespace symspot::cli
