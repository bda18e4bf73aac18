#pragma once

// JSON mapping of configuration and annotation types. Readers keep the
// default of any missing key and reject unknown keys with ConfigError.

#include <nlohmann/json.hpp>

#include "symspot/classes.hpp"
#include "symspot/extract.hpp"
#include "symspot/geometry.hpp"
#include "symspot/graph.hpp"
#include "symspot/model.hpp"
#include "symspot/training.hpp"

namespace symspot {

using Json = nlohmann::ordered_json;

Json to_json(const GraphConfig& cfg);
Json to_json(const ModelConfig& cfg);
Json to_json(const Ablation& ablation);
Json to_json(const TrainConfig& cfg);
Json to_json(const ClassTable& classes);
Json to_json(const Primitive& primitive);
Json to_json(const PanopticPrediction& prediction);

/// `where` prefixes error messages, e.g. "config.graph".
void from_json(const Json& j, GraphConfig& cfg, const std::string& where = "graph");
void from_json(const Json& j, ModelConfig& cfg, const std::string& where = "model");
void from_json(const Json& j, Ablation& ablation, const std::string& where = "ablation");
void from_json(const Json& j, TrainConfig& cfg, const std::string& where = "train");
ClassTable class_table_from_json(const Json& j, const std::string& where = "classes");
/// Throws ParseError naming the field.
Primitive primitive_from_json(const Json& j, const std::string& where);
PanopticPrediction prediction_from_json(const Json& j, const std::string& where = "prediction");

std::string to_string(CeeMode mode);
CeeMode cee_mode_from_string(const std::string& s);

/// Parses text, turning syntax errors into ParseError with a line number.
Json parse_json_text(const std::string& text, const std::string& source);
Json read_json_file(const std::filesystem::path& path);
/// Writes with two-space indentation and a trailing newline.
void write_json_file(const Json& j, const std::filesystem::path& path);

}  // namespace symspot
