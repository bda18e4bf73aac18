#include "symspot/checkpoint.hpp"

#include "symspot/errors.hpp"
#include "symspot/json.hpp"

namespace symspot {
namespace {

constexpr const char* kFormat = "symspot-checkpoint";

Json tensors(const ModelParams& params) {
  Json out = Json::object();
  for_each_param(
      [&](const std::string& name, const Matrix& m) {
        out[name] = {{"rows", m.rows()},
                     {"cols", m.cols()},
                     {"data", std::vector<double>(m.data(), m.data() + m.size())}};
      },
      params);
  return out;
}

void read_tensors(const Json& j, ModelParams& params, const std::string& where) {
  if (!j.is_object()) throw ParseError(where + ": expected an object");
  for_each_param(
      [&](const std::string& name, Matrix& m) {
        const auto it = j.find(name);
        if (it == j.end()) throw ParseError(where + "." + name + ": missing");
        try {
          const auto rows = it->at("rows").get<Eigen::Index>();
          const auto cols = it->at("cols").get<Eigen::Index>();
          const auto data = it->at("data").get<std::vector<double>>();
          if (rows != m.rows() || cols != m.cols() || static_cast<Eigen::Index>(data.size()) != rows * cols)
            throw ParseError(where + "." + name + ": shape does not match the model configuration");
          m = Eigen::Map<const Matrix>(data.data(), rows, cols);
        } catch (const nlohmann::json::exception&) {
          throw ParseError(where + "." + name + ": malformed tensor");
        }
      },
      params);
}

}  // namespace

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  Json j;
  j["format"] = kFormat;
  j["version"] = kCheckpointVersion;
  j["model"] = to_json(c.model);
  j["ablation"] = to_json(c.ablation);
  j["epochs_completed"] = c.state.epochs_completed;
  j["best_pq"] = c.state.best_pq;
  j["best_epoch"] = c.state.best_epoch;
  j["adam_step"] = c.state.optimizer.step;
  j["params"] = tensors(c.state.params);
  j["best_params"] = tensors(c.state.best_params);
  j["adam_first_moment"] = tensors(c.state.optimizer.first_moment);
  j["adam_second_moment"] = tensors(c.state.optimizer.second_moment);
  write_json_file(j, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const Json j = read_json_file(path);
  const std::string src = path.string();
  if (!j.is_object() || j.value("format", "") != kFormat) throw ParseError(src + ": not a checkpoint");
  if (j.value("version", -1) != kCheckpointVersion)
    throw VersionMismatch(src + ": checkpoint version " + std::to_string(j.value("version", -1)) +
                          " is not supported");
  Checkpoint c;
  try {
    from_json(j.at("model"), c.model);
    from_json(j.at("ablation"), c.ablation);
    c.model.validate();
    c.state.epochs_completed = j.at("epochs_completed").get<int>();
    c.state.best_pq = j.at("best_pq").get<double>();
    c.state.best_epoch = j.at("best_epoch").get<int>();
    c.state.optimizer.step = j.at("adam_step").get<std::int64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(src + ": " + e.what());
  } catch (const ConfigError& e) {
    throw ParseError(src + ": " + e.what());
  }
  c.state.params = zeros_like(init_params(c.model, 0));
  c.state.best_params = c.state.params;
  c.state.optimizer.first_moment = c.state.params;
  c.state.optimizer.second_moment = c.state.params;
  const auto section = [&](const char* key) -> const Json& {
    const auto it = j.find(key);
    if (it == j.end()) throw ParseError(src + ": " + key + ": missing");
    return *it;
  };
  read_tensors(section("params"), c.state.params, src + ": params");
  read_tensors(section("best_params"), c.state.best_params, src + ": best_params");
  read_tensors(section("adam_first_moment"), c.state.optimizer.first_moment, src + ": adam_first_moment");
  read_tensors(section("adam_second_moment"), c.state.optimizer.second_moment, src + ": adam_second_moment");
  return c;
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected_model,
                           const Ablation& expected_ablation) {
  Checkpoint c = load_checkpoint(path);
  if (!(c.model == expected_model))
    throw ConfigError(path.string() + ": checkpoint model configuration differs from the requested one");
  if (!(c.ablation == expected_ablation))
    throw ConfigError(path.string() + ": checkpoint ablation differs from the requested one");
  return c;
}

}  // namespace symspot
