#include "latgen/nn/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "latgen/error.hpp"

namespace latgen::nn {

nlohmann::json parameters_to_json(const ParameterSet& params) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [name, t] : params.items())
    j[name] = {{"shape", {t.rows(), t.cols()}}, {"data", t.values()}};
  return j;
}

void parameters_from_json(const nlohmann::json& j, const ParameterSet& params) {
  if (j.size() != params.size())
    throw ConfigError("checkpoint has " + std::to_string(j.size()) + " parameters, model has " +
                      std::to_string(params.size()));
  for (auto [name, t] : params.items()) {
    if (!j.contains(name)) throw ConfigError("checkpoint lacks parameter '" + name + "'");
    const auto& entry = j.at(name);
    const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
    if (shape.size() != 2 || shape[0] != t.rows() || shape[1] != t.cols())
      throw ShapeError("checkpoint shape mismatch for '" + name + "'");
    auto data = entry.at("data").get<std::vector<double>>();
    if (data.size() != t.size()) throw ShapeError("checkpoint data size mismatch for '" + name + "'");
    t.mutable_values() = std::move(data);
    t.zero_grad();
  }
}

void save_checkpoint(const std::filesystem::path& path, const nlohmann::json& model, const ParameterSet& params,
                     const nlohmann::json& state) {
  nlohmann::json doc;
  doc["format"] = kCheckpointFormat;
  doc["version"] = kCheckpointVersion;
  doc["model"] = model;
  doc["parameters"] = parameters_to_json(params);
  doc["state"] = state;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write checkpoint " + path.string());
  out << doc.dump() << '\n';
}

nlohmann::json read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(0, "checkpoint " + path.string() + ": " + e.what());
  }
  if (doc.value("format", "") != kCheckpointFormat) throw ParseError(0, path.string() + " is not a checkpoint");
  if (doc.value("version", 0) != kCheckpointVersion)
    throw ParseError(0, "unsupported checkpoint version in " + path.string());
  return doc;
}

}  // namespace latgen::nn
