#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "hetprompt/error.hpp"
#include "hetprompt/hash.hpp"
#include "hetprompt/matrix.hpp"
#include "hetprompt/optim.hpp"

namespace hetprompt {

/// Named float64 tensors plus free-form metadata (config hash, seed, ...).
/// Serialized as one JSON document; doubles round-trip exactly.
struct Checkpoint {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<std::pair<std::string, Matrix>> tensors;

  bool contains(const std::string& name) const {
    for (const auto& [n, _] : tensors)
      if (n == name) return true;
    return false;
  }

  const Matrix& at(const std::string& name) const {
    for (const auto& [n, m] : tensors)
      if (n == name) return m;
    throw Error(ErrorCode::validation, "checkpoint has no tensor '" + name + "'");
  }

  friend bool operator==(const Checkpoint& a, const Checkpoint& b) {
    return a.meta == b.meta && a.tensors == b.tensors;
  }
};

inline Checkpoint snapshot(const std::vector<Parameter>& params, nlohmann::json meta = {}) {
  Checkpoint c;
  if (!meta.is_null()) c.meta = std::move(meta);
  for (const auto& p : params) c.tensors.emplace_back(p.name, p.tensor.value());
  return c;
}

/// Copies stored values into `params` by name.
inline void restore(std::vector<Parameter>& params, const Checkpoint& c) {
  for (auto& p : params) {
    const Matrix& m = c.at(p.name);
    if (!m.same_shape(p.tensor.value()))
      throw Error(ErrorCode::shape, "checkpoint tensor '" + p.name + "' is " + m.shape_string() +
                                        ", parameter is " + p.tensor.value().shape_string());
    p.tensor.mutable_value() = m;
  }
}

inline nlohmann::json to_json(const Checkpoint& c) {
  nlohmann::json j;
  j["format"] = "hetprompt-checkpoint-1";
  j["meta"] = c.meta;
  j["tensors"] = nlohmann::json::array();
  for (const auto& [name, m] : c.tensors)
    j["tensors"].push_back({{"name", name}, {"shape", {m.rows(), m.cols()}}, {"values", m.values()}});
  return j;
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != "hetprompt-checkpoint-1")
      throw Error(ErrorCode::validation, "unsupported checkpoint format");
    Checkpoint c;
    c.meta = j.at("meta");
    for (const auto& t : j.at("tensors")) {
      auto shape = t.at("shape").get<std::vector<std::size_t>>();
      if (shape.size() != 2) throw Error(ErrorCode::validation, "checkpoint tensor shape must be 2-D");
      c.tensors.emplace_back(t.at("name").get<std::string>(),
                             Matrix(shape[0], shape[1], t.at("values").get<std::vector<double>>()));
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::validation, std::string("malformed checkpoint: ") + e.what());
  }
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
  out << to_json(c).dump() << '\n';
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path))
    throw Error(ErrorCode::missing_artifact, "missing artifact: " + path.string());
  try {
    return checkpoint_from_json(nlohmann::json::parse(read_file(path)));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::validation, path.string() + ": " + e.what());
  }
}

}  // namespace hetprompt
