#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "hetprompt/error.hpp"
#include "hetprompt/graph.hpp"

namespace hetprompt {

struct Dataset {
  HeteroGraph graph;
  std::vector<MetaPathSchema> metapaths;
};

namespace detail {

inline std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
  return in;
}

inline std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, sep)) out.push_back(trim(field));
  return out;
}

template <class T>
T parse_number(const std::string& text, const std::filesystem::path& file, std::size_t line) {
  T value{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw Error(ErrorCode::validation, file.filename().string() + ":" + std::to_string(line) +
                                           ": cannot parse '" + text + "'");
  return value;
}

inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

inline bool blank(const std::string& line) { return trim(line).empty(); }

}  // namespace detail

/// Reads a dataset directory:
///   schema.json, edges_<REL>.tsv, features_<TYPE>.csv (per type, optional),
///   labels.tsv (optional), metapaths.txt
inline Dataset load_dataset(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  Dataset ds;
  auto& g = ds.graph;

  const auto schema_path = dir / "schema.json";
  nlohmann::json schema;
  {
    auto in = detail::open_input(schema_path);
    try {
      in >> schema;
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::validation, "schema.json: " + std::string(e.what()));
    }
  }
  try {
    for (const auto& t : schema.at("node_types")) {
      g.node_types.push_back(t.at("name").get<std::string>());
      g.node_counts.push_back(t.at("count").get<std::size_t>());
    }
    g.target_type = schema.at("target_type").get<std::string>();
    g.num_classes = schema.value("num_classes", std::size_t{0});
    for (const auto& r : schema.at("relations")) {
      Relation rel;
      rel.name = r.at("name").get<std::string>();
      rel.src_type = r.at("src").get<std::string>();
      rel.dst_type = r.at("dst").get<std::string>();
      g.relations.push_back(std::move(rel));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::validation, "schema.json: " + std::string(e.what()));
  }
  g.type_index(g.target_type);

  for (auto& rel : g.relations) {
    const std::size_t ns = g.count(rel.src_type), nd = g.count(rel.dst_type);
    const auto path = dir / ("edges_" + rel.name + ".tsv");
    auto in = detail::open_input(path);
    std::vector<Triplet> edges;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (detail::blank(line)) continue;
      auto f = detail::split(line, '\t');
      if (f.size() != 2)
        throw Error(ErrorCode::validation, path.filename().string() + ":" +
                                               std::to_string(lineno) + ": expected 2 columns");
      auto s = detail::parse_number<std::size_t>(f[0], path, lineno);
      auto d = detail::parse_number<std::size_t>(f[1], path, lineno);
      if (s >= ns || d >= nd)
        throw Error(ErrorCode::validation,
                    path.filename().string() + ":" + std::to_string(lineno) + ": edge (" +
                        f[0] + ", " + f[1] + ") out of range; valid " + rel.src_type + " 0.." +
                        std::to_string(ns - 1) + ", " + rel.dst_type + " 0.." +
                        std::to_string(nd - 1));
      edges.push_back({s, d, 1.0});
    }
    auto adj = SparseMatrix::from_triplets(ns, nd, std::move(edges));
    // Repeated edge lines collapse to a single binary entry.
    auto t = adj.triplets();
    for (auto& e : t) e.value = 1.0;
    rel.adjacency = SparseMatrix::from_triplets(ns, nd, std::move(t));
  }

  for (std::size_t ti = 0; ti < g.node_types.size(); ++ti) {
    const auto& type = g.node_types[ti];
    const auto path = dir / ("features_" + type + ".csv");
    if (!fs::exists(path)) continue;
    auto in = detail::open_input(path);
    std::vector<double> values;
    std::size_t cols = 0, rows = 0, lineno = 0;
    std::string line;
    while (std::getline(in, line)) {
      ++lineno;
      if (detail::blank(line)) continue;
      auto f = detail::split(line, ',');
      if (rows == 0) cols = f.size();
      if (f.size() != cols)
        throw Error(ErrorCode::validation, path.filename().string() + ":" +
                                               std::to_string(lineno) + ": expected " +
                                               std::to_string(cols) + " columns");
      for (const auto& v : f) values.push_back(detail::parse_number<double>(v, path, lineno));
      ++rows;
    }
    if (rows != g.node_counts[ti])
      throw Error(ErrorCode::validation, path.filename().string() + ": " + std::to_string(rows) +
                                             " rows, expected " +
                                             std::to_string(g.node_counts[ti]));
    g.features.emplace(type, Matrix(rows, cols, std::move(values)));
  }

  if (const auto path = dir / "labels.tsv"; fs::exists(path)) {
    std::vector<int> labels(g.num_targets(), -1);
    auto in = detail::open_input(path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (detail::blank(line)) continue;
      auto f = detail::split(line, '\t');
      if (f.size() != 2)
        throw Error(ErrorCode::validation, "labels.tsv:" + std::to_string(lineno) +
                                               ": expected 2 columns");
      auto node = detail::parse_number<std::size_t>(f[0], path, lineno);
      auto cls = detail::parse_number<int>(f[1], path, lineno);
      if (node >= labels.size())
        throw Error(ErrorCode::validation, "labels.tsv:" + std::to_string(lineno) + ": node " +
                                               f[0] + " out of range; valid 0.." +
                                               std::to_string(labels.size() - 1));
      if (cls < 0 || static_cast<std::size_t>(cls) >= g.num_classes)
        throw Error(ErrorCode::validation, "labels.tsv:" + std::to_string(lineno) + ": class " +
                                               f[1] + " outside [0, " +
                                               std::to_string(g.num_classes) + ")");
      labels[node] = cls;
    }
    g.labels = std::move(labels);
  }

  {
    const auto path = dir / "metapaths.txt";
    auto in = detail::open_input(path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (detail::blank(line) || detail::trim(line).front() == '#') continue;
      try {
        auto s = parse_metapath(line);
        validate_schema(g, s);
        ds.metapaths.push_back(std::move(s));
      } catch (const Error& e) {
        throw Error(ErrorCode::validation, "metapaths.txt:" + std::to_string(lineno) + ": " + e.what());
      }
    }
  }

  g.validate();
  return ds;
}

inline std::string format_metapath(const MetaPathSchema& s) {
  std::string out = s.name + " = " + s.type_sequence.front();
  for (std::size_t i = 0; i < s.relation_sequence.size(); ++i)
    out += " -" + s.relation_sequence[i] + "-> " + s.type_sequence[i + 1];
  return out;
}

/// Writes `ds` in the format read by load_dataset. Output is a pure function
/// of the dataset contents.
inline void write_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  const auto& g = ds.graph;
  fs::create_directories(dir);
  auto open = [&](const std::string& name) {
    std::ofstream out(dir / name, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::io, "cannot write " + (dir / name).string());
    return out;
  };

  nlohmann::ordered_json schema;
  schema["node_types"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < g.node_types.size(); ++i)
    schema["node_types"].push_back({{"name", g.node_types[i]}, {"count", g.node_counts[i]}});
  schema["relations"] = nlohmann::ordered_json::array();
  for (const auto& r : g.relations)
    schema["relations"].push_back({{"name", r.name}, {"src", r.src_type}, {"dst", r.dst_type}});
  schema["target_type"] = g.target_type;
  schema["num_classes"] = g.num_classes;
  open("schema.json") << schema.dump(2) << '\n';

  for (const auto& r : g.relations) {
    auto out = open("edges_" + r.name + ".tsv");
    for (const auto& e : r.adjacency.triplets()) out << e.row << '\t' << e.col << '\n';
  }
  for (const auto& [type, feats] : g.features) {
    auto out = open("features_" + type + ".csv");
    for (std::size_t i = 0; i < feats.rows(); ++i) {
      for (std::size_t j = 0; j < feats.cols(); ++j) {
        if (j) out << ',';
        out << detail::format_double(feats(i, j));
      }
      out << '\n';
    }
  }
  if (g.labels) {
    auto out = open("labels.tsv");
    for (std::size_t i = 0; i < g.labels->size(); ++i)
      if ((*g.labels)[i] >= 0) out << i << '\t' << (*g.labels)[i] << '\n';
  }
  auto out = open("metapaths.txt");
  for (const auto& s : ds.metapaths) out << format_metapath(s) << '\n';
}

}  // namespace hetprompt
