#pragma once

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "opinf/error.hpp"
#include "opinf/snapshots.hpp"
#include "opinf/types.hpp"

namespace opinf::detail {

inline nlohmann::json vector_to_json(const Vector& v) {
  return nlohmann::json(std::vector<double>(v.data(), v.data() + v.size()));
}

inline Vector vector_from_json(const nlohmann::json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

inline nlohmann::json layout_to_json(const BlockLayout& layout) {
  auto j = nlohmann::json::array();
  for (const auto& b : layout.blocks()) j.push_back({{"name", b.name}, {"rows", b.rows}});
  return j;
}

inline BlockLayout layout_from_json(const nlohmann::json& j) {
  std::vector<std::pair<std::string, Eigen::Index>> sizes;
  for (const auto& b : j) sizes.emplace_back(b.at("name").get<std::string>(), b.at("rows").get<Eigen::Index>());
  return BlockLayout::from_sizes(sizes);
}

inline nlohmann::json scaling_to_json(const ScalingTransform& st) {
  nlohmann::json j;
  j["mode"] = to_string(st.mode());
  j["blocks"] = nlohmann::json::array();
  for (const auto& b : st.blocks()) {
    j["blocks"].push_back({{"name", b.name}, {"shift", b.shift}, {"scale", b.scale}});
  }
  return j;
}

inline ScalingTransform scaling_from_json(const nlohmann::json& j) {
  std::vector<BlockScaling> blocks;
  for (const auto& b : j.at("blocks")) {
    blocks.push_back({b.at("name").get<std::string>(), b.at("shift").get<double>(),
                      b.at("scale").get<double>()});
  }
  return ScalingTransform(parse_scaling_mode(j.at("mode").get<std::string>()), std::move(blocks));
}

inline nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail_io("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail_io("malformed JSON in " + path.string() + ": " + e.what());
  }
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) fail_io("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) fail_io("write failed for " + path.string());
}

}  // namespace opinf::detail
