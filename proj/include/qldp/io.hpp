#pragma once

#include "qldp/dynamics.hpp"
#include "qldp/types.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace qldp {

/// Round-trip representation with 17 significant digits.
std::string format_double(double value);

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows);

/// Writes <base>.bin (little-endian float64, row-major) and <base>.json
/// describing the shape; `meta` is merged into the sidecar.
void write_binary_dump(const std::filesystem::path& base, const Mat& data, const nlohmann::json& meta = {});

struct BinaryDump {
  Mat data;
  nlohmann::json sidecar;
};
BinaryDump read_binary_dump(const std::filesystem::path& base);

/// t, X components, Y components.
void write_path_csv(const std::filesystem::path& path, const PathSample& sample);

void write_json(const std::filesystem::path& path, const nlohmann::json& value);

/// 64-bit FNV-1a, rendered as 16 hex digits.
std::string fnv1a_hex(const std::string& bytes);

}  // namespace qldp
