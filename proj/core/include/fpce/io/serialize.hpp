#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace fpce {

// Doubles that must survive a save/load cycle bit-exactly are stored as C99
// hex-float strings ("%a"); everything else can be an ordinary JSON number.
std::string hexfloat(double v);
double parse_hexfloat(const std::string& s);

nlohmann::json vector_to_json(const Eigen::Ref<const Eigen::VectorXd>& v);
Eigen::VectorXd vector_from_json(const nlohmann::json& j);
nlohmann::json matrix_to_json(const Eigen::Ref<const Eigen::MatrixXd>& m);
Eigen::MatrixXd matrix_from_json(const nlohmann::json& j);

// Write text to path via a temporary file in the same directory plus rename,
// so readers never observe a partially written artifact.
void atomic_write(const std::filesystem::path& path, const std::string& text);
void atomic_write_json(const std::filesystem::path& path, const nlohmann::json& j);

nlohmann::json load_json(const std::filesystem::path& path);

// CSV with 17 significant digits, one row per line, no header.
void write_csv(const std::filesystem::path& path,
               const Eigen::Ref<const Eigen::MatrixXd>& m);
Eigen::MatrixXd read_csv(const std::filesystem::path& path);

// FNV-1a over the canonical dump; used for cache keys.
std::uint64_t json_hash(const nlohmann::json& j);

}  // namespace fpce
