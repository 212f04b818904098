#pragma once

// Matrix JSON schema shared by every artifact file:
//   {"rows": r, "cols": c, "data": [row-major reals]}

#include <filesystem>
#include <string>

#include <json.hpp>

#include "koopstab/linalg.hpp"

namespace koopstab::io {

using nlohmann::json;

json mat_to_json(const Mat& m);
Mat mat_from_json(const json& j);

/// Vectors serialize as n x 1 matrices.
json vec_to_json(const Vec& v);
Vec vec_from_json(const json& j);

/// Shortest decimal form that reads back to the same double.
std::string format_real(double v);

/// 64-bit FNV-1a, rendered as 16 lowercase hex digits.
std::string fnv1a_hex(std::string_view bytes);

json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const json& j);
std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace koopstab::io
