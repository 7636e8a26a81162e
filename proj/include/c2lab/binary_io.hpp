#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace c2lab::io {

// Little-endian array files. Readers require the file size to equal exactly
// count * sizeof(element); a smaller file raises IoError("short read ...").

void write_f32le(const std::filesystem::path& path, std::span<const float> values);
void write_f64le(const std::filesystem::path& path, std::span<const double> values);
void write_u32le(const std::filesystem::path& path, std::span<const std::uint32_t> values);

std::vector<float> read_f32le(const std::filesystem::path& path, std::size_t count);
std::vector<double> read_f64le(const std::filesystem::path& path, std::size_t count);
std::vector<std::uint32_t> read_u32le(const std::filesystem::path& path, std::size_t count);

nlohmann::json read_json(const std::filesystem::path& path);
/// Pretty-printed with a trailing newline; output is a pure function of `j`.
void write_json(const std::filesystem::path& path, const nlohmann::json& j);
void write_text(const std::filesystem::path& path, const std::string& text);
void append_text(const std::filesystem::path& path, const std::string& text);

/// FNV-1a content id over raw bytes, rendered as "fnv1a64:<16 hex digits>".
std::string content_id(std::span<const unsigned char> bytes);

}  // namespace c2lab::io
