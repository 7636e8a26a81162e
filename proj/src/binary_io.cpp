#include "c2lab/binary_io.hpp"

#include <bit>
#include <cstdio>
#include <fstream>

#include "c2lab/errors.hpp"
#include "c2lab/rng.hpp"

namespace c2lab::io {
namespace fs = std::filesystem;

namespace {

template <typename Word>
void put_le(std::vector<unsigned char>& out, Word w) {
  for (std::size_t b = 0; b < sizeof(Word); ++b) {
    out.push_back(static_cast<unsigned char>((w >> (8 * b)) & 0xFF));
  }
}

template <typename Word>
Word get_le(const unsigned char* p) {
  Word w = 0;
  for (std::size_t b = 0; b < sizeof(Word); ++b) w |= static_cast<Word>(p[b]) << (8 * b);
  return w;
}

void write_bytes(const fs::path& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<unsigned char> read_exact(const fs::path& path, std::size_t nbytes) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  std::vector<unsigned char> bytes(nbytes);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(nbytes));
  if (static_cast<std::size_t>(in.gcount()) != nbytes) {
    throw IoError("short read: " + path.string() + " holds " + std::to_string(in.gcount()) +
                  " bytes, expected " + std::to_string(nbytes));
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw IoError("trailing bytes in " + path.string() + ", expected exactly " + std::to_string(nbytes));
  }
  return bytes;
}

}  // namespace

void write_f32le(const fs::path& path, std::span<const float> values) {
  std::vector<unsigned char> bytes;
  bytes.reserve(values.size() * 4);
  for (float v : values) put_le(bytes, std::bit_cast<std::uint32_t>(v));
  write_bytes(path, bytes);
}

void write_f64le(const fs::path& path, std::span<const double> values) {
  std::vector<unsigned char> bytes;
  bytes.reserve(values.size() * 8);
  for (double v : values) put_le(bytes, std::bit_cast<std::uint64_t>(v));
  write_bytes(path, bytes);
}

void write_u32le(const fs::path& path, std::span<const std::uint32_t> values) {
  std::vector<unsigned char> bytes;
  bytes.reserve(values.size() * 4);
  for (std::uint32_t v : values) put_le(bytes, v);
  write_bytes(path, bytes);
}

std::vector<float> read_f32le(const fs::path& path, std::size_t count) {
  const auto bytes = read_exact(path, count * 4);
  std::vector<float> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = std::bit_cast<float>(get_le<std::uint32_t>(&bytes[4 * i]));
  return out;
}

std::vector<double> read_f64le(const fs::path& path, std::size_t count) {
  const auto bytes = read_exact(path, count * 8);
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = std::bit_cast<double>(get_le<std::uint64_t>(&bytes[8 * i]));
  return out;
}

std::vector<std::uint32_t> read_u32le(const fs::path& path, std::size_t count) {
  const auto bytes = read_exact(path, count * 4);
  std::vector<std::uint32_t> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = get_le<std::uint32_t>(&bytes[4 * i]);
  return out;
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  write_text(path, j.dump(2) + "\n");
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

void append_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw IoError("cannot open for appending: " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

std::string content_id(std::span<const unsigned char> bytes) {
  const std::uint64_t h =
      fnv1a64(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
  char buf[32];
  std::snprintf(buf, sizeof buf, "fnv1a64:%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace c2lab::io
