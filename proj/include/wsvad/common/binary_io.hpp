#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace wsvad::io {

// Little-endian primitives, independent of host byte order.
void write_u8(std::ostream& out, std::uint8_t v);
void write_u16(std::ostream& out, std::uint16_t v);
void write_u32(std::ostream& out, std::uint32_t v);
void write_f32(std::ostream& out, float v);
void write_f32s(std::ostream& out, std::span<const float> v);
void write_bytes(std::ostream& out, std::string_view bytes);

std::uint8_t read_u8(std::istream& in);
std::uint16_t read_u16(std::istream& in);
std::uint32_t read_u32(std::istream& in);
float read_f32(std::istream& in);
void read_f32s(std::istream& in, std::span<float> v);
std::string read_bytes(std::istream& in, std::size_t n);

/// Writes `bytes` to `path` via a temporary sibling and rename, so readers
/// never observe a partially written file.
void write_file_atomic(const std::filesystem::path& path,
                       std::string_view bytes);

std::string read_file(const std::filesystem::path& path);

}  // namespace wsvad::io
