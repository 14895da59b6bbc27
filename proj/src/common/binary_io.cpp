#include "wsvad/common/binary_io.hpp"

#include <bit>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "wsvad/common/error.hpp"

namespace wsvad::io {

namespace {

template <typename U>
void put_le(std::ostream& out, U v) {
  char buf[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  }
  out.write(buf, sizeof(U));
}

template <typename U>
U get_le(std::istream& in) {
  unsigned char buf[sizeof(U)];
  in.read(reinterpret_cast<char*>(buf), sizeof(U));
  if (in.gcount() != static_cast<std::streamsize>(sizeof(U))) {
    throw FormatError("unexpected end of file");
  }
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    v |= static_cast<U>(buf[i]) << (8 * i);
  }
  return v;
}

}  // namespace

void write_u8(std::ostream& out, std::uint8_t v) { put_le(out, v); }
void write_u16(std::ostream& out, std::uint16_t v) { put_le(out, v); }
void write_u32(std::ostream& out, std::uint32_t v) { put_le(out, v); }
void write_f32(std::ostream& out, float v) {
  put_le(out, std::bit_cast<std::uint32_t>(v));
}

void write_f32s(std::ostream& out, std::span<const float> v) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size_bytes()));
  } else {
    for (float x : v) write_f32(out, x);
  }
}

void write_bytes(std::ostream& out, std::string_view bytes) {
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::uint8_t read_u8(std::istream& in) { return get_le<std::uint8_t>(in); }
std::uint16_t read_u16(std::istream& in) { return get_le<std::uint16_t>(in); }
std::uint32_t read_u32(std::istream& in) { return get_le<std::uint32_t>(in); }
float read_f32(std::istream& in) {
  return std::bit_cast<float>(get_le<std::uint32_t>(in));
}

void read_f32s(std::istream& in, std::span<float> v) {
  if constexpr (std::endian::native == std::endian::little) {
    in.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(v.size_bytes()));
    if (in.gcount() != static_cast<std::streamsize>(v.size_bytes())) {
      throw FormatError("unexpected end of file");
    }
  } else {
    for (float& x : v) x = read_f32(in);
  }
}

std::string read_bytes(std::istream& in, std::size_t n) {
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (in.gcount() != static_cast<std::streamsize>(n)) {
    throw FormatError("unexpected end of file");
  }
  return s;
}

void write_file_atomic(const std::filesystem::path& path,
                       std::string_view bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open for writing: " + tmp.string());
    write_bytes(out, bytes);
    if (!out) throw Error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace wsvad::io
