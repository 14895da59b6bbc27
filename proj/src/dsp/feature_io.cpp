#include "wsvad/dsp/feature_io.hpp"

#include <sstream>

#include "wsvad/common/binary_io.hpp"
#include "wsvad/common/error.hpp"

namespace wsvad::dsp {

void write_features(const std::filesystem::path& path, const LogMelSpec& spec) {
  std::ostringstream out;
  io::write_bytes(out, "LMS0");
  io::write_u32(out, static_cast<std::uint32_t>(spec.frames()));
  io::write_u32(out, static_cast<std::uint32_t>(spec.bins()));
  io::write_u32(out, 0);
  io::write_f32s(out, spec.values.values());
  io::write_file_atomic(path, out.str());
}

LogMelSpec read_features(const std::filesystem::path& path) {
  std::istringstream in(io::read_file(path));
  if (io::read_bytes(in, 4) != "LMS0") {
    throw FormatError(path.string() + ": bad feature magic");
  }
  const auto frames = io::read_u32(in);
  const auto bins = io::read_u32(in);
  io::read_u32(in);
  LogMelSpec spec;
  spec.values = Matrix<float>(frames, bins);
  io::read_f32s(in, spec.values.values());
  spec.clip_id = path.stem().string();
  return spec;
}

}  // namespace wsvad::dsp
