#pragma once

#include <filesystem>

#include "wsvad/dsp/logmel.hpp"

namespace wsvad::dsp {

// Feature dump layout: "LMS0", u32 T, u32 D, u32 reserved (0), then T*D
// little-endian f32 in row-major order.
void write_features(const std::filesystem::path& path, const LogMelSpec& spec);
LogMelSpec read_features(const std::filesystem::path& path);

}  // namespace wsvad::dsp
