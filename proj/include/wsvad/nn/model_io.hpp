#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "wsvad/common/aligned.hpp"
#include "wsvad/nn/crnn.hpp"

namespace wsvad::nn {

/// Binary container shared by model files and training checkpoints:
///   "GPVD" | u32 format | u32 header length | canonical JSON header
///   then until EOF, per tensor:
///   u16 name length | name | u8 rank | u32 extents[rank] | f32 payload
/// All integers and floats are little-endian.
inline constexpr std::uint32_t kModelFormat = 1;

struct TensorRecord {
  std::string name;
  Shape shape;
  AlignedVector<float> data;
};

struct Container {
  nlohmann::json header = nlohmann::json::object();
  std::vector<TensorRecord> tensors;
};

std::string encode_container(const Container& c);
/// Throws FormatError on bad magic, unsupported format or truncation.
Container decode_container(std::string_view bytes);

/// Model container: header {"crnn": config, "format": 1} plus every
/// parameter (running statistics included) in store order.
Container model_container(const Crnn<float>& model);
/// Rebuilds a model from a container. Records whose names contain '/' are
/// auxiliary (optimizer moments, best-so-far weights) and are skipped. Throws FormatError on missing, misshapen, non-finite or
/// unknown tensors.
Crnn<float> model_from_container(const Container& c);

void save_model(const std::filesystem::path& path, const Crnn<float>& model);
Crnn<float> load_model(const std::filesystem::path& path);

}  // namespace wsvad::nn
