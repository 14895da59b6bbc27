#include "wsvad/nn/model_io.hpp"

#include <cmath>
#include <set>
#include <sstream>

#include "wsvad/common/binary_io.hpp"

namespace wsvad::nn {

namespace {
constexpr std::string_view kMagic = "GPVD";
}

std::string encode_container(const Container& c) {
  std::ostringstream out;
  io::write_bytes(out, kMagic);
  io::write_u32(out, kModelFormat);
  const std::string header = c.header.dump();
  io::write_u32(out, static_cast<std::uint32_t>(header.size()));
  io::write_bytes(out, header);
  for (const auto& t : c.tensors) {
    if (t.name.size() > 0xFFFF) throw InvalidInput("tensor name too long: " + t.name);
    if (t.shape.size() > 0xFF) throw InvalidInput("tensor rank too large: " + t.name);
    if (shape_size(t.shape) != t.data.size()) {
      throw ShapeError("tensor record " + t.name + " data does not match shape");
    }
    io::write_u16(out, static_cast<std::uint16_t>(t.name.size()));
    io::write_bytes(out, t.name);
    io::write_u8(out, static_cast<std::uint8_t>(t.shape.size()));
    for (auto e : t.shape) io::write_u32(out, static_cast<std::uint32_t>(e));
    io::write_f32s(out, t.data);
  }
  return out.str();
}

Container decode_container(std::string_view bytes) {
  std::istringstream in{std::string(bytes)};
  if (io::read_bytes(in, kMagic.size()) != kMagic) throw FormatError("not a model container");
  const auto format = io::read_u32(in);
  if (format != kModelFormat) {
    throw FormatError("unsupported model format " + std::to_string(format));
  }
  Container c;
  const auto header_len = io::read_u32(in);
  try {
    c.header = nlohmann::json::parse(io::read_bytes(in, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad container header: ") + e.what());
  }
  while (in.peek() != std::char_traits<char>::eof()) {
    TensorRecord t;
    const auto name_len = io::read_u16(in);
    t.name = io::read_bytes(in, name_len);
    const auto rank = io::read_u8(in);
    for (std::uint8_t i = 0; i < rank; ++i) t.shape.push_back(io::read_u32(in));
    const std::size_t n = shape_size(t.shape);
    if (n > bytes.size()) throw FormatError("tensor " + t.name + " larger than file");
    t.data.resize(n);
    io::read_f32s(in, t.data);
    c.tensors.push_back(std::move(t));
  }
  return c;
}

Container model_container(const Crnn<float>& model) {
  Container c;
  c.header = {{"crnn", model.config().to_json()}, {"format", kModelFormat}};
  for (const auto& p : model.params().all()) {
    c.tensors.push_back({p.name, p.value.shape(), p.value.storage()});
  }
  return c;
}

Crnn<float> model_from_container(const Container& c) {
  if (!c.header.is_object() || !c.header.contains("crnn")) {
    throw FormatError("container holds no model config");
  }
  CrnnConfig cfg;
  try {
    cfg = CrnnConfig::from_json(c.header.at("crnn"));
  } catch (const InvalidInput& e) {
    throw FormatError(e.what());
  }
  Crnn<float> model(cfg);
  std::set<std::string> seen;
  for (const auto& t : c.tensors) {
    if (t.name.find('/') != std::string::npos) continue;
    if (!model.params().contains(t.name)) throw FormatError("unknown tensor " + t.name);
    if (!seen.insert(t.name).second) throw FormatError("duplicate tensor " + t.name);
    auto& p = model.params().at(t.name);
    if (p.value.shape() != t.shape) {
      throw FormatError("tensor " + t.name + " has shape " + shape_string(t.shape) +
                        ", expected " + shape_string(p.value.shape()));
    }
    for (float v : t.data) {
      if (!std::isfinite(v)) throw FormatError("tensor " + t.name + " is not finite");
    }
    p.value = Tensor<float>(t.shape, t.data);
  }
  if (seen.size() != model.params().size()) throw FormatError("model file is missing tensors");
  return model;
}

void save_model(const std::filesystem::path& path, const Crnn<float>& model) {
  io::write_file_atomic(path, encode_container(model_container(model)));
}

Crnn<float> load_model(const std::filesystem::path& path) {
  return model_from_container(decode_container(io::read_file(path)));
}

}  // namespace wsvad::nn
