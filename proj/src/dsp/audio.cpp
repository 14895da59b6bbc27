#include "wsvad/dsp/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "wsvad/common/binary_io.hpp"
#include "wsvad/common/error.hpp"

namespace wsvad::dsp {

AudioClip read_wav(const std::filesystem::path& path, std::string id) {
  const std::string bytes = io::read_file(path);
  std::istringstream in(bytes);
  if (io::read_bytes(in, 4) != "RIFF") {
    throw FormatError(path.string() + ": not a RIFF file");
  }
  io::read_u32(in);
  if (io::read_bytes(in, 4) != "WAVE") {
    throw FormatError(path.string() + ": not a WAVE file");
  }

  int channels = 0;
  int sample_rate = 0;
  int bits = 0;
  bool have_fmt = false;
  for (;;) {
    const std::string tag = io::read_bytes(in, 4);
    const std::uint32_t size = io::read_u32(in);
    if (tag == "fmt ") {
      const std::string fmt = io::read_bytes(in, size);
      std::istringstream f(fmt);
      const auto format = io::read_u16(f);
      channels = io::read_u16(f);
      sample_rate = static_cast<int>(io::read_u32(f));
      io::read_u32(f);
      io::read_u16(f);
      bits = io::read_u16(f);
      // 0xFFFE is WAVE_FORMAT_EXTENSIBLE; the subformat is assumed PCM.
      if (format != 1 && format != 0xFFFE) {
        throw FormatError(path.string() + ": only PCM WAV is supported");
      }
      have_fmt = true;
    } else if (tag == "data") {
      if (!have_fmt) throw FormatError(path.string() + ": data before fmt");
      if (bits != 16) {
        throw FormatError(path.string() + ": only 16-bit PCM is supported");
      }
      if (channels < 1 || channels > 2) {
        throw FormatError(path.string() + ": only mono/stereo supported");
      }
      if (sample_rate <= 0) {
        throw FormatError(path.string() + ": invalid sample rate");
      }
      const std::size_t frames = size / (2u * static_cast<unsigned>(channels));
      const std::string data = io::read_bytes(in, frames * 2 * channels);
      AudioClip clip;
      clip.sample_rate = sample_rate;
      clip.id = std::move(id);
      clip.samples.resize(frames);
      const auto* p = reinterpret_cast<const unsigned char*>(data.data());
      for (std::size_t i = 0; i < frames; ++i) {
        double acc = 0.0;
        for (int c = 0; c < channels; ++c) {
          const std::size_t k = 2 * (i * channels + c);
          const auto v = static_cast<std::int16_t>(p[k] | (p[k + 1] << 8));
          acc += v / 32768.0;
        }
        clip.samples[i] = static_cast<float>(acc / channels);
      }
      return clip;
    } else {
      io::read_bytes(in, size + (size & 1u));
    }
  }
}

void write_wav(const std::filesystem::path& path, const AudioClip& clip) {
  if (clip.sample_rate <= 0) throw InvalidInput("write_wav: bad sample rate");
  std::ostringstream out;
  const auto data_bytes = static_cast<std::uint32_t>(clip.samples.size() * 2);
  io::write_bytes(out, "RIFF");
  io::write_u32(out, 36 + data_bytes);
  io::write_bytes(out, "WAVEfmt ");
  io::write_u32(out, 16);
  io::write_u16(out, 1);
  io::write_u16(out, 1);
  io::write_u32(out, static_cast<std::uint32_t>(clip.sample_rate));
  io::write_u32(out, static_cast<std::uint32_t>(clip.sample_rate) * 2);
  io::write_u16(out, 2);
  io::write_u16(out, 16);
  io::write_bytes(out, "data");
  io::write_u32(out, data_bytes);
  for (float s : clip.samples) {
    const long q = std::clamp(std::lround(static_cast<double>(s) * 32768.0),
                              -32768L, 32767L);
    io::write_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
  }
  io::write_file_atomic(path, out.str());
}

double mean_power(const std::vector<float>& samples) {
  if (samples.empty()) return 0.0;
  double acc = 0.0;
  for (float s : samples) acc += static_cast<double>(s) * s;
  return acc / static_cast<double>(samples.size());
}

}  // namespace wsvad::dsp
