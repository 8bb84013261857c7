#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "beamkit/error.hpp"
#include "beamkit/signal_io.hpp"

static_assert(std::endian::native == std::endian::little,
              "WAV I/O assumes a little-endian host");

namespace beamkit {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;
constexpr double kPcm16Scale = 32767.0;

template <typename T>
T load(const std::vector<char>& bytes, std::size_t offset) {
  T value;
  std::memcpy(&value, bytes.data() + offset, sizeof(T));
  return value;
}

template <typename T>
void store(std::ofstream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

}  // namespace

MultichannelWave read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open WAV file: " + path.string());
  const std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                                std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw IoError("not a RIFF/WAVE file: " + path.string());
  }

  std::uint16_t format = 0;
  std::uint16_t channels = 0;
  std::uint32_t rate = 0;
  std::uint16_t bits = 0;
  bool have_fmt = false;
  std::size_t data_offset = 0;
  std::size_t data_size = 0;
  bool have_data = false;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::string id(bytes.data() + pos, 4);
    const auto size = load<std::uint32_t>(bytes, pos + 4);
    const std::size_t body = pos + 8;
    if (id == "fmt ") {
      if (size < 16 || body + size > bytes.size()) {
        throw IoError("truncated fmt chunk in " + path.string());
      }
      format = load<std::uint16_t>(bytes, body);
      channels = load<std::uint16_t>(bytes, body + 2);
      rate = load<std::uint32_t>(bytes, body + 4);
      bits = load<std::uint16_t>(bytes, body + 14);
      if (format == kFormatExtensible && size >= 26) {
        format = load<std::uint16_t>(bytes, body + 24);
      }
      have_fmt = true;
    } else if (id == "data") {
      data_offset = body;
      data_size = std::min<std::size_t>(size, bytes.size() - body);
      have_data = true;
    }
    pos = body + size + (size & 1u);
  }
  if (!have_fmt || !have_data) {
    throw IoError("missing fmt or data chunk in " + path.string());
  }
  const bool pcm16 = format == kFormatPcm && bits == 16;
  const bool float32 = format == kFormatFloat && bits == 32;
  if (!pcm16 && !float32) {
    throw IoError("unsupported WAV encoding (format " + std::to_string(format) + ", " +
                  std::to_string(bits) + " bits) in " + path.string());
  }
  if (channels == 0 || rate == 0) throw IoError("invalid WAV header in " + path.string());
  const std::size_t frame_bytes = static_cast<std::size_t>(channels) * bits / 8;
  const std::size_t count = data_size / frame_bytes;
  if (count == 0) throw IoError("WAV file has no audio: " + path.string());

  MultichannelWave wave;
  wave.sample_rate = static_cast<int>(rate);
  wave.samples.resize(channels, static_cast<Eigen::Index>(count));
  for (std::size_t i = 0; i < count; ++i) {
    for (std::uint16_t c = 0; c < channels; ++c) {
      const std::size_t at = data_offset + i * frame_bytes + c * bits / 8;
      double v = 0.0;
      if (pcm16) {
        v = std::max(-1.0, load<std::int16_t>(bytes, at) / kPcm16Scale);
      } else {
        v = load<float>(bytes, at);
        if (!std::isfinite(v)) throw IoError("non-finite sample in " + path.string());
      }
      wave.samples(c, static_cast<Eigen::Index>(i)) = v;
    }
  }
  return wave;
}

void write_wav(const std::filesystem::path& path, const MultichannelWave& wave,
               WavEncoding encoding) {
  wave.validate();
  if (wave.samples.cwiseAbs().maxCoeff() > 1.0) {
    throw InvalidArgument("sample magnitude exceeds 1.0; refusing to clip when writing " +
                          path.string());
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());

  const auto channels = static_cast<std::uint16_t>(wave.channels());
  const auto count = static_cast<std::uint32_t>(wave.length());
  const std::uint16_t bits = encoding == WavEncoding::kPcm16 ? 16 : 32;
  const std::uint16_t block = static_cast<std::uint16_t>(channels * bits / 8);
  const std::uint32_t data_size = count * block;

  out.write("RIFF", 4);
  store<std::uint32_t>(out, 36 + data_size);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  store<std::uint32_t>(out, 16);
  store<std::uint16_t>(out, encoding == WavEncoding::kPcm16 ? kFormatPcm : kFormatFloat);
  store<std::uint16_t>(out, channels);
  store<std::uint32_t>(out, static_cast<std::uint32_t>(wave.sample_rate));
  store<std::uint32_t>(out, static_cast<std::uint32_t>(wave.sample_rate) * block);
  store<std::uint16_t>(out, block);
  store<std::uint16_t>(out, bits);
  out.write("data", 4);
  store<std::uint32_t>(out, data_size);
  for (std::uint32_t i = 0; i < count; ++i) {
    for (std::uint16_t c = 0; c < channels; ++c) {
      const double v = wave.samples(c, i);
      if (encoding == WavEncoding::kPcm16) {
        store<std::int16_t>(out, static_cast<std::int16_t>(std::lround(v * kPcm16Scale)));
      } else {
        store<float>(out, static_cast<float>(v));
      }
    }
  }
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace beamkit
