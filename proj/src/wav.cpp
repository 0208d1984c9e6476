#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include "melody/audio.hpp"
#include "melody/errors.hpp"

namespace melody {
namespace {

static_assert(std::endian::native == std::endian::little,
              "WAV I/O assumes a little-endian host");

std::uint32_t read_u32(const char* p) {
  std::uint32_t v;
  std::memcpy(&v, p, 4);
  return v;
}
std::uint16_t read_u16(const char* p) {
  std::uint16_t v;
  std::memcpy(&v, p, 2);
  return v;
}

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

}  // namespace

AudioClip load_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open WAV file: " + path.string());
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (data.size() < 12 || data.compare(0, 4, "RIFF") != 0 || data.compare(8, 4, "WAVE") != 0) {
    throw DataError("not a RIFF/WAVE file: " + path.string());
  }

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  const char* pcm = nullptr;
  std::size_t pcm_bytes = 0;

  std::size_t pos = 12;
  while (pos + 8 <= data.size()) {
    const std::string id = data.substr(pos, 4);
    std::size_t size = read_u32(data.data() + pos + 4);
    const std::size_t body = pos + 8;
    if (body + size > data.size()) size = data.size() - body;  // truncated tail
    if (id == "fmt ") {
      if (size < 16) throw DataError("malformed fmt chunk: " + path.string());
      const char* f = data.data() + body;
      format = read_u16(f);
      channels = read_u16(f + 2);
      rate = read_u32(f + 4);
      bits = read_u16(f + 14);
      if (format == kFormatExtensible && size >= 26) format = read_u16(f + 24);
      have_fmt = true;
    } else if (id == "data") {
      pcm = data.data() + body;
      pcm_bytes = size;
    }
    pos = body + size + (size & 1);
  }
  if (!have_fmt || pcm == nullptr) throw DataError("missing fmt or data chunk: " + path.string());
  if (channels < 1 || channels > 2) throw DataError("unsupported channel count in " + path.string());
  if (rate == 0) throw DataError("zero sample rate in " + path.string());

  AudioClip clip;
  clip.sample_rate = static_cast<int>(rate);
  clip.channels = channels;
  if (format == kFormatPcm && bits == 16) {
    const std::size_t n = pcm_bytes / 2;
    clip.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::int16_t v;
      std::memcpy(&v, pcm + 2 * i, 2);
      clip.samples[i] = static_cast<float>(v) / 32768.0f;
    }
  } else if (format == kFormatFloat && bits == 32) {
    const std::size_t n = pcm_bytes / 4;
    clip.samples.resize(n);
    std::memcpy(clip.samples.data(), pcm, n * 4);
  } else {
    throw DataError("unsupported WAV encoding (need PCM16 or float32): " + path.string());
  }
  clip.samples.resize(clip.samples.size() - clip.samples.size() % channels);
  if (clip.samples.empty()) throw DataError("zero-length audio: " + path.string());
  validate(clip);
  return clip;
}

void write_wav(const std::filesystem::path& path, const AudioClip& clip, WavEncoding encoding) {
  validate(clip);
  const bool is_float = encoding == WavEncoding::kFloat32;
  const std::uint16_t bits = is_float ? 32 : 16;
  const std::uint16_t block = static_cast<std::uint16_t>(clip.channels * bits / 8);
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(clip.samples.size() * bits / 8);

  std::string out;
  out.reserve(44 + data_bytes);
  out += "RIFF";
  put<std::uint32_t>(out, 36 + data_bytes);
  out += "WAVEfmt ";
  put<std::uint32_t>(out, 16);
  put<std::uint16_t>(out, is_float ? kFormatFloat : kFormatPcm);
  put<std::uint16_t>(out, static_cast<std::uint16_t>(clip.channels));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(clip.sample_rate));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(clip.sample_rate) * block);
  put<std::uint16_t>(out, block);
  put<std::uint16_t>(out, bits);
  out += "data";
  put<std::uint32_t>(out, data_bytes);
  if (is_float) {
    out.append(reinterpret_cast<const char*>(clip.samples.data()), clip.samples.size() * 4);
  } else {
    for (float s : clip.samples) {
      // Same scale as the reader, so PCM16 round trips are within half an LSB.
      const float scaled = std::clamp(std::round(s * 32768.0f), -32768.0f, 32767.0f);
      put<std::int16_t>(out, static_cast<std::int16_t>(scaled));
    }
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write WAV file: " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw DataError("write failed: " + path.string());
}

}  // namespace melody
