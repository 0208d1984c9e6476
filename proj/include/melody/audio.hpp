#pragma once

#include <filesystem>
#include <span>
#include <vector>

namespace melody {

inline constexpr int kTargetRate = 8000;

// Interleaved PCM audio scaled to [-1, 1].
struct AudioClip {
  std::vector<float> samples;
  int sample_rate = kTargetRate;
  int channels = 1;

  std::size_t frames() const { return channels > 0 ? samples.size() / channels : 0; }
  double duration_seconds() const {
    return static_cast<double>(frames()) / sample_rate;
  }
  bool is_mono_8k() const { return channels == 1 && sample_rate == kTargetRate; }
};

AudioClip make_mono(std::vector<float> samples, int sample_rate = kTargetRate);

// Throws DataError on invalid clips (non-finite samples, empty, bad layout).
void validate(const AudioClip& clip);

enum class WavEncoding { kPcm16, kFloat32 };

AudioClip load_wav(const std::filesystem::path& path);
void write_wav(const std::filesystem::path& path, const AudioClip& clip,
               WavEncoding encoding = WavEncoding::kFloat32);

// Arithmetic mean of channels followed by band-limited decimation to 8 kHz.
// Bit-identical passthrough for 8 kHz mono input.
AudioClip to_mono_8k(const AudioClip& clip);

// Changes the number of samples by `ratio` (output length round(n * ratio)),
// reading input position j / ratio for output sample j. A Kaiser-windowed
// sinc low-pass at 0.45 of the lower of the two rates removes content that
// would alias.
std::vector<float> resample(std::span<const float> input, double ratio);

double rms(std::span<const float> x);
double peak(std::span<const float> x);

// Rescales in place so that the peak is `target` when it exceeds `target`.
void limit_peak(std::vector<float>& x, double target = 0.99);

}  // namespace melody
