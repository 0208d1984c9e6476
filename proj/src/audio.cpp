#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "melody/audio.hpp"
#include "melody/errors.hpp"

namespace melody {
namespace {

constexpr int kZeroCrossings = 16;
constexpr int kTableSteps = 512;  // per zero crossing
constexpr double kKaiserBeta = 8.6;
constexpr double kCutoff = 0.45;  // fraction of the lower sample rate

double bessel_i0(double x) {
  double sum = 1.0, term = 1.0;
  const double q = x * x / 4.0;
  for (int k = 1; k < 64; ++k) {
    term *= q / (static_cast<double>(k) * k);
    sum += term;
    if (term < 1e-17 * sum) break;
  }
  return sum;
}

// sinc(u) * kaiser(u / Z) sampled on u in [0, Z].
const std::vector<double>& kernel_table() {
  static const std::vector<double> table = [] {
    std::vector<double> t(kZeroCrossings * kTableSteps + 2, 0.0);
    const double norm = bessel_i0(kKaiserBeta);
    for (int i = 0; i <= kZeroCrossings * kTableSteps; ++i) {
      const double u = static_cast<double>(i) / kTableSteps;
      const double x = u / kZeroCrossings;
      const double w = bessel_i0(kKaiserBeta * std::sqrt(std::max(0.0, 1.0 - x * x))) / norm;
      const double s = i == 0 ? 1.0 : std::sin(std::numbers::pi * u) / (std::numbers::pi * u);
      t[i] = s * w;
    }
    return t;
  }();
  return table;
}

double kernel(double u) {
  u = std::abs(u);
  if (u >= kZeroCrossings) return 0.0;
  const auto& t = kernel_table();
  const double pos = u * kTableSteps;
  const auto i = static_cast<std::size_t>(pos);
  const double frac = pos - static_cast<double>(i);
  return t[i] + frac * (t[i + 1] - t[i]);
}

}  // namespace

AudioClip make_mono(std::vector<float> samples, int sample_rate) {
  AudioClip clip;
  clip.samples = std::move(samples);
  clip.sample_rate = sample_rate;
  clip.channels = 1;
  return clip;
}

void validate(const AudioClip& clip) {
  if (clip.channels < 1 || clip.channels > 2) throw DataError("audio must have 1 or 2 channels");
  if (clip.sample_rate <= 0) throw DataError("sample rate must be positive");
  if (clip.samples.empty()) throw DataError("zero-length audio");
  if (clip.samples.size() % clip.channels != 0) throw DataError("sample count not a multiple of channels");
  for (float s : clip.samples) {
    if (!std::isfinite(s)) throw DataError("non-finite audio sample");
  }
}

std::vector<float> resample(std::span<const float> input, double ratio) {
  if (!(ratio > 0.0) || !std::isfinite(ratio)) throw ArgumentError("resample ratio must be positive");
  if (ratio == 1.0) return {input.begin(), input.end()};
  const auto n_in = static_cast<std::ptrdiff_t>(input.size());
  const auto n_out = static_cast<std::size_t>(std::llround(static_cast<double>(input.size()) * ratio));
  // Cutoff in cycles per input sample; the kernel argument is measured in
  // zero crossings of the low-pass, 2 * fc * distance.
  const double fc = kCutoff * std::min(1.0, ratio);
  const double scale = 2.0 * fc;
  const double half_width = kZeroCrossings / scale;

  std::vector<float> out(n_out);
  for (std::size_t j = 0; j < n_out; ++j) {
    const double center = static_cast<double>(j) / ratio;
    const auto lo = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(std::ceil(center - half_width)));
    const auto hi = std::min<std::ptrdiff_t>(n_in - 1, static_cast<std::ptrdiff_t>(std::floor(center + half_width)));
    double acc = 0.0;
    for (std::ptrdiff_t i = lo; i <= hi; ++i) {
      acc += input[static_cast<std::size_t>(i)] * kernel(scale * (static_cast<double>(i) - center));
    }
    out[j] = static_cast<float>(scale * acc);
  }
  return out;
}

AudioClip to_mono_8k(const AudioClip& clip) {
  validate(clip);
  if (clip.sample_rate < kTargetRate) {
    throw DataError("sample rate below 8 kHz is not supported (no upsampling)");
  }
  if (clip.is_mono_8k()) return clip;

  std::vector<float> mono(clip.frames());
  if (clip.channels == 1) {
    mono = clip.samples;
  } else {
    for (std::size_t i = 0; i < mono.size(); ++i) {
      mono[i] = 0.5f * (clip.samples[2 * i] + clip.samples[2 * i + 1]);
    }
  }
  if (clip.sample_rate == kTargetRate) return make_mono(std::move(mono));
  const double ratio = static_cast<double>(kTargetRate) / clip.sample_rate;
  return make_mono(resample(mono, ratio));
}

double rms(std::span<const float> x) {
  if (x.empty()) return 0.0;
  double acc = 0.0;
  for (float v : x) acc += static_cast<double>(v) * v;
  return std::sqrt(acc / static_cast<double>(x.size()));
}

double peak(std::span<const float> x) {
  double p = 0.0;
  for (float v : x) p = std::max(p, static_cast<double>(std::abs(v)));
  return p;
}

void limit_peak(std::vector<float>& x, double target) {
  const double p = peak(x);
  if (p <= target) return;
  const double g = target / p;
  for (auto& v : x) v = static_cast<float>(v * g);
}

}  // namespace melody
