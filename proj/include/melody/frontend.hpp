#pragma once

#include <span>
#include <vector>

#include "melody/audio.hpp"

namespace melody {

inline constexpr int kFftSize = 1024;
inline constexpr int kHopSamples = 80;
inline constexpr int kNumBins = kFftSize / 2 + 1;
inline constexpr int kContextFrames = 31;
inline constexpr int kHalfContext = kContextFrames / 2;
inline constexpr double kLogFloor = 1e-7;

// Row-major [n_frames x 513] log-magnitudes; frame t is centred on sample
// 80 t, i.e. at t * 10 ms.
struct Spectrogram {
  int n_frames = 0;
  std::vector<float> values;

  static constexpr int n_bins = kNumBins;
  static constexpr double hop_seconds = 0.01;
  static constexpr double bin_hz = static_cast<double>(kTargetRate) / kFftSize;

  const float* row(int t) const { return values.data() + static_cast<std::size_t>(t) * kNumBins; }
  float* row(int t) { return values.data() + static_cast<std::size_t>(t) * kNumBins; }
  float at(int t, int bin) const { return row(t)[bin]; }
};

// Per-bin standardisation computed on the labelled training set.
struct NormStats {
  std::vector<float> mean = std::vector<float>(kNumBins, 0.0f);
  std::vector<float> inv_std = std::vector<float>(kNumBins, 1.0f);

  friend bool operator==(const NormStats&, const NormStats&) = default;
};

struct FramePatch {
  std::vector<float> values;  // [31 x 513], standardised
  int center_frame = 0;
};

// Mirror index into [0, n) without repeating the edge sample.
int reflect_index(long long i, int n);

int frames_for_samples(std::size_t n_samples);

Spectrogram stft_logmag(const AudioClip& clip);

NormStats compute_norm_stats(std::span<const Spectrogram* const> specs);

// Writes the standardised 31 x 513 window centred on `center` into `out`.
void extract_patch(const Spectrogram& spec, int center, const NormStats& stats, float* out);

std::vector<int> patch_centers(int n_frames, int stride, int offset = 0);

std::vector<FramePatch> make_patches(const Spectrogram& spec, int stride, const NormStats& stats);

}  // namespace melody
