#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <mutex>
#include <numbers>

#include "melody/errors.hpp"
#include "melody/frontend.hpp"

namespace melody {
namespace {

struct FftwDeleter {
  void operator()(void* p) const { fftw_free(p); }
};

// Plans are created once; fftw_execute_dft_r2c on fresh aligned buffers is
// thread-safe.
fftw_plan shared_plan() {
  static std::once_flag once;
  static fftw_plan plan = nullptr;
  std::call_once(once, [] {
    std::unique_ptr<double, FftwDeleter> in(fftw_alloc_real(kFftSize));
    std::unique_ptr<fftw_complex, FftwDeleter> out(fftw_alloc_complex(kNumBins));
    plan = fftw_plan_dft_r2c_1d(kFftSize, in.get(), out.get(), FFTW_ESTIMATE);
  });
  return plan;
}

const std::vector<double>& hann_window() {
  static const std::vector<double> w = [] {
    std::vector<double> v(kFftSize);
    for (int k = 0; k < kFftSize; ++k) {
      v[k] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * k / kFftSize);
    }
    return v;
  }();
  return w;
}

}  // namespace

int reflect_index(long long i, int n) {
  if (n <= 1) return 0;
  const long long period = 2LL * (n - 1);
  long long m = i % period;
  if (m < 0) m += period;
  return static_cast<int>(m < n ? m : period - m);
}

int frames_for_samples(std::size_t n_samples) {
  return static_cast<int>((n_samples + kHopSamples - 1) / kHopSamples);
}

Spectrogram stft_logmag(const AudioClip& clip) {
  if (!clip.is_mono_8k()) throw ArgumentError("stft_logmag expects 8 kHz mono audio");
  validate(clip);
  const int n = static_cast<int>(clip.samples.size());
  Spectrogram spec;
  spec.n_frames = frames_for_samples(clip.samples.size());
  spec.values.resize(static_cast<std::size_t>(spec.n_frames) * kNumBins);

  const fftw_plan plan = shared_plan();
  const auto& window = hann_window();
  std::unique_ptr<double, FftwDeleter> in(fftw_alloc_real(kFftSize));
  std::unique_ptr<fftw_complex, FftwDeleter> out(fftw_alloc_complex(kNumBins));
  const float* x = clip.samples.data();

  for (int t = 0; t < spec.n_frames; ++t) {
    const long long start = static_cast<long long>(t) * kHopSamples - kFftSize / 2;
    double* buf = in.get();
    if (start >= 0 && start + kFftSize <= n) {
      for (int k = 0; k < kFftSize; ++k) buf[k] = x[start + k] * window[k];
    } else {
      for (int k = 0; k < kFftSize; ++k) buf[k] = x[reflect_index(start + k, n)] * window[k];
    }
    fftw_execute_dft_r2c(plan, buf, out.get());
    float* row = spec.row(t);
    const fftw_complex* c = out.get();
    for (int b = 0; b < kNumBins; ++b) {
      const double mag = std::hypot(c[b][0], c[b][1]);
      row[b] = static_cast<float>(std::log(mag + kLogFloor));
    }
  }
  return spec;
}

NormStats compute_norm_stats(std::span<const Spectrogram* const> specs) {
  std::vector<double> sum(kNumBins, 0.0), sq(kNumBins, 0.0);
  double count = 0.0;
  for (const Spectrogram* s : specs) {
    for (int t = 0; t < s->n_frames; ++t) {
      const float* row = s->row(t);
      for (int b = 0; b < kNumBins; ++b) {
        sum[b] += row[b];
        sq[b] += static_cast<double>(row[b]) * row[b];
      }
    }
    count += s->n_frames;
  }
  NormStats stats;
  if (count == 0.0) return stats;
  for (int b = 0; b < kNumBins; ++b) {
    const double mean = sum[b] / count;
    const double var = std::max(0.0, sq[b] / count - mean * mean);
    stats.mean[b] = static_cast<float>(mean);
    stats.inv_std[b] = static_cast<float>(1.0 / std::max(std::sqrt(var), 1e-3));
  }
  return stats;
}

void extract_patch(const Spectrogram& spec, int center, const NormStats& stats, float* out) {
  for (int r = 0; r < kContextFrames; ++r) {
    const int t = reflect_index(static_cast<long long>(center) - kHalfContext + r, spec.n_frames);
    const float* row = spec.row(t);
    float* dst = out + static_cast<std::size_t>(r) * kNumBins;
    for (int b = 0; b < kNumBins; ++b) dst[b] = (row[b] - stats.mean[b]) * stats.inv_std[b];
  }
}

std::vector<int> patch_centers(int n_frames, int stride, int offset) {
  if (stride < 1) throw ArgumentError("patch stride must be >= 1");
  std::vector<int> centers;
  for (int c = offset; c < n_frames; c += stride) centers.push_back(c);
  return centers;
}

std::vector<FramePatch> make_patches(const Spectrogram& spec, int stride, const NormStats& stats) {
  std::vector<FramePatch> patches;
  for (int c : patch_centers(spec.n_frames, stride)) {
    FramePatch p;
    p.center_frame = c;
    p.values.resize(static_cast<std::size_t>(kContextFrames) * kNumBins);
    extract_patch(spec, c, stats, p.values.data());
    patches.push_back(std::move(p));
  }
  return patches;
}

}  // namespace melody
