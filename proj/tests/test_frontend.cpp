#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "melody/errors.hpp"
#include "melody/frontend.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace melody;

TEST(Frontend, FrameCountIsCeilOfHop) {
  EXPECT_EQ(frames_for_samples(8000), 100);
  EXPECT_EQ(frames_for_samples(8001), 101);
  EXPECT_EQ(frames_for_samples(80), 1);
  const Spectrogram s = stft_logmag(testutil::sine(300.0, 1.0));
  EXPECT_EQ(s.n_frames, 100);
  EXPECT_EQ(s.values.size(), 100u * 513u);
}

TEST(Frontend, SilenceGivesLogFloor) {
  const Spectrogram s = stft_logmag(make_mono(std::vector<float>(4000, 0.0f)));
  for (float v : s.values) EXPECT_FLOAT_EQ(v, static_cast<float>(std::log(1e-7)));
}

TEST(Frontend, RejectsWrongRate) {
  EXPECT_THROW(stft_logmag(testutil::sine(300.0, 0.2, 1.0, 16000)), ArgumentError);
}

TEST(Frontend, MatchesDirectDft) {
  // Bin-centred sine: bin 64 = 500 Hz.
  const AudioClip clip = testutil::sine(500.0, 1.0, 0.5);
  const Spectrogram s = stft_logmag(clip);
  const int t = 50;
  std::vector<double> frame(1024);
  for (int k = 0; k < 1024; ++k) frame[k] = clip.samples[t * 80 - 512 + k];
  int argmax = 0;
  for (int b = 0; b < 513; ++b) {
    if (s.at(t, b) > s.at(t, argmax)) argmax = b;
  }
  EXPECT_EQ(argmax, 64);
  for (int b : {0, 10, 63, 64, 65, 200, 512}) {
    const double expected = std::log(oracle::dft_magnitude(frame, b) + 1e-7);
    EXPECT_NEAR(s.at(t, b), expected, 1e-3 * std::max(1.0, std::abs(expected))) << b;
  }
}

TEST(Frontend, ReflectPaddingAtEdges) {
  const AudioClip clip = testutil::sine(437.0, 0.5, 0.5);
  const Spectrogram s = stft_logmag(clip);
  const int n = static_cast<int>(clip.samples.size());
  std::vector<double> frame(1024);
  for (int k = 0; k < 1024; ++k) {
    long i = k - 512;
    if (i < 0) i = -i;
    frame[k] = clip.samples[static_cast<std::size_t>(i)];
  }
  (void)n;
  for (int b : {0, 56, 100}) {
    EXPECT_NEAR(s.at(0, b), std::log(oracle::dft_magnitude(frame, b) + 1e-7), 1e-3) << b;
  }
}

TEST(Frontend, HopTranslationShiftsFrames) {
  // Delaying the signal by one hop moves each frame by exactly one index.
  AudioClip a = testutil::sine(321.0, 1.0, 0.5);
  std::vector<float> delayed(80, 0.0f);
  delayed.insert(delayed.end(), a.samples.begin(), a.samples.end());
  const Spectrogram sa = stft_logmag(a);
  const Spectrogram sb = stft_logmag(make_mono(delayed));
  for (int t = 10; t < 80; ++t) {
    for (int b = 0; b < 513; b += 37) EXPECT_NEAR(sb.at(t + 1, b), sa.at(t, b), 1e-4);
  }
}

TEST(Frontend, ReflectIndex) {
  EXPECT_EQ(reflect_index(-1, 10), 1);
  EXPECT_EQ(reflect_index(-3, 10), 3);
  EXPECT_EQ(reflect_index(10, 10), 8);
  EXPECT_EQ(reflect_index(5, 10), 5);
  EXPECT_EQ(reflect_index(7, 1), 0);
}

TEST(Frontend, PatchesAreWindowedAndStandardised) {
  const Spectrogram s = stft_logmag(testutil::sine(250.0, 0.4, 0.5));
  NormStats stats;
  for (int b = 0; b < 513; ++b) {
    stats.mean[b] = 0.5f;
    stats.inv_std[b] = 2.0f;
  }
  const auto patches = make_patches(s, 31, stats);
  ASSERT_EQ(patches.size(), static_cast<std::size_t>((s.n_frames + 30) / 31));
  for (const auto& p : patches) {
    ASSERT_EQ(p.values.size(), 31u * 513u);
    for (int r = 0; r < 31; ++r) {
      int t = p.center_frame - 15 + r;
      if (t < 0) t = -t;
      if (t >= s.n_frames) t = 2 * (s.n_frames - 1) - t;
      for (int b = 0; b < 513; b += 51) {
        EXPECT_FLOAT_EQ(p.values[r * 513 + b], (s.at(t, b) - 0.5f) * 2.0f);
      }
    }
  }
}

TEST(Frontend, NormStatsStandardiseTrainingData) {
  const Spectrogram a = stft_logmag(testutil::sine(250.0, 0.5, 0.5));
  const Spectrogram b = stft_logmag(testutil::sine(700.0, 0.5, 0.2));
  const Spectrogram* specs[] = {&a, &b};
  const NormStats st = compute_norm_stats(specs);
  for (int bin : {10, 32, 90, 400}) {
    double sum = 0.0, sq = 0.0;
    int n = 0;
    for (const Spectrogram* s : specs) {
      for (int t = 0; t < s->n_frames; ++t) {
        const double z = (s->at(t, bin) - st.mean[bin]) * st.inv_std[bin];
        sum += z;
        sq += z * z;
        ++n;
      }
    }
    EXPECT_NEAR(sum / n, 0.0, 1e-3);
    EXPECT_NEAR(sq / n, 1.0, 1e-2);
  }
}

TEST(Frontend, PatchCentres) {
  EXPECT_EQ(patch_centers(70, 31), (std::vector<int>{0, 31, 62}));
  EXPECT_EQ(patch_centers(70, 31, 5), (std::vector<int>{5, 36, 67}));
  EXPECT_THROW(patch_centers(10, 0), ArgumentError);
}
