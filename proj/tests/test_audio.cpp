#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <numbers>

#include "melody/audio.hpp"
#include "melody/errors.hpp"
#include "test_util.hpp"

using namespace melody;

namespace {

// Writes a canonical 16-bit PCM WAV by hand so the reader is checked against
// an independent encoder.
void write_pcm16_by_hand(const std::filesystem::path& path, const std::vector<std::int16_t>& data, int rate,
                         int channels) {
  std::ofstream f(path, std::ios::binary);
  auto u32 = [&](std::uint32_t v) { f.write(reinterpret_cast<const char*>(&v), 4); };
  auto u16 = [&](std::uint16_t v) { f.write(reinterpret_cast<const char*>(&v), 2); };
  const std::uint32_t bytes = static_cast<std::uint32_t>(data.size() * 2);
  f.write("RIFF", 4);
  u32(36 + bytes);
  f.write("WAVE", 4);
  f.write("fmt ", 4);
  u32(16);
  u16(1);
  u16(static_cast<std::uint16_t>(channels));
  u32(static_cast<std::uint32_t>(rate));
  u32(static_cast<std::uint32_t>(rate * channels * 2));
  u16(static_cast<std::uint16_t>(channels * 2));
  u16(16);
  f.write("data", 4);
  u32(bytes);
  f.write(reinterpret_cast<const char*>(data.data()), bytes);
}

}  // namespace

TEST(Wav, ReadsHandWrittenPcm16) {
  testutil::TempDir dir("wav");
  write_pcm16_by_hand(dir / "a.wav", {0, 16384, -32768, 32767}, 8000, 1);
  const AudioClip c = load_wav(dir / "a.wav");
  ASSERT_EQ(c.samples.size(), 4u);
  EXPECT_EQ(c.sample_rate, 8000);
  EXPECT_EQ(c.channels, 1);
  EXPECT_FLOAT_EQ(c.samples[0], 0.0f);
  EXPECT_FLOAT_EQ(c.samples[1], 0.5f);
  EXPECT_FLOAT_EQ(c.samples[2], -1.0f);
  EXPECT_NEAR(c.samples[3], 1.0f, 1e-4);
}

TEST(Wav, FloatRoundTripIsExact) {
  testutil::TempDir dir("wav");
  const AudioClip a = testutil::sine(330.0, 0.3, 0.7);
  write_wav(dir / "f.wav", a, WavEncoding::kFloat32);
  const AudioClip b = load_wav(dir / "f.wav");
  EXPECT_EQ(b.samples, a.samples);
  EXPECT_EQ(b.sample_rate, a.sample_rate);
}

TEST(Wav, Pcm16RoundTripWithinQuantisation) {
  testutil::TempDir dir("wav");
  const AudioClip a = testutil::sine(330.0, 0.3, 0.7);
  write_wav(dir / "p.wav", a, WavEncoding::kPcm16);
  const AudioClip b = load_wav(dir / "p.wav");
  ASSERT_EQ(b.samples.size(), a.samples.size());
  for (std::size_t i = 0; i < a.samples.size(); ++i) EXPECT_NEAR(b.samples[i], a.samples[i], 1.0 / 32767.0);
}

TEST(Wav, RejectsMissingAndCorruptFiles) {
  testutil::TempDir dir("wav");
  EXPECT_THROW(load_wav(dir / "missing.wav"), DataError);
  {
    std::ofstream f(dir / "junk.wav", std::ios::binary);
    f << "this is not a wave file at all";
  }
  EXPECT_THROW(load_wav(dir / "junk.wav"), DataError);
}

TEST(ToMono8k, PassthroughIsBitIdentical) {
  const AudioClip a = testutil::sine(200.0, 0.5, 0.5);
  const AudioClip b = to_mono_8k(a);
  EXPECT_EQ(b.samples, a.samples);
  EXPECT_TRUE(b.is_mono_8k());
}

TEST(ToMono8k, AveragesChannels) {
  AudioClip st;
  st.sample_rate = 8000;
  st.channels = 2;
  for (int i = 0; i < 100; ++i) {
    st.samples.push_back(0.5f);
    st.samples.push_back(-0.25f);
  }
  const AudioClip m = to_mono_8k(st);
  ASSERT_EQ(m.samples.size(), 100u);
  for (float v : m.samples) EXPECT_FLOAT_EQ(v, 0.125f);
}

TEST(ToMono8k, StereoFileDownmix) {
  testutil::TempDir dir("wav");
  std::vector<std::int16_t> data;
  for (int i = 0; i < 160; ++i) {
    data.push_back(8192);
    data.push_back(-8192);
  }
  write_pcm16_by_hand(dir / "s.wav", data, 8000, 2);
  const AudioClip m = to_mono_8k(load_wav(dir / "s.wav"));
  ASSERT_EQ(m.samples.size(), 160u);
  for (float v : m.samples) EXPECT_FLOAT_EQ(v, 0.0f);
}

TEST(ToMono8k, AntiAliasingSuppressesContentAboveNyquist) {
  // 6 kHz at 16 kHz would fold to 2 kHz without a low-pass.
  const AudioClip hi = testutil::sine(6000.0, 1.0, 1.0, 16000);
  const AudioClip out = to_mono_8k(hi);
  EXPECT_EQ(out.sample_rate, 8000);
  EXPECT_NEAR(static_cast<double>(out.samples.size()), 8000.0, 1.0);
  const double in_rms = rms(hi.samples);
  // Skip the filter edges.
  std::span<const float> mid(out.samples.data() + 200, out.samples.size() - 400);
  EXPECT_LT(rms(mid), 0.05 * in_rms);
}

TEST(ToMono8k, PassbandToneSurvivesDecimation) {
  const AudioClip lo = testutil::sine(500.0, 1.0, 0.8, 16000);
  const AudioClip out = to_mono_8k(lo);
  std::span<const float> mid(out.samples.data() + 200, out.samples.size() - 400);
  EXPECT_NEAR(rms(mid), 0.8 / std::sqrt(2.0), 0.02);
}

TEST(ToMono8k, Idempotent) {
  const AudioClip once = to_mono_8k(testutil::sine(440.0, 0.5, 0.5, 44100));
  const AudioClip twice = to_mono_8k(once);
  EXPECT_EQ(once.samples, twice.samples);
}

TEST(Validate, RejectsNonFinite) {
  AudioClip c = testutil::sine(100.0, 0.1);
  c.samples[3] = std::nanf("");
  EXPECT_THROW(validate(c), DataError);
}

TEST(Levels, RmsPeakAndLimiter) {
  std::vector<float> x = {0.5f, -2.0f, 1.0f};
  EXPECT_DOUBLE_EQ(peak(x), 2.0);
  EXPECT_NEAR(rms(x), std::sqrt((0.25 + 4.0 + 1.0) / 3.0), 1e-12);
  limit_peak(x, 0.99);
  EXPECT_NEAR(peak(x), 0.99, 1e-6);
  std::vector<float> quiet = {0.1f, -0.2f};
  limit_peak(quiet, 0.99);
  EXPECT_FLOAT_EQ(quiet[1], -0.2f);
}
