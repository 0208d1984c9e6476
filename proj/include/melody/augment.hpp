#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "melody/audio.hpp"
#include "melody/pitch.hpp"

namespace melody {

struct LowShelf {
  double corner_hz;
  double gain_db;
};
struct HighShelf {
  double corner_hz;
  double gain_db;
};
struct LowPass {
  double cutoff_hz;
};
struct HighPass {
  double cutoff_hz;
};
struct Overdrive {
  double gain_db;
};
struct Phaser {
  double rate_hz;
  double lfo_phase;  // radians
};
struct Reverb {
  double feedback;
  double wet;
};

using Effect = std::variant<LowShelf, HighShelf, LowPass, HighPass, Overdrive, Phaser, Reverb>;

inline constexpr int kNumEffectKinds = std::variant_size_v<Effect>;
inline constexpr double kEffectInclusionProbability = 0.4;

struct EffectChain {
  std::vector<Effect> effects;
  std::uint64_t seed = 0;
};

// RandAudioAugment: each effect kind independently included with
// probability 0.4, parameters uniform over fixed ranges. Deterministic in the
// seed.
EffectChain raa_sample(std::uint64_t seed);

// Applies the effects in order. Same length and rate; when the result peaks
// above 0.99 it is rescaled to 0.99. An empty chain returns the input
// unchanged.
AudioClip apply_chain(const AudioClip& clip, const EffectChain& chain);

std::string effect_name(const Effect& effect);
std::string describe(const EffectChain& chain);

// Transposes by resampling (duration scales by 2^(-s/12)) and maps the
// contour onto the new 10 ms grid with frequencies scaled by 2^(s/12).
std::pair<AudioClip, F0Contour> pitch_shift_pair(const AudioClip& clip, const F0Contour& contour,
                                                 int semitones);

}  // namespace melody
