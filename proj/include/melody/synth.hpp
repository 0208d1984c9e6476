#pragma once

#include <cstdint>
#include <string>

#include "melody/audio.hpp"
#include "melody/pitch.hpp"

namespace melody {

enum class SongKind { kVocal, kInstrumental };

std::string to_string(SongKind kind);
SongKind song_kind_from_string(const std::string& s);

struct SongSpec {
  std::uint64_t seed = 0;
  SongKind kind = SongKind::kVocal;
  int key = 57;                  // root MIDI note, 52..64
  double tempo_bpm = 100;        // 60..140
  double duration_seconds = 8;   // 6..12
  double vibrato_rate_hz = 5;    // 4..7
  double vibrato_depth_cents = 30;  // 10..60, peak deviation
  double portamento_ms = 50;     // 30..80
  double voicing_density = 0.7;  // 0.5..0.9
  double snr_db = 0;             // -5..+10
};

// Draws every field uniformly from its range.
SongSpec sample_song_spec(std::uint64_t seed, SongKind kind);

// Throws ArgumentError when a field is outside its range.
void validate(const SongSpec& spec);

std::size_t sample_count(const SongSpec& spec);

// Note sequence on the key's major scale with exponential glides between
// notes and vibrato on the sustained parts. All-zero for instrumental songs.
F0Contour sample_contour(const SongSpec& spec);

// Additive harmonic voice: harmonics h <= min(12, 3600 / f0) at amplitude
// 1/h with a single integrated phase, 10 ms raised-cosine fades at voicing
// edges and exact silence on unvoiced frames.
AudioClip render_vocal(const F0Contour& contour, std::uint64_t seed, std::size_t n_samples = 0);

// Chord pads with a bass voice, a pink-noise bed 20 dB under the pads and
// percussive hits on every beat.
AudioClip render_accompaniment(const SongSpec& spec);

struct MixResult {
  AudioClip mixture;
  AudioClip vocal;   // scaled stem as it appears in the mixture
  AudioClip accomp;  // scaled stem as it appears in the mixture
  double vocal_gain = 0.0;  // applied to the vocal before peak limiting
};

// Scales the vocal so that the vocal/accompaniment power ratio over frames
// where the vocal sounds equals snr_db, then peak-limits the sum to 0.99.
MixResult mix(const AudioClip& vocal, const AudioClip& accomp, double snr_db);

struct RenderedTrack {
  AudioClip mixture;
  F0Contour contour;
  AudioClip vocal_stem;
  AudioClip accomp_stem;
};

RenderedTrack render_track(const SongSpec& spec);

}  // namespace melody
