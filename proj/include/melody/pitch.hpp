#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace melody {

inline constexpr int kNumClasses = 442;
inline constexpr int kNumPitchBins = 441;
inline constexpr int kBinsPerSemitone = 8;
inline constexpr int kBinsPerOctave = 12 * kBinsPerSemitone;
inline constexpr double kLowestHz = 82.4;  // E2, centre of bin 1
inline constexpr double kHopSeconds = 0.01;

// Index 0 is the non-vocal class; 1..441 are ascending 1/8-semitone bins.
struct PitchLabel {
  int index = 0;

  bool voiced() const { return index != 0; }
  friend bool operator==(PitchLabel, PitchLabel) = default;
};

// Frame t sits at t * hop_seconds. 0 Hz marks an unvoiced frame.
struct F0Contour {
  double hop_seconds = kHopSeconds;
  std::vector<double> freqs;

  std::size_t size() const { return freqs.size(); }
  double time_of(std::size_t t) const { return static_cast<double>(t) * hop_seconds; }
  friend bool operator==(const F0Contour&, const F0Contour&) = default;
};

struct LabelResult {
  PitchLabel label;
  bool clamped = false;
};

LabelResult quantize_frequency(double hz);
PitchLabel freq_to_label(double hz);
double label_to_freq(PitchLabel label);

struct LabelSequence {
  std::vector<PitchLabel> labels;
  std::size_t clamped = 0;  // voiced frames forced onto a boundary bin
};

LabelSequence contour_to_labels(const F0Contour& contour);
LabelSequence shift_labels(std::span<const PitchLabel> labels, int semitones);
F0Contour labels_to_contour(std::span<const PitchLabel> labels);

// Throws DataError for negative or non-finite values.
void validate(const F0Contour& contour);

// MIREX two-column text: "time<TAB>freq" per line, six decimals.
void write_f0(std::ostream& out, const F0Contour& contour);
void write_f0(const std::filesystem::path& path, const F0Contour& contour);
F0Contour read_f0(std::istream& in);
F0Contour read_f0(const std::filesystem::path& path);

// Rounds to the six-decimal grid of the text format, so that values survive
// a write/read cycle bit-exactly.
double round_to_micro(double value);

}  // namespace melody
