#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "melody/audio.hpp"
#include "melody/corpus.hpp"
#include "melody/model.hpp"

namespace melody {

inline constexpr double kDefaultVocalThreshold = 0.3;

enum class DetectorKind { kHeuristic, kModel };

std::string to_string(DetectorKind kind);
DetectorKind detector_kind_from_string(const std::string& s);

// Frame-level voicing decisions on the 10 ms grid.
//   heuristic: frame RMS above a silence floor and a normalised
//              autocorrelation peak above a threshold for lags covering
//              82-1976 Hz;
//   model:     the melody model's non-vocal posterior below 0.5.
struct VoicingDetector {
  DetectorKind kind = DetectorKind::kHeuristic;
  const ModelParams* model = nullptr;  // required for the model kind
  double silence_rms = 1e-3;
  double periodicity = 0.5;

  static VoicingDetector heuristic();
  static VoicingDetector from_model(const ModelParams& params);
};

// Per-frame voiced flags, one per 10 ms frame (ceil(samples / 80)).
std::vector<bool> voiced_frames(const AudioClip& clip, const VoicingDetector& detector);

// Fraction of frames judged voiced; 0 for an empty clip.
double vocal_ratio(const AudioClip& clip, const VoicingDetector& detector);

struct VocalRatioEntry {
  std::string track_id;
  SongKind kind = SongKind::kVocal;
  double ratio = 0.0;
  bool selected = false;
};

struct VocalRatioReport {
  DetectorKind detector = DetectorKind::kHeuristic;
  double threshold = kDefaultVocalThreshold;
  std::vector<VocalRatioEntry> entries;
};

struct SelectionResult {
  DatasetManifest selected;
  VocalRatioReport report;
};

// Keeps the entries whose vocal ratio is at least `threshold`.
SelectionResult select(const DatasetManifest& manifest, const VoicingDetector& detector,
                       double threshold = kDefaultVocalThreshold);

// Thresholds already measured ratios (no audio is read).
SelectionResult select_by_ratio(const DatasetManifest& manifest, const VocalRatioReport& ratios, double threshold);

// One JSON object per line: id, ratio, selected, detector.
void write_selection(const std::filesystem::path& path, const VocalRatioReport& report);

}  // namespace melody
