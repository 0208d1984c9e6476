#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "melody/pitch.hpp"

namespace melody {

inline constexpr double kDefaultToleranceCents = 50.0;

// Reference and estimate on a common 10 ms grid.
struct EvalPair {
  F0Contour ref;
  F0Contour est;
};

// Pads the shorter contour with unvoiced frames.
EvalPair align(F0Contour ref, F0Contour est);

struct FrameCounts {
  std::int64_t total = 0;
  std::int64_t ref_voiced = 0;
  std::int64_t ref_unvoiced = 0;
  std::int64_t voiced_detected = 0;   // ref voiced, est voiced
  std::int64_t pitch_correct = 0;     // ref voiced, est voiced, within tolerance
  std::int64_t false_alarm = 0;       // ref unvoiced, est voiced
  std::int64_t correct_unvoiced = 0;  // ref unvoiced, est unvoiced

  FrameCounts& operator+=(const FrameCounts& o);
  friend bool operator==(const FrameCounts&, const FrameCounts&) = default;
};

struct EvalReport {
  std::string track_id;
  double oa = 0.0;
  double rpa = 0.0;
  double vr = 0.0;
  double vfa = 0.0;
  FrameCounts counts;
};

FrameCounts count_frames(const EvalPair& pair, double tolerance_cents = kDefaultToleranceCents);
EvalReport report_from_counts(const FrameCounts& counts);

EvalReport evaluate(const EvalPair& pair, double tolerance_cents = kDefaultToleranceCents);

struct CorpusReport {
  std::vector<EvalReport> tracks;
  EvalReport corpus;  // pooled over all frames
};

CorpusReport evaluate_corpus(const std::vector<EvalPair>& pairs,
                             const std::vector<std::string>& ids = {},
                             double tolerance_cents = kDefaultToleranceCents);

std::string report_to_json(const CorpusReport& report);

}  // namespace melody
