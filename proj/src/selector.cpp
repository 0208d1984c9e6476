#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"
#include "melody/errors.hpp"
#include "melody/frontend.hpp"
#include "melody/parallel.hpp"
#include "melody/selector.hpp"

namespace melody {

namespace {

constexpr int kWindow = 256;
constexpr double kMinPitchHz = 82.4;
constexpr double kMaxPitchHz = 1975.7;

bool frame_is_periodic(std::span<const float> x, int center, const VoicingDetector& d) {
  const int n = static_cast<int>(x.size());
  const int begin = std::max(0, center - kWindow / 2);
  const int end = std::min(n, center + kWindow / 2);
  const int len = end - begin;
  if (len <= 0) return false;
  const float* w = x.data() + begin;

  double energy = 0.0;
  for (int i = 0; i < len; ++i) energy += static_cast<double>(w[i]) * w[i];
  if (std::sqrt(energy / len) <= d.silence_rms) return false;

  const int min_lag = static_cast<int>(std::ceil(kTargetRate / kMaxPitchHz));
  const int max_lag = std::min(len - 1, static_cast<int>(std::floor(kTargetRate / kMinPitchHz)));
  double best = -1.0;
  for (int lag = min_lag; lag <= max_lag; ++lag) {
    double xy = 0.0, xx = 0.0, yy = 0.0;
    for (int i = 0; i + lag < len; ++i) {
      xy += static_cast<double>(w[i]) * w[i + lag];
      xx += static_cast<double>(w[i]) * w[i];
      yy += static_cast<double>(w[i + lag]) * w[i + lag];
    }
    if (xx > 0.0 && yy > 0.0) best = std::max(best, xy / std::sqrt(xx * yy));
  }
  return best > d.periodicity;
}

}  // namespace

std::string to_string(DetectorKind kind) { return kind == DetectorKind::kModel ? "model" : "heuristic"; }

DetectorKind detector_kind_from_string(const std::string& s) {
  if (s == "heuristic") return DetectorKind::kHeuristic;
  if (s == "model") return DetectorKind::kModel;
  throw ArgumentError("unknown detector kind: " + s);
}

VoicingDetector VoicingDetector::heuristic() { return VoicingDetector{}; }

VoicingDetector VoicingDetector::from_model(const ModelParams& params) {
  VoicingDetector d;
  d.kind = DetectorKind::kModel;
  d.model = &params;
  return d;
}

std::vector<bool> voiced_frames(const AudioClip& clip, const VoicingDetector& detector) {
  if (!clip.is_mono_8k()) throw ArgumentError("voicing detection expects 8 kHz mono audio");
  const int n_frames = frames_for_samples(clip.samples.size());
  std::vector<bool> voiced(static_cast<std::size_t>(n_frames), false);
  if (detector.kind == DetectorKind::kModel) {
    if (!detector.model) throw ArgumentError("model detector has no model");
    const RowMatrix<float> post = frame_posteriors(*detector.model, stft_logmag(clip));
    for (int t = 0; t < n_frames; ++t) voiced[static_cast<std::size_t>(t)] = post(t, 0) < 0.5f;
  } else {
    for (int t = 0; t < n_frames; ++t) {
      voiced[static_cast<std::size_t>(t)] = frame_is_periodic(clip.samples, t * kHopSamples, detector);
    }
  }
  return voiced;
}

double vocal_ratio(const AudioClip& clip, const VoicingDetector& detector) {
  const std::vector<bool> v = voiced_frames(clip, detector);
  if (v.empty()) return 0.0;
  return static_cast<double>(std::count(v.begin(), v.end(), true)) / static_cast<double>(v.size());
}

SelectionResult select_by_ratio(const DatasetManifest& manifest, const VocalRatioReport& ratios, double threshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw ArgumentError("threshold must lie in [0, 1]");
  if (ratios.entries.size() != manifest.entries.size()) throw ArgumentError("ratio report does not match manifest");
  SelectionResult out;
  out.selected.root = manifest.root;
  out.report = ratios;
  out.report.threshold = threshold;
  for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
    VocalRatioEntry& e = out.report.entries[i];
    e.selected = e.ratio >= threshold;
    if (e.selected) out.selected.entries.push_back(manifest.entries[i]);
  }
  return out;
}

SelectionResult select(const DatasetManifest& manifest, const VoicingDetector& detector, double threshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw ArgumentError("threshold must lie in [0, 1]");
  VocalRatioReport report;
  report.detector = detector.kind;
  report.entries.resize(manifest.entries.size());
  parallel_for(manifest.entries.size(), [&](std::size_t i) {
    const ManifestEntry& e = manifest.entries[i];
    VocalRatioEntry& r = report.entries[i];
    r.track_id = e.track_id;
    r.kind = e.kind;
    r.ratio = vocal_ratio(to_mono_8k(load_wav(manifest.audio(e))), detector);
  });
  return select_by_ratio(manifest, report, threshold);
}

void write_selection(const std::filesystem::path& path, const VocalRatioReport& report) {
  std::ofstream out(path);
  for (const auto& e : report.entries) {
    nlohmann::json j{{"id", e.track_id},
                     {"ratio", round_to_micro(e.ratio)},
                     {"selected", e.selected},
                     {"detector", to_string(report.detector)},
                     {"threshold", report.threshold}};
    out << j.dump() << '\n';
  }
  if (!out) throw DataError("cannot write " + path.string());
}

}  // namespace melody
