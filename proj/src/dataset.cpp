#include <algorithm>

#include "melody/augment.hpp"
#include "melody/dataset.hpp"
#include "melody/errors.hpp"
#include "melody/parallel.hpp"

namespace melody {

std::vector<PitchLabel> frame_labels(const F0Contour& contour, int n_frames) {
  std::vector<PitchLabel> labels = contour_to_labels(contour).labels;
  labels.resize(static_cast<std::size_t>(std::max(0, n_frames)), PitchLabel{0});
  return labels;
}

std::vector<LabeledTrack> load_labeled_tracks(const DatasetManifest& manifest, std::span<const int> shifts) {
  for (const auto& e : manifest.entries) {
    if (!e.label_path) throw DataError("track has no label file: " + e.track_id);
  }
  const std::size_t per_track = shifts.size() + 1;
  std::vector<LabeledTrack> out(manifest.entries.size() * per_track);
  parallel_for(manifest.entries.size(), [&](std::size_t i) {
    const ManifestEntry& e = manifest.entries[i];
    const AudioClip clip = to_mono_8k(load_wav(manifest.audio(e)));
    const F0Contour contour = read_f0(manifest.labels(e));
    LabeledTrack& base = out[i * per_track];
    base.id = e.track_id;
    base.spec = stft_logmag(clip);
    base.labels = frame_labels(contour, base.spec.n_frames);
    base.reference = contour;
    for (std::size_t k = 0; k < shifts.size(); ++k) {
      const auto [shifted, shifted_contour] = pitch_shift_pair(clip, contour, shifts[k]);
      LabeledTrack& t = out[i * per_track + k + 1];
      t.id = e.track_id;
      t.semitones = shifts[k];
      t.spec = stft_logmag(shifted);
      t.labels = frame_labels(shifted_contour, t.spec.n_frames);
    }
  });
  return out;
}

std::vector<AudioTrack> load_audio_tracks(const DatasetManifest& manifest, bool with_reference) {
  std::vector<AudioTrack> out(manifest.entries.size());
  parallel_for(manifest.entries.size(), [&](std::size_t i) {
    const ManifestEntry& e = manifest.entries[i];
    AudioTrack& t = out[i];
    t.id = e.track_id;
    t.kind = e.kind;
    t.clip = to_mono_8k(load_wav(manifest.audio(e)));
    t.spec = stft_logmag(t.clip);
    if (with_reference) t.reference = read_f0(e.label_path ? manifest.labels(e) : manifest.hidden(e));
  });
  return out;
}

NormStats training_norm_stats(std::span<const LabeledTrack> tracks) {
  std::vector<const Spectrogram*> specs;
  for (const auto& t : tracks) {
    if (t.semitones == 0) specs.push_back(&t.spec);
  }
  if (specs.empty()) throw DataError("no labelled tracks to compute normalisation statistics");
  return compute_norm_stats(specs);
}

std::vector<PatchRef> epoch_patches(std::span<const int> frame_counts, Rng& rng) {
  std::vector<PatchRef> refs;
  for (std::size_t i = 0; i < frame_counts.size(); ++i) {
    const int offset = uniform_int(rng, 0, kContextFrames - 1);
    for (int c : patch_centers(frame_counts[i], kContextFrames, offset)) {
      refs.push_back({static_cast<int>(i), c});
    }
  }
  std::shuffle(refs.begin(), refs.end(), rng);
  return refs;
}

std::vector<float> gather_inputs(std::span<const PatchRef> refs, std::span<const Spectrogram* const> specs,
                                 const NormStats& stats) {
  const std::size_t patch_size = static_cast<std::size_t>(kContextFrames) * kNumBins;
  std::vector<float> input(refs.size() * patch_size);
  for (std::size_t i = 0; i < refs.size(); ++i) {
    extract_patch(*specs[static_cast<std::size_t>(refs[i].track)], refs[i].center, stats,
                  input.data() + i * patch_size);
  }
  return input;
}

RowMatrix<float> gather_label_targets(std::span<const PatchRef> refs, std::span<const LabeledTrack> tracks) {
  RowMatrix<float> targets = RowMatrix<float>::Zero(static_cast<Eigen::Index>(refs.size()) * kContextFrames,
                                                    kNumClasses);
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const LabeledTrack& t = tracks[static_cast<std::size_t>(refs[i].track)];
    const int n = static_cast<int>(t.labels.size());
    for (int r = 0; r < kContextFrames; ++r) {
      const int frame = reflect_index(static_cast<long long>(refs[i].center) - kHalfContext + r, n);
      targets(static_cast<Eigen::Index>(i) * kContextFrames + r, t.labels[static_cast<std::size_t>(frame)].index) =
          1.0f;
    }
  }
  return targets;
}

CorpusReport evaluate_model(const ModelParams& params, std::span<const AudioTrack> tracks) {
  std::vector<EvalPair> pairs;
  std::vector<std::string> ids;
  for (const auto& t : tracks) {
    pairs.push_back(align(t.reference, predict_contour(params, t.spec)));
    ids.push_back(t.id);
  }
  return evaluate_corpus(pairs, ids);
}

double validation_accuracy(const ModelParams& params, std::span<const LabeledTrack> tracks) {
  std::vector<EvalPair> pairs;
  for (const auto& t : tracks) {
    if (t.semitones == 0) pairs.push_back(align(t.reference, predict_contour(params, t.spec)));
  }
  if (pairs.empty()) return 0.0;
  return evaluate_corpus(pairs).corpus.oa;
}

}  // namespace melody
