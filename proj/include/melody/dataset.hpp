#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "melody/corpus.hpp"
#include "melody/frontend.hpp"
#include "melody/metrics.hpp"
#include "melody/model.hpp"
#include "melody/rng.hpp"

namespace melody {

// A labelled track (or one pitch-shifted copy of it), ready for training.
struct LabeledTrack {
  std::string id;
  int semitones = 0;
  Spectrogram spec;
  std::vector<PitchLabel> labels;  // one per spectrogram frame
  F0Contour reference;             // the label file, unshifted copies only
};

// An audio track with its clean spectrogram; the unlabelled pool and the
// evaluation sets use this.
struct AudioTrack {
  std::string id;
  SongKind kind = SongKind::kVocal;
  AudioClip clip;
  Spectrogram spec;
  F0Contour reference;  // empty when no ground truth is available
};

// Loads the labelled entries and appends one pitch-shifted copy per entry of
// `shifts` (the unshifted track always comes first).
std::vector<LabeledTrack> load_labeled_tracks(const DatasetManifest& manifest, std::span<const int> shifts = {});

// Loads audio and spectrograms. With `with_reference`, ground truth is read
// from the label file or, for unlabelled entries, the hidden archive.
std::vector<AudioTrack> load_audio_tracks(const DatasetManifest& manifest, bool with_reference);

// Standardisation over the unshifted labelled tracks.
NormStats training_norm_stats(std::span<const LabeledTrack> tracks);

// Per-frame labels resized to `n_frames` (truncated or padded unvoiced).
std::vector<PitchLabel> frame_labels(const F0Contour& contour, int n_frames);

struct PatchRef {
  int track = 0;
  int center = 0;
};

// Non-overlapping windows over every track with a random phase per track,
// then shuffled; a fresh draw is made each epoch.
std::vector<PatchRef> epoch_patches(std::span<const int> frame_counts, Rng& rng);

// Standardised inputs for a list of patches, [count x 31 x 513].
std::vector<float> gather_inputs(std::span<const PatchRef> refs, std::span<const Spectrogram* const> specs,
                                 const NormStats& stats);

// One-hot targets for labelled patches; windows running off a track use
// the same reflected frames as the input.
RowMatrix<float> gather_label_targets(std::span<const PatchRef> refs, std::span<const LabeledTrack> tracks);

// Corpus-level scores of `params` on tracks with references.
CorpusReport evaluate_model(const ModelParams& params, std::span<const AudioTrack> tracks);

// Overall accuracy of `params` on the labelled tracks (unshifted copies only).
double validation_accuracy(const ModelParams& params, std::span<const LabeledTrack> tracks);

}  // namespace melody
