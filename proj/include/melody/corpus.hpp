#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "melody/synth.hpp"

namespace melody {

enum class Split { kTrain, kVal, kTest };

std::string to_string(Split split);
Split split_from_string(const std::string& s);

struct ManifestEntry {
  std::string track_id;
  std::string audio_path;                 // relative to the corpus root
  std::optional<std::string> label_path;  // absent for unlabelled tracks
  Split split = Split::kTrain;
  SongKind kind = SongKind::kVocal;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct DatasetManifest {
  std::filesystem::path root;
  std::vector<ManifestEntry> entries;

  std::filesystem::path audio(const ManifestEntry& e) const { return root / e.audio_path; }
  std::filesystem::path labels(const ManifestEntry& e) const { return root / e.label_path.value(); }
  std::filesystem::path hidden(const ManifestEntry& e) const;

  DatasetManifest filter(bool (*keep)(const ManifestEntry&)) const;
  DatasetManifest labeled(Split split) const;
  DatasetManifest unlabeled() const;
  DatasetManifest test() const;
};

// Throws DataError on duplicate ids or labelled entries without labels.
void validate(const DatasetManifest& manifest);

DatasetManifest read_manifest(const std::filesystem::path& root);
void write_manifest(const std::filesystem::path& file, const std::vector<ManifestEntry>& entries);

struct CorpusCounts {
  int labeled = 0;
  int unlabeled = 0;  // vocal tracks in the unlabelled pool
  int test = 0;
  int instrumental = 0;  // instrumental tracks, unlabelled pool only
};

// Deterministic per-track song spec; the same function the builder uses, so
// stems can be regenerated without reading audio back.
SongSpec corpus_track_spec(std::uint64_t master_seed, const std::string& track_id, SongKind kind);

// Renders the corpus into `root`: audio/<id>.wav, labels/<id>.f0,
// hidden/<id>.f0 (ground truth of unlabelled tracks) and manifest.jsonl.
// The tree is assembled in a sibling temporary directory and renamed into
// place on success.
DatasetManifest build_corpus(const std::filesystem::path& root, const CorpusCounts& counts,
                             std::uint64_t master_seed);

}  // namespace melody
