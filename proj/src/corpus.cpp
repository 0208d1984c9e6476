#include <fstream>
#include <sstream>
#include <unordered_set>

#include "json.hpp"
#include "melody/corpus.hpp"
#include "melody/errors.hpp"
#include "melody/parallel.hpp"
#include "melody/rng.hpp"

namespace fs = std::filesystem;

namespace melody {

std::string to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "train";
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "val") return Split::kVal;
  if (s == "test") return Split::kTest;
  throw DataError("unknown split: " + s);
}

fs::path DatasetManifest::hidden(const ManifestEntry& e) const {
  return root / "hidden" / (e.track_id + ".f0");
}

DatasetManifest DatasetManifest::filter(bool (*keep)(const ManifestEntry&)) const {
  DatasetManifest out{root, {}};
  for (const auto& e : entries) {
    if (keep(e)) out.entries.push_back(e);
  }
  return out;
}

DatasetManifest DatasetManifest::labeled(Split split) const {
  DatasetManifest out{root, {}};
  for (const auto& e : entries) {
    if (e.label_path && e.split == split) out.entries.push_back(e);
  }
  return out;
}

DatasetManifest DatasetManifest::unlabeled() const {
  return filter([](const ManifestEntry& e) { return !e.label_path.has_value(); });
}

DatasetManifest DatasetManifest::test() const { return labeled(Split::kTest); }

void validate(const DatasetManifest& manifest) {
  std::unordered_set<std::string> ids;
  for (const auto& e : manifest.entries) {
    if (!ids.insert(e.track_id).second) throw DataError("duplicate track id: " + e.track_id);
    if ((e.split == Split::kVal || e.split == Split::kTest) && !e.label_path) {
      throw DataError("entry in a labelled split has no label file: " + e.track_id);
    }
  }
}

namespace {

nlohmann::json entry_to_json(const ManifestEntry& e) {
  nlohmann::json j;
  j["track_id"] = e.track_id;
  j["audio_path"] = e.audio_path;
  j["label_path"] = e.label_path ? nlohmann::json(*e.label_path) : nlohmann::json(nullptr);
  j["split"] = to_string(e.split);
  j["kind"] = to_string(e.kind);
  return j;
}

ManifestEntry entry_from_json(const nlohmann::json& j) {
  ManifestEntry e;
  e.track_id = j.at("track_id").get<std::string>();
  e.audio_path = j.at("audio_path").get<std::string>();
  if (j.contains("label_path") && !j["label_path"].is_null()) e.label_path = j["label_path"].get<std::string>();
  e.split = split_from_string(j.at("split").get<std::string>());
  e.kind = song_kind_from_string(j.at("kind").get<std::string>());
  return e;
}

}  // namespace

DatasetManifest read_manifest(const fs::path& root) {
  const fs::path file = root / "manifest.jsonl";
  std::ifstream in(file);
  if (!in) throw DataError("cannot open manifest: " + file.string());
  DatasetManifest m;
  m.root = root;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      m.entries.push_back(entry_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& ex) {
      throw DataError("bad manifest line " + std::to_string(line_no) + ": " + ex.what());
    }
  }
  validate(m);
  return m;
}

void write_manifest(const fs::path& file, const std::vector<ManifestEntry>& entries) {
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw DataError("cannot write manifest: " + file.string());
  for (const auto& e : entries) out << entry_to_json(e).dump() << "\n";
  if (!out) throw DataError("write failed: " + file.string());
}

SongSpec corpus_track_spec(std::uint64_t master_seed, const std::string& track_id, SongKind kind) {
  const std::uint64_t corpus_seed = derive_seed(master_seed, "corpus");
  return sample_song_spec(derive_seed(corpus_seed, track_id), kind);
}

namespace {

std::string track_name(const char* prefix, int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s_%04d", prefix, i);
  return buf;
}

struct Job {
  ManifestEntry entry;
  bool hidden = false;
};

}  // namespace

DatasetManifest build_corpus(const fs::path& root, const CorpusCounts& counts, std::uint64_t master_seed) {
  if (counts.labeled < 0 || counts.unlabeled < 0 || counts.test < 0 || counts.instrumental < 0) {
    throw ArgumentError("corpus counts must be non-negative");
  }
  if (fs::exists(root) && !fs::is_empty(root) && !fs::exists(root / "manifest.jsonl")) {
    throw DataError("refusing to overwrite a non-corpus directory: " + root.string());
  }

  std::vector<Job> jobs;
  const int n_train = static_cast<int>(std::lround(0.8 * counts.labeled));
  for (int i = 0; i < counts.labeled; ++i) {
    const auto id = track_name("lab", i);
    jobs.push_back({{id, "audio/" + id + ".wav", "labels/" + id + ".f0",
                     i < n_train ? Split::kTrain : Split::kVal, SongKind::kVocal}, false});
  }
  for (int i = 0; i < counts.unlabeled; ++i) {
    const auto id = track_name("unl", i);
    jobs.push_back({{id, "audio/" + id + ".wav", std::nullopt, Split::kTrain, SongKind::kVocal}, true});
  }
  for (int i = 0; i < counts.instrumental; ++i) {
    const auto id = track_name("ins", i);
    jobs.push_back({{id, "audio/" + id + ".wav", std::nullopt, Split::kTrain, SongKind::kInstrumental}, true});
  }
  for (int i = 0; i < counts.test; ++i) {
    const auto id = track_name("tst", i);
    jobs.push_back({{id, "audio/" + id + ".wav", "labels/" + id + ".f0", Split::kTest, SongKind::kVocal}, false});
  }

  const fs::path parent = root.has_parent_path() ? root.parent_path() : fs::path(".");
  std::error_code ec;
  fs::create_directories(parent, ec);
  const fs::path staging = parent / (root.filename().string() + ".partial");
  fs::remove_all(staging, ec);
  if (!fs::create_directories(staging / "audio", ec) || !fs::create_directories(staging / "labels", ec) ||
      !fs::create_directories(staging / "hidden", ec)) {
    throw DataError("output directory not writable: " + parent.string());
  }

  parallel_for(jobs.size(), [&](std::size_t i) {
    const auto& e = jobs[i].entry;
    const RenderedTrack t = render_track(corpus_track_spec(master_seed, e.track_id, e.kind));
    write_wav(staging / e.audio_path, t.mixture);
    if (e.label_path) write_f0(staging / *e.label_path, t.contour);
    if (jobs[i].hidden) write_f0(staging / "hidden" / (e.track_id + ".f0"), t.contour);
  });

  std::vector<ManifestEntry> entries;
  for (const auto& j : jobs) entries.push_back(j.entry);
  write_manifest(staging / "manifest.jsonl", entries);

  fs::remove_all(root, ec);
  fs::rename(staging, root, ec);
  if (ec) throw DataError("cannot move corpus into place: " + ec.message());

  DatasetManifest m;
  m.root = root;
  m.entries = std::move(entries);
  return m;
}

}  // namespace melody
