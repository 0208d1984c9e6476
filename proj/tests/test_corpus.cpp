#include <gtest/gtest.h>

#include <fstream>
#include <iterator>

#include "melody/corpus.hpp"
#include "melody/errors.hpp"
#include "test_util.hpp"

using namespace melody;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

}  // namespace

TEST(Corpus, EmptyCountsGiveEmptyManifest) {
  testutil::TempDir dir("corpus");
  const DatasetManifest m = build_corpus(dir / "c", CorpusCounts{}, 1);
  EXPECT_TRUE(m.entries.empty());
  EXPECT_TRUE(read_manifest(dir / "c").entries.empty());
}

TEST(Corpus, SplitsAndLayout) {
  testutil::TempDir dir("corpus");
  const DatasetManifest m = build_corpus(dir / "c", CorpusCounts{10, 3, 2, 2}, 42);
  ASSERT_EQ(m.entries.size(), 17u);
  EXPECT_EQ(m.labeled(Split::kTrain).entries.size(), 8u);
  EXPECT_EQ(m.labeled(Split::kVal).entries.size(), 2u);
  EXPECT_EQ(m.test().entries.size(), 2u);
  const DatasetManifest pool = m.unlabeled();
  ASSERT_EQ(pool.entries.size(), 5u);
  int instrumental = 0;
  for (const auto& e : pool.entries) {
    EXPECT_FALSE(e.label_path.has_value());
    EXPECT_TRUE(std::filesystem::exists(m.hidden(e)));
    EXPECT_FALSE(std::filesystem::exists(dir / "c" / "labels" / (e.track_id + ".f0")));
    instrumental += e.kind == SongKind::kInstrumental ? 1 : 0;
  }
  EXPECT_EQ(instrumental, 2);
  for (const auto& e : m.entries) {
    EXPECT_TRUE(std::filesystem::exists(m.audio(e)));
    if (e.label_path) {
      EXPECT_TRUE(std::filesystem::exists(m.labels(e)));
    }
  }
  EXPECT_EQ(read_manifest(dir / "c").entries, m.entries);
}

TEST(Corpus, HiddenTruthMatchesRenderedContour) {
  testutil::TempDir dir("corpus");
  const DatasetManifest m = build_corpus(dir / "c", CorpusCounts{0, 2, 0, 1}, 7);
  for (const auto& e : m.unlabeled().entries) {
    const RenderedTrack t = render_track(corpus_track_spec(7, e.track_id, e.kind));
    EXPECT_EQ(read_f0(m.hidden(e)).freqs, t.contour.freqs);
    EXPECT_EQ(load_wav(m.audio(e)).samples, t.mixture.samples);
  }
}

TEST(Corpus, ByteIdenticalForEqualSeeds) {
  testutil::TempDir dir("corpus");
  build_corpus(dir / "a", CorpusCounts{3, 2, 1, 1}, 5);
  build_corpus(dir / "b", CorpusCounts{3, 2, 1, 1}, 5);
  std::size_t files = 0;
  for (const auto& f : std::filesystem::recursive_directory_iterator(dir / "a")) {
    if (!f.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(f.path(), dir / "a");
    EXPECT_EQ(slurp(f.path()), slurp(dir / "b" / rel)) << rel;
    ++files;
  }
  EXPECT_GT(files, 10u);
  build_corpus(dir / "d", CorpusCounts{3, 2, 1, 1}, 6);
  EXPECT_NE(slurp(dir / "a" / "audio" / "lab_0000.wav"), slurp(dir / "d" / "audio" / "lab_0000.wav"));
}

TEST(Corpus, ManifestValidation) {
  DatasetManifest m;
  m.entries.push_back({"a", "audio/a.wav", "labels/a.f0", Split::kTrain, SongKind::kVocal});
  m.entries.push_back({"a", "audio/a.wav", "labels/a.f0", Split::kTrain, SongKind::kVocal});
  EXPECT_THROW(validate(m), DataError);
  m.entries.pop_back();
  m.entries.push_back({"b", "audio/b.wav", std::nullopt, Split::kTest, SongKind::kVocal});
  EXPECT_THROW(validate(m), DataError);
}

TEST(Corpus, MissingManifestIsDataError) {
  testutil::TempDir dir("corpus");
  EXPECT_THROW(read_manifest(dir / "nothing"), DataError);
}
