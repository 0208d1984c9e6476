#include <gtest/gtest.h>

#include <sstream>

#include "melody/config.hpp"
#include "melody/errors.hpp"

using namespace melody;

namespace {

RunConfig parse(const std::string& text, const std::filesystem::path& base = "/base") {
  std::istringstream in(text);
  return parse_config(in, base);
}

}  // namespace

TEST(Config, DefaultSchedule) {
  const RunConfig c = parse("");
  EXPECT_DOUBLE_EQ(c.ssl.train.adam.learning_rate, 0.003);
  EXPECT_DOUBLE_EQ(c.ssl.train.adam.plateau_factor, 0.7);
  EXPECT_EQ(c.ssl.train.adam.plateau_patience, 3);
  EXPECT_DOUBLE_EQ(c.threshold, 0.3);
  EXPECT_EQ(c.pitch_shifts, (std::vector<int>{-2, -1, 1, 2}));
  EXPECT_EQ(c.ssl.mode, TsMode::kNoisyStudent);
  EXPECT_EQ(c.ssl.form, LabelForm::kSoft);
}

TEST(Config, ParsesEverySection) {
  const RunConfig c = parse(R"(# experiment
[corpus]
root = data/corpus
[output]
dir = /abs/out
[model]
preset = desk
[train]
epochs = 7
batch = 32
learning_rate = 0.001
pitch_shifts = -1, 1
seeds = 1, 2, 3
[ssl]
mode = basic
schedule = pretrain-finetune
iterations = 3
form = hard
mix = 1:2
warm_start = true
[select]
enabled = true
detector = heuristic
threshold = 0.25
[run]
threads = 4
)");
  EXPECT_EQ(c.corpus, std::filesystem::path("/base/data/corpus"));
  EXPECT_EQ(c.output, std::filesystem::path("/abs/out"));
  EXPECT_EQ(c.ssl.train.epochs, 7);
  EXPECT_EQ(c.ssl.train.batch_patches, 32);
  EXPECT_DOUBLE_EQ(c.ssl.train.adam.learning_rate, 0.001);
  EXPECT_EQ(c.pitch_shifts, (std::vector<int>{-1, 1}));
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{1, 2, 3}));
  EXPECT_EQ(c.ssl.mode, TsMode::kBasic);
  EXPECT_EQ(c.ssl.schedule, TrainSchedule::kPretrainThenFinetune);
  EXPECT_EQ(c.ssl.iterations, 3);
  EXPECT_EQ(c.ssl.form, LabelForm::kHard);
  EXPECT_EQ(c.ssl.mix_labeled, 1);
  EXPECT_EQ(c.ssl.mix_unlabeled, 2);
  EXPECT_TRUE(c.ssl.warm_start);
  EXPECT_TRUE(c.select);
  EXPECT_EQ(c.detector, DetectorKind::kHeuristic);
  EXPECT_DOUBLE_EQ(c.threshold, 0.25);
  EXPECT_EQ(c.threads, 4);
}

TEST(Config, PitchShiftsCanBeDisabled) {
  EXPECT_TRUE(parse("[train]\npitch_shifts = none\n").pitch_shifts.empty());
}

TEST(Config, RejectsUnknownKeysAndSections) {
  EXPECT_THROW(parse("[train]\nepochz = 3\n"), ArgumentError);
  EXPECT_THROW(parse("[trian]\nepochs = 3\n"), ArgumentError);
  EXPECT_THROW(parse("epochs = 3\n"), ArgumentError);
  try {
    parse("[train]\nepochs = 3\n\nbogus = 1\n");
    FAIL();
  } catch (const ArgumentError& e) {
    EXPECT_NE(std::string(e.what()).find("4"), std::string::npos) << e.what();
  }
}

TEST(Config, RejectsBadValues) {
  EXPECT_THROW(parse("[train]\nepochs = many\n"), ArgumentError);
  EXPECT_THROW(parse("[ssl]\niterations = 9\n"), ArgumentError);
  EXPECT_THROW(parse("[ssl]\nmix = 1\n"), ArgumentError);
  EXPECT_THROW(parse("[select]\nthreshold = 1.5\n"), ArgumentError);
  EXPECT_THROW(parse("[model]\npreset = huge\n"), ArgumentError);
  EXPECT_THROW(parse("[train]\nno equals sign\n"), ArgumentError);
}

TEST(Config, HashIsStableAndSensitive) {
  const RunConfig a = parse("[train]\nepochs = 5\n");
  const RunConfig b = parse("# same thing\n[train]\n  epochs=5  \n");
  EXPECT_EQ(canonical_text(a), canonical_text(b));
  EXPECT_EQ(config_hash(a), config_hash(b));
  EXPECT_EQ(config_hash(a).size(), 16u);
  EXPECT_NE(config_hash(a), config_hash(parse("[train]\nepochs = 6\n")));
  EXPECT_NE(config_hash(a, "E1/basic"), config_hash(a, "E1/noisy-student"));
  // Thread count does not change results, so it does not change the hash.
  EXPECT_EQ(config_hash(a), config_hash(parse("[train]\nepochs = 5\n[run]\nthreads = 4\n")));
}

TEST(Config, MissingFileIsAnArgumentError) {
  EXPECT_THROW(load_config("/nonexistent/run.ini"), ArgumentError);
}
