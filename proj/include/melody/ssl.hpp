#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "melody/augment.hpp"
#include "melody/training.hpp"

namespace melody {

// Which input the teacher labels and which input the student learns from.
//   Basic:               teacher clean, student clean
//   NoisyTeacherStudent: teacher augmented, student the same augmented input
//   NoisyStudent:        teacher clean, student augmented
enum class TsMode { kBasic, kNoisyTeacherStudent, kNoisyStudent };
enum class TrainSchedule { kJoint, kPretrainThenFinetune, kPretrainOnly };
enum class LabelForm { kSoft, kHard };

std::string to_string(TsMode mode);
std::string to_string(TrainSchedule schedule);
std::string to_string(LabelForm form);
TsMode ts_mode_from_string(const std::string& s);
TrainSchedule schedule_from_string(const std::string& s);
LabelForm label_form_from_string(const std::string& s);

inline constexpr int kMaxIterations = 8;

struct SslConfig {
  TsMode mode = TsMode::kNoisyStudent;
  TrainSchedule schedule = TrainSchedule::kJoint;
  int iterations = 1;
  LabelForm form = LabelForm::kSoft;
  int mix_labeled = 1;  // labelled : unlabelled patches per step
  int mix_unlabeled = 1;
  bool warm_start = false;  // initialise each student from its teacher
  ModelConfig model = ModelConfig::desk();
  TrainOptions train;  // epochs per phase, batch size, optimiser, master seed
};

void validate(const SslConfig& config);

// Teacher outputs for one unlabelled track, one row per spectrogram frame.
struct TrackPseudoLabels {
  std::string id;
  RowMatrix<float> probs;  // soft form
  std::vector<PitchLabel> labels;  // per-frame argmax (both forms)
};

struct PseudoLabelSet {
  int teacher_iteration = 1;  // T_i produced these labels
  LabelForm form = LabelForm::kSoft;
  std::vector<TrackPseudoLabels> tracks;
};

// The effect chain applied to unlabelled item `id` during `epoch` of
// self-training iteration `iteration`.
EffectChain epoch_chain(std::uint64_t augment_seed, int iteration, int epoch, const std::string& id);

// Spectrograms of the augmented pool for one epoch.
std::vector<Spectrogram> augment_pool(std::span<const AudioTrack> pool, std::uint64_t augment_seed, int iteration,
                                      int epoch);

// Runs the teacher over clean spectrograms (Basic, NoisyStudent) or over
// the augmented ones (NoisyTeacherStudent; `noisy` must then be given).
PseudoLabelSet make_pseudo_labels(const ModelParams& teacher, std::span<const AudioTrack> pool,
                                  std::span<const Spectrogram> noisy, TsMode mode, LabelForm form,
                                  int teacher_iteration);

// Unlabelled patches with both views and pseudo-label targets.
struct UnlabeledBatch {
  int count = 0;
  std::vector<float> clean;
  std::vector<float> noisy;  // may be empty in Basic mode
  RowMatrix<float> targets;
};

RowMatrix<float> gather_pseudo_targets(std::span<const PatchRef> refs, const PseudoLabelSet& pseudo);

// L_D plus the unit-weight unlabelled cross-entropy for the given mode.
// Adds the gradient to `grads` when given.
double student_loss(TsMode mode, const ModelParams& student, const Batch& labeled, const UnlabeledBatch& unlabeled,
                    Gradients* grads = nullptr);

struct IterationRecord {
  int iteration = 0;
  TrainHistory history;  // student phases, concatenated
  std::optional<EvalReport> teacher_test;
  std::optional<EvalReport> student_test;
  double teacher_val_oa = 0.0;
  double student_val_oa = 0.0;
};

struct SslData {
  std::span<const LabeledTrack> train;  // labelled, with shifted copies
  std::span<const LabeledTrack> val;
  std::span<const AudioTrack> pool;     // unlabelled
  std::span<const AudioTrack> test;     // optional held-out evaluation set
};

struct SelfTrainResult {
  ModelParams teacher;  // T_1
  ModelParams final_model;
  std::vector<IterationRecord> iterations;
};

// Algorithm: train or accept T_1, then for i = 1..k label the pool with T_i,
// train a student S_i and promote it to T_{i+1}. When `out_dir` is given,
// each iteration writes iter_<i>/{teacher.ckpt, student.ckpt, pseudo/, metrics.json}.
SelfTrainResult self_train(const SslData& data, const SslConfig& config,
                           std::optional<ModelParams> teacher = std::nullopt,
                           const std::filesystem::path& out_dir = {});

}  // namespace melody
