#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "melody/dataset.hpp"
#include "melody/model.hpp"

namespace melody {

// Standardised inputs and target rows (patch-major) for one loss term.
struct Batch {
  int count = 0;
  std::vector<float> input;
  RowMatrix<float> targets;
};

// Mean cross-entropy over every frame of the batch, evaluated shard by shard
// and summed in a fixed order. Adds the gradient to `grads` when given.
double batch_loss(const ModelParams& params, const Batch& batch, Gradients* grads = nullptr);
double batch_loss(const ModelParams& params, int count, const float* input, const RowMatrix<float>& targets,
                  Gradients* grads = nullptr);

Batch labeled_batch(std::span<const PatchRef> refs, std::span<const LabeledTrack> tracks, const NormStats& stats);

struct TrainOptions {
  int epochs = 15;
  int batch_patches = 64;  // labelled patches per step
  AdamSettings adam;
  std::uint64_t seed = 1;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_oa = 0.0;
  double learning_rate = 0.0;
  std::int64_t skipped_batches = 0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;  // 0: the initial parameters were kept
  double best_val_oa = -1.0;
};

// Supplies the optimisation steps of one training phase.
class StepSource {
 public:
  virtual ~StepSource() = default;
  // Prepares epoch `epoch` (0-based) and returns its number of steps.
  virtual int begin_epoch(int epoch, const ModelParams& current) = 0;
  // Loss of step `step`; its gradient is added to `grads`.
  virtual double step(int step, const ModelParams& current, Gradients& grads) = 0;
};

// Runs `epochs` epochs of Adam with the plateau schedule, validating after
// each epoch. Returns the parameters with the best validation accuracy
// (the last epoch's when `val` is empty, the input when epochs = 0).
ModelParams run_phase(ModelParams params, StepSource& source, std::span<const LabeledTrack> val,
                      const TrainOptions& options, TrainHistory* history = nullptr);

// Supervised training on labelled tracks (pitch-shifted copies included).
struct TeacherResult {
  ModelParams params;
  TrainHistory history;
};

TeacherResult train_teacher(std::span<const LabeledTrack> train, std::span<const LabeledTrack> val,
                            const ModelConfig& config, const TrainOptions& options);

// Labelled-only steps; also used for fine-tuning.
class LabeledSource : public StepSource {
 public:
  LabeledSource(std::span<const LabeledTrack> tracks, const NormStats& stats, int batch_patches,
                std::uint64_t seed);
  int begin_epoch(int epoch, const ModelParams& current) override;
  double step(int step, const ModelParams& current, Gradients& grads) override;

  // Patches of the current epoch's step `step`.
  std::span<const PatchRef> step_refs(int step) const;
  Batch make_batch(int step) const;

 private:
  std::span<const LabeledTrack> tracks_;
  NormStats stats_;
  int batch_;
  std::uint64_t seed_;
  std::vector<int> frame_counts_;
  std::vector<PatchRef> refs_;
};

}  // namespace melody
