#include <algorithm>
#include <cmath>

#include "melody/errors.hpp"
#include "melody/log.hpp"
#include "melody/parallel.hpp"
#include "melody/rng.hpp"
#include "melody/training.hpp"

namespace melody {

double batch_loss(const ModelParams& params, const Batch& batch, Gradients* grads) {
  const std::size_t patch_size = static_cast<std::size_t>(params.config.context_frames) * params.config.input_bins;
  if (batch.input.size() != patch_size * static_cast<std::size_t>(batch.count)) {
    throw ArgumentError("batch input does not match its patch count");
  }
  return batch_loss(params, batch.count, batch.input.data(), batch.targets, grads);
}

double batch_loss(const ModelParams& params, int count, const float* input, const RowMatrix<float>& targets_all,
                  Gradients* grads) {
  if (count == 0) return 0.0;
  const Network<float> net(params.config);
  net.check_shapes(params.weights);
  const int frames = params.config.context_frames;
  const std::size_t patch_size = static_cast<std::size_t>(frames) * params.config.input_bins;
  if (targets_all.rows() != static_cast<Eigen::Index>(count) * frames) {
    throw ArgumentError("batch targets do not match its patch count");
  }
  const double scale = 1.0 / (static_cast<double>(count) * frames);
  const int shards = (count + kShardPatches - 1) / kShardPatches;
  std::vector<double> losses(static_cast<std::size_t>(shards), 0.0);
  std::vector<Gradients> partial(grads ? static_cast<std::size_t>(shards) : 0);
  parallel_for(static_cast<std::size_t>(shards), [&](std::size_t s) {
    const int first = static_cast<int>(s) * kShardPatches;
    const int n = std::min(kShardPatches, count - first);
    const RowMatrix<float> targets = targets_all.middleRows(static_cast<Eigen::Index>(first) * frames,
                                                              static_cast<Eigen::Index>(n) * frames);
    Gradients* g = nullptr;
    if (grads) {
      partial[s] = params.weights.zeros_like();
      g = &partial[s];
    }
    Activations<float> act;
    losses[s] = loss_and_gradient(net, params.weights, input + first * patch_size, n, targets,
                                  scale, g, act);
  });
  double loss = 0.0;
  for (std::size_t s = 0; s < losses.size(); ++s) {
    loss += losses[s];
    if (grads) *grads += partial[s];
  }
  return loss;
}

Batch labeled_batch(std::span<const PatchRef> refs, std::span<const LabeledTrack> tracks, const NormStats& stats) {
  std::vector<const Spectrogram*> specs;
  specs.reserve(tracks.size());
  for (const auto& t : tracks) specs.push_back(&t.spec);
  Batch b;
  b.count = static_cast<int>(refs.size());
  b.input = gather_inputs(refs, specs, stats);
  b.targets = gather_label_targets(refs, tracks);
  return b;
}

ModelParams run_phase(ModelParams params, StepSource& source, std::span<const LabeledTrack> val,
                      const TrainOptions& options, TrainHistory* history) {
  if (options.epochs < 0) throw ArgumentError("epochs must be non-negative");
  TrainHistory local;
  TrainHistory& h = history ? *history : local;
  h = TrainHistory{};
  OptimizerState opt = make_optimizer(params.weights, options.adam);
  ModelParams best = params;
  const bool has_val = std::any_of(val.begin(), val.end(), [](const LabeledTrack& t) { return t.semitones == 0; });

  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    const int steps = source.begin_epoch(epoch, params);
    double loss_sum = 0.0;
    int applied = 0;
    for (int s = 0; s < steps; ++s) {
      Gradients grads = params.weights.zeros_like();
      const double loss = source.step(s, params, grads);
      if (std::isfinite(loss) && adam_step(params.weights, grads, opt)) {
        loss_sum += loss;
        ++applied;
      } else if (std::isfinite(loss)) {
        log_info("epoch ", epoch + 1, " step ", s, ": non-finite gradient, batch skipped");
      } else {
        ++opt.skipped_batches;
        log_info("epoch ", epoch + 1, " step ", s, ": non-finite loss, batch skipped");
      }
    }
    if (steps > 0 && applied == 0) throw NumericError("every batch of the epoch produced non-finite values");

    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.train_loss = applied > 0 ? loss_sum / applied : 0.0;
    rec.learning_rate = opt.learning_rate;
    rec.skipped_batches = opt.skipped_batches;
    if (has_val) {
      rec.val_oa = validation_accuracy(params, val);
      if (plateau_update(opt, rec.val_oa)) {
        best = params;
        h.best_epoch = rec.epoch;
        h.best_val_oa = rec.val_oa;
      }
    } else {
      best = params;
      h.best_epoch = rec.epoch;
    }
    log_info("epoch ", rec.epoch, "/", options.epochs, "  loss ", rec.train_loss, "  val OA ", rec.val_oa,
             "  lr ", rec.learning_rate);
    h.epochs.push_back(rec);
  }
  return best;
}

LabeledSource::LabeledSource(std::span<const LabeledTrack> tracks, const NormStats& stats, int batch_patches,
                             std::uint64_t seed)
    : tracks_(tracks), stats_(stats), batch_(batch_patches), seed_(seed) {
  if (batch_patches < 1) throw ArgumentError("batch size must be positive");
  for (const auto& t : tracks) frame_counts_.push_back(t.spec.n_frames);
}

int LabeledSource::begin_epoch(int epoch, const ModelParams&) {
  Rng rng(derive_seed(seed_, static_cast<std::uint64_t>(epoch)));
  refs_ = epoch_patches(frame_counts_, rng);
  return static_cast<int>((refs_.size() + batch_ - 1) / batch_);
}

std::span<const PatchRef> LabeledSource::step_refs(int step) const {
  const std::size_t first = static_cast<std::size_t>(step) * batch_;
  const std::size_t n = std::min<std::size_t>(batch_, refs_.size() - first);
  return std::span<const PatchRef>(refs_).subspan(first, n);
}

Batch LabeledSource::make_batch(int step) const { return labeled_batch(step_refs(step), tracks_, stats_); }

double LabeledSource::step(int step, const ModelParams& current, Gradients& grads) {
  return batch_loss(current, make_batch(step), &grads);
}

TeacherResult train_teacher(std::span<const LabeledTrack> train, std::span<const LabeledTrack> val,
                            const ModelConfig& config, const TrainOptions& options) {
  if (train.empty()) throw DataError("no labelled training tracks");
  TeacherResult result;
  ModelParams init = init_params(config, derive_seed(options.seed, "teacher-init"));
  init.stats = training_norm_stats(train);
  LabeledSource source(train, init.stats, options.batch_patches, derive_seed(options.seed, "teacher-batching"));
  log_info("training teacher: ", train.size(), " labelled tracks (with shifted copies), ", options.epochs,
           " epochs");
  result.params = run_phase(std::move(init), source, val, options, &result.history);
  return result;
}

}  // namespace melody
