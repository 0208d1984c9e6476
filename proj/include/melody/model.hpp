#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "melody/audio.hpp"
#include "melody/frontend.hpp"
#include "melody/network.hpp"
#include "melody/pitch.hpp"

namespace melody {

inline constexpr char kModelVersionTag[] = "melody-frame-classifier/1";

// Trainable weights plus the standardisation they were trained with.
struct ModelParams {
  ModelConfig config;
  NormStats stats;
  ParamSet<float> weights;
  std::string version = kModelVersionTag;
};

// Fan-in scaled uniform initialisation, deterministic in the seed.
ModelParams init_params(const ModelConfig& config, std::uint64_t seed);

// Softmax outputs for a batch; row p * frames + t is frame t of patch p.
struct PredictionGrid {
  int patches = 0;
  int frames = 0;
  RowMatrix<float> probs;

  auto frame(int patch, int t) const { return probs.row(static_cast<Eigen::Index>(patch) * frames + t); }
};

// Patches are processed in fixed-size shards so that results do not depend
// on thread count.
inline constexpr int kShardPatches = 16;

PredictionGrid forward(const ModelParams& params, std::span<const FramePatch> patches);
PredictionGrid forward(const ModelParams& params, const float* input, int count);

// Mean over rows of -sum_c t_c ln(p_c + 1e-12).
double cross_entropy(const RowMatrix<float>& targets, const RowMatrix<float>& probs);

RowMatrix<float> one_hot(std::span<const PitchLabel> labels, int classes = kNumClasses);

// Cross-entropy term evaluated on one shard of patches. `scale` multiplies
// the summed per-frame losses (1 / total frames of the term). Returns the
// scaled loss and, when `grads` is given, accumulates its gradient.
// `targets` rows are patch-major like PredictionGrid.
template <typename T>
double loss_and_gradient(const Network<T>& net, const ParamSet<T>& params, const T* input, int count,
                         const RowMatrix<T>& targets, double scale, ParamSet<T>* grads, Activations<T>& act);

using Gradients = ParamSet<float>;

// Gradient of cross_entropy(targets, forward(patches)).
Gradients backward(const ModelParams& params, std::span<const FramePatch> patches, const RowMatrix<float>& targets);

struct AdamSettings {
  double learning_rate = 0.003;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double plateau_factor = 0.7;
  int plateau_patience = 3;
};

struct OptimizerState {
  std::vector<std::vector<float>> first_moment;
  std::vector<std::vector<float>> second_moment;
  std::int64_t step = 0;
  double learning_rate = 0.003;
  int plateau_counter = 0;
  double best_val_accuracy = -1.0;
  std::int64_t skipped_batches = 0;
  AdamSettings settings;
};

OptimizerState make_optimizer(const ParamSet<float>& params, const AdamSettings& settings = {});

// Returns false (and leaves everything but skipped_batches untouched) when a
// gradient is not finite.
bool adam_step(ParamSet<float>& params, const Gradients& grads, OptimizerState& state);

// Multiplies the learning rate by 0.7 after three reports without a new best
// validation accuracy. Returns true on a new best.
bool plateau_update(OptimizerState& state, double val_accuracy);

// [n_frames x 442] posteriors from non-overlapping 31-frame windows.
RowMatrix<float> frame_posteriors(const ModelParams& params, const Spectrogram& spec);

F0Contour posteriors_to_contour(const RowMatrix<float>& posteriors);

F0Contour predict_contour(const ModelParams& params, const AudioClip& clip);
F0Contour predict_contour(const ModelParams& params, const Spectrogram& spec);

// Versioned little-endian binary checkpoint.
void save_checkpoint(const std::filesystem::path& path, const ModelParams& params);
ModelParams load_checkpoint(const std::filesystem::path& path);

std::string serialize_checkpoint(const ModelParams& params);
ModelParams deserialize_checkpoint(const std::string& bytes);

}  // namespace melody
