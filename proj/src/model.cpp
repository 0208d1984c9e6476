#include <algorithm>
#include <cmath>

#include "melody/errors.hpp"
#include "melody/model.hpp"
#include "melody/parallel.hpp"

namespace melody {

namespace {

constexpr double kProbFloor = 1e-12;

int shard_count(int count) { return (count + kShardPatches - 1) / kShardPatches; }

void check_input_shape(const ModelConfig& config) {
  if (config.context_frames != kContextFrames || config.input_bins != kNumBins) {
    throw ArgumentError("model input shape does not match the 31 x 513 frontend");
  }
}

}  // namespace

ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
  ModelParams p;
  p.config = config;
  p.weights = Network<float>(config).init_params(seed);
  // Identity standardisation, one entry per input bin.
  p.stats.mean.assign(static_cast<std::size_t>(config.input_bins), 0.0f);
  p.stats.inv_std.assign(static_cast<std::size_t>(config.input_bins), 1.0f);
  return p;
}

double cross_entropy(const RowMatrix<float>& targets, const RowMatrix<float>& probs) {
  if (targets.rows() != probs.rows() || targets.cols() != probs.cols()) {
    throw ArgumentError("cross_entropy shape mismatch");
  }
  if (probs.rows() == 0) return 0.0;
  double total = 0.0;
  for (Eigen::Index r = 0; r < probs.rows(); ++r) {
    double row = 0.0;
    for (Eigen::Index c = 0; c < probs.cols(); ++c) {
      const double t = targets(r, c);
      if (t != 0.0) row -= t * std::log(static_cast<double>(probs(r, c)) + kProbFloor);
    }
    total += row;
  }
  return total / static_cast<double>(probs.rows());
}

RowMatrix<float> one_hot(std::span<const PitchLabel> labels, int classes) {
  RowMatrix<float> m = RowMatrix<float>::Zero(static_cast<Eigen::Index>(labels.size()), classes);
  for (std::size_t i = 0; i < labels.size(); ++i) m(static_cast<Eigen::Index>(i), labels[i].index) = 1.0f;
  return m;
}

template <typename T>
double loss_and_gradient(const Network<T>& net, const ParamSet<T>& params, const T* input, int count,
                         const RowMatrix<T>& targets, double scale, ParamSet<T>* grads, Activations<T>& act) {
  const int frames = net.config().context_frames;
  const int classes = net.config().output_classes;
  if (targets.rows() != static_cast<Eigen::Index>(count) * frames || targets.cols() != classes) {
    throw ArgumentError("target rows do not match the batch");
  }
  net.forward(params, input, count, act);
  RowMatrix<T> dlogits;
  if (grads) dlogits.resize(act.probs.rows(), classes);
  double loss = 0.0;
  for (int p = 0; p < count; ++p) {
    for (int t = 0; t < frames; ++t) {
      const Eigen::Index r = static_cast<Eigen::Index>(t) * count + p;
      const auto target = targets.row(static_cast<Eigen::Index>(p) * frames + t);
      const auto prob = act.probs.row(r);
      double row = 0.0, mass = 0.0;
      for (int c = 0; c < classes; ++c) {
        const double tc = target[c];
        if (tc != 0.0) row -= tc * std::log(static_cast<double>(prob[c]) + kProbFloor);
        mass += tc;
      }
      loss += row;
      if (grads) {
        for (int c = 0; c < classes; ++c) {
          dlogits(r, c) = static_cast<T>(scale * (prob[c] * mass - target[c]));
        }
      }
    }
  }
  if (grads) net.backward(params, act, dlogits, *grads);
  return scale * loss;
}

template double loss_and_gradient<float>(const Network<float>&, const ParamSet<float>&, const float*, int,
                                         const RowMatrix<float>&, double, ParamSet<float>*, Activations<float>&);
template double loss_and_gradient<double>(const Network<double>&, const ParamSet<double>&, const double*, int,
                                          const RowMatrix<double>&, double, ParamSet<double>*,
                                          Activations<double>&);

PredictionGrid forward(const ModelParams& params, const float* input, int count) {
  check_input_shape(params.config);
  const Network<float> net(params.config);
  net.check_shapes(params.weights);
  const int frames = params.config.context_frames;
  const std::size_t patch_size = static_cast<std::size_t>(frames) * params.config.input_bins;
  PredictionGrid grid;
  grid.patches = count;
  grid.frames = frames;
  grid.probs.resize(static_cast<Eigen::Index>(count) * frames, params.config.output_classes);
  parallel_for(static_cast<std::size_t>(shard_count(count)), [&](std::size_t s) {
    const int first = static_cast<int>(s) * kShardPatches;
    const int n = std::min(kShardPatches, count - first);
    Activations<float> act;
    net.forward(params.weights, input + first * patch_size, n, act);
    for (int p = 0; p < n; ++p) {
      for (int t = 0; t < frames; ++t) {
        grid.probs.row(static_cast<Eigen::Index>(first + p) * frames + t) =
            act.probs.row(static_cast<Eigen::Index>(t) * n + p);
      }
    }
  });
  return grid;
}

PredictionGrid forward(const ModelParams& params, std::span<const FramePatch> patches) {
  const std::size_t patch_size = static_cast<std::size_t>(kContextFrames) * kNumBins;
  std::vector<float> input(patches.size() * patch_size);
  for (std::size_t i = 0; i < patches.size(); ++i) {
    if (patches[i].values.size() != patch_size) throw ArgumentError("patch shape mismatch");
    std::copy(patches[i].values.begin(), patches[i].values.end(), input.begin() + i * patch_size);
  }
  return forward(params, input.data(), static_cast<int>(patches.size()));
}

Gradients backward(const ModelParams& params, std::span<const FramePatch> patches, const RowMatrix<float>& targets) {
  check_input_shape(params.config);
  const Network<float> net(params.config);
  net.check_shapes(params.weights);
  const int count = static_cast<int>(patches.size());
  const int frames = params.config.context_frames;
  const std::size_t patch_size = static_cast<std::size_t>(frames) * kNumBins;
  const double scale = count == 0 ? 0.0 : 1.0 / (static_cast<double>(count) * frames);
  const int shards = shard_count(count);
  std::vector<Gradients> partial(static_cast<std::size_t>(shards), params.weights.zeros_like());
  parallel_for(static_cast<std::size_t>(shards), [&](std::size_t s) {
    const int first = static_cast<int>(s) * kShardPatches;
    const int n = std::min(kShardPatches, count - first);
    std::vector<float> input(static_cast<std::size_t>(n) * patch_size);
    for (int p = 0; p < n; ++p) {
      const auto& v = patches[static_cast<std::size_t>(first + p)].values;
      std::copy(v.begin(), v.end(), input.begin() + static_cast<std::ptrdiff_t>(p) * patch_size);
    }
    const RowMatrix<float> t = targets.middleRows(static_cast<Eigen::Index>(first) * frames,
                                                  static_cast<Eigen::Index>(n) * frames);
    Activations<float> act;
    loss_and_gradient(net, params.weights, input.data(), n, t, scale, &partial[s], act);
  });
  Gradients total = params.weights.zeros_like();
  for (const auto& g : partial) total += g;
  return total;
}

OptimizerState make_optimizer(const ParamSet<float>& params, const AdamSettings& settings) {
  OptimizerState s;
  s.settings = settings;
  s.learning_rate = settings.learning_rate;
  for (const auto& t : params.tensors) {
    s.first_moment.emplace_back(t.size(), 0.0f);
    s.second_moment.emplace_back(t.size(), 0.0f);
  }
  return s;
}

bool adam_step(ParamSet<float>& params, const Gradients& grads, OptimizerState& state) {
  for (const auto& t : grads.tensors) {
    for (float g : t.data) {
      if (!std::isfinite(g)) {
        ++state.skipped_batches;
        return false;
      }
    }
  }
  const auto& cfg = state.settings;
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  const double lr = state.learning_rate;
  for (std::size_t i = 0; i < params.tensors.size(); ++i) {
    auto& w = params.tensors[i].data;
    const auto& g = grads.tensors[i].data;
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double gk = g[k];
      const double mk = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * gk;
      const double vk = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * gk * gk;
      m[k] = static_cast<float>(mk);
      v[k] = static_cast<float>(vk);
      w[k] = static_cast<float>(w[k] - lr * (mk / c1) / (std::sqrt(vk / c2) + cfg.epsilon));
    }
  }
  return true;
}

bool plateau_update(OptimizerState& state, double val_accuracy) {
  if (val_accuracy > state.best_val_accuracy) {
    state.best_val_accuracy = val_accuracy;
    state.plateau_counter = 0;
    return true;
  }
  if (++state.plateau_counter >= state.settings.plateau_patience) {
    state.learning_rate *= state.settings.plateau_factor;
    state.plateau_counter = 0;
  }
  return false;
}

RowMatrix<float> frame_posteriors(const ModelParams& params, const Spectrogram& spec) {
  check_input_shape(params.config);
  const Network<float> net(params.config);
  net.check_shapes(params.weights);
  // Windows [0, 30], [31, 61], ... tile the track; the last one may run past
  // the end, where the frontend reflects and the surplus rows are dropped.
  std::vector<int> centers;
  for (int c = kHalfContext; c - kHalfContext < spec.n_frames; c += kContextFrames) centers.push_back(c);
  const int count = static_cast<int>(centers.size());
  const std::size_t patch_size = static_cast<std::size_t>(kContextFrames) * kNumBins;
  RowMatrix<float> out(spec.n_frames, params.config.output_classes);
  parallel_for(static_cast<std::size_t>(shard_count(count)), [&](std::size_t s) {
    const int first = static_cast<int>(s) * kShardPatches;
    const int n = std::min(kShardPatches, count - first);
    std::vector<float> input(static_cast<std::size_t>(n) * patch_size);
    for (int p = 0; p < n; ++p) {
      extract_patch(spec, centers[static_cast<std::size_t>(first + p)], params.stats,
                    input.data() + static_cast<std::ptrdiff_t>(p) * patch_size);
    }
    Activations<float> act;
    net.forward(params.weights, input.data(), n, act);
    for (int p = 0; p < n; ++p) {
      const int c = centers[static_cast<std::size_t>(first + p)];
      for (int t = 0; t < kContextFrames; ++t) {
        const int frame = c - kHalfContext + t;
        if (frame < 0 || frame >= spec.n_frames) continue;
        out.row(frame) = act.probs.row(static_cast<Eigen::Index>(t) * n + p);
      }
    }
  });
  return out;
}

F0Contour posteriors_to_contour(const RowMatrix<float>& posteriors) {
  F0Contour c;
  c.freqs.resize(static_cast<std::size_t>(posteriors.rows()));
  for (Eigen::Index r = 0; r < posteriors.rows(); ++r) {
    Eigen::Index best = 0;
    posteriors.row(r).maxCoeff(&best);
    c.freqs[static_cast<std::size_t>(r)] = label_to_freq(PitchLabel{static_cast<int>(best)});
  }
  return c;
}

F0Contour predict_contour(const ModelParams& params, const Spectrogram& spec) {
  return posteriors_to_contour(frame_posteriors(params, spec));
}

F0Contour predict_contour(const ModelParams& params, const AudioClip& clip) {
  return predict_contour(params, stft_logmag(to_mono_8k(clip)));
}

}  // namespace melody
