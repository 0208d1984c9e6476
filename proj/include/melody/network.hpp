#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

namespace melody {

enum class RecurrentKind { kGru, kLstm };

struct ConvBlockSpec {
  int channels = 8;
  int kernel = 3;
  int freq_pool = 4;
  bool residual = false;  // two convs with a skip path instead of one conv

  friend bool operator==(const ConvBlockSpec&, const ConvBlockSpec&) = default;
};

struct ModelConfig {
  std::vector<ConvBlockSpec> conv_blocks;
  int recurrent_hidden = 32;
  bool bidirectional = true;
  RecurrentKind recurrent = RecurrentKind::kGru;
  int output_classes = 442;
  int context_frames = 31;
  int input_bins = 513;

  // Two plain conv blocks (8 and 16 channels, 3x3, pool 4) and a gated
  // bidirectional recurrent layer of 32 units per direction.
  static ModelConfig desk();
  // Four residual blocks and a bidirectional LSTM.
  static ModelConfig large();
  // A few frequency bins and channels; for gradient checking.
  static ModelConfig tiny(RecurrentKind kind, bool residual);

  int feature_bins() const;  // frequency bins left after pooling
  int sequence_features() const;
  int recurrent_output() const { return recurrent_hidden * (bidirectional ? 2 : 1); }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Throws ArgumentError for inconsistent configurations.
void validate(const ModelConfig& config);

template <typename T>
struct Tensor {
  std::vector<int> shape;
  std::vector<T> data;

  std::size_t size() const { return data.size(); }
};

template <typename T>
struct ParamSet {
  std::vector<std::string> names;
  std::vector<Tensor<T>> tensors;

  std::size_t count() const;
  ParamSet zeros_like() const;
  void set_zero();
  ParamSet& operator+=(const ParamSet& other);

  template <typename U>
  ParamSet<U> cast() const {
    ParamSet<U> out;
    out.names = names;
    for (const auto& t : tensors) out.tensors.push_back({t.shape, std::vector<U>(t.data.begin(), t.data.end())});
    return out;
  }
};

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
struct ConvCache {
  RowMatrix<T> input;    // [Cin x N] block input, N = B*H*W
  RowMatrix<T> cols;     // im2col of the first conv
  RowMatrix<T> pre1;     // first conv output (before ReLU)
  RowMatrix<T> cols2;    // residual: im2col of the hidden activation
  RowMatrix<T> hidden;   // residual: ReLU(pre1)
  RowMatrix<T> pre_out;  // value entering the final ReLU
  RowMatrix<T> pooled;   // [Cout x B*H*W/pool]
  std::vector<int> argmax;
  int width = 0;         // frequency width at block input
};

template <typename T>
struct RecurrentCache {
  // One entry per direction; rows are t*B + b.
  std::vector<RowMatrix<T>> gates;   // activated gates
  std::vector<RowMatrix<T>> extra;   // GRU: U_n h + b; LSTM: cell state
  std::vector<RowMatrix<T>> hidden;  // h_t
};

template <typename T>
struct Activations {
  int batch = 0;
  std::vector<ConvCache<T>> conv;
  RowMatrix<T> sequence;   // [T*B x D] recurrent input
  RecurrentCache<T> rec;
  RowMatrix<T> rec_out;    // [T*B x H*dirs]
  RowMatrix<T> probs;      // [T*B x classes], softmax
};

// Frame classifier over a window of `context_frames` spectrogram frames.
// Input is [batch][frames][bins]; output row t*batch + b holds the class
// distribution for frame t of patch b.
template <typename T>
class Network {
 public:
  explicit Network(ModelConfig config);

  const ModelConfig& config() const { return config_; }

  ParamSet<T> init_params(std::uint64_t seed) const;

  void forward(const ParamSet<T>& params, const T* input, int batch, Activations<T>& act) const;

  // Accumulates parameter gradients for the given d(loss)/d(logits).
  void backward(const ParamSet<T>& params, const Activations<T>& act, const RowMatrix<T>& dlogits,
                ParamSet<T>& grads) const;

  void check_shapes(const ParamSet<T>& params) const;

 private:
  struct ConvIndex {
    int w1, b1, w2 = -1, b2 = -1, skip_w = -1, skip_b = -1;
  };
  struct RecIndex {
    int wx, bx, u, bh;
  };

  ModelConfig config_;
  std::vector<ConvIndex> conv_idx_;
  std::vector<RecIndex> rec_idx_;
  int out_w_ = 0, out_b_ = 0;
  std::vector<std::string> names_;
  std::vector<std::vector<int>> shapes_;
  std::vector<double> init_limits_;

  int add_param(std::string name, std::vector<int> shape, double init_limit);
};

extern template class Network<float>;
extern template class Network<double>;
extern template struct ParamSet<float>;
extern template struct ParamSet<double>;

}  // namespace melody
