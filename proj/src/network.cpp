#include <algorithm>
#include <cmath>

#include "melody/errors.hpp"
#include "melody/network.hpp"
#include "melody/rng.hpp"

namespace melody {

ModelConfig ModelConfig::desk() {
  ModelConfig c;
  c.conv_blocks = {{8, 3, 4, false}, {16, 3, 4, false}};
  c.recurrent_hidden = 32;
  c.bidirectional = true;
  c.recurrent = RecurrentKind::kGru;
  return c;
}

ModelConfig ModelConfig::large() {
  ModelConfig c;
  c.conv_blocks = {{64, 3, 1, true}, {128, 3, 4, true}, {192, 3, 4, true}, {256, 3, 4, true}};
  c.recurrent_hidden = 256;
  c.bidirectional = true;
  c.recurrent = RecurrentKind::kLstm;
  return c;
}

ModelConfig ModelConfig::tiny(RecurrentKind kind, bool residual) {
  ModelConfig c;
  c.conv_blocks = {{2, 3, 2, residual}, {3, 3, 2, residual}};
  c.recurrent_hidden = 3;
  c.bidirectional = true;
  c.recurrent = kind;
  c.context_frames = 5;
  c.input_bins = 9;
  return c;
}

int ModelConfig::feature_bins() const {
  int w = input_bins;
  for (const auto& b : conv_blocks) w /= b.freq_pool;
  return w;
}

int ModelConfig::sequence_features() const {
  const int channels = conv_blocks.empty() ? 1 : conv_blocks.back().channels;
  return channels * feature_bins();
}

void validate(const ModelConfig& c) {
  if (c.output_classes < 2) throw ArgumentError("model needs at least two output classes");
  if (c.context_frames < 1 || c.input_bins < 1) throw ArgumentError("model input must be non-empty");
  if (c.recurrent_hidden < 1) throw ArgumentError("recurrent layer needs hidden units");
  for (const auto& b : c.conv_blocks) {
    if (b.channels < 1 || b.freq_pool < 1 || b.kernel < 1 || b.kernel % 2 == 0) {
      throw ArgumentError("conv blocks need positive channels/pooling and an odd kernel");
    }
  }
  if (c.feature_bins() < 1) throw ArgumentError("frequency pooling leaves no bins");
}

template <typename T>
std::size_t ParamSet<T>::count() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.size();
  return n;
}

template <typename T>
ParamSet<T> ParamSet<T>::zeros_like() const {
  ParamSet out;
  out.names = names;
  for (const auto& t : tensors) out.tensors.push_back({t.shape, std::vector<T>(t.size(), T(0))});
  return out;
}

template <typename T>
void ParamSet<T>::set_zero() {
  for (auto& t : tensors) std::fill(t.data.begin(), t.data.end(), T(0));
}

template <typename T>
ParamSet<T>& ParamSet<T>::operator+=(const ParamSet& other) {
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    auto& a = tensors[i].data;
    const auto& b = other.tensors[i].data;
    for (std::size_t k = 0; k < a.size(); ++k) a[k] += b[k];
  }
  return *this;
}

namespace {

template <typename T>
using Map = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMap = Eigen::Map<const RowMatrix<T>>;
template <typename T>
using RowVec = Eigen::Matrix<T, 1, Eigen::Dynamic>;
template <typename T>
using ConstRowVecMap = Eigen::Map<const RowVec<T>>;

template <typename T>
ConstMap<T> as_matrix(const Tensor<T>& t, int rows, int cols) {
  return ConstMap<T>(t.data.data(), rows, cols);
}

template <typename T>
Map<T> as_matrix(Tensor<T>& t, int rows, int cols) {
  return Map<T>(t.data.data(), rows, cols);
}

template <typename T>
ConstRowVecMap<T> as_row(const Tensor<T>& t) {
  return ConstRowVecMap<T>(t.data.data(), static_cast<Eigen::Index>(t.size()));
}

template <typename T>
void add_to(Tensor<T>& t, const RowVec<T>& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) t.data[static_cast<std::size_t>(i)] += v[i];
}

// Geometry of a [C x B*H*W] activation.
struct Grid {
  int batch, height, width;
  Eigen::Index columns() const { return static_cast<Eigen::Index>(batch) * height * width; }
};

// "Same" padding im2col; rows are (channel, ky, kx), columns (b, h, w).
template <typename T>
void im2col(const RowMatrix<T>& in, const Grid& g, int k, RowMatrix<T>& cols) {
  const int channels = static_cast<int>(in.rows());
  const int pad = k / 2;
  cols.resize(static_cast<Eigen::Index>(channels) * k * k, g.columns());
  for (int c = 0; c < channels; ++c) {
    const T* src = in.row(c).data();
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* dst = cols.row((c * k + ky) * k + kx).data();
        const int dy = ky - pad, dx = kx - pad;
        const int w_lo = std::max(0, -dx), w_hi = std::min(g.width, g.width - dx);
        for (int b = 0; b < g.batch; ++b) {
          for (int h = 0; h < g.height; ++h) {
            T* out = dst + (static_cast<std::ptrdiff_t>(b) * g.height + h) * g.width;
            const int sh = h + dy;
            if (sh < 0 || sh >= g.height || w_lo >= w_hi) {
              std::fill(out, out + g.width, T(0));
              continue;
            }
            const T* row = src + (static_cast<std::ptrdiff_t>(b) * g.height + sh) * g.width;
            std::fill(out, out + w_lo, T(0));
            for (int w = w_lo; w < w_hi; ++w) out[w] = row[w + dx];
            std::fill(out + w_hi, out + g.width, T(0));
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const RowMatrix<T>& cols, const Grid& g, int k, int channels, RowMatrix<T>& out) {
  const int pad = k / 2;
  out.setZero(channels, g.columns());
  for (int c = 0; c < channels; ++c) {
    T* dst = out.row(c).data();
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* src = cols.row((c * k + ky) * k + kx).data();
        const int dy = ky - pad, dx = kx - pad;
        const int w_lo = std::max(0, -dx), w_hi = std::min(g.width, g.width - dx);
        for (int b = 0; b < g.batch; ++b) {
          for (int h = 0; h < g.height; ++h) {
            const int sh = h + dy;
            if (sh < 0 || sh >= g.height) continue;
            const T* in = src + (static_cast<std::ptrdiff_t>(b) * g.height + h) * g.width;
            T* row = dst + (static_cast<std::ptrdiff_t>(b) * g.height + sh) * g.width;
            for (int w = w_lo; w < w_hi; ++w) row[w + dx] += in[w];
          }
        }
      }
    }
  }
}

template <typename T>
T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

}  // namespace

template <typename T>
Network<T>::Network(ModelConfig config) : config_(std::move(config)) {
  validate(config_);
  int in_channels = 1;
  for (std::size_t i = 0; i < config_.conv_blocks.size(); ++i) {
    const auto& b = config_.conv_blocks[i];
    const std::string p = "conv" + std::to_string(i);
    const int k = b.kernel;
    const double relu_limit = std::sqrt(6.0 / (in_channels * k * k));
    ConvIndex idx;
    idx.w1 = add_param(p + ".w1", {b.channels, in_channels, k, k}, relu_limit);
    idx.b1 = add_param(p + ".b1", {b.channels}, 0.0);
    if (b.residual) {
      idx.w2 = add_param(p + ".w2", {b.channels, b.channels, k, k}, std::sqrt(6.0 / (b.channels * k * k)));
      idx.b2 = add_param(p + ".b2", {b.channels}, 0.0);
      if (in_channels != b.channels) {
        idx.skip_w = add_param(p + ".skip_w", {b.channels, in_channels}, std::sqrt(3.0 / in_channels));
        idx.skip_b = add_param(p + ".skip_b", {b.channels}, 0.0);
      }
    }
    conv_idx_.push_back(idx);
    in_channels = b.channels;
  }
  const int gates = config_.recurrent == RecurrentKind::kGru ? 3 : 4;
  const int h = config_.recurrent_hidden;
  const int d = config_.sequence_features();
  const int dirs = config_.bidirectional ? 2 : 1;
  for (int dir = 0; dir < dirs; ++dir) {
    const std::string p = std::string("rnn.") + (dir == 0 ? "fwd" : "bwd");
    RecIndex idx;
    idx.wx = add_param(p + ".wx", {d, gates * h}, std::sqrt(3.0 / d));
    idx.bx = add_param(p + ".bx", {gates * h}, 0.0);
    idx.u = add_param(p + ".u", {h, gates * h}, std::sqrt(3.0 / h));
    idx.bh = config_.recurrent == RecurrentKind::kGru ? add_param(p + ".bh", {h}, 0.0) : -1;
    rec_idx_.push_back(idx);
  }
  const int ro = config_.recurrent_output();
  out_w_ = add_param("out.w", {ro, config_.output_classes}, std::sqrt(3.0 / ro));
  out_b_ = add_param("out.b", {config_.output_classes}, 0.0);
}

template <typename T>
int Network<T>::add_param(std::string name, std::vector<int> shape, double init_limit) {
  names_.push_back(std::move(name));
  shapes_.push_back(std::move(shape));
  init_limits_.push_back(init_limit);
  return static_cast<int>(names_.size()) - 1;
}

template <typename T>
ParamSet<T> Network<T>::init_params(std::uint64_t seed) const {
  Rng rng(seed);
  ParamSet<T> p;
  p.names = names_;
  for (std::size_t i = 0; i < shapes_.size(); ++i) {
    std::size_t n = 1;
    for (int s : shapes_[i]) n *= static_cast<std::size_t>(s);
    Tensor<T> t{shapes_[i], std::vector<T>(n, T(0))};
    const double limit = init_limits_[i];
    if (limit > 0.0) {
      std::uniform_real_distribution<double> dist(-limit, limit);
      for (auto& v : t.data) v = static_cast<T>(dist(rng));
    }
    p.tensors.push_back(std::move(t));
  }
  return p;
}

template <typename T>
void Network<T>::check_shapes(const ParamSet<T>& params) const {
  if (params.tensors.size() != shapes_.size()) throw DataError("parameter count does not match the model config");
  for (std::size_t i = 0; i < shapes_.size(); ++i) {
    if (i < params.names.size() && params.names[i] != names_[i]) {
      throw DataError("unexpected parameter '" + params.names[i] + "', expected '" + names_[i] + "'");
    }
    if (params.tensors[i].shape != shapes_[i]) throw DataError("parameter shape mismatch: " + names_[i]);
    std::size_t n = 1;
    for (int s : shapes_[i]) n *= static_cast<std::size_t>(s);
    if (params.tensors[i].size() != n) throw DataError("parameter size mismatch: " + names_[i]);
  }
}

template <typename T>
void Network<T>::forward(const ParamSet<T>& params, const T* input, int batch, Activations<T>& act) const {
  const int frames = config_.context_frames;
  act.batch = batch;
  act.conv.resize(config_.conv_blocks.size());

  // Input [B][H][W] is already channel-major for a single channel.
  RowMatrix<T> x = ConstMap<T>(input, 1, static_cast<Eigen::Index>(batch) * frames * config_.input_bins);
  int width = config_.input_bins;
  int in_channels = 1;

  for (std::size_t i = 0; i < config_.conv_blocks.size(); ++i) {
    const auto& spec = config_.conv_blocks[i];
    const auto& idx = conv_idx_[i];
    auto& cc = act.conv[i];
    const Grid g{batch, frames, width};
    const int k = spec.kernel;
    const int co = spec.channels;
    cc.width = width;
    cc.input = std::move(x);

    im2col(cc.input, g, k, cc.cols);
    const auto w1 = as_matrix(params.tensors[idx.w1], co, in_channels * k * k);
    cc.pre1.noalias() = w1 * cc.cols;
    cc.pre1.colwise() += as_row(params.tensors[idx.b1]).transpose();
    if (spec.residual) {
      cc.hidden = cc.pre1.cwiseMax(T(0));
      im2col(cc.hidden, g, k, cc.cols2);
      const auto w2 = as_matrix(params.tensors[idx.w2], co, co * k * k);
      cc.pre_out.noalias() = w2 * cc.cols2;
      cc.pre_out.colwise() += as_row(params.tensors[idx.b2]).transpose();
      if (idx.skip_w >= 0) {
        const auto ws = as_matrix(params.tensors[idx.skip_w], co, in_channels);
        cc.pre_out.noalias() += ws * cc.input;
        cc.pre_out.colwise() += as_row(params.tensors[idx.skip_b]).transpose();
      } else {
        cc.pre_out += cc.input;
      }
    } else {
      cc.pre_out = cc.pre1;
    }

    // ReLU fused into max pooling along frequency: max(relu(x)) = relu(max(x)).
    const int pool = spec.freq_pool;
    const int out_w = width / pool;
    const Eigen::Index rows_bh = static_cast<Eigen::Index>(batch) * frames;
    cc.pooled.resize(co, rows_bh * out_w);
    cc.argmax.resize(static_cast<std::size_t>(co) * rows_bh * out_w);
    for (int c = 0; c < co; ++c) {
      const T* src = cc.pre_out.row(c).data();
      T* dst = cc.pooled.row(c).data();
      int* arg = cc.argmax.data() + static_cast<std::ptrdiff_t>(c) * rows_bh * out_w;
      for (Eigen::Index r = 0; r < rows_bh; ++r) {
        const T* line = src + r * width;
        for (int w = 0; w < out_w; ++w) {
          int best = w * pool;
          for (int q = 1; q < pool; ++q) {
            if (line[w * pool + q] > line[best]) best = w * pool + q;
          }
          dst[r * out_w + w] = std::max(line[best], T(0));
          arg[r * out_w + w] = static_cast<int>(r * width + best);
        }
      }
    }
    x = cc.pooled;
    width = out_w;
    in_channels = co;
  }

  // [C x (b, t, w)] -> rows t*B + b, columns c*W + w.
  const int features = in_channels * width;
  act.sequence.resize(static_cast<Eigen::Index>(frames) * batch, features);
  for (int c = 0; c < in_channels; ++c) {
    const T* src = x.row(c).data();
    for (int b = 0; b < batch; ++b) {
      for (int t = 0; t < frames; ++t) {
        T* dst = act.sequence.row(static_cast<Eigen::Index>(t) * batch + b).data() + c * width;
        const T* s = src + (static_cast<std::ptrdiff_t>(b) * frames + t) * width;
        std::copy(s, s + width, dst);
      }
    }
  }

  const int h = config_.recurrent_hidden;
  const bool gru = config_.recurrent == RecurrentKind::kGru;
  const int n_gates = gru ? 3 : 4;
  const int dirs = static_cast<int>(rec_idx_.size());
  const Eigen::Index rows = static_cast<Eigen::Index>(frames) * batch;
  act.rec.gates.resize(dirs);
  act.rec.extra.resize(dirs);
  act.rec.hidden.resize(dirs);
  act.rec_out.resize(rows, h * dirs);

  for (int dir = 0; dir < dirs; ++dir) {
    const auto& idx = rec_idx_[dir];
    const auto wx = as_matrix(params.tensors[idx.wx], features, n_gates * h);
    const auto u = as_matrix(params.tensors[idx.u], h, n_gates * h);
    RowMatrix<T>& gates = act.rec.gates[dir];
    RowMatrix<T>& extra = act.rec.extra[dir];
    RowMatrix<T>& hidden = act.rec.hidden[dir];
    gates.noalias() = act.sequence * wx;
    gates.rowwise() += as_row(params.tensors[idx.bx]);
    extra.resize(rows, h);
    hidden.resize(rows, h);
    RowMatrix<T> h_prev = RowMatrix<T>::Zero(batch, h);
    RowMatrix<T> c_prev = RowMatrix<T>::Zero(batch, h);
    RowMatrix<T> rec(batch, n_gates * h);

    for (int s = 0; s < frames; ++s) {
      const int t = dir == 0 ? s : frames - 1 - s;
      const Eigen::Index r0 = static_cast<Eigen::Index>(t) * batch;
      rec.noalias() = h_prev * u;
      auto g = gates.middleRows(r0, batch);
      if (gru) {
        const auto bh = as_row(params.tensors[idx.bh]);
        for (int b = 0; b < batch; ++b) {
          for (int j = 0; j < h; ++j) {
            const T z = sigmoid(g(b, j) + rec(b, j));
            const T r = sigmoid(g(b, h + j) + rec(b, h + j));
            const T hn = rec(b, 2 * h + j) + bh[j];
            const T n = std::tanh(g(b, 2 * h + j) + r * hn);
            g(b, j) = z;
            g(b, h + j) = r;
            g(b, 2 * h + j) = n;
            extra(r0 + b, j) = hn;
            hidden(r0 + b, j) = (T(1) - z) * n + z * h_prev(b, j);
          }
        }
      } else {
        for (int b = 0; b < batch; ++b) {
          for (int j = 0; j < h; ++j) {
            const T ig = sigmoid(g(b, j) + rec(b, j));
            const T fg = sigmoid(g(b, h + j) + rec(b, h + j));
            const T gg = std::tanh(g(b, 2 * h + j) + rec(b, 2 * h + j));
            const T og = sigmoid(g(b, 3 * h + j) + rec(b, 3 * h + j));
            const T c = fg * c_prev(b, j) + ig * gg;
            g(b, j) = ig;
            g(b, h + j) = fg;
            g(b, 2 * h + j) = gg;
            g(b, 3 * h + j) = og;
            extra(r0 + b, j) = c;
            hidden(r0 + b, j) = og * std::tanh(c);
          }
        }
        c_prev = extra.middleRows(r0, batch);
      }
      h_prev = hidden.middleRows(r0, batch);
    }
    act.rec_out.middleCols(static_cast<Eigen::Index>(dir) * h, h) = hidden;
  }

  const auto wo = as_matrix(params.tensors[out_w_], h * dirs, config_.output_classes);
  act.probs.noalias() = act.rec_out * wo;
  act.probs.rowwise() += as_row(params.tensors[out_b_]);
  for (Eigen::Index r = 0; r < act.probs.rows(); ++r) {
    auto row = act.probs.row(r);
    const T m = row.maxCoeff();
    row = (row.array() - m).exp();
    row /= row.sum();
  }
}

template <typename T>
void Network<T>::backward(const ParamSet<T>& params, const Activations<T>& act, const RowMatrix<T>& dlogits,
                          ParamSet<T>& grads) const {
  const int frames = config_.context_frames;
  const int batch = act.batch;
  const int h = config_.recurrent_hidden;
  const bool gru = config_.recurrent == RecurrentKind::kGru;
  const int n_gates = gru ? 3 : 4;
  const int dirs = static_cast<int>(rec_idx_.size());
  const Eigen::Index rows = static_cast<Eigen::Index>(frames) * batch;
  const int features = config_.sequence_features();

  const auto wo = as_matrix(params.tensors[out_w_], h * dirs, config_.output_classes);
  as_matrix(grads.tensors[out_w_], h * dirs, config_.output_classes).noalias() += act.rec_out.transpose() * dlogits;
  add_to<T>(grads.tensors[out_b_], dlogits.colwise().sum());
  const RowMatrix<T> drec_out = dlogits * wo.transpose();

  RowMatrix<T> dseq = RowMatrix<T>::Zero(rows, features);
  for (int dir = 0; dir < dirs; ++dir) {
    const auto& idx = rec_idx_[dir];
    const auto wx = as_matrix(params.tensors[idx.wx], features, n_gates * h);
    const auto u = as_matrix(params.tensors[idx.u], h, n_gates * h);
    auto du = as_matrix(grads.tensors[idx.u], h, n_gates * h);
    const RowMatrix<T>& gates = act.rec.gates[dir];
    const RowMatrix<T>& extra = act.rec.extra[dir];
    const RowMatrix<T>& hidden = act.rec.hidden[dir];

    RowMatrix<T> dgates(rows, n_gates * h);
    RowMatrix<T> dh_carry = RowMatrix<T>::Zero(batch, h);
    RowMatrix<T> dc_carry = RowMatrix<T>::Zero(batch, h);
    RowMatrix<T> drec(batch, n_gates * h);
    RowMatrix<T> h_prev(batch, h);
    RowVec<T> dbh = RowVec<T>::Zero(h);

    for (int s = frames - 1; s >= 0; --s) {
      const int t = dir == 0 ? s : frames - 1 - s;
      const int tp = dir == 0 ? t - 1 : t + 1;
      const Eigen::Index r0 = static_cast<Eigen::Index>(t) * batch;
      if (s > 0) {
        h_prev = hidden.middleRows(static_cast<Eigen::Index>(tp) * batch, batch);
      } else {
        h_prev.setZero();
      }
      const auto g = gates.middleRows(r0, batch);
      auto dg = dgates.middleRows(r0, batch);
      if (gru) {
        for (int b = 0; b < batch; ++b) {
          for (int j = 0; j < h; ++j) {
            const T dh = drec_out(r0 + b, dir * h + j) + dh_carry(b, j);
            const T z = g(b, j), r = g(b, h + j), n = g(b, 2 * h + j);
            const T hn = extra(r0 + b, j);
            const T dn = dh * (T(1) - z);
            const T dz = dh * (h_prev(b, j) - n);
            const T dan = dn * (T(1) - n * n);
            const T dhn = dan * r;
            const T daz = dz * z * (T(1) - z);
            const T dar = dan * hn * r * (T(1) - r);
            dg(b, j) = daz;
            dg(b, h + j) = dar;
            dg(b, 2 * h + j) = dan;
            drec(b, j) = daz;
            drec(b, h + j) = dar;
            drec(b, 2 * h + j) = dhn;
            dbh[j] += dhn;
            dh_carry(b, j) = dh * z;
          }
        }
      } else {
        for (int b = 0; b < batch; ++b) {
          for (int j = 0; j < h; ++j) {
            const T dh = drec_out(r0 + b, dir * h + j) + dh_carry(b, j);
            const T ig = g(b, j), fg = g(b, h + j), gg = g(b, 2 * h + j), og = g(b, 3 * h + j);
            const T c = extra(r0 + b, j);
            const T c_prev = s > 0 ? extra(static_cast<Eigen::Index>(tp) * batch + b, j) : T(0);
            const T tc = std::tanh(c);
            const T dc = dc_carry(b, j) + dh * og * (T(1) - tc * tc);
            const T dai = dc * gg * ig * (T(1) - ig);
            const T daf = dc * c_prev * fg * (T(1) - fg);
            const T dag = dc * ig * (T(1) - gg * gg);
            const T dao = dh * tc * og * (T(1) - og);
            dg(b, j) = dai;
            dg(b, h + j) = daf;
            dg(b, 2 * h + j) = dag;
            dg(b, 3 * h + j) = dao;
            dc_carry(b, j) = dc * fg;
          }
        }
        drec = dg;
        dh_carry.setZero();
      }
      if (s > 0) du.noalias() += h_prev.transpose() * drec;
      dh_carry.noalias() += drec * u.transpose();
    }
    if (gru) add_to<T>(grads.tensors[idx.bh], dbh);
    as_matrix(grads.tensors[idx.wx], features, n_gates * h).noalias() += act.sequence.transpose() * dgates;
    add_to<T>(grads.tensors[idx.bx], dgates.colwise().sum());
    dseq.noalias() += dgates * wx.transpose();
  }

  // Undo the sequence gather into the last block's pooled layout.
  const int n_blocks = static_cast<int>(config_.conv_blocks.size());
  int width = config_.feature_bins();
  int channels = n_blocks == 0 ? 1 : config_.conv_blocks.back().channels;
  RowMatrix<T> dx(channels, static_cast<Eigen::Index>(batch) * frames * width);
  for (int c = 0; c < channels; ++c) {
    T* dst = dx.row(c).data();
    for (int b = 0; b < batch; ++b) {
      for (int t = 0; t < frames; ++t) {
        const T* s = dseq.row(static_cast<Eigen::Index>(t) * batch + b).data() + c * width;
        std::copy(s, s + width, dst + (static_cast<std::ptrdiff_t>(b) * frames + t) * width);
      }
    }
  }

  for (int i = n_blocks - 1; i >= 0; --i) {
    const auto& spec = config_.conv_blocks[static_cast<std::size_t>(i)];
    const auto& idx = conv_idx_[static_cast<std::size_t>(i)];
    const auto& cc = act.conv[static_cast<std::size_t>(i)];
    const int co = spec.channels;
    const int ci = i == 0 ? 1 : config_.conv_blocks[static_cast<std::size_t>(i - 1)].channels;
    const int k = spec.kernel;
    const Grid g{batch, frames, cc.width};

    RowMatrix<T> dpre = RowMatrix<T>::Zero(co, g.columns());
    for (int c = 0; c < co; ++c) {
      const T* pre = cc.pre_out.row(c).data();
      const T* src = dx.row(c).data();
      T* dst = dpre.row(c).data();
      const int* arg = cc.argmax.data() + static_cast<std::ptrdiff_t>(c) * dx.cols();
      for (Eigen::Index q = 0; q < dx.cols(); ++q) {
        if (pre[arg[q]] > T(0)) dst[arg[q]] += src[q];
      }
    }

    const bool need_input_grad = i > 0;
    RowMatrix<T> dpre1;
    if (spec.residual) {
      const auto w2 = as_matrix(params.tensors[idx.w2], co, co * k * k);
      as_matrix(grads.tensors[idx.w2], co, co * k * k).noalias() += dpre * cc.cols2.transpose();
      add_to<T>(grads.tensors[idx.b2], dpre.rowwise().sum().transpose());
      const RowMatrix<T> dcols2 = w2.transpose() * dpre;
      RowMatrix<T> dhidden;
      col2im(dcols2, g, k, co, dhidden);
      dpre1 = dhidden.cwiseProduct((cc.pre1.array() > T(0)).template cast<T>().matrix());
    } else {
      dpre1 = dpre;
    }
    const auto w1 = as_matrix(params.tensors[idx.w1], co, ci * k * k);
    as_matrix(grads.tensors[idx.w1], co, ci * k * k).noalias() += dpre1 * cc.cols.transpose();
    add_to<T>(grads.tensors[idx.b1], dpre1.rowwise().sum().transpose());

    if (spec.residual && idx.skip_w >= 0) {
      as_matrix(grads.tensors[idx.skip_w], co, ci).noalias() += dpre * cc.input.transpose();
      add_to<T>(grads.tensors[idx.skip_b], dpre.rowwise().sum().transpose());
    }

    if (!need_input_grad) break;
    const RowMatrix<T> dcols = w1.transpose() * dpre1;
    RowMatrix<T> dinput;
    col2im(dcols, g, k, ci, dinput);
    if (spec.residual) {
      if (idx.skip_w >= 0) {
        dinput.noalias() += as_matrix(params.tensors[idx.skip_w], co, ci).transpose() * dpre;
      } else {
        dinput += dpre;
      }
    }
    dx = std::move(dinput);
  }
}

template class Network<float>;
template class Network<double>;
template struct ParamSet<float>;
template struct ParamSet<double>;

}  // namespace melody
