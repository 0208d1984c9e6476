#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "melody/errors.hpp"
#include "melody/model.hpp"

namespace melody {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'M', 'E', 'L', 'O', 'D', 'Y', 'C', 'K'};
constexpr std::uint32_t kFormatVersion = 1;
constexpr std::uint32_t kMaxCount = 1u << 28;

class Writer {
 public:
  template <typename T>
  void pod(T v) {
    char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    out_.append(b, sizeof(T));
  }
  void str(const std::string& s) {
    pod(static_cast<std::uint32_t>(s.size()));
    out_ += s;
  }
  void floats(const std::vector<float>& v) {
    pod(static_cast<std::uint32_t>(v.size()));
    out_.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(float));
  }
  void raw(const char* p, std::size_t n) { out_.append(p, n); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T pod() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::uint32_t count() {
    const auto n = pod<std::uint32_t>();
    if (n > kMaxCount) throw DataError("checkpoint: implausible element count");
    return n;
  }
  std::string str() {
    const auto n = count();
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::vector<float> floats() {
    const auto n = count();
    need(static_cast<std::size_t>(n) * sizeof(float));
    std::vector<float> v(n);
    std::memcpy(v.data(), bytes_.data() + pos_, n * sizeof(float));
    pos_ += n * sizeof(float);
    return v;
  }
  void expect(const char* p, std::size_t n) {
    need(n);
    if (std::memcmp(bytes_.data() + pos_, p, n) != 0) throw DataError("checkpoint: bad magic");
    pos_ += n;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw DataError("checkpoint: truncated file");
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const ModelParams& params) {
  Writer w;
  w.raw(kMagic, sizeof(kMagic));
  w.pod(kFormatVersion);
  w.str(params.version);

  const ModelConfig& c = params.config;
  w.pod(static_cast<std::uint32_t>(c.conv_blocks.size()));
  for (const auto& b : c.conv_blocks) {
    w.pod(static_cast<std::int32_t>(b.channels));
    w.pod(static_cast<std::int32_t>(b.kernel));
    w.pod(static_cast<std::int32_t>(b.freq_pool));
    w.pod(static_cast<std::uint8_t>(b.residual));
  }
  w.pod(static_cast<std::int32_t>(c.recurrent_hidden));
  w.pod(static_cast<std::uint8_t>(c.bidirectional));
  w.pod(static_cast<std::uint8_t>(c.recurrent == RecurrentKind::kLstm));
  w.pod(static_cast<std::int32_t>(c.output_classes));
  w.pod(static_cast<std::int32_t>(c.context_frames));
  w.pod(static_cast<std::int32_t>(c.input_bins));

  w.floats(params.stats.mean);
  w.floats(params.stats.inv_std);

  const auto& ws = params.weights;
  w.pod(static_cast<std::uint32_t>(ws.tensors.size()));
  for (std::size_t i = 0; i < ws.tensors.size(); ++i) {
    w.str(ws.names[i]);
    w.pod(static_cast<std::uint32_t>(ws.tensors[i].shape.size()));
    for (int d : ws.tensors[i].shape) w.pod(static_cast<std::int32_t>(d));
    w.floats(ws.tensors[i].data);
  }
  return w.take();
}

ModelParams deserialize_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  r.expect(kMagic, sizeof(kMagic));
  const auto format = r.pod<std::uint32_t>();
  if (format != kFormatVersion) {
    throw DataError("checkpoint: unsupported format version " + std::to_string(format));
  }
  ModelParams p;
  p.version = r.str();
  if (p.version != kModelVersionTag) throw DataError("checkpoint: unknown model version '" + p.version + "'");

  ModelConfig& c = p.config;
  const auto blocks = r.count();
  for (std::uint32_t i = 0; i < blocks; ++i) {
    ConvBlockSpec b;
    b.channels = r.pod<std::int32_t>();
    b.kernel = r.pod<std::int32_t>();
    b.freq_pool = r.pod<std::int32_t>();
    b.residual = r.pod<std::uint8_t>() != 0;
    c.conv_blocks.push_back(b);
  }
  c.recurrent_hidden = r.pod<std::int32_t>();
  c.bidirectional = r.pod<std::uint8_t>() != 0;
  c.recurrent = r.pod<std::uint8_t>() != 0 ? RecurrentKind::kLstm : RecurrentKind::kGru;
  c.output_classes = r.pod<std::int32_t>();
  c.context_frames = r.pod<std::int32_t>();
  c.input_bins = r.pod<std::int32_t>();
  try {
    validate(c);
  } catch (const Error& e) {
    throw DataError(std::string("checkpoint: ") + e.what());
  }

  p.stats.mean = r.floats();
  p.stats.inv_std = r.floats();
  if (p.stats.mean.size() != static_cast<std::size_t>(c.input_bins) ||
      p.stats.inv_std.size() != static_cast<std::size_t>(c.input_bins)) {
    throw DataError("checkpoint: normalisation statistics do not match the input width");
  }

  const auto tensors = r.count();
  for (std::uint32_t i = 0; i < tensors; ++i) {
    p.weights.names.push_back(r.str());
    Tensor<float> t;
    const auto rank = r.count();
    std::size_t expected = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const auto dim = r.pod<std::int32_t>();
      if (dim <= 0) throw DataError("checkpoint: non-positive tensor dimension");
      t.shape.push_back(dim);
      expected *= static_cast<std::size_t>(dim);
    }
    t.data = r.floats();
    if (t.data.size() != expected) throw DataError("checkpoint: tensor size does not match its shape");
    p.weights.tensors.push_back(std::move(t));
  }
  if (!r.done()) throw DataError("checkpoint: trailing bytes");
  try {
    Network<float>(c).check_shapes(p.weights);
  } catch (const Error& e) {
    throw DataError(std::string("checkpoint: ") + e.what());
  }
  return p;
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params) {
  const std::string bytes = serialize_checkpoint(params);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("cannot write checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

}  // namespace melody
