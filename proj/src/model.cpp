#include "asl/model.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace asl {

void ModelConfig::validate() const {
  if (kernel != 3) throw ConfigError("model: only 3x3 kernels are supported, got " + std::to_string(kernel));
  if (num_classes < 2) throw ConfigError("model: num_classes must be >= 2");
  if (input_c < 1) throw ConfigError("model: input channels must be >= 1");
  for (auto f : conv_filters)
    if (f < 1) throw ConfigError("model: conv filter counts must be >= 1");
  if (dense_units < 1) throw ConfigError("model: dense units must be >= 1");
  if (!(dropout_rate >= 0 && dropout_rate < 1))
    throw ConfigError("model: dropout rate must be in [0, 1)");
  // Per axis: three valid convs, pool, one valid conv, pool.
  auto check_axis = [](std::size_t d, const char* axis) {
    auto fail = [&] {
      throw ConfigError(std::string("model: input ") + axis + "=" + std::to_string(d) +
                        " does not fit conv,conv,conv,pool,conv,pool (needs d-6 even, "
                        "(d-6)/2-2 even and >= 2)");
    };
    if (d < 8 || (d - 6) % 2) fail();
    const std::size_t pooled = (d - 6) / 2;
    if (pooled < 4 || (pooled - 2) % 2) fail();
  };
  check_axis(input_h, "height");
  check_axis(input_w, "width");
}

std::string format_batch_shape(const Shape& sample_shape) {
  std::string s = "(None";
  for (auto d : sample_shape) s += ", " + std::to_string(d);
  return s + ")";
}

std::string ModelSummary::to_string() const {
  std::ostringstream os;
  os << std::left << std::setw(22) << "Layer" << std::setw(24) << "Output Shape"
     << "# Parameters\n";
  os << std::string(58, '-') << '\n';
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::string shape = format_batch_shape(rows[i].output_shape);
    if (i == 0) shape = "[" + shape + "]";
    os << std::left << std::setw(22) << rows[i].layer << std::setw(24) << shape << rows[i].params
       << '\n';
  }
  os << std::string(58, '-') << '\n';
  os << "Total params: " << total << '\n';
  os << "Trainable params: " << trainable << '\n';
  os << "Non-trainable params: " << non_trainable << '\n';
  return os.str();
}

template <typename T>
Model<T>::Model(const ModelConfig& cfg) : cfg_(cfg) {
  Rng rng = Rng(cfg.seed).fork("init");
  build(rng);
}

template <typename T>
Model<T>::Model(const ModelConfig& cfg, Rng& init_rng) : cfg_(cfg) {
  build(init_rng);
}

template <typename T>
void Model<T>::build(Rng& rng) {
  cfg_.validate();
  const auto& f = cfg_.conv_filters;
  const std::size_t h = cfg_.input_h, w = cfg_.input_w;
  const std::size_t flat = ((h - 6) / 2 - 2) / 2 * (((w - 6) / 2 - 2) / 2) * f[3];
  const DropoutSpec drop{cfg_.dropout_rate};

  layers_.clear();
  layers_.push_back(std::make_unique<InputLayer<T>>("input", cfg_.input_shape()));
  layers_.push_back(std::make_unique<Conv2DLayer<T>>(
      "conv1", ConvParams<T>::init(rng, cfg_.input_c, f[0]), /*need_input_grad=*/false));
  layers_.push_back(std::make_unique<BatchNormLayer<T>>("bn1", BatchNormParams<T>::init(f[0])));
  layers_.push_back(std::make_unique<Conv2DLayer<T>>("conv2", ConvParams<T>::init(rng, f[0], f[1])));
  layers_.push_back(std::make_unique<Conv2DLayer<T>>("conv3", ConvParams<T>::init(rng, f[1], f[2])));
  layers_.push_back(std::make_unique<MaxPoolLayer<T>>("pool1"));
  layers_.push_back(std::make_unique<DropoutLayer<T>>("dropout", drop));
  layers_.push_back(std::make_unique<BatchNormLayer<T>>("bn2", BatchNormParams<T>::init(f[2])));
  layers_.push_back(std::make_unique<Conv2DLayer<T>>("conv4", ConvParams<T>::init(rng, f[2], f[3])));
  layers_.push_back(std::make_unique<MaxPoolLayer<T>>("pool2"));
  layers_.push_back(std::make_unique<FlattenLayer<T>>("flatten"));
  layers_.push_back(std::make_unique<DenseLayer<T>>(
      "dense1", DenseParams<T>::init(rng, flat, cfg_.dense_units), Activation::kRelu));
  layers_.push_back(std::make_unique<DenseLayer<T>>(
      "dense2", DenseParams<T>::init(rng, cfg_.dense_units, cfg_.num_classes), Activation::kNone));
}

template <typename T>
BasicTensor<T> Model<T>::forward(const BasicTensor<T>& x, Mode mode, Rng& rng) {
  BasicTensor<T> a = layers_.front()->forward(x, mode, rng);
  for (std::size_t i = 1; i < layers_.size(); ++i) a = layers_[i]->forward(a, mode, rng);
  logits_ = std::move(a);
  trained_forward_ = mode == Mode::kTrain;
  return softmax(logits_);
}

template <typename T>
BasicTensor<T> Model<T>::predict(const BasicTensor<T>& x) {
  Rng unused(0);
  return forward(x, Mode::kEval, unused);
}

template <typename T>
std::vector<ParamRef<T>> Model<T>::backward(const BasicTensor<T>& grad_logits) {
  if (!trained_forward_)
    throw StateError("model: backward requires a preceding train-mode forward");
  if (grad_logits.shape() != logits_.shape())
    throw ShapeError("model: logit gradient " + shape_string(grad_logits.shape()) +
                     " does not match logits " + shape_string(logits_.shape()));
  BasicTensor<T> g = grad_logits;
  // The input layer is an identity and conv1 skips its input gradient.
  for (std::size_t i = layers_.size() - 1; i >= 1; --i) g = layers_[i]->backward(g);
  return parameters();
}

template <typename T>
std::vector<ParamRef<T>> Model<T>::parameters() {
  std::vector<ParamRef<T>> out;
  for (auto& l : layers_)
    for (auto& p : l->parameters()) out.push_back(std::move(p));
  return out;
}

template <typename T>
std::vector<StateRef<T>> Model<T>::state() {
  std::vector<StateRef<T>> out;
  for (auto& l : layers_)
    for (auto& s : l->state()) out.push_back(std::move(s));
  return out;
}

template <typename T>
ModelSummary Model<T>::summary() const {
  ModelSummary s;
  Shape shape = cfg_.input_shape();
  for (const auto& l : layers_) {
    shape = l->output_shape(shape);
    const std::size_t trainable = l->trainable_count();
    const std::size_t fixed = l->non_trainable_count();
    s.rows.push_back({std::string(l->kind()), shape, trainable + fixed});
    s.trainable += trainable;
    s.non_trainable += fixed;
  }
  s.total = s.trainable + s.non_trainable;
  return s;
}

template <typename T>
void Model<T>::freeze_dropout_masks(bool frozen) {
  for (auto& l : layers_)
    if (auto* d = dynamic_cast<DropoutLayer<T>*>(l.get())) d->freeze_mask(frozen);
}

template <typename T>
void Model<T>::freeze_switches(bool frozen) {
  for (auto& l : layers_) l->freeze_switches(frozen);
}

template class Model<float>;
template class Model<double>;

// ---------------------------------------------------------------------------
// Weights file.

namespace {

constexpr char kMagic[4] = {'A', 'S', 'L', 'W'};
constexpr std::uint8_t kDtypeF32 = 0;

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path) : out_(path, std::ios::binary) {
    if (!out_) throw FormatError("weights: cannot open '" + path.string() + "' for writing");
  }
  void bytes(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
  template <typename U>
  void le(U v) {
    unsigned char buf[sizeof(U)];
    for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
    bytes(buf, sizeof(U));
  }
  void finish(const std::filesystem::path& path) {
    out_.flush();
    if (!out_) throw FormatError("weights: write to '" + path.string() + "' failed");
  }

 private:
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : in_(path, std::ios::binary) {
    if (!in_) throw FormatError("weights: cannot open '" + path.string() + "'");
  }
  void bytes(void* p, std::size_t n, const std::string& what) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n)
      throw FormatError("weights: file truncated while reading " + what);
  }
  template <typename U>
  U le(const std::string& what) {
    unsigned char buf[sizeof(U)];
    bytes(buf, sizeof(U), what);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(U(buf[i]) << (8 * i));
    return v;
  }
  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

 private:
  std::ifstream in_;
};

struct Header {
  std::uint32_t num_classes;
  std::uint32_t tensor_count;
};

Header read_header(Reader& r) {
  char magic[4];
  r.bytes(magic, 4, "header");
  if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("weights: bad magic (expected ASLW)");
  const auto version = r.le<std::uint32_t>("header");
  if (version != kWeightsVersion)
    throw FormatError("weights: unsupported version " + std::to_string(version) + " (expected " +
                      std::to_string(kWeightsVersion) + ")");
  Header h;
  h.num_classes = r.le<std::uint32_t>("header");
  h.tensor_count = r.le<std::uint32_t>("header");
  return h;
}

}  // namespace

void save_weights(Model<float>& model, const std::filesystem::path& path) {
  auto tensors = model.state();
  Writer w(path);
  w.bytes(kMagic, 4);
  w.le<std::uint32_t>(kWeightsVersion);
  w.le<std::uint32_t>(static_cast<std::uint32_t>(model.config().num_classes));
  w.le<std::uint32_t>(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    w.le<std::uint16_t>(static_cast<std::uint16_t>(t.name.size()));
    w.bytes(t.name.data(), t.name.size());
    w.le<std::uint8_t>(static_cast<std::uint8_t>(t.value->rank()));
    for (auto d : t.value->shape()) w.le<std::uint32_t>(static_cast<std::uint32_t>(d));
    w.le<std::uint8_t>(kDtypeF32);
    for (float v : t.value->values()) w.le<std::uint32_t>(std::bit_cast<std::uint32_t>(v));
  }
  w.finish(path);
}

Model<float> load_weights(const std::filesystem::path& path, const ModelConfig& cfg) {
  Model<float> model(cfg);
  auto tensors = model.state();
  Reader r(path);
  const Header h = read_header(r);
  if (h.tensor_count != tensors.size())
    throw FormatError("weights: file holds " + std::to_string(h.tensor_count) +
                      " tensors, model expects " + std::to_string(tensors.size()));
  for (auto& t : tensors) {
    const auto name_len = r.le<std::uint16_t>("tensor header after '" + t.name + "'");
    std::string name(name_len, '\0');
    r.bytes(name.data(), name_len, "tensor name (expected '" + t.name + "')");
    if (name != t.name)
      throw FormatError("weights: found tensor '" + name + "' where '" + t.name + "' was expected");
    const auto ndim = r.le<std::uint8_t>("tensor '" + name + "'");
    Shape shape(ndim);
    for (auto& d : shape) d = r.le<std::uint32_t>("tensor '" + name + "'");
    if (shape != t.value->shape())
      throw FormatError("weights: tensor '" + name + "' has shape " + shape_string(shape) +
                        ", model expects " + shape_string(t.value->shape()));
    const auto dtype = r.le<std::uint8_t>("tensor '" + name + "'");
    if (dtype != kDtypeF32)
      throw FormatError("weights: tensor '" + name + "' has unsupported dtype tag " +
                        std::to_string(dtype));
    std::vector<unsigned char> raw(t.value->size() * 4);
    r.bytes(raw.data(), raw.size(), "payload of tensor '" + name + "'");
    for (std::size_t i = 0; i < t.value->size(); ++i) {
      std::uint32_t bits = 0;
      for (std::size_t b = 0; b < 4; ++b) bits |= std::uint32_t(raw[4 * i + b]) << (8 * b);
      (*t.value)[i] = std::bit_cast<float>(bits);
    }
  }
  if (!r.at_end()) throw FormatError("weights: trailing bytes after the last tensor");
  if (h.num_classes != cfg.num_classes)
    throw FormatError("weights: header declares " + std::to_string(h.num_classes) +
                      " classes, config has " + std::to_string(cfg.num_classes));
  for (std::size_t i = 0; i < model.layer_count(); ++i)
    if (auto* bn = dynamic_cast<BatchNormLayer<float>*>(&model.layer(i)))
      bn->params().updates = kSettledUpdates;
  return model;
}

std::uint32_t peek_weights_num_classes(const std::filesystem::path& path) {
  Reader r(path);
  return read_header(r).num_classes;
}

}  // namespace asl
