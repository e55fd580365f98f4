#include "deepma/model.hpp"

#include <cmath>
#include <random>
#include <string>

namespace deepma {

int ArchConfig::downsample() const {
  int d = 1;
  for (int s : strides) d *= s;
  return d;
}

int ArchConfig::symbol_count() const {
  const long reals = long(feature_height()) * feature_width() * feature_channels();
  return static_cast<int>(reals / 2);
}

void ArchConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ContractViolation("architecture: " + msg); };
  if (height <= 0 || width <= 0 || in_channels <= 0) fail("non-positive image extent");
  if (block_channels.empty()) fail("no residual blocks");
  if (block_channels.size() != strides.size()) {
    fail(std::to_string(block_channels.size()) + " block channel counts but " +
         std::to_string(strides.size()) + " strides");
  }
  for (int c : block_channels) {
    if (c <= 0) fail("non-positive channel count");
  }
  for (int s : strides) {
    if (s != 1 && s != 2) fail("strides must be 1 or 2");
  }
  if (height % downsample() != 0 || width % downsample() != 0) {
    fail("image " + std::to_string(height) + "x" + std::to_string(width) +
         " not divisible by total stride " + std::to_string(downsample()));
  }
  if ((long(feature_height()) * feature_width() * feature_channels()) % 2 != 0) {
    fail("feature map has an odd number of reals");
  }
  if (afb_reduction <= 0) fail("afb_reduction must be positive");
  if (edp_count <= 0) fail("edp_count must be positive");
  if (!(power > 0.0) || !std::isfinite(power)) fail("power budget must be positive");
}

template <typename Scalar>
Ssv pack_complex(const Tensor<Scalar>& feature, double power) {
  if (feature.size() % 2 != 0) {
    throw InvalidShape("pack_complex: odd feature length " + std::to_string(feature.size()));
  }
  Ssv ssv;
  ssv.power = power;
  ssv.symbols.resize(feature.size() / 2);
  for (Index k = 0; k < ssv.symbols.size(); ++k) {
    ssv.symbols[k] = {double(feature[2 * k]), double(feature[2 * k + 1])};
  }
  return ssv;
}

TensorD unpack_complex(const Ssv& ssv) {
  TensorD out({2 * ssv.symbols.size()});
  for (Index k = 0; k < ssv.symbols.size(); ++k) {
    out[2 * k] = ssv.symbols[k].real();
    out[2 * k + 1] = ssv.symbols[k].imag();
  }
  return out;
}

template <typename Scalar>
Ssv power_normalize(const Tensor<Scalar>& feature, double power) {
  if (!(power > 0.0)) throw ContractViolation("power_normalize: power budget must be positive");
  Ssv ssv = pack_complex(feature, power);
  const double norm = ssv.symbols.norm();
  if (!std::isfinite(norm)) throw NumericalError("power_normalize: feature has non-finite entries");
  if (!(norm > 0.0)) {
    throw DegenerateInput("power_normalize: all-zero feature cannot be normalized");
  }
  ssv.symbols *= std::sqrt(double(ssv.symbols.size()) * power) / norm;
  return ssv;
}

template Ssv pack_complex(const Tensor<float>&, double);
template Ssv pack_complex(const Tensor<double>&, double);
template Ssv power_normalize(const Tensor<float>&, double);
template Ssv power_normalize(const Tensor<double>&, double);

namespace {

// GDN positivity floors (beta = root^2 + floor).
constexpr double kBetaFloor = 1e-6;

template <typename S>
class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}

  Tensor<S> normal(Shape shape, double stddev) {
    Tensor<S> t(std::move(shape));
    std::normal_distribution<double> dist(0.0, stddev);
    for (Index i = 0; i < t.size(); ++i) t[i] = static_cast<S>(dist(rng_));
    return t;
  }

 private:
  std::mt19937_64 rng_;
};

template <typename S>
ConvLayer<S> make_conv(Initializer<S>& init, const std::string& name, int cin, int cout,
                       int kernel, int stride, bool transposed) {
  ConvLayer<S> layer;
  layer.stride = stride;
  layer.padding = kernel / 2;
  layer.transposed = transposed;
  const double fan_in = double(cin) * kernel * kernel / (transposed ? stride * stride : 1);
  Shape shape = transposed ? Shape{cin, cout, kernel, kernel} : Shape{cout, cin, kernel, kernel};
  // He scaling: most layers feed a PReLU.
  layer.weight = Parameter<S>(name + ".weight", init.normal(shape, std::sqrt(2.0 / fan_in)));
  layer.bias = Parameter<S>(name + ".bias", Tensor<S>(Shape{cout}));
  return layer;
}

template <typename S>
GdnLayer<S> make_gdn(const std::string& name, int channels, bool inverse) {
  GdnLayer<S> layer;
  layer.inverse = inverse;
  Tensor<S> gamma({channels, channels});
  // Off-diagonal roots start away from zero so their gradient is not stuck.
  gamma.data().setConstant(S(0.01));
  for (int i = 0; i < channels; ++i) gamma[i * channels + i] = static_cast<S>(std::sqrt(0.1));
  layer.beta_root = Parameter<S>(name + ".beta_root", Tensor<S>::constant({channels}, S(1)));
  layer.gamma_root = Parameter<S>(name + ".gamma_root", std::move(gamma));
  return layer;
}

template <typename S>
PreluLayer<S> make_prelu(const std::string& name, int channels) {
  return {Parameter<S>(name + ".alpha", Tensor<S>::constant({channels}, S(0.25)))};
}

template <typename S>
DenseLayer<S> make_dense(Initializer<S>& init, const std::string& name, int in, int out) {
  return {Parameter<S>(name + ".weight", init.normal({in, out}, std::sqrt(2.0 / in))),
          Parameter<S>(name + ".bias", Tensor<S>(Shape{out}))};
}

template <typename S>
ResidualBlock<S> make_block(Initializer<S>& init, const std::string& name, int cin, int cout,
                            int stride, bool transposed, bool last) {
  ResidualBlock<S> block;
  block.conv_a = make_conv(init, name + ".conv_a", cin, cout, 3, stride, transposed);
  block.act_a = make_prelu<S>(name + ".act_a", cout);
  block.conv_b = make_conv(init, name + ".conv_b", cout, cout, 3, 1, transposed);
  block.norm = make_gdn<S>(name + ".norm", cout, transposed);
  if (cin != cout || stride != 1) {
    block.shortcut = make_conv(init, name + ".shortcut", cin, cout, 1, stride, transposed);
  }
  block.act_out = make_prelu<S>(name + ".act_out", cout);
  block.last = last;
  return block;
}

template <typename S>
AttentionBlock<S> make_attention(Initializer<S>& init, const std::string& name, int channels,
                                 int reduction) {
  const int hidden = std::max(1, channels / reduction);
  return {make_dense(init, name + ".fc1", channels + 1, hidden), make_prelu<S>(name + ".act", hidden),
          make_dense(init, name + ".fc2", hidden, channels)};
}

template <typename S>
EdpModel<S> make_edp(Initializer<S>& init, const ArchConfig& arch, int index) {
  EdpModel<S> edp;
  edp.index = index;
  const std::string prefix = "edp" + std::to_string(index);
  const int n = static_cast<int>(arch.block_channels.size());
  int cin = arch.in_channels;
  for (int j = 0; j < n; ++j) {
    const int cout = arch.block_channels[j];
    const std::string name = prefix + ".enc.block" + std::to_string(j);
    edp.encoder_blocks.push_back(make_block(init, name, cin, cout, arch.strides[j], false, j == n - 1));
    if (j < n - 1) {
      edp.encoder_attention.push_back(
          make_attention(init, prefix + ".enc.afb" + std::to_string(j), cout, arch.afb_reduction));
    }
    cin = cout;
  }
  // Decoder mirrors the encoder channels; upsampling happens in the same block
  // positions as the encoder's downsampling.
  for (int j = 0; j < n; ++j) {
    const int cout = j == n - 1 ? arch.in_channels : arch.block_channels[n - 2 - j];
    const std::string name = prefix + ".dec.block" + std::to_string(j);
    edp.decoder_blocks.push_back(make_block(init, name, cin, cout, arch.strides[j], true, j == n - 1));
    if (j < n - 1) {
      edp.decoder_attention.push_back(
          make_attention(init, prefix + ".dec.afb" + std::to_string(j), cout, arch.afb_reduction));
    }
    cin = cout;
  }
  return edp;
}

template <typename S, typename Block, typename Fn>
void visit_block(Block& b, Fn&& fn) {
  fn(b.conv_a.weight);
  fn(b.conv_a.bias);
  fn(b.act_a.alpha);
  fn(b.conv_b.weight);
  fn(b.conv_b.bias);
  fn(b.norm.beta_root);
  fn(b.norm.gamma_root);
  if (b.shortcut) {
    fn(b.shortcut->weight);
    fn(b.shortcut->bias);
  }
  fn(b.act_out.alpha);
}

template <typename S, typename Attn, typename Fn>
void visit_attention(Attn& a, Fn&& fn) {
  fn(a.fc1.weight);
  fn(a.fc1.bias);
  fn(a.act.alpha);
  fn(a.fc2.weight);
  fn(a.fc2.bias);
}

template <typename S, typename Model, typename Fn>
void visit_edp(Model& edp, Fn&& fn) {
  for (std::size_t j = 0; j < edp.encoder_blocks.size(); ++j) {
    visit_block<S>(edp.encoder_blocks[j], fn);
    if (j < edp.encoder_attention.size()) visit_attention<S>(edp.encoder_attention[j], fn);
  }
  for (std::size_t j = 0; j < edp.decoder_blocks.size(); ++j) {
    visit_block<S>(edp.decoder_blocks[j], fn);
    if (j < edp.decoder_attention.size()) visit_attention<S>(edp.decoder_attention[j], fn);
  }
}

template <typename S>
Var<S> apply_conv(Graph<S>& g, ConvLayer<S>& layer, Var<S> x) {
  Var<S> w = g.parameter(layer.weight);
  Var<S> b = g.parameter(layer.bias);
  return layer.transposed ? transposed_conv2d(x, w, b, layer.stride, layer.padding)
                          : conv2d(x, w, b, layer.stride, layer.padding);
}

template <typename S>
Var<S> apply_gdn(Graph<S>& g, GdnLayer<S>& layer, Var<S> x) {
  Var<S> beta = square_plus(g.parameter(layer.beta_root), S(kBetaFloor));
  Var<S> gamma = square_plus(g.parameter(layer.gamma_root), S(0));
  return layer.inverse ? igdn(x, beta, gamma) : gdn(x, beta, gamma);
}

template <typename S>
Var<S> apply_prelu(Graph<S>& g, PreluLayer<S>& layer, Var<S> x) {
  return prelu(x, g.parameter(layer.alpha));
}

template <typename S>
Var<S> apply_dense(Graph<S>& g, DenseLayer<S>& layer, Var<S> x) {
  return dense(x, g.parameter(layer.weight), g.parameter(layer.bias));
}

template <typename S>
Var<S> apply_block(Graph<S>& g, ResidualBlock<S>& block, Var<S> x) {
  Var<S> main = apply_conv(g, block.conv_a, x);
  main = apply_prelu(g, block.act_a, main);
  main = apply_gdn(g, block.norm, apply_conv(g, block.conv_b, main));
  Var<S> skip = block.shortcut ? apply_conv(g, *block.shortcut, x) : x;
  Var<S> out = main + skip;
  return block.last ? out : apply_prelu(g, block.act_out, out);
}

template <typename S>
Var<S> apply_attention(Graph<S>& g, AttentionBlock<S>& afb, Var<S> x, double snr_db) {
  const Index batch = x.dim(0);
  Var<S> snr = g.input(Tensor<S>::constant({batch, 1}, static_cast<S>(snr_db / 20.0)));
  Var<S> context = concat_columns(channel_mean(x), snr);
  Var<S> hidden = apply_prelu(g, afb.act, apply_dense(g, afb.fc1, context));
  Var<S> weights = sigmoid(apply_dense(g, afb.fc2, hidden));
  return channel_scale(x, weights);
}

}  // namespace

template <typename S>
std::vector<Parameter<S>*> EdpModel<S>::parameters() {
  std::vector<Parameter<S>*> out;
  visit_edp<S>(*this, [&](Parameter<S>& p) { out.push_back(&p); });
  return out;
}

template <typename S>
std::vector<const Parameter<S>*> EdpModel<S>::parameters() const {
  std::vector<const Parameter<S>*> out;
  visit_edp<S>(*this, [&](const Parameter<S>& p) { out.push_back(&p); });
  return out;
}

template <typename S>
DmaNet<S> DmaNet<S>::create(const ArchConfig& arch, std::uint64_t seed) {
  arch.validate();
  DmaNet<S> net;
  net.arch = arch;
  Initializer<S> init(seed);
  net.edps.reserve(static_cast<std::size_t>(arch.edp_count));
  for (int i = 0; i < arch.edp_count; ++i) net.edps.push_back(make_edp(init, arch, i));
  return net;
}

template <typename S>
std::vector<Parameter<S>*> DmaNet<S>::parameters() {
  std::vector<Parameter<S>*> out;
  for (auto& edp : edps) {
    auto p = edp.parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

template <typename S>
std::vector<const Parameter<S>*> DmaNet<S>::parameters() const {
  std::vector<const Parameter<S>*> out;
  for (const auto& edp : edps) {
    auto p = edp.parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

template <typename S>
std::size_t DmaNet<S>::parameter_count() const {
  std::size_t n = 0;
  for (const auto* p : parameters()) n += static_cast<std::size_t>(p->value.size());
  return n;
}

template <typename S>
Var<S> encode(EdpModel<S>& edp, const ArchConfig& arch, Var<S> images, double snr_db) {
  Graph<S>& g = *images.graph;
  const Shape expected{images.dim(0), arch.in_channels, arch.height, arch.width};
  if (images.shape() != expected) {
    throw InvalidShape("encode: expected images " + shape_string(expected) + ", got " +
                       shape_string(images.shape()));
  }
  if (!std::isfinite(snr_db)) throw ContractViolation("encode: snr_db must be finite");
  const auto& px = images.value().data();
  if ((px < S(0)).any() || (px > S(1)).any() || !px.allFinite()) {
    throw ContractViolation("encode: pixel values must lie in [0,1]");
  }
  Var<S> x = images;
  for (std::size_t j = 0; j < edp.encoder_blocks.size(); ++j) {
    x = apply_block(g, edp.encoder_blocks[j], x);
    if (j < edp.encoder_attention.size()) x = apply_attention(g, edp.encoder_attention[j], x, snr_db);
  }
  return reshape(x, {x.dim(0), Index(arch.feature_length())});
}

template <typename S>
Var<S> decode(EdpModel<S>& edp, const ArchConfig& arch, Var<S> rmssv, double snr_db) {
  Graph<S>& g = *rmssv.graph;
  if (rmssv.shape().size() != 2 || rmssv.dim(1) != arch.feature_length()) {
    throw InvalidShape("decode: expected [B," + std::to_string(arch.feature_length()) +
                       "] symbols, got " + shape_string(rmssv.shape()));
  }
  if (!std::isfinite(snr_db)) throw ContractViolation("decode: snr_db must be finite");
  // Deep fades equalize into huge symbols and the stacked IGDNs are expansive,
  // so squash anything past a few clean standard deviations first.
  const S limit = S(4.0 * std::sqrt(arch.power / 2.0));
  Var<S> x = reshape(soft_clip(rmssv, limit), {rmssv.dim(0), Index(arch.feature_channels()),
                             Index(arch.feature_height()), Index(arch.feature_width())});
  for (std::size_t j = 0; j < edp.decoder_blocks.size(); ++j) {
    x = apply_block(g, edp.decoder_blocks[j], x);
    if (j < edp.decoder_attention.size()) x = apply_attention(g, edp.decoder_attention[j], x, snr_db);
  }
  return sigmoid(x);
}

template <typename S>
Tensor<S> stack_ssvs(const std::vector<Ssv>& ssvs) {
  if (ssvs.empty()) throw ContractViolation("stack_ssvs: empty list");
  const Index k = ssvs.front().symbol_count();
  Tensor<S> out({Index(ssvs.size()), 2 * k});
  for (std::size_t r = 0; r < ssvs.size(); ++r) {
    if (ssvs[r].symbol_count() != k) {
      throw InvalidShape("stack_ssvs: symbol count " + std::to_string(ssvs[r].symbol_count()) +
                         " != " + std::to_string(k));
    }
    for (Index i = 0; i < k; ++i) {
      out[Index(r) * 2 * k + 2 * i] = static_cast<S>(ssvs[r].symbols[i].real());
      out[Index(r) * 2 * k + 2 * i + 1] = static_cast<S>(ssvs[r].symbols[i].imag());
    }
  }
  return out;
}

template <typename S>
std::vector<Ssv> encode_ssv(EdpModel<S>& edp, const ArchConfig& arch, const Tensor<S>& images,
                            double snr_db) {
  Graph<S> g;
  Var<S> features = encode(edp, arch, g.input(images), snr_db);
  const Index batch = features.dim(0), width = features.dim(1);
  std::vector<Ssv> out;
  out.reserve(static_cast<std::size_t>(batch));
  for (Index r = 0; r < batch; ++r) {
    Tensor<S> row({width}, features.value().data().segment(r * width, width));
    out.push_back(power_normalize(row, arch.power));
  }
  return out;
}

template <typename S>
Tensor<S> decode_ssv(EdpModel<S>& edp, const ArchConfig& arch, const std::vector<Ssv>& rmssvs,
                     double snr_db) {
  Graph<S> g;
  return decode(edp, arch, g.input(stack_ssvs<S>(rmssvs)), snr_db).value();
}

#define DEEPMA_INSTANTIATE(S)                                                                   \
  template struct EdpModel<S>;                                                                  \
  template struct DmaNet<S>;                                                                    \
  template Var<S> encode(EdpModel<S>&, const ArchConfig&, Var<S>, double);                      \
  template Var<S> decode(EdpModel<S>&, const ArchConfig&, Var<S>, double);                      \
  template std::vector<Ssv> encode_ssv(EdpModel<S>&, const ArchConfig&, const Tensor<S>&, double); \
  template Tensor<S> decode_ssv(EdpModel<S>&, const ArchConfig&, const std::vector<Ssv>&, double); \
  template Tensor<S> stack_ssvs(const std::vector<Ssv>&);

DEEPMA_INSTANTIATE(float)
DEEPMA_INSTANTIATE(double)

#undef DEEPMA_INSTANTIATE

}  // namespace deepma
