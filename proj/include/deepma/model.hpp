#pragma once

#include <complex>
#include <cstdint>
#include <optional>
#include <vector>

#include "deepma/autodiff.hpp"

namespace deepma {

// Shape hyperparameters shared by every encoder/decoder pair of a DmaNet.
struct ArchConfig {
  int height = 16;
  int width = 16;
  int in_channels = 3;
  std::vector<int> block_channels{32, 64, 64, 16};  // last entry is c
  std::vector<int> strides{1, 2, 2, 2};
  int afb_reduction = 2;  // attention hidden width = C / afb_reduction
  int edp_count = 2;
  double power = 2.0;  // P_z, watts

  int feature_channels() const { return block_channels.back(); }
  int downsample() const;
  int feature_height() const { return height / downsample(); }
  int feature_width() const { return width / downsample(); }
  // Complex symbols per SSV: H*W*c / (2 * downsample^2), i.e. H*W*c/128 by default.
  int symbol_count() const;
  int feature_length() const { return 2 * symbol_count(); }
  void validate() const;

  bool operator==(const ArchConfig&) const = default;
};

// K complex symbols (interleaved re/im in memory) with their power budget.
struct Ssv {
  Eigen::VectorXcd symbols;
  double power = 2.0;

  Index symbol_count() const { return symbols.size(); }
  double average_power() const { return symbols.squaredNorm() / double(symbols.size()); }
};

// Interleaved (re, im) pairs -> complex symbols. Odd lengths are rejected.
template <typename Scalar>
Ssv pack_complex(const Tensor<Scalar>& feature, double power = 2.0);
TensorD unpack_complex(const Ssv& ssv);

// z = sqrt(K * power) * y / ||y||. Throws DegenerateInput on an all-zero y.
template <typename Scalar>
Ssv power_normalize(const Tensor<Scalar>& feature, double power);

template <typename S>
struct ConvLayer {
  Parameter<S> weight;
  Parameter<S> bias;
  int stride = 1;
  int padding = 1;
  bool transposed = false;
};

// Divisive normalization stored through square roots: beta = root^2 + floor.
template <typename S>
struct GdnLayer {
  Parameter<S> beta_root;
  Parameter<S> gamma_root;
  bool inverse = false;
};

template <typename S>
struct DenseLayer {
  Parameter<S> weight;
  Parameter<S> bias;
};

template <typename S>
struct PreluLayer {
  Parameter<S> alpha;
};

// conv_a -> PReLU -> conv_b -> (I)GDN, plus shortcut.
template <typename S>
struct ResidualBlock {
  ConvLayer<S> conv_a;
  PreluLayer<S> act_a;
  ConvLayer<S> conv_b;
  GdnLayer<S> norm;
  std::optional<ConvLayer<S>> shortcut;
  PreluLayer<S> act_out;
  bool last = false;  // no output activation
};

// SNR-conditioned channel gate.
template <typename S>
struct AttentionBlock {
  DenseLayer<S> fc1;
  PreluLayer<S> act;
  DenseLayer<S> fc2;
};

template <typename S>
struct EdpModel {
  int index = 0;
  std::vector<ResidualBlock<S>> encoder_blocks;
  std::vector<AttentionBlock<S>> encoder_attention;
  std::vector<ResidualBlock<S>> decoder_blocks;
  std::vector<AttentionBlock<S>> decoder_attention;

  // Every learnable tensor in a fixed order (encoder first, then decoder).
  std::vector<Parameter<S>*> parameters();
  std::vector<const Parameter<S>*> parameters() const;
};

template <typename S>
struct DmaNet {
  ArchConfig arch;
  std::vector<EdpModel<S>> edps;

  static DmaNet create(const ArchConfig& arch, std::uint64_t seed);

  std::vector<Parameter<S>*> parameters();
  std::vector<const Parameter<S>*> parameters() const;
  std::size_t parameter_count() const;
};

using DmaNetF = DmaNet<float>;

// Graph-level encoder: images [B,3,H,W] in [0,1] -> raw features [B,2K].
template <typename S>
Var<S> encode(EdpModel<S>& edp, const ArchConfig& arch, Var<S> images, double snr_db);

// Graph-level decoder: received symbols [B,2K] -> images [B,3,H,W] in (0,1).
template <typename S>
Var<S> decode(EdpModel<S>& edp, const ArchConfig& arch, Var<S> rmssv, double snr_db);

// Encodes and power-normalizes a batch, one Ssv per image.
template <typename S>
std::vector<Ssv> encode_ssv(EdpModel<S>& edp, const ArchConfig& arch, const Tensor<S>& images,
                            double snr_db);

// Decodes a list of received symbol vectors into a batch of images.
template <typename S>
Tensor<S> decode_ssv(EdpModel<S>& edp, const ArchConfig& arch, const std::vector<Ssv>& rmssvs,
                     double snr_db);

// [B,2K] rows <-> Ssv list.
template <typename S>
Tensor<S> stack_ssvs(const std::vector<Ssv>& ssvs);

}  // namespace deepma
