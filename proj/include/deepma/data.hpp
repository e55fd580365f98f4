#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "deepma/tensor.hpp"

namespace deepma {

// 8-bit images stored plane-major (count x channels x height x width).
struct ImageSet {
  Index count = 0;
  Index channels = 3;
  Index height = 0;
  Index width = 0;
  std::vector<std::uint8_t> pixels;
  std::vector<int> labels;  // empty when the source has none
  std::string source;

  Index image_size() const { return channels * height * width; }
  std::span<const std::uint8_t> image(Index i) const;
  ImageSet subset(Index first, Index n) const;
};

inline constexpr Index kCifarSide = 32;
inline constexpr Index kCifar10Record = 1 + 3 * kCifarSide * kCifarSide;
inline constexpr Index kCifar100Record = 2 + 3 * kCifarSide * kCifarSide;

ImageSet load_cifar10(const std::filesystem::path& path);
// Keeps the fine label; the coarse label is dropped.
ImageSet load_cifar100(const std::filesystem::path& path);

enum class SyntheticKind { noise, gradients, shapes };
SyntheticKind parse_synthetic_kind(const std::string& name);

ImageSet synthetic_set(Index n, Index height, Index width, std::uint64_t seed, SyntheticKind kind);

// p / 255 into a [B,C,H,W] tensor of the selected images.
template <typename S>
Tensor<S> normalize(const ImageSet& set, std::span<const Index> indices);
template <typename S>
Tensor<S> normalize(const ImageSet& set);

// round(255 * clamp(v, 0, 1)), halves rounded up.
template <typename S>
std::vector<std::uint8_t> denormalize(const Tensor<S>& images);

ImageSet center_crop(const ImageSet& set, Index size);

// Binary PPM (P6, maxval 255) of one plane-major RGB image.
std::vector<std::uint8_t> encode_ppm(std::span<const std::uint8_t> planar, Index height, Index width);
void write_ppm(const std::filesystem::path& path, std::span<const std::uint8_t> planar, Index height,
               Index width);

}  // namespace deepma
