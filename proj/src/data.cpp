#include "deepma/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>

namespace deepma {

std::span<const std::uint8_t> ImageSet::image(Index i) const {
  if (i < 0 || i >= count) throw ContractViolation("image index " + std::to_string(i) + " out of range");
  return {pixels.data() + i * image_size(), static_cast<std::size_t>(image_size())};
}

ImageSet ImageSet::subset(Index first, Index n) const {
  if (first < 0 || n < 0 || first + n > count) {
    throw ContractViolation("subset [" + std::to_string(first) + ", " + std::to_string(first + n) +
                            ") exceeds " + std::to_string(count) + " images");
  }
  ImageSet out = *this;
  out.count = n;
  out.pixels.assign(pixels.begin() + first * image_size(), pixels.begin() + (first + n) * image_size());
  if (!labels.empty()) out.labels.assign(labels.begin() + first, labels.begin() + first + n);
  return out;
}

namespace {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

ImageSet load_cifar(const std::filesystem::path& path, Index label_bytes, const char* tag) {
  const auto bytes = read_file(path);
  const Index record = label_bytes + 3 * kCifarSide * kCifarSide;
  const Index size = static_cast<Index>(bytes.size());
  if (size % record != 0) {
    throw FormatError(path.string() + ": size " + std::to_string(size) +
                      " is not a multiple of the " + std::to_string(record) +
                      "-byte record (expected " + std::to_string((size / record + 1) * record) +
                      " or " + std::to_string(size / record * record) + ")");
  }
  ImageSet set;
  set.count = size / record;
  set.height = set.width = kCifarSide;
  set.source = tag;
  set.pixels.resize(static_cast<std::size_t>(set.count * set.image_size()));
  set.labels.resize(static_cast<std::size_t>(set.count));
  for (Index i = 0; i < set.count; ++i) {
    const auto* rec = bytes.data() + i * record;
    set.labels[std::size_t(i)] = rec[label_bytes - 1];
    std::copy(rec + label_bytes, rec + record, set.pixels.begin() + i * set.image_size());
  }
  return set;
}

}  // namespace

ImageSet load_cifar10(const std::filesystem::path& path) {
  return load_cifar(path, 1, "cifar10");
}

ImageSet load_cifar100(const std::filesystem::path& path) {
  return load_cifar(path, 2, "cifar100");
}

SyntheticKind parse_synthetic_kind(const std::string& name) {
  if (name == "noise") return SyntheticKind::noise;
  if (name == "gradients") return SyntheticKind::gradients;
  if (name == "shapes") return SyntheticKind::shapes;
  throw ConfigError("unknown synthetic kind '" + name + "' (expected noise, gradients, shapes)");
}

namespace {

void draw_shapes(std::mt19937_64& rng, std::uint8_t* img, Index h, Index w) {
  std::uniform_int_distribution<int> color(0, 255);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Index plane = h * w;
  int bg[3] = {color(rng), color(rng), color(rng)};
  for (Index c = 0; c < 3; ++c) std::fill(img + c * plane, img + (c + 1) * plane, std::uint8_t(bg[c]));
  const int shapes = 1 + static_cast<int>(unit(rng) * 2.0);
  for (int s = 0; s < shapes; ++s) {
    const int fg[3] = {color(rng), color(rng), color(rng)};
    const bool disc = unit(rng) < 0.5;
    const double cy = unit(rng) * double(h), cx = unit(rng) * double(w);
    const double ry = (0.15 + 0.25 * unit(rng)) * double(h);
    const double rx = disc ? ry : (0.15 + 0.25 * unit(rng)) * double(w);
    for (Index y = 0; y < h; ++y) {
      for (Index x = 0; x < w; ++x) {
        const double dy = (double(y) + 0.5 - cy) / ry, dx = (double(x) + 0.5 - cx) / rx;
        const bool inside = disc ? dx * dx + dy * dy <= 1.0 : std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0;
        if (!inside) continue;
        for (Index c = 0; c < 3; ++c) img[c * plane + y * w + x] = std::uint8_t(fg[c]);
      }
    }
  }
}

void draw_gradient(std::mt19937_64& rng, std::uint8_t* img, Index h, Index w) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Index plane = h * w;
  for (Index c = 0; c < 3; ++c) {
    const double angle = unit(rng) * 2.0 * 3.14159265358979323846;
    const double lo = unit(rng) * 255.0, hi = unit(rng) * 255.0;
    const double uy = std::sin(angle), ux = std::cos(angle);
    const double span = std::abs(uy) * double(h) + std::abs(ux) * double(w);
    const double base = std::min(0.0, uy * double(h)) + std::min(0.0, ux * double(w));
    for (Index y = 0; y < h; ++y) {
      for (Index x = 0; x < w; ++x) {
        const double t = (uy * (double(y) + 0.5) + ux * (double(x) + 0.5) - base) / span;
        img[c * plane + y * w + x] = std::uint8_t(std::lround(lo + (hi - lo) * std::clamp(t, 0.0, 1.0)));
      }
    }
  }
}

}  // namespace

ImageSet synthetic_set(Index n, Index height, Index width, std::uint64_t seed, SyntheticKind kind) {
  if (n < 0 || height <= 0 || width <= 0) throw ContractViolation("synthetic_set: bad dimensions");
  ImageSet set;
  set.count = n;
  set.height = height;
  set.width = width;
  set.source = kind == SyntheticKind::noise ? "noise" : kind == SyntheticKind::gradients ? "gradients" : "shapes";
  set.pixels.resize(static_cast<std::size_t>(n * set.image_size()));
  std::mt19937_64 rng(seed);
  for (Index i = 0; i < n; ++i) {
    std::uint8_t* img = set.pixels.data() + i * set.image_size();
    switch (kind) {
      case SyntheticKind::noise: {
        std::uniform_int_distribution<int> px(0, 255);
        for (Index p = 0; p < set.image_size(); ++p) img[p] = std::uint8_t(px(rng));
        break;
      }
      case SyntheticKind::gradients:
        draw_gradient(rng, img, height, width);
        break;
      case SyntheticKind::shapes:
        draw_shapes(rng, img, height, width);
        break;
    }
  }
  return set;
}

template <typename S>
Tensor<S> normalize(const ImageSet& set, std::span<const Index> indices) {
  if (indices.empty()) throw ContractViolation("normalize: no images selected");
  const Index sz = set.image_size();
  Tensor<S> out({Index(indices.size()), set.channels, set.height, set.width});
  for (std::size_t r = 0; r < indices.size(); ++r) {
    auto img = set.image(indices[r]);
    for (Index p = 0; p < sz; ++p) out[Index(r) * sz + p] = static_cast<S>(img[std::size_t(p)]) / S(255);
  }
  return out;
}

template <typename S>
Tensor<S> normalize(const ImageSet& set) {
  std::vector<Index> all(static_cast<std::size_t>(set.count));
  std::iota(all.begin(), all.end(), Index{0});
  return normalize<S>(set, all);
}

template <typename S>
std::vector<std::uint8_t> denormalize(const Tensor<S>& images) {
  std::vector<std::uint8_t> out(static_cast<std::size_t>(images.size()));
  for (Index i = 0; i < images.size(); ++i) {
    const double v = std::clamp(double(images[i]), 0.0, 1.0);
    out[std::size_t(i)] = static_cast<std::uint8_t>(std::floor(255.0 * v + 0.5));
  }
  return out;
}

template Tensor<float> normalize(const ImageSet&, std::span<const Index>);
template Tensor<double> normalize(const ImageSet&, std::span<const Index>);
template Tensor<float> normalize(const ImageSet&);
template Tensor<double> normalize(const ImageSet&);
template std::vector<std::uint8_t> denormalize(const Tensor<float>&);
template std::vector<std::uint8_t> denormalize(const Tensor<double>&);

ImageSet center_crop(const ImageSet& set, Index size) {
  if (size <= 0 || size > set.height || size > set.width) {
    throw ContractViolation("center_crop: crop " + std::to_string(size) + " does not fit " +
                            std::to_string(set.height) + "x" + std::to_string(set.width));
  }
  const Index top = (set.height - size) / 2, left = (set.width - size) / 2;
  ImageSet out = set;
  out.height = out.width = size;
  out.pixels.resize(static_cast<std::size_t>(out.count * out.image_size()));
  for (Index i = 0; i < set.count; ++i) {
    for (Index c = 0; c < set.channels; ++c) {
      for (Index y = 0; y < size; ++y) {
        const auto* src = set.pixels.data() + i * set.image_size() + c * set.height * set.width +
                          (top + y) * set.width + left;
        std::copy(src, src + size, out.pixels.begin() + i * out.image_size() + c * size * size + y * size);
      }
    }
  }
  return out;
}

std::vector<std::uint8_t> encode_ppm(std::span<const std::uint8_t> planar, Index height, Index width) {
  const Index plane = height * width;
  if (static_cast<Index>(planar.size()) != 3 * plane) {
    throw InvalidShape("encode_ppm: expected " + std::to_string(3 * plane) + " bytes, got " +
                       std::to_string(planar.size()));
  }
  const std::string header = "P6\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + planar.size());
  for (Index p = 0; p < plane; ++p) {
    for (Index c = 0; c < 3; ++c) out.push_back(planar[std::size_t(c * plane + p)]);
  }
  return out;
}

void write_ppm(const std::filesystem::path& path, std::span<const std::uint8_t> planar, Index height,
               Index width) {
  const auto bytes = encode_ppm(planar, height, width);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace deepma
