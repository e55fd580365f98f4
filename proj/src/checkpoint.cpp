#include "deepma/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

namespace deepma {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void u8(std::uint8_t v) { bytes(&v, 1); }
  void u16(std::uint16_t v) { bytes(&v, 2); }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void f32(float v) { bytes(&v, 4); }
  void f64(double v) { bytes(&v, 8); }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& in) : in_(in) {}

  void bytes(void* p, std::size_t n, const char* what) {
    if (pos_ + n > in_.size()) {
      throw FormatError("checkpoint truncated at byte offset " + std::to_string(pos_) + " reading " +
                        what + " (" + std::to_string(n) + " bytes needed, " +
                        std::to_string(in_.size() - pos_) + " available)");
    }
    std::memcpy(p, in_.data() + pos_, n);
    pos_ += n;
  }
  template <typename T>
  T read(const char* what) {
    T v;
    bytes(&v, sizeof(T), what);
    return v;
  }
  std::size_t offset() const { return pos_; }
  bool at_end() const { return pos_ == in_.size(); }

 private:
  const std::vector<std::uint8_t>& in_;
  std::size_t pos_ = 0;
};

void write_arch(Writer& w, const ArchConfig& a) {
  w.u32(std::uint32_t(a.height));
  w.u32(std::uint32_t(a.width));
  w.u32(std::uint32_t(a.in_channels));
  w.u32(std::uint32_t(a.block_channels.size()));
  for (int c : a.block_channels) w.u32(std::uint32_t(c));
  for (int s : a.strides) w.u32(std::uint32_t(s));
  w.u32(std::uint32_t(a.afb_reduction));
  w.u32(std::uint32_t(a.edp_count));
  w.f64(a.power);
}

ArchConfig read_arch(Reader& r) {
  ArchConfig a;
  a.height = int(r.read<std::uint32_t>("height"));
  a.width = int(r.read<std::uint32_t>("width"));
  a.in_channels = int(r.read<std::uint32_t>("in_channels"));
  const auto blocks = r.read<std::uint32_t>("block count");
  if (blocks == 0 || blocks > 64) {
    throw FormatError("checkpoint: implausible block count " + std::to_string(blocks) +
                      " at byte offset " + std::to_string(r.offset() - 4));
  }
  a.block_channels.resize(blocks);
  a.strides.resize(blocks);
  for (auto& c : a.block_channels) c = int(r.read<std::uint32_t>("block channels"));
  for (auto& s : a.strides) s = int(r.read<std::uint32_t>("strides"));
  a.afb_reduction = int(r.read<std::uint32_t>("afb_reduction"));
  a.edp_count = int(r.read<std::uint32_t>("edp_count"));
  a.power = r.read<double>("power");
  return a;
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const DmaNetF& net) {
  Writer w;
  w.bytes("DMAN", 4);
  w.u32(kCheckpointVersion);
  w.u32(std::uint32_t(net.edps.size()));
  write_arch(w, net.arch);
  const auto params = net.parameters();
  w.u32(std::uint32_t(params.size()));
  for (const auto* p : params) {
    w.u16(std::uint16_t(p->name.size()));
    w.bytes(p->name.data(), p->name.size());
    w.u8(std::uint8_t(p->value.rank()));
    for (Index d : p->value.shape()) w.u32(std::uint32_t(d));
    for (Index i = 0; i < p->value.size(); ++i) w.f32(p->value[i]);
  }
  return w.take();
}

DmaNetF deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  char magic[4];
  r.bytes(magic, 4, "magic");
  if (std::memcmp(magic, "DMAN", 4) != 0) {
    throw FormatError("checkpoint: bad magic at byte offset 0 (expected \"DMAN\")");
  }
  const auto version = r.read<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version) +
                      " at byte offset 4 (this build reads version " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  const auto n = r.read<std::uint32_t>("EDP count");
  const std::size_t arch_offset = r.offset();
  ArchConfig arch = read_arch(r);
  if (arch.edp_count != int(n)) {
    throw FormatError("checkpoint: EDP count " + std::to_string(n) + " disagrees with architecture (" +
                      std::to_string(arch.edp_count) + ") at byte offset " + std::to_string(arch_offset));
  }
  try {
    arch.validate();
  } catch (const ContractViolation& e) {
    throw FormatError("checkpoint: invalid architecture at byte offset " + std::to_string(arch_offset) +
                      ": " + e.what());
  }
  DmaNetF net = DmaNetF::create(arch, 0);
  std::map<std::string, Parameter<float>*> by_name;
  for (auto* p : net.parameters()) by_name[p->name] = p;

  const std::size_t count_offset = r.offset();
  const auto count = r.read<std::uint32_t>("tensor count");
  if (count != by_name.size()) {
    throw FormatError("checkpoint: " + std::to_string(count) + " tensors at byte offset " +
                      std::to_string(count_offset) + ", architecture needs " +
                      std::to_string(by_name.size()));
  }
  for (std::uint32_t t = 0; t < count; ++t) {
    const std::size_t entry = r.offset();
    const auto len = r.read<std::uint16_t>("name length");
    std::string name(len, '\0');
    r.bytes(name.data(), len, "tensor name");
    auto it = by_name.find(name);
    if (it == by_name.end()) {
      throw FormatError("checkpoint: unknown tensor '" + name + "' at byte offset " + std::to_string(entry));
    }
    const auto rank = r.read<std::uint8_t>("rank");
    Shape shape(rank);
    for (auto& d : shape) d = Index(r.read<std::uint32_t>("dims"));
    Parameter<float>& p = *it->second;
    if (shape != p.value.shape()) {
      throw FormatError("checkpoint: tensor '" + name + "' has shape " + shape_string(shape) +
                        ", expected " + shape_string(p.value.shape()) + " (byte offset " +
                        std::to_string(entry) + ")");
    }
    r.bytes(p.value.ptr(), std::size_t(p.value.size()) * sizeof(float), "tensor values");
    by_name.erase(it);
  }
  if (!r.at_end()) {
    throw FormatError("checkpoint: trailing bytes after byte offset " + std::to_string(r.offset()));
  }
  return net;
}

void save_checkpoint(const DmaNetF& net, const std::filesystem::path& path) {
  const auto bytes = serialize_checkpoint(net);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!out) throw FormatError("failed writing checkpoint " + path.string());
}

DmaNetF load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return deserialize_checkpoint(bytes);
}

}  // namespace deepma
