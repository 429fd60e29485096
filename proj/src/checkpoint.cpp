#include "vatlab/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "vatlab/io_util.hpp"

namespace vatlab {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint codec assumes little-endian");

constexpr std::string_view kMagic = "VATLABCK";
constexpr std::uint32_t kFormatVersion = 1;

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

void put_string(std::string& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.append(s);
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string get_string() {
    const auto n = get<std::uint32_t>();
    need(n);
    std::string s(bytes_.substr(pos_, n));
    pos_ += n;
    return s;
  }

  void get_doubles(std::span<double> out) {
    need(out.size() * sizeof(double));
    std::memcpy(out.data(), bytes_.data() + pos_, out.size() * sizeof(double));
    pos_ += out.size() * sizeof(double);
  }

  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) {
      throw FormatError("checkpoint truncated at byte " + std::to_string(pos_));
    }
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const Checkpoint& ckpt) {
  std::string out(kMagic);
  put<std::uint32_t>(out, kFormatVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.metadata.size()));
  for (const auto& [k, v] : ckpt.metadata) {
    put_string(out, k);
    put_string(out, v);
  }
  const auto& layers = ckpt.network.layers();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(layers.size()));
  for (const auto& l : layers) {
    put<std::uint64_t>(out, l.in());
    put<std::uint64_t>(out, l.out());
    put<std::uint8_t>(out, l.activation == Activation::relu ? 0 : 1);
    for (double w : l.weights.values()) put(out, w);
    for (double b : l.biases.values()) put(out, b);
  }
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  if (bytes.substr(0, kMagic.size()) != kMagic) throw FormatError("checkpoint: bad magic at byte 0");
  Reader rd(bytes.substr(kMagic.size()));
  const auto version = rd.get<std::uint32_t>();
  if (version != kFormatVersion) {
    throw FormatError("checkpoint: unsupported format version " + std::to_string(version));
  }
  std::map<std::string, std::string> meta;
  const auto n_meta = rd.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    auto k = rd.get_string();
    meta[k] = rd.get_string();
  }
  const auto n_layers = rd.get<std::uint32_t>();
  if (n_layers == 0) throw FormatError("checkpoint: no layers");
  std::vector<DenseLayer> layers;
  for (std::uint32_t i = 0; i < n_layers; ++i) {
    const auto in = rd.get<std::uint64_t>();
    const auto out = rd.get<std::uint64_t>();
    const auto act = rd.get<std::uint8_t>();
    if (act > 1) {
      throw FormatError("checkpoint: bad activation code near byte " +
                        std::to_string(kMagic.size() + rd.pos()));
    }
    if (in == 0 || out == 0 || in > (1u << 24) || out > (1u << 24)) {
      throw FormatError("checkpoint: implausible layer shape");
    }
    DenseLayer l{Tensor({in, out}), Tensor({out}),
                 act == 0 ? Activation::relu : Activation::identity};
    rd.get_doubles(l.weights.values());
    rd.get_doubles(l.biases.values());
    layers.push_back(std::move(l));
  }
  if (!rd.done()) throw FormatError("checkpoint: trailing bytes");
  return Checkpoint{MlpNetwork(std::move(layers)), std::move(meta)};
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  atomic_write_file(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path));
}

}  // namespace vatlab
