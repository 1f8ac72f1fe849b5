#include "blankopt/nn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "blankopt/config.hpp"

namespace blankopt::nn {

namespace {

constexpr char kMagic[4] = {'N', 'N', 'C', 'K'};
constexpr std::uint16_t kVersion = 1;

static_assert(std::endian::native == std::endian::little, "little-endian host required");

class Writer {
 public:
  template <typename T>
  void put(T v) {
    const char* p = reinterpret_cast<const char*>(&v);
    buf.insert(buf.end(), p, p + sizeof(T));
  }
  void str(const std::string& s) {
    put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    buf.insert(buf.end(), s.begin(), s.end());
  }
  std::vector<char> buf;
};

class Reader {
 public:
  explicit Reader(std::vector<char> b) : buf(std::move(b)) {}
  template <typename T>
  T get(const char* what) {
    if (pos + sizeof(T) > buf.size()) throw CheckpointError(std::string("short read (") + what + ")");
    T v;
    std::memcpy(&v, buf.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
  }
  std::string str(const char* what) {
    const auto n = get<std::uint32_t>(what);
    if (pos + n > buf.size()) throw CheckpointError(std::string("short read (") + what + ")");
    std::string s(buf.data() + pos, n);
    pos += n;
    return s;
  }
  std::vector<char> buf;
  std::size_t pos = 0;
};

}  // namespace

const NamedArray& Checkpoint::array(const std::string& name) const {
  for (const auto& a : arrays)
    if (a.name == name) return a;
  throw CheckpointError("checkpoint has no tensor '" + name + "'");
}

void write_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  Writer w;
  w.buf.assign(kMagic, kMagic + 4);
  w.put<std::uint16_t>(kVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ck.meta.size()));
  for (const auto& [k, v] : ck.meta) {
    w.str(k);
    w.str(v);
  }
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ck.layers.size()));
  for (const auto& l : ck.layers) {
    w.put<std::uint8_t>(static_cast<std::uint8_t>(l.type));
    for (int v : {l.kh, l.kw, l.sh, l.sw, l.ph, l.pw, l.oh, l.ow, l.in_channels, l.out_channels})
      w.put<std::int32_t>(v);
    w.str(l.name);
  }
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ck.arrays.size()));
  for (const auto& a : ck.arrays) {
    w.str(a.name);
    w.put<std::uint64_t>(a.values.size());
    for (float v : a.values) w.put<float>(v);
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open " + path.string() + " for writing");
  f.write(w.buf.data(), static_cast<std::streamsize>(w.buf.size()));
  if (!f) throw CheckpointError("write failed: " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open " + path.string());
  Reader r(std::vector<char>((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>()));
  if (r.buf.size() < 4 || std::memcmp(r.buf.data(), kMagic, 4) != 0) throw CheckpointError("bad magic");
  r.pos = 4;
  const auto version = r.get<std::uint16_t>("version");
  if (version != kVersion) throw CheckpointError("unsupported version " + std::to_string(version));
  Checkpoint ck;
  const auto nmeta = r.get<std::uint32_t>("meta count");
  for (std::uint32_t i = 0; i < nmeta; ++i) {
    std::string k = r.str("meta key");
    ck.meta[k] = r.str("meta value");
  }
  const auto nlayers = r.get<std::uint32_t>("layer count");
  for (std::uint32_t i = 0; i < nlayers; ++i) {
    LayerSpec l;
    const auto type = r.get<std::uint8_t>("layer type");
    if (type > static_cast<std::uint8_t>(LayerType::Mask))
      throw CheckpointError("unknown layer type " + std::to_string(type));
    l.type = static_cast<LayerType>(type);
    for (int* v : {&l.kh, &l.kw, &l.sh, &l.sw, &l.ph, &l.pw, &l.oh, &l.ow, &l.in_channels, &l.out_channels})
      *v = r.get<std::int32_t>("layer field");
    l.name = r.str("layer name");
    ck.layers.push_back(l);
  }
  const auto narrays = r.get<std::uint32_t>("tensor count");
  for (std::uint32_t i = 0; i < narrays; ++i) {
    NamedArray a;
    a.name = r.str("tensor name");
    const auto n = r.get<std::uint64_t>("tensor size");
    if (r.pos + n * sizeof(float) > r.buf.size()) throw CheckpointError("short read (tensor " + a.name + ")");
    a.values.resize(n);
    std::memcpy(a.values.data(), r.buf.data() + r.pos, n * sizeof(float));
    r.pos += n * sizeof(float);
    ck.arrays.push_back(std::move(a));
  }
  return ck;
}

void store_state(Checkpoint& ck, const std::vector<Param<float>*>& params, const std::vector<Buffer<float>>& buffers) {
  for (const auto* p : params) ck.arrays.push_back({p->name, p->value});
  for (const auto& b : buffers) ck.arrays.push_back({b.name, *b.value});
}

void load_state(const Checkpoint& ck, const std::vector<Param<float>*>& params, const std::vector<Buffer<float>>& buffers) {
  auto copy = [&](const std::string& name, std::vector<float>& dst) {
    const auto& a = ck.array(name);
    if (a.values.size() != dst.size())
      throw CheckpointError("tensor '" + name + "' has " + std::to_string(a.values.size()) + " values, expected " +
                            std::to_string(dst.size()));
    dst = a.values;
  };
  for (auto* p : params) copy(p->name, p->value);
  for (const auto& b : buffers) copy(b.name, *b.value);
}

std::uint64_t parameter_checksum(const std::vector<Param<float>*>& params) {
  std::string bytes;
  for (const auto* p : params)
    bytes.append(reinterpret_cast<const char*>(p->value.data()), p->value.size() * sizeof(float));
  return fnv1a64(bytes);
}

}  // namespace blankopt::nn
