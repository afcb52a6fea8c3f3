// Checkpoint byte layout (little-endian throughout), see docs/format.md:
//   magic "GRITNETC" | u32 version | u8 scalar bytes | 3 reserved
//   config: u32 L | u32 delta buckets | u32 E | u32 H | u64 seed | u8 pool padded | 3 reserved
//   schema: u32 contents | u32 quizzes | u32 projects | u32 delta cap
//   u64 t_max | u32 parameter count
//   per parameter: u32 name length | name | u32 rank | u64 dims[rank] | values
//   u64 FNV-1a of every preceding byte

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "gritnet/model.hpp"

namespace gritnet {

namespace {

constexpr char kMagic[8] = {'G', 'R', 'I', 'T', 'N', 'E', 'T', 'C'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  template <typename U>
  void uint(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  template <typename T>
  void scalar(T v) {
    if constexpr (sizeof(T) == 4) {
      uint(std::bit_cast<std::uint32_t>(v));
    } else {
      uint(std::bit_cast<std::uint64_t>(v));
    }
  }
  std::vector<std::uint8_t>& data() { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}
  void bytes(void* p, std::size_t n) {
    need(n);
    std::memcpy(p, in_.data() + pos_, n);
    pos_ += n;
  }
  template <typename U>
  U uint() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(in_[pos_ + i]) << (8 * i));
    pos_ += sizeof(U);
    return v;
  }
  template <typename T>
  T scalar() {
    if constexpr (sizeof(T) == 4) {
      return std::bit_cast<T>(uint<std::uint32_t>());
    } else {
      return std::bit_cast<T>(uint<std::uint64_t>());
    }
  }
  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) fail(ErrorKind::corrupt_file, "checkpoint is truncated");
  }
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

template <typename T>
void write_param(Writer& w, const Parameter<T>& p) {
  w.uint(static_cast<std::uint32_t>(p.name.size()));
  w.bytes(p.name.data(), p.name.size());
  w.uint(static_cast<std::uint32_t>(p.value.rank()));
  for (auto d : p.value.shape()) w.uint(static_cast<std::uint64_t>(d));
  for (T v : p.value.values()) w.scalar(v);
}

template <typename T>
void read_param(Reader& r, Parameter<T>& p) {
  const auto name_len = r.uint<std::uint32_t>();
  if (name_len > 256) fail(ErrorKind::corrupt_file, "checkpoint parameter name too long");
  std::string name(name_len, '\0');
  r.bytes(name.data(), name_len);
  if (name != p.name) {
    fail(ErrorKind::corrupt_file, "checkpoint parameter '" + name + "' where '" + p.name +
                                      "' was expected");
  }
  const auto rank = r.uint<std::uint32_t>();
  std::vector<std::size_t> shape;
  for (std::uint32_t i = 0; i < rank && i < 8; ++i) shape.push_back(r.uint<std::uint64_t>());
  if (shape != p.value.shape()) {
    fail(ErrorKind::corrupt_file, "checkpoint parameter '" + name + "' has an unexpected shape");
  }
  for (auto& v : p.value.values()) v = r.scalar<T>();
}

}  // namespace

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (auto b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

template <typename T>
std::vector<std::uint8_t> checkpoint_bytes(const GritNetModel<T>& model) {
  Writer w;
  w.bytes(kMagic, sizeof(kMagic));
  w.uint(kVersion);
  w.uint(static_cast<std::uint8_t>(sizeof(T)));
  w.uint(std::uint8_t{0});
  w.uint(std::uint16_t{0});
  const auto& c = model.config;
  w.uint(c.vocab_size);
  w.uint(c.delta_buckets);
  w.uint(c.embedding_dim);
  w.uint(c.hidden_dim);
  w.uint(c.seed);
  w.uint(static_cast<std::uint8_t>(c.pool_padded_steps ? 1 : 0));
  w.uint(std::uint8_t{0});
  w.uint(std::uint16_t{0});
  w.uint(model.schema.num_contents);
  w.uint(model.schema.num_quizzes);
  w.uint(model.schema.num_projects);
  w.uint(model.schema.delta_cap);
  w.uint(static_cast<std::uint64_t>(model.t_max));
  const auto params = model.params.all();
  w.uint(static_cast<std::uint32_t>(params.size()));
  for (const auto* p : params) write_param(w, *p);
  const auto checksum = fnv1a64(w.data());
  w.uint(checksum);
  return std::move(w.data());
}

template <typename T>
GritNetModel<T> parse_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  char magic[8];
  r.bytes(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    fail(ErrorKind::corrupt_file, "not a GritNet checkpoint (bad magic)");
  }
  const auto version = r.uint<std::uint32_t>();
  if (version != kVersion) {
    fail(ErrorKind::version_mismatch, "checkpoint format version " + std::to_string(version) +
                                          " is not supported (expected " +
                                          std::to_string(kVersion) + ")");
  }
  const auto scalar_bytes = r.uint<std::uint8_t>();
  r.uint<std::uint8_t>();
  r.uint<std::uint16_t>();
  if (scalar_bytes != sizeof(T)) {
    fail(ErrorKind::config, "checkpoint stores " + std::to_string(scalar_bytes * 8) +
                                "-bit values; loader expects " + std::to_string(sizeof(T) * 8));
  }
  if (bytes.size() < 8) fail(ErrorKind::corrupt_file, "checkpoint is truncated");
  const auto body = bytes.first(bytes.size() - 8);
  Reader trailer(bytes.subspan(bytes.size() - 8));
  if (fnv1a64(body) != trailer.uint<std::uint64_t>()) {
    fail(ErrorKind::corrupt_file, "checkpoint checksum mismatch (truncated or corrupted)");
  }

  GritNetConfig c;
  c.vocab_size = r.uint<std::uint32_t>();
  c.delta_buckets = r.uint<std::uint32_t>();
  c.embedding_dim = r.uint<std::uint32_t>();
  c.hidden_dim = r.uint<std::uint32_t>();
  c.seed = r.uint<std::uint64_t>();
  c.pool_padded_steps = r.uint<std::uint8_t>() != 0;
  r.uint<std::uint8_t>();
  r.uint<std::uint16_t>();
  CourseSchema s;
  s.num_contents = r.uint<std::uint32_t>();
  s.num_quizzes = r.uint<std::uint32_t>();
  s.num_projects = r.uint<std::uint32_t>();
  s.delta_cap = r.uint<std::uint32_t>();
  const auto t_max = r.uint<std::uint64_t>();
  if (c.vocab_size != vocab_size(s) || c.delta_buckets != s.delta_cap + 1) {
    fail(ErrorKind::corrupt_file, "checkpoint config disagrees with its stored schema");
  }
  if (c.embedding_dim == 0 || c.hidden_dim == 0 || t_max == 0 ||
      c.embedding_dim > (1u << 16) || c.hidden_dim > (1u << 16)) {
    fail(ErrorKind::corrupt_file, "checkpoint has implausible dimensions");
  }
  auto model = make_model<T>(c, s, static_cast<std::size_t>(t_max));
  const auto params = model.params.all();
  if (r.uint<std::uint32_t>() != params.size()) {
    fail(ErrorKind::corrupt_file, "checkpoint parameter count mismatch");
  }
  for (auto* p : params) read_param(r, *p);
  if (r.remaining() != 8) fail(ErrorKind::corrupt_file, "checkpoint has trailing bytes");
  return model;
}

template <typename T>
void save_checkpoint(const GritNetModel<T>& model, const std::filesystem::path& path) {
  const auto bytes = checkpoint_bytes(model);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::io, "cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::io, "write failed for '" + path.string() + "'");
}

template <typename T>
GritNetModel<T> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_checkpoint<T>(bytes);
}

template <typename T>
GritNetModel<T> load_checkpoint(const std::filesystem::path& path, const CourseSchema& expected) {
  auto model = load_checkpoint<T>(path);
  if (!(model.schema == expected)) {
    fail(ErrorKind::schema_mismatch,
         "checkpoint vocabulary L=" + std::to_string(vocab_size(model.schema)) +
             " does not match schema L=" + std::to_string(vocab_size(expected)));
  }
  return model;
}

template <typename T>
std::uint64_t parameter_hash(const Parameter<T>& param) {
  const auto v = param.value.values();
  return fnv1a64({reinterpret_cast<const std::uint8_t*>(v.data()), v.size_bytes()});
}

template <typename T>
std::uint64_t checkpoint_hash(const GritNetModel<T>& model) {
  return fnv1a64(checkpoint_bytes(model));
}

template <typename T>
std::uint64_t frozen_parameter_hash(const GritNetModel<T>& model) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto* p : model.params.all()) {
    if (p == &model.params.fc_w || p == &model.params.fc_b) continue;
    const auto v = p->value.values();
    h = fnv1a64({reinterpret_cast<const std::uint8_t*>(v.data()), v.size_bytes()}, h);
  }
  return h;
}

#define GRITNET_INSTANTIATE(T)                                                                  \
  template std::vector<std::uint8_t> checkpoint_bytes<T>(const GritNetModel<T>&);               \
  template GritNetModel<T> parse_checkpoint<T>(std::span<const std::uint8_t>);                  \
  template void save_checkpoint<T>(const GritNetModel<T>&, const std::filesystem::path&);       \
  template GritNetModel<T> load_checkpoint<T>(const std::filesystem::path&);                    \
  template GritNetModel<T> load_checkpoint<T>(const std::filesystem::path&, const CourseSchema&); \
  template std::uint64_t parameter_hash<T>(const Parameter<T>&);                                \
  template std::uint64_t checkpoint_hash<T>(const GritNetModel<T>&);                            \
  template std::uint64_t frozen_parameter_hash<T>(const GritNetModel<T>&);

GRITNET_INSTANTIATE(float)
GRITNET_INSTANTIATE(double)
#undef GRITNET_INSTANTIATE

}  // namespace gritnet
