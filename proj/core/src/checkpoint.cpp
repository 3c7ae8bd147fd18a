#include "gmseg/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <unordered_map>

#include "gmseg/errors.hpp"

namespace gmseg {
namespace {

constexpr char kMagic[4] = {'G', 'M', 'D', 'L'};
constexpr char kConfigTag[4] = {'C', 'O', 'N', 'F'};
constexpr char kTensorTag[4] = {'T', 'E', 'N', 'S'};
constexpr char kOptimTag[4] = {'O', 'P', 'T', 'M'};
constexpr const char* kProvenancePrefix = "provenance.";

enum class EntryKind : std::uint8_t { Parameter = 0, Buffer = 1 };

class Writer {
 public:
  template <typename U>
  void put(U value) {
    static_assert(std::is_trivially_copyable_v<U>);
    unsigned char bytes[sizeof(U)];
    std::memcpy(bytes, &value, sizeof(U));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(U));
    buf_.append(reinterpret_cast<const char*>(bytes), sizeof(U));
  }
  void put_bytes(const void* data, std::size_t n) {
    buf_.append(static_cast<const char*>(data), n);
  }
  void put_string(const std::string& s) {
    put<std::uint16_t>(static_cast<std::uint16_t>(s.size()));
    put_bytes(s.data(), s.size());
  }
  template <Scalar T>
  void put_array(std::span<const T> values) {
    if constexpr (std::endian::native == std::endian::little) {
      put_bytes(values.data(), values.size_bytes());
    } else {
      for (T v : values) put(v);
    }
  }
  void put_section(const char tag[4], const std::string& payload) {
    put_bytes(tag, 4);
    put<std::uint64_t>(payload.size());
    put_bytes(payload.data(), payload.size());
    put<std::uint32_t>(static_cast<std::uint32_t>(
        crc32(0L, reinterpret_cast<const Bytef*>(payload.data()), static_cast<uInt>(payload.size()))));
  }
  std::string& str() { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(std::string_view data) : data_(data) {}

  template <typename U>
  U get() {
    need(sizeof(U));
    unsigned char bytes[sizeof(U)];
    std::memcpy(bytes, data_.data() + pos_, sizeof(U));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(U));
    pos_ += sizeof(U);
    U value;
    std::memcpy(&value, bytes, sizeof(U));
    return value;
  }
  std::string_view get_bytes(std::size_t n) {
    need(n);
    auto out = data_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  std::string get_string() {
    const auto n = get<std::uint16_t>();
    return std::string(get_bytes(n));
  }
  template <Scalar T>
  std::vector<T> get_array(std::size_t count) {
    if (count > remaining() / sizeof(T)) throw IntegrityError("checkpoint array exceeds section");
    std::vector<T> out(count);
    if constexpr (std::endian::native == std::endian::little) {
      auto bytes = get_bytes(count * sizeof(T));
      std::memcpy(out.data(), bytes.data(), bytes.size());
    } else {
      for (auto& v : out) v = get<T>();
    }
    return out;
  }
  std::string_view get_section(const char tag[4]) {
    auto found = get_bytes(4);
    if (std::memcmp(found.data(), tag, 4) != 0) {
      throw IntegrityError("checkpoint section '" + std::string(tag, 4) + "' not found");
    }
    const auto length = get<std::uint64_t>();
    if (length > remaining()) throw IntegrityError("checkpoint section '" + std::string(tag, 4) + "' truncated");
    auto payload = get_bytes(static_cast<std::size_t>(length));
    const auto stored = get<std::uint32_t>();
    const auto actual = static_cast<std::uint32_t>(
        crc32(0L, reinterpret_cast<const Bytef*>(payload.data()), static_cast<uInt>(payload.size())));
    if (stored != actual) {
      throw IntegrityError("checkpoint section '" + std::string(tag, 4) + "' fails its checksum");
    }
    return payload;
  }
  std::size_t remaining() const { return data_.size() - pos_; }
  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const {
    if (n > remaining()) throw IntegrityError("checkpoint truncated");
  }
  std::string_view data_;
  std::size_t pos_ = 0;
};

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  return std::string(std::istreambuf_iterator<char>(in), {});
}

struct RawEntry {
  EntryKind kind;
  Shape shape;
  std::string_view bytes;
};

struct Parsed {
  std::uint16_t version;
  Precision precision;
  std::string config_text;
  std::vector<std::pair<std::string, RawEntry>> entries;
  bool has_optimizer = false;
  std::string_view optimizer;
};

Parsed parse(std::string_view bytes) {
  Reader r(bytes);
  auto magic = r.get_bytes(4);
  if (std::memcmp(magic.data(), kMagic, 4) != 0) {
    throw UnsupportedFormatError("not a checkpoint: bad magic");
  }
  Parsed p;
  p.version = r.get<std::uint16_t>();
  if (p.version != kCheckpointVersion) {
    throw UnsupportedFormatError("checkpoint version " + std::to_string(p.version) +
                                 " unsupported (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  const auto tag = r.get<std::uint8_t>();
  if (tag != 4 && tag != 8) throw UnsupportedFormatError("unknown checkpoint precision tag");
  p.precision = static_cast<Precision>(tag);

  p.config_text = std::string(r.get_section(kConfigTag));

  Reader t(r.get_section(kTensorTag));
  const auto count = t.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = t.get_string();
    RawEntry e;
    e.kind = static_cast<EntryKind>(t.get<std::uint8_t>());
    const auto dtype = t.get<std::uint8_t>();
    if (dtype != tag) throw IntegrityError("tensor '" + name + "' dtype differs from header");
    const auto ndim = t.get<std::uint8_t>();
    for (std::uint8_t d = 0; d < ndim; ++d) e.shape.push_back(t.get<std::uint64_t>());
    const auto nbytes = t.get<std::uint64_t>();
    if (nbytes != shape_numel(e.shape) * tag) {
      throw IntegrityError("tensor '" + name + "' byte length disagrees with its shape");
    }
    e.bytes = t.get_bytes(static_cast<std::size_t>(nbytes));
    p.entries.emplace_back(std::move(name), e);
  }
  if (!t.done()) throw IntegrityError("trailing bytes in tensor table");

  p.optimizer = r.get_section(kOptimTag);
  p.has_optimizer = !p.optimizer.empty() && p.optimizer[0] != 0;
  if (!r.done()) throw IntegrityError("trailing bytes after optimizer block");
  return p;
}

Provenance provenance_from_text(const std::string& text) {
  Provenance out;
  std::istringstream in(text);
  std::string line;
  const std::string prefix = kProvenancePrefix;
  while (std::getline(in, line)) {
    if (line.rfind(prefix, 0) != 0) continue;
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) continue;
    out[line.substr(prefix.size(), eq - prefix.size())] = line.substr(eq + 3);
  }
  return out;
}

template <Scalar T>
std::vector<T> decode_values(std::string_view bytes) {
  Reader r(bytes);
  return r.get_array<T>(bytes.size() / sizeof(T));
}

}  // namespace

template <Scalar T>
std::string encode_checkpoint(Network<T>& network, const AdamState<T>* optimizer,
                              const Provenance& provenance) {
  if (!network.config()) throw InvalidConfigError("only built networks can be checkpointed");
  Writer out;
  out.put_bytes(kMagic, 4);
  out.put<std::uint16_t>(kCheckpointVersion);
  out.put<std::uint8_t>(static_cast<std::uint8_t>(precision_of<T>()));

  std::string config = model_config_to_text(*network.config());
  for (const auto& [key, value] : provenance) {
    config += kProvenancePrefix + key + " = " + value + "\n";
  }
  out.put_section(kConfigTag, config);

  Writer table;
  const auto params = network.parameters();
  auto buffers = network.buffers();
  table.put<std::uint32_t>(static_cast<std::uint32_t>(params.size() + buffers.size()));
  auto put_entry = [&](const std::string& name, EntryKind kind, const Shape& shape,
                       std::span<const T> values) {
    table.put_string(name);
    table.put<std::uint8_t>(static_cast<std::uint8_t>(kind));
    table.put<std::uint8_t>(static_cast<std::uint8_t>(sizeof(T)));
    table.put<std::uint8_t>(static_cast<std::uint8_t>(shape.size()));
    for (auto d : shape) table.put<std::uint64_t>(d);
    table.put<std::uint64_t>(values.size_bytes());
    table.put_array<T>(values);
  };
  for (const auto& p : params) put_entry(p.name, EntryKind::Parameter, p.tensor.shape(), p.tensor.data());
  for (const auto& b : buffers) {
    put_entry(b.name, EntryKind::Buffer, {b.values->size()}, *b.values);
  }
  out.put_section(kTensorTag, table.str());

  Writer opt;
  if (optimizer) {
    opt.put<std::uint8_t>(1);
    opt.put<std::uint64_t>(optimizer->step_count);
    opt.put<double>(optimizer->beta1);
    opt.put<double>(optimizer->beta2);
    opt.put<double>(optimizer->epsilon);
    opt.put<std::uint32_t>(static_cast<std::uint32_t>(optimizer->names.size()));
    for (std::size_t k = 0; k < optimizer->names.size(); ++k) {
      opt.put_string(optimizer->names[k]);
      opt.put<std::uint64_t>(optimizer->first_moment[k].size());
      opt.put_array<T>(optimizer->first_moment[k]);
      opt.put_array<T>(optimizer->second_moment[k]);
    }
  } else {
    opt.put<std::uint8_t>(0);
  }
  out.put_section(kOptimTag, opt.str());
  return std::move(out.str());
}

template <Scalar T>
void save_checkpoint(const std::filesystem::path& path, Network<T>& network,
                     const AdamState<T>* optimizer, const Provenance& provenance) {
  const std::string bytes = encode_checkpoint(network, optimizer, provenance);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint '" + path.string() + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to checkpoint '" + path.string() + "'");
}

template <Scalar T>
LoadedCheckpoint<T> load_checkpoint(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  const Parsed p = parse(bytes);
  if (p.precision != precision_of<T>()) {
    throw UnsupportedFormatError("checkpoint precision is fp" +
                                 std::to_string(8 * static_cast<int>(p.precision)) +
                                 ", requested fp" + std::to_string(8 * sizeof(T)));
  }
  const ModelConfig model = model_config_from_text(p.config_text);

  // Decode everything before touching the network.
  std::unordered_map<std::string, const RawEntry*> by_name;
  for (const auto& [name, entry] : p.entries) {
    if (!by_name.emplace(name, &entry).second) {
      throw IntegrityError("duplicate tensor '" + name + "' in checkpoint");
    }
  }
  Network<T> net = build_network<T>(model, 0);
  std::vector<std::pair<std::span<T>, std::vector<T>>> assignments;
  auto take = [&](const std::string& name, EntryKind kind, const Shape& shape, std::span<T> dst) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw IntegrityError("checkpoint lacks tensor '" + name + "'");
    if (it->second->kind != kind || it->second->shape != shape) {
      throw IntegrityError("checkpoint tensor '" + name + "' has shape " +
                           shape_to_string(it->second->shape) + ", model expects " +
                           shape_to_string(shape));
    }
    assignments.emplace_back(dst, decode_values<T>(it->second->bytes));
    by_name.erase(it);
  };
  for (const auto& param : net.parameters()) {
    Tensor<T> t = param.tensor;
    take(param.name, EntryKind::Parameter, t.shape(), t.data());
  }
  for (auto& buffer : net.buffers()) {
    take(buffer.name, EntryKind::Buffer, {buffer.values->size()}, *buffer.values);
  }
  if (!by_name.empty()) {
    throw IntegrityError("checkpoint has unknown tensor '" + by_name.begin()->first + "'");
  }

  AdamState<T> optimizer;
  if (p.has_optimizer) {
    Reader r(p.optimizer);
    r.get<std::uint8_t>();
    optimizer.step_count = r.get<std::uint64_t>();
    optimizer.beta1 = r.get<double>();
    optimizer.beta2 = r.get<double>();
    optimizer.epsilon = r.get<double>();
    const auto count = r.get<std::uint32_t>();
    for (std::uint32_t k = 0; k < count; ++k) {
      optimizer.names.push_back(r.get_string());
      const auto n = static_cast<std::size_t>(r.get<std::uint64_t>());
      optimizer.first_moment.push_back(r.get_array<T>(n));
      optimizer.second_moment.push_back(r.get_array<T>(n));
    }
    if (!r.done()) throw IntegrityError("trailing bytes in optimizer block");
  }

  for (auto& [dst, values] : assignments) std::copy(values.begin(), values.end(), dst.begin());
  return {std::move(net), std::move(optimizer), provenance_from_text(p.config_text)};
}

CheckpointInfo read_checkpoint_info(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  const Parsed p = parse(bytes);
  CheckpointInfo info;
  info.version = p.version;
  info.precision = p.precision;
  info.model = model_config_from_text(p.config_text);
  info.provenance = provenance_from_text(p.config_text);
  info.file_size = bytes.size();
  info.has_optimizer = p.has_optimizer;
  for (const auto& [name, entry] : p.entries) {
    if (entry.kind == EntryKind::Parameter) info.param_count += shape_numel(entry.shape);
  }
  return info;
}

bool is_checkpoint_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  char magic[4] = {};
  in.read(magic, 4);
  return in.gcount() == 4 && std::memcmp(magic, kMagic, 4) == 0;
}

template void save_checkpoint<float>(const std::filesystem::path&, Network<float>&,
                                     const AdamState<float>*, const Provenance&);
template void save_checkpoint<double>(const std::filesystem::path&, Network<double>&,
                                      const AdamState<double>*, const Provenance&);
template std::string encode_checkpoint<float>(Network<float>&, const AdamState<float>*,
                                              const Provenance&);
template std::string encode_checkpoint<double>(Network<double>&, const AdamState<double>*,
                                               const Provenance&);
template LoadedCheckpoint<float> load_checkpoint<float>(const std::filesystem::path&);
template LoadedCheckpoint<double> load_checkpoint<double>(const std::filesystem::path&);

}  // namespace gmseg
