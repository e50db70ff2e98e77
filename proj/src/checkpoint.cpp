#include "stedq/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

namespace stedq {

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

bool operator==(const TrainingMetadata& a, const TrainingMetadata& b) {
  auto same = [](double x, double y) { return (std::isnan(x) && std::isnan(y)) || x == y; };
  return a.epoch == b.epoch && same(a.val_rmse, b.val_rmse) && same(a.norm_mean, b.norm_mean) &&
         same(a.norm_std, b.norm_std);
}

namespace {

using Kind = CheckpointError::Kind;
constexpr std::size_t kMagicSize = sizeof(kCheckpointMagic) - 1;
constexpr std::size_t kHeaderSize = kMagicSize + 4 + 8;

class Writer {
 public:
  template <typename T>
  void put(T value) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
    bytes_.insert(bytes_.end(), p, p + sizeof(T));
  }
  void put_bytes(std::string_view s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }
  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& bytes, std::size_t end) : bytes_(bytes), end_(end) {}
  template <typename T>
  T get() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }
  std::string get_string(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == end_; }

 private:
  void need(std::size_t n) const {
    if (n > end_ - pos_) throw CheckpointError(Kind::kMalformed, "checkpoint payload ends inside a field");
  }
  const std::vector<std::uint8_t>& bytes_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

std::string header_text(const Checkpoint& c) {
  KeyValueText kv = KeyValueText::parse(c.network.config().to_text());
  kv.set("epoch", std::to_string(c.metadata.epoch));
  kv.set("val_rmse", format_double(c.metadata.val_rmse));
  kv.set("norm_mean", format_double(c.metadata.norm_mean));
  kv.set("norm_std", format_double(c.metadata.norm_std));
  return kv.str();
}

void put_block(Writer& w, const std::string& name, const Tensor& t) {
  w.put(static_cast<std::uint32_t>(name.size()));
  w.put_bytes(name);
  w.put(static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) w.put(static_cast<std::uint64_t>(d));
  for (double v : t.data()) w.put(v);
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& c, std::uint32_t version) {
  Writer w;
  w.put_bytes(std::string_view(kCheckpointMagic, kMagicSize));
  w.put(version);
  w.put(std::uint64_t{0});  // total length, patched below
  const std::string text = header_text(c);
  w.put(static_cast<std::uint64_t>(text.size()));
  w.put_bytes(text);

  const auto& params = c.network.parameters();
  const auto& stats = c.network.running_stats();
  w.put(static_cast<std::uint32_t>(params.size() + 2 * stats.size()));
  for (const auto& [name, t] : params) put_block(w, name, t);
  for (const auto& [name, s] : stats) {
    put_block(w, name + ".running_mean", s.mean);
    put_block(w, name + ".running_variance", s.variance);
  }

  auto& bytes = w.bytes();
  const std::uint64_t total = bytes.size() + 32;
  std::memcpy(bytes.data() + kMagicSize + 4, &total, sizeof(total));
  const Digest d = sha256(std::span<const std::uint8_t>(bytes));
  bytes.insert(bytes.end(), d.begin(), d.end());
  return bytes;
}

Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < kHeaderSize + 32)
    throw CheckpointError(Kind::kTruncated, "checkpoint truncated: only " + std::to_string(bytes.size()) + " bytes");
  if (std::memcmp(bytes.data(), kCheckpointMagic, kMagicSize) != 0)
    throw CheckpointError(Kind::kBadMagic, "not a checkpoint file (bad magic)");
  std::uint32_t version;
  std::memcpy(&version, bytes.data() + kMagicSize, sizeof(version));
  if (version != kCheckpointVersion)
    throw CheckpointError(Kind::kVersion, "unsupported checkpoint format_version " + std::to_string(version) +
                                              " (expected " + std::to_string(kCheckpointVersion) + ")");
  std::uint64_t total;
  std::memcpy(&total, bytes.data() + kMagicSize + 4, sizeof(total));
  if (bytes.size() < total)
    throw CheckpointError(Kind::kTruncated, "checkpoint truncated: " + std::to_string(bytes.size()) + " of " +
                                                std::to_string(total) + " bytes");
  if (bytes.size() != total)
    throw CheckpointError(Kind::kMalformed, "checkpoint has trailing bytes beyond its declared length");

  const std::size_t body = bytes.size() - 32;
  const Digest d = sha256(std::span<const std::uint8_t>(bytes.data(), body));
  if (std::memcmp(d.data(), bytes.data() + body, 32) != 0)
    throw CheckpointError(Kind::kDigest, "checkpoint digest mismatch (file corrupted)");

  Reader r(bytes, body);
  r.get_string(kHeaderSize);
  try {
    const auto text_len = r.get<std::uint64_t>();
    const auto kv = KeyValueText::parse(r.get_string(text_len));
    Checkpoint c;
    std::string config_text;
    for (const auto& key : {"input_size", "conv_channels", "kernel_size", "conv_padding", "pool_stride",
                            "dense_widths", "batchnorm_from_layer", "seed"})
      config_text += std::string(key) + "=" + kv.get(key) + "\n";
    c.network = Network::build(NetworkConfig::from_text(config_text));
    c.metadata.epoch = parse_uint(kv.get("epoch"));
    c.metadata.val_rmse = parse_double(kv.get("val_rmse"));
    c.metadata.norm_mean = parse_double(kv.get("norm_mean"));
    c.metadata.norm_std = parse_double(kv.get("norm_std"));

    auto& params = c.network.parameters();
    auto& stats = c.network.running_stats();
    const auto blocks = r.get<std::uint32_t>();
    if (blocks != params.size() + 2 * stats.size())
      throw CheckpointError(Kind::kMalformed, "checkpoint block count does not match its config");
    for (std::uint32_t b = 0; b < blocks; ++b) {
      const auto name = r.get_string(r.get<std::uint32_t>());
      Shape shape(r.get<std::uint32_t>());
      for (auto& dim : shape) dim = static_cast<std::size_t>(r.get<std::uint64_t>());
      Tensor* target = nullptr;
      if (auto it = params.find(name); it != params.end()) {
        target = &it->second;
      } else if (auto dot = name.rfind('.'); dot != std::string::npos && stats.count(name.substr(0, dot))) {
        auto& s = stats.at(name.substr(0, dot));
        const auto field = name.substr(dot + 1);
        if (field == "running_mean") target = &s.mean;
        if (field == "running_variance") target = &s.variance;
      }
      if (!target) throw CheckpointError(Kind::kMalformed, "unexpected checkpoint block '" + name + "'");
      if (target->shape() != shape)
        throw CheckpointError(Kind::kMalformed, "checkpoint block '" + name + "' has shape " + to_string(shape) +
                                                    ", config implies " + to_string(target->shape()));
      for (auto& v : target->data()) v = r.get<double>();
    }
    if (!r.done()) throw CheckpointError(Kind::kMalformed, "unread bytes after the last checkpoint block");
    return c;
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    throw CheckpointError(Kind::kMalformed, std::string("malformed checkpoint: ") + e.what());
  }
}

std::string save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  const auto bytes = serialize_checkpoint(checkpoint);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError(Kind::kIo, "cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError(Kind::kIo, "failed writing checkpoint " + path.string());
  return to_hex(std::span<const std::uint8_t>(bytes.data() + bytes.size() - 32, 32));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(Kind::kIo, "cannot read checkpoint " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

std::string checkpoint_digest(const Checkpoint& checkpoint) {
  const auto bytes = serialize_checkpoint(checkpoint);
  return to_hex(std::span<const std::uint8_t>(bytes.data() + bytes.size() - 32, 32));
}

}  // namespace stedq
