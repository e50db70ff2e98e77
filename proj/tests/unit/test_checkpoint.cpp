#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "stedq/checkpoint.hpp"
#include "testing.hpp"

using namespace stedq;
namespace fs = std::filesystem;

namespace {

Checkpoint sample_checkpoint() {
  NetworkConfig c;
  c.input_size = 64;
  c.conv_channels = {2, 3, 3, 4, 4, 4};
  c.dense_widths = {5, 1};
  c.seed = 77;
  Checkpoint cp{Network::build(c), {}};
  std::mt19937_64 rng(1);
  cp.network.forward(testing::random_tensor({3, 1, 64, 64}, rng), Mode::kTrain);
  cp.metadata = {12, 0.1234, 0.5, 0.25};
  return cp;
}

fs::path temp_file(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "stedq_checkpoint_test";
  fs::create_directories(dir);
  return dir / name;
}

std::vector<char> read_all(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_all(const fs::path& p, const std::vector<char>& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

CheckpointError::Kind load_error(const fs::path& p) {
  try {
    load_checkpoint(p);
  } catch (const CheckpointError& e) {
    return e.kind();
  }
  FAIL("load unexpectedly succeeded");
  return CheckpointError::Kind::kIo;
}

}  // namespace

TEST_CASE("checkpoint round trip reproduces predictions bitwise") {
  const Checkpoint cp = sample_checkpoint();
  const auto path = temp_file("roundtrip.ckpt");
  const std::string digest = save_checkpoint(cp, path);
  CHECK(digest == checkpoint_digest(cp));
  CHECK(digest.size() == 64);

  const Checkpoint back = load_checkpoint(path);
  CHECK(back.metadata == cp.metadata);
  CHECK(back.network.config() == cp.network.config());
  CHECK(back.network.parameters() == cp.network.parameters());
  std::mt19937_64 rng(5);
  const Tensor x = testing::random_tensor({10, 1, 64, 64}, rng);
  CHECK(back.network.predict(x) == cp.network.predict(x));

  const auto bytes = read_all(path);
  CHECK(std::string(bytes.begin(), bytes.begin() + 6) == "STEDQ1");
}

TEST_CASE("corrupted checkpoint is rejected with a digest error") {
  const auto path = temp_file("corrupt.ckpt");
  save_checkpoint(sample_checkpoint(), path);
  auto bytes = read_all(path);
  bytes[bytes.size() / 2] ^= 0x5a;
  write_all(path, bytes);
  CHECK(load_error(path) == CheckpointError::Kind::kDigest);
}

TEST_CASE("future format version is rejected with a version error") {
  const auto bytes = serialize_checkpoint(sample_checkpoint(), kCheckpointVersion + 1);
  const auto path = temp_file("future.ckpt");
  write_all(path, std::vector<char>(bytes.begin(), bytes.end()));
  CHECK(load_error(path) == CheckpointError::Kind::kVersion);
}

TEST_CASE("truncated checkpoint is rejected with a truncation error") {
  const auto path = temp_file("short.ckpt");
  save_checkpoint(sample_checkpoint(), path);
  auto bytes = read_all(path);
  bytes.resize(bytes.size() - 100);
  write_all(path, bytes);
  CHECK(load_error(path) == CheckpointError::Kind::kTruncated);
  bytes.resize(10);
  write_all(path, bytes);
  CHECK(load_error(path) == CheckpointError::Kind::kTruncated);
}

TEST_CASE("foreign files and missing paths") {
  const auto path = temp_file("foreign.ckpt");
  write_all(path, std::vector<char>(200, 'x'));
  CHECK(load_error(path) == CheckpointError::Kind::kBadMagic);
  CHECK(load_error(temp_file("does-not-exist.ckpt")) == CheckpointError::Kind::kIo);
}
