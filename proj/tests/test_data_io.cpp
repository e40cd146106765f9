#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "robustnet/binary_io.hpp"
#include "robustnet/data_io.hpp"
#include "robustnet/errors.hpp"

using namespace robustnet;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = fs::temp_directory_path() / ("robustnet-test-" + std::to_string(rd()));
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

void put_be32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<std::uint8_t>(v >> s));
}

std::vector<std::uint8_t> idx_images(std::uint32_t magic, std::uint32_t n, std::uint32_t rows, std::uint32_t cols,
                                     std::size_t data_bytes) {
  std::vector<std::uint8_t> b;
  put_be32(b, magic);
  put_be32(b, n);
  put_be32(b, rows);
  put_be32(b, cols);
  for (std::size_t i = 0; i < data_bytes; ++i) b.push_back(static_cast<std::uint8_t>(i * 37));
  return b;
}

std::vector<std::uint8_t> idx_labels(std::uint32_t magic, std::uint32_t n, std::size_t data_bytes) {
  std::vector<std::uint8_t> b;
  put_be32(b, magic);
  put_be32(b, n);
  for (std::size_t i = 0; i < data_bytes; ++i) b.push_back(static_cast<std::uint8_t>(i % 10));
  return b;
}

void write(const fs::path& p, const std::vector<std::uint8_t>& b) { write_file_atomic(p, b); }

Checkpoint sample_checkpoint() {
  Checkpoint c;
  c.params = init_params(desk_mnist_architecture(), 5);
  c.config = R"({"preset":"desk-mnist"})";
  c.config_fingerprint = fnv1a64(c.config);
  c.seed = 5;
  c.metadata = "mode=standard";
  return c;
}

}  // namespace

TEST(Idx, LoadsValidFiles) {
  TempDir dir;
  write(dir.path() / "img", idx_images(0x803, 3, 2, 2, 12));
  write(dir.path() / "lab", idx_labels(0x801, 3, 3));
  const auto ds = load_mnist_idx(dir.path() / "img", dir.path() / "lab");
  ASSERT_EQ(ds.size(), 3u);
  EXPECT_EQ(ds.example_shape(), (Shape{1, 2, 2}));
  EXPECT_EQ(ds.examples[1].y, 1u);
  EXPECT_DOUBLE_EQ(ds.examples[0].x[1], 37.0 / 255.0);
  EXPECT_NO_THROW(ds.validate());
  EXPECT_DOUBLE_EQ(ds.normalization.invert(ds.examples[0].x[1]), 37.0);
}

TEST(Idx, RejectsBadMagic) {
  TempDir dir;
  write(dir.path() / "img", idx_images(0x801, 3, 2, 2, 12));
  write(dir.path() / "lab", idx_labels(0x801, 3, 3));
  try {
    load_mnist_idx(dir.path() / "img", dir.path() / "lab");
    FAIL();
  } catch (const BadMagicError& e) {
    EXPECT_NE(std::string(e.what()).find("img"), std::string::npos);
  }
}

TEST(Idx, RejectsTruncation) {
  TempDir dir;
  write(dir.path() / "img", idx_images(0x803, 3, 2, 2, 11));
  write(dir.path() / "lab", idx_labels(0x801, 3, 3));
  EXPECT_THROW(load_mnist_idx(dir.path() / "img", dir.path() / "lab"), TruncatedFileError);
  write(dir.path() / "img", {0x00, 0x00});
  EXPECT_THROW(load_mnist_idx(dir.path() / "img", dir.path() / "lab"), TruncatedFileError);
  write(dir.path() / "img", idx_images(0x803, 3, 2, 2, 12));
  write(dir.path() / "lab", idx_labels(0x801, 3, 2));
  EXPECT_THROW(load_mnist_idx(dir.path() / "img", dir.path() / "lab"), TruncatedFileError);
  write(dir.path() / "img", idx_images(0x803, 0xFFFFFFFF, 0xFFFF, 0xFFFF, 4));
  EXPECT_THROW(load_mnist_idx(dir.path() / "img", dir.path() / "lab"), TruncatedFileError);
}

TEST(Idx, RejectsCountMismatch) {
  TempDir dir;
  write(dir.path() / "img", idx_images(0x803, 3, 2, 2, 12));
  write(dir.path() / "lab", idx_labels(0x801, 4, 4));
  EXPECT_THROW(load_mnist_idx(dir.path() / "img", dir.path() / "lab"), CountMismatchError);
}

TEST(Idx, MissingFileAndDirectory) {
  TempDir dir;
  EXPECT_THROW(load_mnist_idx(dir.path() / "nope", dir.path() / "nope2"), IoError);
  try {
    load_mnist_dir(dir.path() / "absent");
    FAIL();
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("absent"), std::string::npos);
  }
}

TEST(DataDir, FlagThenEnvironment) {
  TempDir dir;
  EXPECT_EQ(resolve_data_dir(dir.path().string()), dir.path());
  EXPECT_THROW(resolve_data_dir(std::string("/definitely/not/here")), IoError);
  ::setenv("ROBUSTNET_DATA_DIR", dir.path().c_str(), 1);
  EXPECT_EQ(resolve_data_dir(std::nullopt), dir.path());
  ::unsetenv("ROBUSTNET_DATA_DIR");
  EXPECT_THROW(resolve_data_dir(std::nullopt), IoError);
}

TEST(Blobs, SeededAndInBox) {
  const auto a = synth_blobs(10, 3, 4, 0.1, 7);
  const auto b = synth_blobs(10, 3, 4, 0.1, 7);
  ASSERT_EQ(a.size(), 30u);
  EXPECT_EQ(a.num_classes, 3u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a.examples[i].x, b.examples[i].x);
    EXPECT_EQ(a.examples[i].y, i % 3);
  }
  EXPECT_NO_THROW(a.validate());
  EXPECT_THROW(synth_blobs(0, 3, 4, 0.1, 7), InvalidArgument);
}

TEST(Split, SizesAndDeterminism) {
  const auto ds = synth_blobs(5, 2, 3, 0.1, 1);
  const auto [train, test] = split_shuffle(ds, 0.5, 9);
  EXPECT_EQ(train.size(), 5u);
  EXPECT_EQ(test.size(), 5u);
  const auto again = split_shuffle(ds, 0.5, 9);
  EXPECT_EQ(train.examples[2].x, again.first.examples[2].x);
  EXPECT_THROW(split_shuffle(ds, 0.01, 9), InvalidArgument);
  EXPECT_THROW(split_shuffle(ds, 1.0, 9), InvalidArgument);
}

TEST(Subset, SortedDistinct) {
  const auto idx = seeded_subset_indices(100, 10, 3);
  ASSERT_EQ(idx.size(), 10u);
  EXPECT_TRUE(std::is_sorted(idx.begin(), idx.end()));
  EXPECT_EQ(std::adjacent_find(idx.begin(), idx.end()), idx.end());
  EXPECT_EQ(idx, seeded_subset_indices(100, 10, 3));
  EXPECT_EQ(seeded_subset_indices(5, 5, 3), (std::vector<std::size_t>{0, 1, 2, 3, 4}));
}

TEST(Checkpoint, RoundTrip) {
  TempDir dir;
  const auto c = sample_checkpoint();
  save_checkpoint(c, dir.path() / "a.rnck");
  const auto back = load_checkpoint(dir.path() / "a.rnck");
  EXPECT_EQ(back, c);
  EXPECT_EQ(checkpoint_id(back.params), checkpoint_id(c.params));
  EXPECT_EQ(encode_checkpoint(back), encode_checkpoint(c));
  EXPECT_FALSE(fs::exists(dir.path() / "a.rnck.partial"));
}

TEST(Checkpoint, DetectsDamage) {
  const auto bytes = encode_checkpoint(sample_checkpoint());
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(decode_checkpoint(bad), BadMagicError);
  bad = bytes;
  bad[4] = 9;
  EXPECT_THROW(decode_checkpoint(bad), VersionMismatchError);
  bad = bytes;
  bad[bytes.size() / 2] ^= 0x01;
  EXPECT_THROW(decode_checkpoint(bad), CorruptionError);
  bad = bytes;
  bad.push_back(0);
  EXPECT_THROW(decode_checkpoint(bad), CorruptionError);
  EXPECT_THROW(decode_checkpoint(std::span(bytes).first(bytes.size() - 3)), CorruptionError);
  auto wrong = sample_checkpoint();
  wrong.config_fingerprint += 1;
  EXPECT_THROW(decode_checkpoint(encode_checkpoint(wrong)), CorruptionError);
}

TEST(Checkpoint, IdDependsOnParameters) {
  auto c = sample_checkpoint();
  const auto id = checkpoint_id(c.params);
  EXPECT_EQ(id.size(), 19u);
  EXPECT_EQ(id.substr(0, 3), "rn-");
  c.params.tensors[0][0] += 1e-9;
  EXPECT_NE(checkpoint_id(c.params), id);
}

TEST(ByteIo, LittleEndianRoundTrip) {
  ByteWriter w;
  w.u16(0x0102);
  w.u32(0x03040506);
  w.f64(-1.5);
  w.string("hi");
  const auto b = w.take();
  EXPECT_EQ(b[0], 0x02);
  EXPECT_EQ(b[1], 0x01);
  ByteReader r(b, "test");
  EXPECT_EQ(r.u16(), 0x0102);
  EXPECT_EQ(r.u32(), 0x03040506u);
  EXPECT_EQ(r.f64(), -1.5);
  EXPECT_EQ(r.string(), "hi");
  EXPECT_EQ(r.remaining(), 0u);
  EXPECT_THROW(r.u8(), CorruptionError);
}
