#include "robustnet/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <numeric>
#include <random>

#include "robustnet/binary_io.hpp"
#include "robustnet/errors.hpp"

namespace robustnet {

namespace fs = std::filesystem;

const Shape& Dataset::example_shape() const {
  if (examples.empty()) throw InvalidArgument("empty dataset has no example shape");
  return examples.front().x.shape();
}

void Dataset::validate(double lo, double hi) const {
  if (examples.empty()) return;
  const auto& shape = example_shape();
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto& e = examples[i];
    if (e.y >= num_classes) throw InvalidArgument("example " + std::to_string(i) + " has label out of range");
    if (e.x.shape() != shape) throw ShapeError("example " + std::to_string(i) + " has a different shape");
    for (double v : e.x.data()) {
      if (!(v >= lo && v <= hi)) throw InvalidArgument("example " + std::to_string(i) + " leaves the data box");
    }
  }
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out{{}, num_classes, normalization};
  out.examples.reserve(indices.size());
  for (auto i : indices) {
    if (i >= examples.size()) throw InvalidArgument("subset index out of range");
    out.examples.push_back(examples[i]);
  }
  return out;
}

Dataset Dataset::head(std::size_t n) const {
  Dataset out{{}, num_classes, normalization};
  n = std::min(n, examples.size());
  out.examples.assign(examples.begin(), examples.begin() + static_cast<std::ptrdiff_t>(n));
  return out;
}

namespace {

std::uint32_t read_be32(const std::vector<std::uint8_t>& b, std::size_t off) {
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) | (std::uint32_t{b[off + 2]} << 8) |
         std::uint32_t{b[off + 3]};
}

std::vector<std::uint8_t> read_idx(const fs::path& path, std::uint32_t magic, std::size_t header_bytes) {
  if (!fs::exists(path)) throw IoError("IDX file not found: " + path.string());
  auto bytes = read_file(path);
  if (bytes.size() < 4) throw TruncatedFileError("IDX file too short for a header: " + path.string());
  const auto got = read_be32(bytes, 0);
  if (got != magic) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "0x%08X (expected 0x%08X)", got, magic);
    throw BadMagicError("bad IDX magic " + std::string(buf) + " in " + path.string());
  }
  if (bytes.size() < header_bytes) throw TruncatedFileError("IDX header truncated: " + path.string());
  return bytes;
}

}  // namespace

Dataset load_mnist_idx(const fs::path& images, const fs::path& labels) {
  const auto img = read_idx(images, 0x00000803, 16);
  const auto lab = read_idx(labels, 0x00000801, 8);
  const std::size_t n_img = read_be32(img, 4), rows = read_be32(img, 8), cols = read_be32(img, 12);
  const std::size_t n_lab = read_be32(lab, 4);
  if (rows == 0 || cols == 0) throw CorruptionError("IDX image dimensions must be positive: " + images.string());
  if (n_img > (img.size() - 16) / (rows * cols)) {
    throw TruncatedFileError("IDX image data truncated: " + images.string() + " declares " + std::to_string(n_img) +
                             " images");
  }
  if (n_lab > lab.size() - 8) {
    throw TruncatedFileError("IDX label data truncated: " + labels.string() + " declares " + std::to_string(n_lab) +
                             " labels");
  }
  if (n_img != n_lab) {
    throw CountMismatchError("image/label count mismatch: " + images.string() + " has " + std::to_string(n_img) +
                             ", " + labels.string() + " has " + std::to_string(n_lab));
  }

  Dataset ds;
  ds.num_classes = 10;
  ds.normalization = Normalization{1.0 / 255.0, 0.0};
  ds.examples.reserve(n_img);
  const std::size_t pixels = rows * cols;
  for (std::size_t i = 0; i < n_img; ++i) {
    std::vector<double> v(pixels);
    const std::uint8_t* src = img.data() + 16 + i * pixels;
    for (std::size_t p = 0; p < pixels; ++p) v[p] = static_cast<double>(src[p]) / 255.0;
    const std::size_t y = lab[8 + i];
    if (y >= ds.num_classes) throw CorruptionError("label " + std::to_string(y) + " out of range in " + labels.string());
    ds.examples.push_back(Example{Tensor({1, rows, cols}, std::move(v)), y});
  }
  return ds;
}

MnistSplits load_mnist_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("data directory not found: " + dir.string());
  return MnistSplits{load_mnist_idx(dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte"),
                     load_mnist_idx(dir / "t10k-images-idx3-ubyte", dir / "t10k-labels-idx1-ubyte")};
}

fs::path resolve_data_dir(const std::optional<std::string>& flag) {
  std::string dir;
  if (flag && !flag->empty()) {
    dir = *flag;
  } else if (const char* env = std::getenv("ROBUSTNET_DATA_DIR"); env && *env) {
    dir = env;
  } else {
    throw IoError("no data directory: pass --data-dir or set ROBUSTNET_DATA_DIR");
  }
  if (!fs::is_directory(dir)) throw IoError("data directory not found: " + dir);
  return dir;
}

Dataset synth_blobs(std::size_t n_per_class, std::size_t classes, std::size_t dim, double spread,
                    std::uint64_t seed) {
  if (n_per_class == 0 || classes == 0 || dim == 0) throw InvalidArgument("synth_blobs sizes must be positive");
  if (!(spread >= 0.0)) throw InvalidArgument("synth_blobs spread must be >= 0");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<std::vector<double>> centers(classes, std::vector<double>(dim));
  for (auto& c : centers)
    for (auto& v : c) v = uni(rng);

  Dataset ds;
  ds.num_classes = classes;
  ds.examples.reserve(n_per_class * classes);
  for (std::size_t i = 0; i < n_per_class; ++i) {
    for (std::size_t k = 0; k < classes; ++k) {
      std::vector<double> v(dim);
      for (std::size_t d = 0; d < dim; ++d) v[d] = std::clamp(centers[k][d] + spread * gauss(rng), 0.0, 1.0);
      ds.examples.push_back(Example{Tensor::vector(std::move(v)), k});
    }
  }
  return ds;
}

std::pair<Dataset, Dataset> split_shuffle(const Dataset& ds, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw InvalidArgument("train fraction must be in (0, 1)");
  const std::size_t n = ds.size();
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
  if (n_train == 0 || n_train == n) throw InvalidArgument("split leaves an empty side");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::span<const std::size_t> all(perm);
  return {ds.subset(all.first(n_train)), ds.subset(all.subspan(n_train))};
}

std::vector<std::size_t> seeded_subset_indices(std::size_t n, std::size_t k, std::uint64_t seed) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  if (k >= n) return perm;
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  perm.resize(k);
  std::sort(perm.begin(), perm.end());
  return perm;
}

namespace {

constexpr std::string_view kCheckpointMagic = "RNCK";

void write_params(ByteWriter& w, const NetworkParams& params) {
  const auto& arch = params.architecture;
  w.u32(static_cast<std::uint32_t>(arch.input_shape.size()));
  for (auto d : arch.input_shape) w.u32(static_cast<std::uint32_t>(d));
  w.u32(static_cast<std::uint32_t>(arch.layers.size()));
  for (const auto& l : arch.layers) {
    w.u8(static_cast<std::uint8_t>(l.kind));
    for (auto v : {l.in_dim, l.out_dim, l.in_channels, l.out_channels, l.kernel_h, l.kernel_w, l.stride}) {
      w.u32(static_cast<std::uint32_t>(v));
    }
  }
  w.u32(static_cast<std::uint32_t>(params.tensors.size()));
  for (const auto& t : params.tensors) {
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
    for (double v : t.data()) w.f64(v);
  }
}

NetworkParams read_params(ByteReader& r, const std::string& context) {
  NetworkParams params;
  auto& arch = params.architecture;
  const auto rank = r.u32();
  if (rank > 8) throw CorruptionError(context + ": implausible input rank");
  for (std::uint32_t i = 0; i < rank; ++i) arch.input_shape.push_back(r.u32());
  const auto n_layers = r.u32();
  r.require(static_cast<std::size_t>(n_layers) * 29);
  for (std::uint32_t i = 0; i < n_layers; ++i) {
    LayerSpec l;
    const auto kind = r.u8();
    if (kind > 3) throw CorruptionError(context + ": unknown layer kind " + std::to_string(kind));
    l.kind = static_cast<LayerKind>(kind);
    for (auto* f : {&l.in_dim, &l.out_dim, &l.in_channels, &l.out_channels, &l.kernel_h, &l.kernel_w, &l.stride}) {
      *f = r.u32();
    }
    arch.layers.push_back(l);
  }
  std::vector<Tensor> expected;
  try {
    expected = zero_param_tensors(arch);
  } catch (const Error& e) {
    throw CorruptionError(context + ": stored architecture is invalid (" + e.what() + ")");
  }
  const auto n_tensors = r.u32();
  if (n_tensors != expected.size()) throw CorruptionError(context + ": parameter tensor count does not match layers");
  for (std::uint32_t t = 0; t < n_tensors; ++t) {
    const auto trank = r.u32();
    if (trank > 8) throw CorruptionError(context + ": implausible tensor rank");
    Shape shape;
    for (std::uint32_t i = 0; i < trank; ++i) shape.push_back(r.u32());
    if (shape != expected[t].shape()) throw CorruptionError(context + ": parameter tensor shape mismatch");
    const std::size_t n = shape_size(shape);
    r.require(n * 8);
    std::vector<double> data(n);
    for (auto& v : data) v = r.f64();
    params.tensors.emplace_back(std::move(shape), std::move(data));
  }
  return params;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  ByteWriter w;
  w.raw(kCheckpointMagic);
  w.u16(ckpt.version);
  write_params(w, ckpt.params);
  w.u64(ckpt.config_fingerprint);
  w.string(ckpt.config);
  w.u64(ckpt.seed);
  w.string(ckpt.metadata);
  w.u64(fnv1a64(w.bytes()));
  return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes, const std::string& context) {
  if (bytes.size() < 4 || std::string_view(reinterpret_cast<const char*>(bytes.data()), 4) != kCheckpointMagic) {
    throw BadMagicError(context + ": not a checkpoint (bad magic)");
  }
  ByteReader r(bytes, context);
  r.raw(4);
  Checkpoint ckpt;
  ckpt.version = r.u16();
  if (ckpt.version != kCheckpointVersion) {
    throw VersionMismatchError(context + ": checkpoint version " + std::to_string(ckpt.version) +
                               " is not supported (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  ckpt.params = read_params(r, context);
  ckpt.config_fingerprint = r.u64();
  ckpt.config = r.string();
  ckpt.seed = r.u64();
  ckpt.metadata = r.string();
  const std::size_t body = r.position();
  const auto checksum = r.u64();
  if (r.remaining() != 0) throw CorruptionError(context + ": trailing bytes after checkpoint");
  if (checksum != fnv1a64(bytes.first(body))) throw CorruptionError(context + ": checksum mismatch");
  if (ckpt.config_fingerprint != fnv1a64(ckpt.config)) {
    throw CorruptionError(context + ": configuration fingerprint mismatch");
  }
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const fs::path& path) {
  const auto bytes = encode_checkpoint(ckpt);
  write_file_atomic(path, bytes);
}

Checkpoint load_checkpoint(const fs::path& path) {
  const auto bytes = read_file(path);
  return decode_checkpoint(bytes, path.string());
}

std::string checkpoint_id(const NetworkParams& params) {
  ByteWriter w;
  write_params(w, params);
  char buf[32];
  std::snprintf(buf, sizeof buf, "rn-%016llx", static_cast<unsigned long long>(fnv1a64(w.bytes())));
  return buf;
}

}  // namespace robustnet
