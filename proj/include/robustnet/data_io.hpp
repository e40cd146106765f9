#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "robustnet/nn.hpp"

namespace robustnet {

/// Normalized value = raw * scale + offset.
struct Normalization {
  double scale = 1.0;
  double offset = 0.0;

  double apply(double raw) const { return raw * scale + offset; }
  double invert(double value) const { return (value - offset) / scale; }

  friend bool operator==(const Normalization&, const Normalization&) = default;
};

struct Dataset {
  std::vector<Example> examples;
  std::size_t num_classes = 0;
  Normalization normalization;

  std::size_t size() const noexcept { return examples.size(); }
  bool empty() const noexcept { return examples.empty(); }
  const Shape& example_shape() const;
  /// Labels in range, uniform shapes, values inside [lo, hi].
  void validate(double lo = 0.0, double hi = 1.0) const;
  Dataset subset(std::span<const std::size_t> indices) const;
  /// First min(n, size()) examples.
  Dataset head(std::size_t n) const;
};

/// IDX image/label pair. Pixels are divided by 255. Throws BadMagicError,
/// TruncatedFileError or CountMismatchError, each naming the offending file.
Dataset load_mnist_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

struct MnistSplits {
  Dataset train;
  Dataset test;
};

/// Loads train-{images-idx3,labels-idx1}-ubyte and t10k-... from `dir`.
MnistSplits load_mnist_dir(const std::filesystem::path& dir);

/// `flag` if given, else $ROBUSTNET_DATA_DIR. Throws IoError when neither is
/// set or the directory does not exist.
std::filesystem::path resolve_data_dir(const std::optional<std::string>& flag);

/// K Gaussian clusters around seeded uniform centers, clipped to [0,1]^dim.
Dataset synth_blobs(std::size_t n_per_class, std::size_t classes, std::size_t dim, double spread,
                    std::uint64_t seed);

/// Seeded permutation, then a prefix of round(fraction * n) examples for train.
std::pair<Dataset, Dataset> split_shuffle(const Dataset& ds, double train_fraction, std::uint64_t seed);

/// k distinct indices from [0, n) chosen by a seeded shuffle, sorted ascending.
std::vector<std::size_t> seeded_subset_indices(std::size_t n, std::size_t k, std::uint64_t seed);

inline constexpr std::uint16_t kCheckpointVersion = 1;

struct Checkpoint {
  std::uint16_t version = kCheckpointVersion;
  NetworkParams params;
  std::uint64_t config_fingerprint = 0;  // fnv1a64 of `config`
  std::string config;                    // serialized run configuration
  std::uint64_t seed = 0;
  std::string metadata;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

/// "RNCK" container, little-endian, parameters as 64-bit floats, trailing
/// FNV-1a checksum.
std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
/// Throws BadMagicError, VersionMismatchError or CorruptionError.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes, const std::string& context = "checkpoint");
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Stable identifier of a parameter set: "rn-" followed by 16 hex digits.
std::string checkpoint_id(const NetworkParams& params);

}  // namespace robustnet
