#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "robustnet/nn.hpp"

namespace robustnet::cli {

/// Architecture plus training defaults bundled under a name.
struct Preset {
  std::string name;
  Architecture architecture;
  std::size_t epochs = 10;
  std::size_t batch_size = 64;
  double learning_rate = 0.05;
  double momentum = 0.9;
  bool synthetic = false;  // data generated in-process instead of loaded from disk
};

/// desk-mnist, paper-mnist or blobs. Throws InvalidArgument otherwise.
Preset find_preset(std::string_view name);

/// Synthetic data behind the blobs preset.
inline constexpr std::size_t kBlobsPerClass = 100;
inline constexpr std::size_t kBlobsClasses = 3;
inline constexpr std::size_t kBlobsDim = 16;
inline constexpr double kBlobsSpread = 0.08;
inline constexpr std::uint64_t kBlobsSeed = 2024;
inline constexpr double kBlobsTrainFraction = 0.8;

/// "start:stop:step" -> start, start + step, ... up to stop. The stop value is
/// included when it lies on a step (within 1e-9 of a step). Throws
/// InvalidArgument for malformed, negative or empty ranges.
std::vector<double> parse_epsilon_range(std::string_view text);

/// Splits "a,b,c" on commas, dropping empty items.
std::vector<std::string> split_list(std::string_view text);

/// Runs one invocation. `args` excludes the program name. Returns the process
/// exit code: 0 on success, 1 on runtime or invariant failure, 2 on usage errors.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace robustnet::cli
