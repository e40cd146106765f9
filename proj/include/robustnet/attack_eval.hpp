#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "robustnet/data_io.hpp"
#include "robustnet/nn.hpp"
#include "robustnet/perturb.hpp"

namespace robustnet {

/// Fraction of examples whose prediction matches the label.
double evaluate(const NetworkParams& params, std::span<const Example> examples, std::size_t workers = 1);
inline double evaluate(const NetworkParams& params, const Dataset& ds, std::size_t workers = 1) {
  return evaluate(params, ds.examples, workers);
}

struct AdversarialRecord {
  std::uint32_t origin_index = 0;
  std::uint8_t label = 0;
  PerturbFamily family = PerturbFamily::linf;
  float radius = 0.0f;
  Tensor example;

  friend bool operator==(const AdversarialRecord&, const AdversarialRecord&) = default;
};

/// Perturbed test points that the generating network gets wrong although it
/// classifies their origins correctly. Example values are representable as
/// 32-bit floats, so the on-disk form classifies identically.
struct AdversarialSet {
  std::string generator_id;
  Shape example_shape;
  std::vector<AdversarialRecord> records;

  std::size_t size() const noexcept { return records.size(); }
  bool empty() const noexcept { return records.empty(); }
  /// Records as labelled examples reshaped to `shape`.
  std::vector<Example> examples(const Shape& shape) const;

  friend bool operator==(const AdversarialSet&, const AdversarialSet&) = default;
};

struct FamilyRadius {
  PerturbFamily family = PerturbFamily::linf;
  double radius = 0.0;
};

/// linf 0.1, l2 2.0, l1 1.0.
std::vector<FamilyRadius> default_attack_families();

struct AttackOptions {
  bool clip_to_box = true;
  double lo = 0.0;
  double hi = 1.0;
  std::size_t workers = 1;
  const BasisProvider* basis_provider = nullptr;
};

/// Visits `candidates` (all of `test` when empty) in ascending index order.
/// For each point the network classifies correctly and each family, applies
/// one first-order ascent step and keeps the result if it is misclassified.
AdversarialSet build_adversarial_set(const NetworkParams& params, const Dataset& test,
                                     std::span<const FamilyRadius> families,
                                     std::span<const std::size_t> candidates = {}, const AttackOptions& options = {});

/// Number of records breaking the set invariants against `params` and the
/// origin data: origin misclassified, label mismatch, or perturbed example
/// classified correctly.
std::size_t count_adversarial_violations(const NetworkParams& params, const AdversarialSet& set,
                                         const Dataset& test);

/// "ADVS" container: u16 version, u32 count, u32 dim, then per record
/// u32 origin, u8 label, u8 family, f32 radius, dim x f32. Little-endian.
inline constexpr std::uint16_t kAdversarialSetVersion = 1;
std::vector<std::uint8_t> encode_adversarial_set(const AdversarialSet& set);
/// The loaded set has a flat example shape {dim} and no generator id.
AdversarialSet decode_adversarial_set(std::span<const std::uint8_t> bytes, const std::string& context = "advset");
void save_adversarial_set(const AdversarialSet& set, const std::filesystem::path& path);
AdversarialSet load_adversarial_set(const std::filesystem::path& path);

struct NamedNet {
  std::string name;
  NetworkParams params;
};

struct CrossEvalRow {
  std::string net;
  double clean_accuracy = 0.0;
  double adversarial_accuracy = 0.0;
};

std::vector<CrossEvalRow> cross_evaluate(std::span<const NamedNet> nets, const AdversarialSet& set,
                                         const Dataset& clean_test, std::size_t workers = 1);
/// Header `net,clean_acc,adv_acc`.
std::string cross_eval_csv(std::span<const CrossEvalRow> rows);

struct SweepRow {
  std::string net;
  double epsilon = 0.0;
  double accuracy = 0.0;
  std::size_t n = 0;
};

/// Self-attack: each net is attacked with eps * sign(grad_x J) at its own
/// parameters and evaluated on the result. `epsilons` must be non-empty,
/// non-negative and strictly increasing.
std::vector<SweepRow> epsilon_sweep(std::span<const NamedNet> nets, const Dataset& subset,
                                    std::span<const double> epsilons, const AttackOptions& options = {});
/// Header `net,epsilon,accuracy,n`.
std::string sweep_csv(std::span<const SweepRow> rows);

struct SinglePixelRecord {
  std::size_t index = 0;
  std::size_t pixel = 0;  // flat index into the example
  std::size_t row = 0;
  std::size_t col = 0;
  std::size_t label = 0;
  std::size_t old_prediction = 0;
  std::size_t new_prediction = 0;
  double old_value = 0.0;
  double new_value = 0.0;
};

/// Applies the l1 step of radius r to correctly classified points (at most
/// `max_points` of them, in index order) and reports those it flips.
std::vector<SinglePixelRecord> single_pixel_report(const NetworkParams& params, const Dataset& test, double r,
                                                   std::size_t max_points = std::numeric_limits<std::size_t>::max(),
                                                   const AttackOptions& options = {});
/// Header `index,pixel,row,col,label,old_pred,new_pred,old_value,new_value`.
std::string single_pixel_csv(std::span<const SinglePixelRecord> rows);

}  // namespace robustnet
