#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>

#include "robustnet/tensor.hpp"

namespace robustnet {

/// Robust least-squares instance: residual ||(A + D) x - b||_2 under a matrix
/// perturbation D of size `radius` (Frobenius radius gamma, or column-wise
/// radius rho, depending on which function reads it).
struct RoInstance {
  Tensor a;  // m x n
  Tensor b;  // m
  Tensor x;  // n
  double radius = 0.0;

  void validate() const;
  std::size_t rows() const { return a.rows(); }
  std::size_t cols() const { return a.cols(); }
};

/// ||(A + delta) x - b||_2.
double perturbed_residual(const RoInstance& inst, const Tensor& delta);
/// ||delta||_{inf,2}: the largest column l2 norm.
double columnwise_norm(const Tensor& delta);

/// sup over ||D||_F <= gamma of ||(A + D) x - b||_2 = ||Ax - b||_2 + gamma ||x||_2.
double frobenius_sup(const RoInstance& inst);
/// D* = gamma r x^T / (||r|| ||x||), r = Ax - b. A unit vector stands in for r or
/// x when either is zero, so D* always has Frobenius norm gamma and attains the sup.
Tensor frobenius_worst_case(const RoInstance& inst);

/// sup over ||D||_{inf,2} <= rho of ||(A + D) x - b||_2 = ||Ax - b||_2 + rho ||x||_1.
double columnwise_sup(const RoInstance& inst);
/// Columns rho sign(x_i) r / ||r|| (e_1 in place of r / ||r|| when r = 0).
Tensor columnwise_worst_case(const RoInstance& inst);

/// Gaussian matrix scaled to Frobenius norm `gamma`.
Tensor sample_frobenius_perturbation(std::size_t m, std::size_t n, double gamma, std::mt19937_64& rng);
/// Each column Gaussian, scaled to l2 norm `rho`.
Tensor sample_columnwise_perturbation(std::size_t m, std::size_t n, double rho, std::mt19937_64& rng);

struct EquivalenceReport {
  std::size_t trials = 0;
  std::size_t samples_per_trial = 0;
  std::size_t bound_violations = 0;      // sampled value above the closed form + slack
  std::size_t tightness_failures = 0;    // constructive worst case misses the closed form
  std::size_t gap_failures = 0;          // best-of-many gap larger than best-of-few gap
  double max_bound_excess = 0.0;         // largest (sampled - closed form), may be negative
  double max_tightness_error = 0.0;
  double mean_gap_few = 0.0;             // closed form minus best of the first samples/100
  double mean_gap_many = 0.0;            // closed form minus best of all samples

  bool passed() const {
    return bound_violations == 0 && tightness_failures == 0 && gap_failures == 0 && mean_gap_many <= mean_gap_few;
  }
};

struct VerificationReport {
  EquivalenceReport frobenius;
  EquivalenceReport columnwise;

  bool passed() const { return frobenius.passed() && columnwise.passed(); }
  /// One row per identity.
  std::string to_csv() const;
};

inline constexpr double kBoundSlack = 1e-12;
inline constexpr double kTightnessTolerance = 1e-9;

/// Random instances (every tenth has x = 0, every tenth b = Ax) checked with
/// `samples` feasible perturbations each. Trial i uses its own derived seed.
VerificationReport verify_equivalences(std::size_t trials, std::uint64_t seed, std::size_t samples = 1000,
                                       std::size_t workers = 1);

}  // namespace robustnet
