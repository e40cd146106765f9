#include "robustnet/ro_equivalence.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <vector>

#include "robustnet/errors.hpp"
#include "robustnet/parallel.hpp"

namespace robustnet {

void RoInstance::validate() const {
  if (a.rank() != 2) throw ShapeError("RoInstance: A must be a matrix");
  if (b.size() != a.rows() || b.rank() != 1) throw ShapeError("RoInstance: b must have one entry per row of A");
  if (x.size() != a.cols() || x.rank() != 1) throw ShapeError("RoInstance: x must have one entry per column of A");
  if (!(radius >= 0.0) || !std::isfinite(radius)) throw InvalidArgument("RoInstance: radius must be >= 0");
}

namespace {

std::vector<double> residual(const RoInstance& inst, const Tensor* delta) {
  const std::size_t m = inst.rows(), n = inst.cols();
  std::vector<double> r(m);
  for (std::size_t i = 0; i < m; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double aij = delta ? inst.a.at(i, j) + delta->at(i, j) : inst.a.at(i, j);
      acc += aij * inst.x[j];
    }
    r[i] = acc - inst.b[i];
  }
  return r;
}

}  // namespace

double perturbed_residual(const RoInstance& inst, const Tensor& delta) {
  inst.validate();
  if (delta.shape() != inst.a.shape()) throw ShapeError("perturbation must have the shape of A");
  return norm(residual(inst, &delta), Norm::l2);
}

double columnwise_norm(const Tensor& delta) {
  double best = 0.0;
  for (std::size_t j = 0; j < delta.cols(); ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < delta.rows(); ++i) acc += delta.at(i, j) * delta.at(i, j);
    best = std::max(best, std::sqrt(acc));
  }
  return best;
}

double frobenius_sup(const RoInstance& inst) {
  inst.validate();
  return norm(residual(inst, nullptr), Norm::l2) + inst.radius * norm(inst.x, Norm::l2);
}

Tensor frobenius_worst_case(const RoInstance& inst) {
  inst.validate();
  const std::size_t m = inst.rows(), n = inst.cols();
  Tensor delta({m, n});
  if (inst.radius == 0.0) return delta;
  auto r = residual(inst, nullptr);
  const double rn = norm(r, Norm::l2);
  std::vector<double> u(m, 0.0), v(n, 0.0);
  if (rn > 0.0) {
    for (std::size_t i = 0; i < m; ++i) u[i] = r[i] / rn;
  } else {
    u[0] = 1.0;
  }
  const double xn = norm(inst.x, Norm::l2);
  if (xn > 0.0) {
    for (std::size_t j = 0; j < n; ++j) v[j] = inst.x[j] / xn;
  } else {
    v[0] = 1.0;
  }
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) delta.at(i, j) = inst.radius * u[i] * v[j];
  return delta;
}

double columnwise_sup(const RoInstance& inst) {
  inst.validate();
  return norm(residual(inst, nullptr), Norm::l2) + inst.radius * norm(inst.x, Norm::l1);
}

Tensor columnwise_worst_case(const RoInstance& inst) {
  inst.validate();
  const std::size_t m = inst.rows(), n = inst.cols();
  Tensor delta({m, n});
  if (inst.radius == 0.0) return delta;
  auto r = residual(inst, nullptr);
  const double rn = norm(r, Norm::l2);
  std::vector<double> u(m, 0.0);
  if (rn > 0.0) {
    for (std::size_t i = 0; i < m; ++i) u[i] = r[i] / rn;
  } else {
    u[0] = 1.0;
  }
  for (std::size_t j = 0; j < n; ++j) {
    const double s = inst.x[j] > 0.0 ? 1.0 : (inst.x[j] < 0.0 ? -1.0 : 0.0);
    for (std::size_t i = 0; i < m; ++i) delta.at(i, j) = inst.radius * s * u[i];
  }
  return delta;
}

Tensor sample_frobenius_perturbation(std::size_t m, std::size_t n, double gamma, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Tensor d({m, n});
  for (auto& v : d.data()) v = gauss(rng);
  const double fn = norm(d, Norm::l2);
  if (fn > 0.0)
    for (auto& v : d.data()) v *= gamma / fn;
  return d;
}

Tensor sample_columnwise_perturbation(std::size_t m, std::size_t n, double rho, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Tensor d({m, n});
  for (auto& v : d.data()) v = gauss(rng);
  for (std::size_t j = 0; j < n; ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < m; ++i) acc += d.at(i, j) * d.at(i, j);
    const double cn = std::sqrt(acc);
    if (cn > 0.0)
      for (std::size_t i = 0; i < m; ++i) d.at(i, j) *= rho / cn;
  }
  return d;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

RoInstance random_instance(std::size_t trial, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> dim(1, 6);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> rad(0.0, 2.0);
  const std::size_t m = dim(rng), n = dim(rng);
  RoInstance inst{Tensor({m, n}), Tensor({m}), Tensor({n}), rad(rng)};
  for (auto& v : inst.a.data()) v = gauss(rng);
  for (auto& v : inst.x.data()) v = gauss(rng);
  for (auto& v : inst.b.data()) v = gauss(rng);
  if (trial % 10 == 3) {
    for (auto& v : inst.x.data()) v = 0.0;
  } else if (trial % 10 == 7) {
    inst.b = matmul(inst.a, inst.x.reshaped({n, 1})).reshaped({m});
  } else if (trial % 10 == 9 && n > 1) {
    inst.x[0] = 0.0;
  }
  return inst;
}

struct TrialOutcome {
  double bound_excess = 0.0;
  double tightness_error = 0.0;
  double gap_few = 0.0;
  double gap_many = 0.0;
};

template <class Sampler, class Sup, class WorstCase>
TrialOutcome run_trial(const RoInstance& inst, std::size_t samples, std::mt19937_64& rng, Sampler sample, Sup sup,
                       WorstCase worst) {
  const double closed = sup(inst);
  const std::size_t few = std::max<std::size_t>(1, samples / 100);
  double best_few = -1.0, best = -1.0, excess = -1e300;
  for (std::size_t s = 0; s < samples; ++s) {
    const Tensor d = sample(inst.rows(), inst.cols(), inst.radius, rng);
    const double v = perturbed_residual(inst, d);
    excess = std::max(excess, v - closed);
    best = std::max(best, v);
    if (s < few) best_few = best;
  }
  const double attained = perturbed_residual(inst, worst(inst));
  return {excess, std::abs(attained - closed), closed - best_few, closed - best};
}

void accumulate(EquivalenceReport& rep, const TrialOutcome& t) {
  if (t.bound_excess > kBoundSlack) ++rep.bound_violations;
  if (!(t.tightness_error <= kTightnessTolerance)) ++rep.tightness_failures;
  if (t.gap_many > t.gap_few) ++rep.gap_failures;
  rep.max_bound_excess = std::max(rep.max_bound_excess, t.bound_excess);
  rep.max_tightness_error = std::max(rep.max_tightness_error, t.tightness_error);
  rep.mean_gap_few += t.gap_few;
  rep.mean_gap_many += t.gap_many;
}

}  // namespace

VerificationReport verify_equivalences(std::size_t trials, std::uint64_t seed, std::size_t samples,
                                       std::size_t workers) {
  if (trials < 1) throw InvalidArgument("verify_equivalences: trials must be >= 1");
  if (samples < 1) throw InvalidArgument("verify_equivalences: samples must be >= 1");
  std::vector<TrialOutcome> frob(trials), col(trials);
  parallel_for(trials, workers, [&](std::size_t t) {
    std::mt19937_64 rng(splitmix64(seed ^ splitmix64(t)));
    const RoInstance inst = random_instance(t, rng);
    frob[t] = run_trial(inst, samples, rng, sample_frobenius_perturbation,
                        [](const RoInstance& i) { return frobenius_sup(i); },
                        [](const RoInstance& i) { return frobenius_worst_case(i); });
    col[t] = run_trial(inst, samples, rng, sample_columnwise_perturbation,
                       [](const RoInstance& i) { return columnwise_sup(i); },
                       [](const RoInstance& i) { return columnwise_worst_case(i); });
  });

  VerificationReport report;
  for (auto* rep : {&report.frobenius, &report.columnwise}) {
    rep->trials = trials;
    rep->samples_per_trial = samples;
    rep->max_bound_excess = -1e300;
  }
  for (std::size_t t = 0; t < trials; ++t) {
    accumulate(report.frobenius, frob[t]);
    accumulate(report.columnwise, col[t]);
  }
  for (auto* rep : {&report.frobenius, &report.columnwise}) {
    rep->mean_gap_few /= static_cast<double>(trials);
    rep->mean_gap_many /= static_cast<double>(trials);
  }
  return report;
}

std::string VerificationReport::to_csv() const {
  std::ostringstream os;
  os << "identity,trials,samples,bound_violations,tightness_failures,gap_failures,max_bound_excess,"
        "max_tightness_error,mean_gap_few,mean_gap_many,passed\n";
  char buf[512];
  for (const auto& [name, r] : {std::pair<const char*, const EquivalenceReport&>{"frobenius_ridge", frobenius},
                                std::pair<const char*, const EquivalenceReport&>{"columnwise_lasso", columnwise}}) {
    std::snprintf(buf, sizeof buf, "%s,%zu,%zu,%zu,%zu,%zu,%.3e,%.3e,%.6g,%.6g,%d\n", name, r.trials,
                  r.samples_per_trial, r.bound_violations, r.tightness_failures, r.gap_failures, r.max_bound_excess,
                  r.max_tightness_error, r.mean_gap_few, r.mean_gap_many, r.passed() ? 1 : 0);
    os << buf;
  }
  return os.str();
}

}  // namespace robustnet
