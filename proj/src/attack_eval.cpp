#include "robustnet/attack_eval.hpp"

#include <cstdio>
#include <optional>
#include <sstream>

#include "robustnet/binary_io.hpp"
#include "robustnet/errors.hpp"
#include "robustnet/parallel.hpp"

namespace robustnet {

double evaluate(const NetworkParams& params, std::span<const Example> examples, std::size_t workers) {
  if (examples.empty()) throw InvalidArgument("evaluate: empty dataset");
  std::vector<unsigned char> correct(examples.size());
  parallel_for(examples.size(), workers,
               [&](std::size_t i) { correct[i] = predict(params, examples[i].x) == examples[i].y; });
  std::size_t hits = 0;
  for (auto c : correct) hits += c;
  return static_cast<double>(hits) / static_cast<double>(examples.size());
}

std::vector<Example> AdversarialSet::examples(const Shape& shape) const {
  std::vector<Example> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    if (r.example.size() != shape_size(shape)) {
      throw ShapeError("adversarial example of size " + std::to_string(r.example.size()) + " cannot take shape " +
                       shape_to_string(shape));
    }
    out.push_back(Example{r.example.reshaped(shape), r.label});
  }
  return out;
}

std::vector<FamilyRadius> default_attack_families() {
  return {{PerturbFamily::linf, 0.1}, {PerturbFamily::l2, 2.0}, {PerturbFamily::l1, 1.0}};
}

namespace {

Tensor round_to_float(Tensor x) {
  for (auto& v : x.data()) v = static_cast<double>(static_cast<float>(v));
  return x;
}

}  // namespace

AdversarialSet build_adversarial_set(const NetworkParams& params, const Dataset& test,
                                     std::span<const FamilyRadius> families, std::span<const std::size_t> candidates,
                                     const AttackOptions& options) {
  if (test.empty()) throw InvalidArgument("build_adversarial_set: empty test data");
  if (families.empty()) throw InvalidArgument("build_adversarial_set: no perturbation families requested");
  std::vector<std::size_t> all;
  if (candidates.empty()) {
    all.resize(test.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    candidates = all;
  }
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (candidates[i] >= test.size()) throw InvalidArgument("candidate index out of range");
    if (i > 0 && candidates[i] <= candidates[i - 1]) throw InvalidArgument("candidate indices must be increasing");
  }
  for (const auto& f : families) {
    UncertaintySpec{f.family, f.radius, options.clip_to_box, options.lo, options.hi}.validate();
    if (f.family == PerturbFamily::tangent && !options.basis_provider) {
      throw InvalidArgument("tangent family needs a basis provider");
    }
  }

  std::vector<std::vector<AdversarialRecord>> found(candidates.size());
  parallel_for(candidates.size(), options.workers, [&](std::size_t c) {
    const std::size_t idx = candidates[c];
    const auto& ex = test.examples[idx];
    if (ex.y > 255) throw InvalidArgument("labels above 255 do not fit the adversarial set format");
    if (predict(params, ex.x) != ex.y) return;
    const auto g = backward(params, ex.x, ex.y, GradientRequest::input_only);
    const std::vector<Example> one{ex};
    const std::vector<Tensor> grad{g.input_grad};
    const std::vector<std::size_t> index{idx};
    for (const auto& f : families) {
      const UncertaintySpec spec{f.family, f.radius, options.clip_to_box, options.lo, options.hi};
      const BasisProvider* provider = f.family == PerturbFamily::tangent ? options.basis_provider : nullptr;
      auto adv = perturb_with_gradients(one, grad, spec, provider, index);
      // Stored as 32-bit floats; classify what will be stored.
      Tensor x = round_to_float(std::move(adv[0].x));
      if (predict(params, x) == ex.y) continue;
      found[c].push_back(AdversarialRecord{static_cast<std::uint32_t>(idx), static_cast<std::uint8_t>(ex.y), f.family,
                                           static_cast<float>(f.radius), std::move(x)});
    }
  });

  AdversarialSet set;
  set.generator_id = checkpoint_id(params);
  set.example_shape = test.example_shape();
  for (auto& f : found)
    for (auto& r : f) set.records.push_back(std::move(r));
  return set;
}

std::size_t count_adversarial_violations(const NetworkParams& params, const AdversarialSet& set,
                                         const Dataset& test) {
  std::size_t violations = 0;
  const auto& shape = params.architecture.input_shape;
  for (const auto& r : set.records) {
    if (r.origin_index >= test.size()) {
      ++violations;
      continue;
    }
    const auto& origin = test.examples[r.origin_index];
    if (origin.y != r.label) ++violations;
    if (predict(params, origin.x) != r.label) ++violations;
    if (predict(params, r.example.reshaped(shape)) == r.label) ++violations;
  }
  return violations;
}

namespace {
constexpr std::string_view kAdvMagic = "ADVS";
}

std::vector<std::uint8_t> encode_adversarial_set(const AdversarialSet& set) {
  std::size_t dim = 0;
  if (!set.records.empty()) {
    dim = set.records.front().example.size();
  } else if (!set.example_shape.empty()) {
    dim = shape_size(set.example_shape);
  }
  ByteWriter w;
  w.raw(kAdvMagic);
  w.u16(kAdversarialSetVersion);
  w.u32(static_cast<std::uint32_t>(set.records.size()));
  w.u32(static_cast<std::uint32_t>(dim));
  for (const auto& r : set.records) {
    if (r.example.size() != dim) throw ShapeError("adversarial records have mixed dimensions");
    w.u32(r.origin_index);
    w.u8(r.label);
    w.u8(static_cast<std::uint8_t>(r.family));
    w.f32(r.radius);
    for (double v : r.example.data()) w.f32(static_cast<float>(v));
  }
  return w.take();
}

AdversarialSet decode_adversarial_set(std::span<const std::uint8_t> bytes, const std::string& context) {
  if (bytes.size() < 4 || std::string_view(reinterpret_cast<const char*>(bytes.data()), 4) != kAdvMagic) {
    throw BadMagicError(context + ": not an adversarial set (bad magic)");
  }
  ByteReader r(bytes, context);
  r.raw(4);
  const auto version = r.u16();
  if (version != kAdversarialSetVersion) {
    throw VersionMismatchError(context + ": adversarial set version " + std::to_string(version) + " is not supported");
  }
  const std::size_t count = r.u32();
  const std::size_t dim = r.u32();
  if (count > 0 && dim == 0) throw CorruptionError(context + ": zero example dimension");
  r.require(count * (10 + 4 * dim));
  AdversarialSet set;
  if (dim > 0) set.example_shape = {dim};
  set.records.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    AdversarialRecord rec;
    rec.origin_index = r.u32();
    rec.label = r.u8();
    const auto code = r.u8();
    if (code > 3) throw CorruptionError(context + ": unknown family code " + std::to_string(code));
    rec.family = static_cast<PerturbFamily>(code);
    rec.radius = r.f32();
    std::vector<double> v(dim);
    for (auto& e : v) e = static_cast<double>(r.f32());
    rec.example = Tensor::vector(std::move(v));
    set.records.push_back(std::move(rec));
  }
  if (r.remaining() != 0) throw CorruptionError(context + ": trailing bytes after adversarial set");
  return set;
}

void save_adversarial_set(const AdversarialSet& set, const std::filesystem::path& path) {
  write_file_atomic(path, encode_adversarial_set(set));
}

AdversarialSet load_adversarial_set(const std::filesystem::path& path) {
  return decode_adversarial_set(read_file(path), path.string());
}

std::vector<CrossEvalRow> cross_evaluate(std::span<const NamedNet> nets, const AdversarialSet& set,
                                         const Dataset& clean_test, std::size_t workers) {
  std::vector<CrossEvalRow> rows;
  for (const auto& net : nets) {
    const auto adv = set.examples(net.params.architecture.input_shape);
    CrossEvalRow row;
    row.net = net.name;
    row.clean_accuracy = evaluate(net.params, clean_test, workers);
    // An empty set has no adversarial accuracy to speak of; report 0.
    row.adversarial_accuracy = adv.empty() ? 0.0 : evaluate(net.params, adv, workers);
    rows.push_back(row);
  }
  return rows;
}

std::string cross_eval_csv(std::span<const CrossEvalRow> rows) {
  std::ostringstream os;
  os << "net,clean_acc,adv_acc\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, ",%.6f,%.6f\n", r.clean_accuracy, r.adversarial_accuracy);
    os << r.net << buf;
  }
  return os.str();
}

std::vector<SweepRow> epsilon_sweep(std::span<const NamedNet> nets, const Dataset& subset,
                                    std::span<const double> epsilons, const AttackOptions& options) {
  if (epsilons.empty()) throw InvalidArgument("epsilon_sweep: empty epsilon list");
  if (subset.empty()) throw InvalidArgument("epsilon_sweep: empty test subset");
  for (std::size_t i = 0; i < epsilons.size(); ++i) {
    if (!(epsilons[i] >= 0.0)) throw InvalidArgument("epsilon_sweep: epsilons must be >= 0");
    if (i > 0 && !(epsilons[i] > epsilons[i - 1])) throw InvalidArgument("epsilon_sweep: epsilons must increase");
  }
  std::vector<SweepRow> rows;
  for (const auto& net : nets) {
    // The gradient does not depend on epsilon, so one pass serves every row.
    const auto grads = batch_loss_and_grads(net.params, subset.examples, options.workers, GradientRequest::input_only);
    for (double eps : epsilons) {
      const UncertaintySpec spec{PerturbFamily::linf, eps, options.clip_to_box, options.lo, options.hi};
      const auto adv = perturb_with_gradients(subset.examples, grads.input_grads, spec);
      rows.push_back(SweepRow{net.name, eps, evaluate(net.params, adv, options.workers), subset.size()});
    }
  }
  return rows;
}

std::string sweep_csv(std::span<const SweepRow> rows) {
  std::ostringstream os;
  os << "net,epsilon,accuracy,n\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, ",%.10g,%.6f,%zu\n", r.epsilon, r.accuracy, r.n);
    os << r.net << buf;
  }
  return os.str();
}

std::vector<SinglePixelRecord> single_pixel_report(const NetworkParams& params, const Dataset& test, double r,
                                                   std::size_t max_points, const AttackOptions& options) {
  if (!(r > 0.0)) throw InvalidArgument("single_pixel_report: radius must be > 0");
  const UncertaintySpec spec{PerturbFamily::l1, r, options.clip_to_box, options.lo, options.hi};
  spec.validate();

  // Pick the correctly classified points first so the work is bounded.
  std::vector<std::size_t> chosen;
  for (std::size_t i = 0; i < test.size() && chosen.size() < max_points; ++i) {
    if (predict(params, test.examples[i].x) == test.examples[i].y) chosen.push_back(i);
  }

  std::vector<std::optional<SinglePixelRecord>> found(chosen.size());
  parallel_for(chosen.size(), options.workers, [&](std::size_t c) {
    const std::size_t idx = chosen[c];
    const auto& ex = test.examples[idx];
    const auto g = backward(params, ex.x, ex.y, GradientRequest::input_only);
    Tensor x = ex.x;
    const Tensor delta = steepest_ascent_l1(g.input_grad, r);
    for (std::size_t k = 0; k < x.size(); ++k) x[k] += delta[k];
    if (spec.clip_to_box) x = box_clip(x, spec.lo, spec.hi);
    const std::size_t new_pred = predict(params, x);
    if (new_pred == ex.y) return;
    std::size_t pixel = 0, changed = 0;
    for (std::size_t k = 0; k < x.size(); ++k) {
      if (x[k] != ex.x[k]) {
        pixel = k;
        ++changed;
      }
    }
    if (changed != 1) return;
    SinglePixelRecord rec;
    rec.index = idx;
    rec.pixel = pixel;
    const auto& shape = ex.x.shape();
    if (shape.size() >= 2) {
      const std::size_t w = shape.back();
      const std::size_t h = shape[shape.size() - 2];
      rec.row = (pixel / w) % h;
      rec.col = pixel % w;
    } else {
      rec.col = pixel;
    }
    rec.label = ex.y;
    rec.old_prediction = ex.y;
    rec.new_prediction = new_pred;
    rec.old_value = ex.x[pixel];
    rec.new_value = x[pixel];
    found[c] = rec;
  });

  std::vector<SinglePixelRecord> out;
  for (auto& f : found)
    if (f) out.push_back(*f);
  return out;
}

std::string single_pixel_csv(std::span<const SinglePixelRecord> rows) {
  std::ostringstream os;
  os << "index,pixel,row,col,label,old_pred,new_pred,old_value,new_value\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%zu,%zu,%zu,%zu,%zu,%zu,%zu,%.6f,%.6f\n", r.index, r.pixel, r.row, r.col, r.label,
                  r.old_prediction, r.new_prediction, r.old_value, r.new_value);
    os << buf;
  }
  return os.str();
}

}  // namespace robustnet
