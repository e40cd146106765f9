#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include <nlohmann/json.hpp>
#include "robustnet/attack_eval.hpp"
#include "robustnet/binary_io.hpp"
#include "robustnet/data_io.hpp"
#include "robustnet/errors.hpp"
#include "robustnet/perturb.hpp"
#include "robustnet/ro_equivalence.hpp"
#include "robustnet/robust_train.hpp"

namespace robustnet::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

Preset find_preset(std::string_view name) {
  if (name == "desk-mnist") return {"desk-mnist", desk_mnist_architecture()};
  if (name == "paper-mnist") return {"paper-mnist", paper_mnist_architecture()};
  if (name == "blobs") {
    Preset p{"blobs", mlp_architecture(kBlobsDim, 32, kBlobsClasses)};
    p.epochs = 20;
    p.batch_size = 16;
    p.synthetic = true;
    return p;
  }
  throw InvalidArgument("unknown preset '" + std::string(name) + "' (valid: blobs, desk-mnist, paper-mnist)");
}

std::vector<std::string> split_list(std::string_view text) {
  std::vector<std::string> items;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const auto end = comma == std::string_view::npos ? text.size() : comma;
    if (end > start) items.emplace_back(text.substr(start, end - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return items;
}

namespace {

double parse_number(std::string_view text, std::string_view what) {
  const std::string s(text);
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (s.empty() || used != s.size() || !std::isfinite(v)) {
    throw InvalidArgument("bad " + std::string(what) + " '" + s + "' in epsilon range");
  }
  return v;
}

}  // namespace

std::vector<double> parse_epsilon_range(std::string_view text) {
  const auto first = text.find(':');
  const auto second = first == std::string_view::npos ? first : text.find(':', first + 1);
  if (first == std::string_view::npos || second == std::string_view::npos ||
      text.find(':', second + 1) != std::string_view::npos) {
    throw InvalidArgument("epsilon range must look like start:stop:step, got '" + std::string(text) + "'");
  }
  const double start = parse_number(text.substr(0, first), "start");
  const double stop = parse_number(text.substr(first + 1, second - first - 1), "stop");
  const double step = parse_number(text.substr(second + 1), "step");
  if (start < 0.0) throw InvalidArgument("epsilon range start must be >= 0");
  if (!(step > 0.0)) throw InvalidArgument("epsilon range step must be > 0");
  if (stop < start) throw InvalidArgument("epsilon range is empty: stop < start");
  std::vector<double> values;
  for (std::size_t k = 0;; ++k) {
    double v = start + static_cast<double>(k) * step;
    if (v > stop + 1e-9 * step) break;
    if (std::abs(v - stop) <= 1e-9 * step) v = stop;
    values.push_back(v);
  }
  return values;
}

namespace {

struct UsageError : Error {
  using Error::Error;
};

struct DataChoice {
  std::string preset = "desk-mnist";
  std::string data_dir;  // resolved absolute path, empty for synthetic presets
  std::size_t train_limit = 10000;
  std::size_t test_limit = 2000;
};

struct LoadedData {
  Dataset train;
  Dataset test;
};

LoadedData load_data(const DataChoice& choice) {
  const Preset preset = find_preset(choice.preset);
  LoadedData data;
  if (preset.synthetic) {
    auto all = synth_blobs(kBlobsPerClass, kBlobsClasses, kBlobsDim, kBlobsSpread, kBlobsSeed);
    auto [train, test] = split_shuffle(all, kBlobsTrainFraction, kBlobsSeed);
    data.train = std::move(train);
    data.test = std::move(test);
  } else {
    auto splits = load_mnist_dir(choice.data_dir);
    data.train = std::move(splits.train);
    data.test = std::move(splits.test);
  }
  data.train = data.train.head(choice.train_limit);
  data.test = data.test.head(choice.test_limit);
  if (data.train.example_shape() != preset.architecture.input_shape) {
    throw ShapeError("dataset examples are " + shape_to_string(data.train.example_shape()) + " but preset '" +
                     preset.name + "' expects " + shape_to_string(preset.architecture.input_shape));
  }
  return data;
}

DataChoice resolve_choice(const std::string& preset, const std::string& data_dir_flag, std::size_t train_limit,
                          std::size_t test_limit) {
  DataChoice c;
  c.preset = preset;
  c.train_limit = train_limit;
  c.test_limit = test_limit;
  if (!find_preset(preset).synthetic) {
    std::optional<std::string> flag;
    if (!data_dir_flag.empty()) flag = data_dir_flag;
    c.data_dir = fs::absolute(resolve_data_dir(flag)).lexically_normal().string();
  }
  if (c.train_limit == 0 || c.test_limit == 0) throw InvalidArgument("--train-limit and --test-limit must be >= 1");
  return c;
}

json choice_json(const DataChoice& c) {
  return {{"preset", c.preset}, {"data_dir", c.data_dir}, {"train_limit", c.train_limit},
          {"test_limit", c.test_limit}};
}

/// Data choice recorded in a checkpoint, with command-line overrides.
DataChoice choice_from_checkpoint(const Checkpoint& ckpt, const std::string& preset_flag,
                                  const std::string& data_dir_flag, std::optional<std::size_t> test_limit) {
  json cfg;
  try {
    cfg = json::parse(ckpt.config);
  } catch (const json::exception&) {
    cfg = json::object();
  }
  const json data = cfg.value("data", json::object());
  const std::string preset = !preset_flag.empty() ? preset_flag : data.value("preset", std::string("desk-mnist"));
  std::string dir = data_dir_flag;
  if (dir.empty() && std::getenv("ROBUSTNET_DATA_DIR") == nullptr) dir = data.value("data_dir", std::string());
  return resolve_choice(preset, dir, data.value("train_limit", std::size_t{10000}),
                        test_limit.value_or(data.value("test_limit", std::size_t{2000})));
}

void write_run_config(const fs::path& artifact, const json& config) {
  write_text_atomic(fs::path(artifact.string() + ".run.json"), config.dump(2) + "\n");
}

std::string artifact_name(const fs::path& path) { return path.stem().string(); }

std::vector<NamedNet> load_models(const std::vector<std::string>& paths, std::vector<Checkpoint>* checkpoints) {
  if (paths.empty()) throw UsageError("--models needs at least one checkpoint");
  std::vector<NamedNet> nets;
  std::set<std::string> names;
  for (const auto& p : paths) {
    auto ckpt = load_checkpoint(p);
    std::string name = artifact_name(p);
    if (!names.insert(name).second) throw UsageError("two models share the name '" + name + "'");
    nets.push_back({name, ckpt.params});
    if (checkpoints) checkpoints->push_back(std::move(ckpt));
  }
  for (const auto& n : nets) {
    if (!(n.params.architecture.input_shape == nets.front().params.architecture.input_shape)) {
      throw ShapeError("models '" + nets.front().name + "' and '" + n.name + "' take different input shapes");
    }
  }
  return nets;
}

void require_compatible(const NetworkParams& params, const Dataset& data, const std::string& what) {
  if (data.example_shape() != params.architecture.input_shape) {
    throw ShapeError(what + " expects inputs " + shape_to_string(params.architecture.input_shape) +
                     " but the dataset has " + shape_to_string(data.example_shape()));
  }
  if (data.num_classes != params.architecture.num_classes()) {
    throw ShapeError(what + " has " + std::to_string(params.architecture.num_classes()) +
                     " classes but the dataset has " + std::to_string(data.num_classes));
  }
}

BasisProvider translation_provider(const Shape& input_shape) {
  if (input_shape.size() != 3) throw InvalidArgument("the tangent family needs image inputs {channels, height, width}");
  return [](std::size_t, const Tensor& x) { return translation_tangent_basis(x); };
}

void write_output(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << text;
  } else {
    write_text_atomic(path, text);
  }
}

// ---- subcommand options -------------------------------------------------

struct Common {
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  std::string data_dir;
  std::string out;
};

void add_common(CLI::App* app, Common& c, bool out_required) {
  app->add_option("--seed", c.seed, "Random seed")->capture_default_str();
  app->add_option("--workers", c.workers, "Worker threads for per-example work (1 = bitwise deterministic)")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  app->add_option("--data-dir", c.data_dir, "Directory with MNIST IDX files (default: $ROBUSTNET_DATA_DIR)");
  auto* o = app->add_option("--out", c.out, out_required ? "Output file" : "Output file (default: stdout)");
  if (out_required) o->required();
}

struct TrainArgs {
  Common common;
  std::string preset = "desk-mnist";
  std::size_t epochs = 0, batch_size = 0, train_limit = 10000, test_limit = 2000, checkpoint_every = 0;
  double lr = 0.0, momentum = 0.0;
  std::string trace, init;
  std::string norm;
  double radius = 0.0, alpha = 0.0;
  CLI::Option *epochs_opt = nullptr, *batch_opt = nullptr, *lr_opt = nullptr, *momentum_opt = nullptr,
              *alpha_opt = nullptr;
};

void add_train_options(CLI::App* app, TrainArgs& a, bool robust) {
  add_common(app, a.common, true);
  app->add_option("--preset", a.preset, "Architecture and defaults: desk-mnist, paper-mnist or blobs")
      ->capture_default_str();
  a.epochs_opt = app->add_option("--epochs", a.epochs, "Training epochs (preset default)");
  a.batch_opt = app->add_option("--batch-size", a.batch_size, "Mini-batch size (preset default)");
  a.lr_opt = app->add_option("--lr", a.lr, "Learning rate (preset default)");
  a.momentum_opt = app->add_option("--momentum", a.momentum, "Momentum coefficient (preset default)");
  app->add_option("--train-limit", a.train_limit, "Use the first N training examples")->capture_default_str();
  app->add_option("--test-limit", a.test_limit, "Use the first N test examples")->capture_default_str();
  app->add_option("--trace", a.trace, "Per-epoch CSV (default: <out>.trace.csv)");
  app->add_option("--checkpoint-every", a.checkpoint_every, "Also save <out>.epochN every N epochs (0 = off)")
      ->capture_default_str();
  app->add_option("--init", a.init, "Start from this checkpoint instead of random weights");
  if (robust) {
    app->add_option("--norm", a.norm, "Uncertainty set: l1, l2, linf or tangent")->required();
    app->add_option("--radius", a.radius, "Uncertainty radius (> 0)")->required();
    a.alpha_opt = app->add_option("--alpha", a.alpha, "Blend clean and perturbed loss with this clean weight (linf)");
  }
}

struct AttackArgs {
  Common common;
  std::string model, preset, families = "linf,l2,l1";
  double radius_linf = 0.1, radius_l2 = 2.0, radius_l1 = 1.0, radius_tangent = 1.0;
  std::size_t pool = 1000;
  std::size_t test_limit = 0;
  CLI::Option* test_limit_opt = nullptr;
};

struct EvalArgs {
  Common common;
  std::string models, advset, preset;
  std::size_t test_limit = 0;
  CLI::Option* test_limit_opt = nullptr;
};

struct SweepArgs {
  Common common;
  std::string models, eps = "0.05:0.25:0.05", preset;
  std::size_t subset = 1000;
  std::size_t test_limit = 0;
  CLI::Option* test_limit_opt = nullptr;
};

struct PixelArgs {
  Common common;
  std::string model, preset;
  double radius = 1.0;
  std::size_t max_points = 1000;
  std::size_t test_limit = 0;
  CLI::Option* test_limit_opt = nullptr;
};

struct VerifyArgs {
  Common common;
  std::size_t trials = 1000, samples = 1000;
};

void add_eval_data_options(CLI::App* app, std::string& preset, std::size_t& test_limit, CLI::Option*& limit_opt) {
  app->add_option("--preset", preset, "Override the data preset recorded in the checkpoint");
  limit_opt = app->add_option("--test-limit", test_limit, "Override the test-set size recorded in the checkpoint");
}

std::optional<std::size_t> given(const CLI::Option* opt, std::size_t value) {
  if (opt && opt->count() > 0) return value;
  return std::nullopt;
}

// ---- commands ---------------------------------------------------------------

int cmd_train(const TrainArgs& a, const std::vector<std::string>& args, bool robust, std::ostream& out) {
  const Preset preset = find_preset(a.preset);
  const DataChoice choice = resolve_choice(a.preset, a.common.data_dir, a.train_limit, a.test_limit);

  TrainConfig config;
  config.epochs = a.epochs_opt->count() ? a.epochs : preset.epochs;
  config.batch_size = a.batch_opt->count() ? a.batch_size : preset.batch_size;
  config.learning_rate = a.lr_opt->count() ? a.lr : preset.learning_rate;
  config.momentum = a.momentum_opt->count() ? a.momentum : preset.momentum;
  config.seed = a.common.seed;
  config.checkpoint_every = a.checkpoint_every;
  config.workers = a.common.workers;
  if (robust) {
    if (!(a.radius > 0.0)) throw UsageError("--radius must be > 0");
    config.uncertainty.family = parse_family(a.norm);
    config.uncertainty.radius = a.radius;
    if (a.alpha_opt->count()) {
      config.mode = TrainMode::blended;
      config.alpha = a.alpha;
    } else {
      config.mode = TrainMode::robust;
    }
  }
  config.validate();

  json cfg = {{"command", robust ? "robust-train" : "train"},
              {"args", args},
              {"data", choice_json(choice)},
              {"seed", config.seed},
              {"workers", config.workers},
              {"mode", to_string(config.mode)},
              {"epochs", config.epochs},
              {"batch_size", config.batch_size},
              {"learning_rate", config.learning_rate},
              {"momentum", config.momentum},
              {"checkpoint_every", config.checkpoint_every},
              {"out", fs::absolute(a.common.out).lexically_normal().string()}};
  if (config.mode != TrainMode::standard) {
    cfg["norm"] = to_string(config.uncertainty.family);
    cfg["radius"] = config.uncertainty.radius;
  }
  if (config.mode == TrainMode::blended) cfg["alpha"] = config.alpha;

  std::optional<NetworkParams> initial;
  if (!a.init.empty()) {
    auto ckpt = load_checkpoint(a.init);
    if (!(ckpt.params.architecture == preset.architecture)) {
      throw ShapeError("--init checkpoint does not match preset '" + preset.name + "'");
    }
    cfg["init"] = fs::absolute(a.init).lexically_normal().string();
    cfg["init_id"] = checkpoint_id(ckpt.params);
    initial = std::move(ckpt.params);
  }

  const LoadedData data = load_data(choice);
  const std::string config_text = cfg.dump();
  const fs::path out_path = a.common.out;

  auto make_checkpoint = [&](const NetworkParams& params, std::size_t epoch) {
    Checkpoint ckpt;
    ckpt.params = params;
    ckpt.config = config_text;
    ckpt.config_fingerprint = fnv1a64(config_text);
    ckpt.seed = config.seed;
    ckpt.metadata = "mode=" + to_string(config.mode) + " epoch=" + std::to_string(epoch);
    if (config.mode != TrainMode::standard) {
      ckpt.metadata += " norm=" + to_string(config.uncertainty.family);
    }
    return ckpt;
  };

  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochRecord& r) {
    out << "epoch " << r.epoch << " loss " << r.mean_loss;
    if (r.test_accuracy) out << " test_acc " << *r.test_accuracy;
    out << " (" << r.seconds << " s)\n";
    out.flush();
  };
  hooks.on_checkpoint = [&](std::size_t epoch, const NetworkParams& params) {
    save_checkpoint(make_checkpoint(params, epoch), fs::path(out_path.string() + ".epoch" + std::to_string(epoch)));
  };

  std::optional<BasisProvider> provider;
  TrainInputs inputs;
  inputs.test = &data.test;
  inputs.hooks = &hooks;
  inputs.initial = initial ? &*initial : nullptr;
  if (config.mode != TrainMode::standard && config.uncertainty.family == PerturbFamily::tangent) {
    provider = translation_provider(preset.architecture.input_shape);
    inputs.basis_provider = &*provider;
  }

  const TrainResult result = train(preset.architecture, data.train, config, inputs);

  save_checkpoint(make_checkpoint(result.params, config.epochs), out_path);
  const std::string trace_path = a.trace.empty() ? out_path.string() + ".trace.csv" : a.trace;
  write_text_atomic(trace_path, result.trace.to_csv());
  write_run_config(out_path, cfg);
  out << "wrote " << out_path.string() << " (" << checkpoint_id(result.params) << ") and " << trace_path << "\n";
  return 0;
}

int cmd_attack(const AttackArgs& a, const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  if (a.model.empty()) throw UsageError("--model is required");
  const Checkpoint ckpt = load_checkpoint(a.model);
  const DataChoice choice = choice_from_checkpoint(ckpt, a.preset, a.common.data_dir, given(a.test_limit_opt, a.test_limit));
  const LoadedData data = load_data(choice);
  require_compatible(ckpt.params, data.test, "model '" + a.model + "'");

  std::vector<FamilyRadius> families;
  const std::map<PerturbFamily, double> radii = {{PerturbFamily::linf, a.radius_linf},
                                                 {PerturbFamily::l2, a.radius_l2},
                                                 {PerturbFamily::l1, a.radius_l1},
                                                 {PerturbFamily::tangent, a.radius_tangent}};
  for (const auto& name : split_list(a.families)) {
    const auto family = parse_family(name);
    if (!(radii.at(family) > 0.0)) throw UsageError("radius for " + name + " must be > 0");
    families.push_back({family, radii.at(family)});
  }
  if (families.empty()) throw UsageError("--families is empty");

  const auto candidates = seeded_subset_indices(data.test.size(), std::min(a.pool, data.test.size()), a.common.seed);
  std::optional<BasisProvider> provider;
  AttackOptions options;
  options.workers = a.common.workers;
  for (const auto& f : families) {
    if (f.family == PerturbFamily::tangent) {
      provider = translation_provider(ckpt.params.architecture.input_shape);
      options.basis_provider = &*provider;
    }
  }

  const AdversarialSet set = build_adversarial_set(ckpt.params, data.test, families, candidates, options);
  save_adversarial_set(set, a.common.out);

  json fam = json::array();
  for (const auto& f : families) fam.push_back({{"family", to_string(f.family)}, {"radius", f.radius}});
  std::map<std::string, std::size_t> per_family;
  for (const auto& r : set.records) ++per_family[to_string(r.family)];
  json cfg = {{"command", "attack"},
              {"args", args},
              {"data", choice_json(choice)},
              {"seed", a.common.seed},
              {"model", fs::absolute(a.model).lexically_normal().string()},
              {"generator_id", set.generator_id},
              {"families", fam},
              {"pool", candidates.size()},
              {"records", set.size()},
              {"records_per_family", per_family}};
  write_run_config(a.common.out, cfg);

  const std::size_t violations = count_adversarial_violations(ckpt.params, set, data.test);
  out << "wrote " << a.common.out << ": " << set.size() << " adversarial examples from " << candidates.size()
      << " candidates";
  for (const auto& [name, n] : per_family) out << ", " << name << " " << n;
  out << "\n";
  if (violations != 0) {
    err << "error: " << violations << " records break the adversarial-set invariants\n";
    return 1;
  }
  return 0;
}

/// generator id recorded beside an adversarial-set file, if any.
std::string recorded_generator(const std::string& advset_path) {
  const fs::path side = advset_path + ".run.json";
  if (!fs::exists(side)) return {};
  try {
    const auto bytes = read_file(side);
    const auto cfg = json::parse(bytes.begin(), bytes.end());
    return cfg.value("generator_id", std::string());
  } catch (const json::exception&) {
    return {};
  }
}

int cmd_eval(const EvalArgs& a, const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  if (a.advset.empty()) throw UsageError("--advset is required");
  std::vector<Checkpoint> ckpts;
  const auto nets = load_models(split_list(a.models), &ckpts);
  const DataChoice choice =
      choice_from_checkpoint(ckpts.front(), a.preset, a.common.data_dir, given(a.test_limit_opt, a.test_limit));
  const LoadedData data = load_data(choice);
  for (const auto& n : nets) require_compatible(n.params, data.test, "model '" + n.name + "'");

  AdversarialSet set = load_adversarial_set(a.advset);
  const Shape& input = nets.front().params.architecture.input_shape;
  if (!set.empty() && shape_size(set.example_shape) != shape_size(input)) {
    throw ShapeError("adversarial set examples have " + std::to_string(shape_size(set.example_shape)) +
                     " values but the models take " + shape_to_string(input));
  }
  set.example_shape = input;
  for (auto& r : set.records) r.example = r.example.reshaped(input);

  const auto rows = cross_evaluate(nets, set, data.test, a.common.workers);
  write_output(a.common.out, cross_eval_csv(rows), out);

  int status = 0;
  const std::string generator = recorded_generator(a.advset);
  for (const auto& n : nets) {
    if (!generator.empty() && checkpoint_id(n.params) == generator) {
      const std::size_t violations = count_adversarial_violations(n.params, set, data.test);
      if (violations != 0) {
        err << "error: generator '" << n.name << "' violates " << violations << " adversarial-set records\n";
        status = 1;
      }
    }
  }
  if (!a.common.out.empty() && a.common.out != "-") {
    json cfg = {{"command", "eval"},       {"args", args},
                {"data", choice_json(choice)}, {"advset", fs::absolute(a.advset).lexically_normal().string()},
                {"generator_id", generator}, {"models", split_list(a.models)}};
    write_run_config(a.common.out, cfg);
  }
  return status;
}

int cmd_sweep(const SweepArgs& a, const std::vector<std::string>& args, std::ostream& out) {
  const auto eps = parse_epsilon_range(a.eps);
  std::vector<Checkpoint> ckpts;
  const auto nets = load_models(split_list(a.models), &ckpts);
  const DataChoice choice =
      choice_from_checkpoint(ckpts.front(), a.preset, a.common.data_dir, given(a.test_limit_opt, a.test_limit));
  const LoadedData data = load_data(choice);
  for (const auto& n : nets) require_compatible(n.params, data.test, "model '" + n.name + "'");
  if (a.subset == 0) throw UsageError("--subset must be >= 1");
  const auto idx = seeded_subset_indices(data.test.size(), std::min(a.subset, data.test.size()), a.common.seed);
  const Dataset subset = data.test.subset(idx);

  AttackOptions options;
  options.workers = a.common.workers;
  const auto rows = epsilon_sweep(nets, subset, eps, options);
  write_output(a.common.out, sweep_csv(rows), out);
  if (!a.common.out.empty() && a.common.out != "-") {
    json cfg = {{"command", "sweep"},      {"args", args},   {"data", choice_json(choice)}, {"seed", a.common.seed},
                {"models", split_list(a.models)}, {"eps", eps}, {"subset", subset.size()}};
    write_run_config(a.common.out, cfg);
  }
  return 0;
}

int cmd_single_pixel(const PixelArgs& a, const std::vector<std::string>& args, std::ostream& out,
                     std::ostream& err) {
  if (a.model.empty()) throw UsageError("--model is required");
  if (!(a.radius > 0.0)) throw UsageError("--radius must be > 0");
  const Checkpoint ckpt = load_checkpoint(a.model);
  const DataChoice choice =
      choice_from_checkpoint(ckpt, a.preset, a.common.data_dir, given(a.test_limit_opt, a.test_limit));
  const LoadedData data = load_data(choice);
  require_compatible(ckpt.params, data.test, "model '" + a.model + "'");
  AttackOptions options;
  options.workers = a.common.workers;
  const auto rows = single_pixel_report(ckpt.params, data.test, a.radius, a.max_points, options);
  write_output(a.common.out, single_pixel_csv(rows), out);
  if (!a.common.out.empty() && a.common.out != "-") {
    json cfg = {{"command", "single-pixel"}, {"args", args},           {"data", choice_json(choice)},
                {"radius", a.radius},        {"max_points", a.max_points}, {"successes", rows.size()}};
    write_run_config(a.common.out, cfg);
  }
  err << rows.size() << " single-pixel misclassifications\n";
  return 0;
}

int cmd_verify_ro(const VerifyArgs& a, const std::vector<std::string>& args, std::ostream& out,
                  std::ostream& err) {
  const auto report = verify_equivalences(a.trials, a.common.seed, a.samples, a.common.workers);
  write_output(a.common.out, report.to_csv(), out);
  if (!a.common.out.empty() && a.common.out != "-") {
    json cfg = {{"command", "verify-ro"}, {"args", args},        {"seed", a.common.seed},
                {"trials", a.trials},     {"samples", a.samples}, {"passed", report.passed()}};
    write_run_config(a.common.out, cfg);
  }
  if (!report.passed()) {
    err << "error: robust-optimization identities failed verification\n";
    return 1;
  }
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Robust training and adversarial evaluation of small convolutional networks", "robustnet"};
  app.require_subcommand(1);

  TrainArgs train_args, robust_args;
  auto* train_cmd = app.add_subcommand("train", "Standard mini-batch SGD training");
  add_train_options(train_cmd, train_args, false);
  auto* robust_cmd = app.add_subcommand("robust-train", "Alternating ascent/descent robust training");
  add_train_options(robust_cmd, robust_args, true);

  AttackArgs attack;
  auto* attack_cmd = app.add_subcommand("attack", "Build an adversarial set from a trained model");
  add_common(attack_cmd, attack.common, true);
  attack_cmd->add_option("--model", attack.model, "Generating checkpoint")->required();
  attack_cmd->add_option("--families", attack.families, "Comma-separated families (l1, l2, linf, tangent)")
      ->capture_default_str();
  attack_cmd->add_option("--radius-linf", attack.radius_linf)->capture_default_str();
  attack_cmd->add_option("--radius-l2", attack.radius_l2)->capture_default_str();
  attack_cmd->add_option("--radius-l1", attack.radius_l1)->capture_default_str();
  attack_cmd->add_option("--radius-tangent", attack.radius_tangent)->capture_default_str();
  attack_cmd->add_option("--pool", attack.pool, "Number of candidate test points (seeded choice)")
      ->capture_default_str();
  add_eval_data_options(attack_cmd, attack.preset, attack.test_limit, attack.test_limit_opt);

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "Clean and adversarial accuracy of several models");
  add_common(eval_cmd, eval.common, false);
  eval_cmd->add_option("--models", eval.models, "Comma-separated checkpoints")->required();
  eval_cmd->add_option("--advset", eval.advset, "Adversarial set file")->required();
  add_eval_data_options(eval_cmd, eval.preset, eval.test_limit, eval.test_limit_opt);

  SweepArgs sweep;
  auto* sweep_cmd = app.add_subcommand("sweep", "Self-attack accuracy over a range of linf radii");
  add_common(sweep_cmd, sweep.common, false);
  sweep_cmd->add_option("--models", sweep.models, "Comma-separated checkpoints")->required();
  sweep_cmd
      ->add_option("--eps", sweep.eps,
                   "start:stop:step; stop is included when it falls on a step (0.05:0.25:0.05 gives 5 values)")
      ->capture_default_str();
  sweep_cmd->add_option("--subset", sweep.subset, "Number of test points (seeded choice)")->capture_default_str();
  add_eval_data_options(sweep_cmd, sweep.preset, sweep.test_limit, sweep.test_limit_opt);

  PixelArgs pixel;
  auto* pixel_cmd = app.add_subcommand("single-pixel", "Report single-pixel misclassifications from the l1 step");
  add_common(pixel_cmd, pixel.common, false);
  pixel_cmd->add_option("--model", pixel.model, "Checkpoint")->required();
  pixel_cmd->add_option("--radius", pixel.radius, "l1 radius")->capture_default_str();
  pixel_cmd->add_option("--max-points", pixel.max_points, "Correctly classified points to try")
      ->capture_default_str();
  add_eval_data_options(pixel_cmd, pixel.preset, pixel.test_limit, pixel.test_limit_opt);

  VerifyArgs verify;
  auto* verify_cmd = app.add_subcommand("verify-ro", "Check the robust least-squares identities by sampling");
  add_common(verify_cmd, verify.common, false);
  verify_cmd->add_option("--trials", verify.trials, "Random instances")->capture_default_str();
  verify_cmd->add_option("--samples", verify.samples, "Feasible perturbations per instance")->capture_default_str();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(std::move(reversed));
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (*train_cmd) return cmd_train(train_args, args, false, out);
    if (*robust_cmd) return cmd_train(robust_args, args, true, out);
    if (*attack_cmd) return cmd_attack(attack, args, out, err);
    if (*eval_cmd) return cmd_eval(eval, args, out, err);
    if (*sweep_cmd) return cmd_sweep(sweep, args, out);
    if (*pixel_cmd) return cmd_single_pixel(pixel, args, out, err);
    if (*verify_cmd) return cmd_verify_ro(verify, args, out, err);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const InvalidArgument& e) {
    err << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace robustnet::cli
