#include "chg/cli.hpp"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"

#include "chg/errors.hpp"
#include "chg/experiments.hpp"
#include "chg/random.hpp"
#include "chg/reports.hpp"
#include "chg/selection.hpp"
#include "chg/shapley_core.hpp"
#include "chg/valuation.hpp"

namespace chg {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Options {
  std::string data;
  std::string test_data;
  std::string scheme = "chg";
  std::string out_dir;
  std::string arm = "selection";
  double fraction = 0.1;
  std::size_t interval = 20;
  std::size_t epochs = 20;
  double noise_rate = 0.0;
  std::uint64_t seed = 0;
  std::size_t seeds = 1;
  bool per_class = false;
  unsigned threads = 1;
  bool plot_data = false;
  // Synthetic task, used when --data is absent.
  std::size_t n = 1000;
  std::size_t n_test = 1000;
  std::size_t p = 20;
  std::size_t classes = 2;
  double separation = 4.0;
  // Training.
  double lr = 0.1;
  std::size_t batch_size = 32;
  std::size_t hidden = 0;
  bool cosine = false;
  std::size_t skip_first_epochs = 0;
  // oracle
  std::size_t d = 4;
  std::size_t trials = 50;
  std::size_t samples = 1000;
  std::vector<double> fractions{0.0, 0.1, 0.2, 0.3, 0.4, 0.5};
};

void add_data_flags(CLI::App* cmd, Options& o) {
  cmd->add_option("--data", o.data, "training CSV (features..., label); synthetic if omitted");
  cmd->add_option("--test-data", o.test_data, "held-out CSV with the same columns");
  cmd->add_option("--n", o.n, "synthetic training rows");
  cmd->add_option("--n-test", o.n_test, "synthetic test rows");
  cmd->add_option("--p", o.p, "synthetic feature dimension");
  cmd->add_option("--classes", o.classes, "synthetic class count");
  cmd->add_option("--separation", o.separation, "distance between synthetic class means");
  cmd->add_option("--noise-rate", o.noise_rate, "fraction of training labels to flip")
      ->check(CLI::Range(0.0, 1.0));
}

void add_train_flags(CLI::App* cmd, Options& o) {
  cmd->add_option("--scheme", o.scheme, "utility: chg | hardness | gradient")
      ->check(CLI::IsMember({"chg", "hardness", "gradient"}));
  cmd->add_option("--epochs", o.epochs, "training epochs");
  cmd->add_option("--lr", o.lr, "learning rate");
  cmd->add_flag("--cosine", o.cosine, "cosine learning-rate decay");
  cmd->add_option("--batch-size", o.batch_size, "minibatch size");
  cmd->add_option("--hidden", o.hidden, "width of a fixed random tanh feature map (0: none)");
  cmd->add_option("--seed", o.seed, "random seed");
  cmd->add_option("--threads", o.threads, "worker threads");
  cmd->add_option("--out-dir", o.out_dir, "output directory (default $CHG_OUT_DIR or chg_out)");
  cmd->add_flag("--plot-data", o.plot_data, "also write long-format CSVs for plotting");
}

fs::path output_dir(const Options& o) {
  fs::path dir = o.out_dir;
  if (dir.empty()) {
    const char* env = std::getenv("CHG_OUT_DIR");
    dir = (env != nullptr && *env != '\0') ? fs::path(env) : fs::path("chg_out");
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw InputError("cannot create output directory " + dir.string() + ": " + ec.message());
  return dir;
}

TrainOptions train_options(const Options& o) {
  if (o.batch_size == 0) throw InputError("--batch-size must be positive");
  return {o.lr, o.cosine, o.batch_size, o.hidden};
}

ValuationConfig valuation_config(const Options& o, std::uint64_t seed) {
  ValuationConfig cfg;
  cfg.kind = parse_scheme_kind(o.scheme);
  cfg.epochs = o.epochs;
  cfg.train = train_options(o);
  cfg.seed = seed;
  cfg.per_class = o.per_class;
  cfg.skip_first_epochs = o.skip_first_epochs;
  cfg.threads = o.threads;
  return cfg;
}

json valuation_config_json(const ValuationConfig& c) {
  return {{"scheme", to_string(c.kind)},       {"epochs", c.epochs},
          {"lr", c.train.lr},                  {"cosine", c.train.cosine},
          {"batch_size", c.train.batch_size},  {"hidden", c.train.hidden},
          {"seed", c.seed},                    {"per_class", c.per_class},
          {"skip_first_epochs", c.skip_first_epochs}, {"threads", c.threads}};
}

struct Inputs {
  Dataset train;
  std::optional<Dataset> test;
  std::vector<bool> noise_mask;
  json description;
};

// Loads --data/--test-data or synthesizes a task, then applies --noise-rate
// to the training labels.
Inputs load_inputs(const Options& o, bool need_test) {
  Inputs in;
  if (!o.data.empty()) {
    in.train = load_dataset_csv(o.data);
    if (!o.test_data.empty()) in.test = load_dataset_csv(o.test_data);
    in.description = {{"source", o.data}, {"test_source", o.test_data}};
    if (need_test && !in.test) throw InputError("--test-data is required with --data here");
  } else {
    auto split = make_synthetic_split(o.n, o.n_test, o.p, o.classes, o.separation, o.seed);
    in.train = std::move(split.train);
    in.test = std::move(split.test);
    in.description = {{"source", "synthetic"}, {"n", o.n},         {"n_test", o.n_test},
                      {"p", o.p},              {"classes", o.classes},
                      {"separation", o.separation}, {"seed", o.seed}};
  }
  if (in.test && in.test->dim() != in.train.dim()) {
    throw InputError("test data has a different feature dimension");
  }
  if (o.noise_rate > 0.0) {
    auto noisy = inject_label_noise(in.train.labels, in.train.num_classes, o.noise_rate,
                                    stream_seed(o.seed, 3));
    in.train = make_dataset(std::move(in.train.features), std::move(noisy.labels),
                            in.train.num_classes);
    in.noise_mask = std::move(noisy.noise.flip_mask);
  }
  in.description["noise_rate"] = o.noise_rate;
  return in;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

json run_json(const ValuationRun& run) {
  Vector sums(run.epochs());
  for (std::size_t e = 0; e < run.epochs(); ++e) sums[e] = compensated_sum(run.per_epoch_values.row(e));
  return {{"per_epoch_utility", run.per_epoch_utility},
          {"per_epoch_value_sum", sums},
          {"epoch_seconds", run.epoch_seconds}};
}

int cmd_value(const Options& o, std::ostream& out) {
  const auto t0 = std::chrono::steady_clock::now();
  const Inputs in = load_inputs(o, false);
  const fs::path dir = output_dir(o);
  const ValuationConfig cfg = valuation_config(o, o.seed);
  const ValuationRun run = run_valuation(in.train, cfg);

  write_values_csv(dir / "values.csv", make_values_rows(run.mean_values, in.train.labels, in.noise_mask));
  if (o.plot_data) {
    std::ofstream long_out(dir / "values_long.csv");
    long_out << std::setprecision(17) << "epoch,index,value\n";
    for (std::size_t e = 0; e < run.epochs(); ++e) {
      for (std::size_t j = 0; j < in.train.size(); ++j) {
        long_out << e << ',' << j << ',' << run.per_epoch_values(e, j) << '\n';
      }
    }
  }

  json meta{{"command", "value"}, {"data", in.description}, {"config", valuation_config_json(cfg)}};
  meta.update(run_json(run));
  std::optional<AuditError> failure;
  try {
    meta["efficiency_max_violation"] = epoch_efficiency_audit(run, run.per_epoch_utility).max_violation;
  } catch (const AuditError& e) {
    meta["efficiency_audit_error"] = e.what();
    failure = e;
  }
  meta["total_seconds"] = seconds_since(t0);
  write_json(dir / "run_meta.json", meta);
  out << "wrote " << (dir / "values.csv").string() << " (" << in.train.size() << " values, "
      << run.epochs() << " epochs)\n";
  if (failure) throw *failure;
  return kExitOk;
}

int cmd_select(const Options& o, std::ostream& out) {
  const auto t0 = std::chrono::steady_clock::now();
  const Inputs in = load_inputs(o, false);
  const fs::path dir = output_dir(o);
  SelectionConfig cfg;
  cfg.fraction = o.fraction;
  cfg.interval = o.interval;
  cfg.epochs = o.epochs;
  cfg.seed = o.seed;
  cfg.kind = parse_scheme_kind(o.scheme);
  cfg.train = train_options(o);
  cfg.threads = o.threads;
  validate(cfg);

  const Dataset* test = in.test ? &*in.test : nullptr;
  TrainingResult result;
  if (o.arm == "selection") {
    result = run_selection_training(in.train, test, cfg);
  } else if (o.arm == "random") {
    result = random_baseline_training(in.train, test, cfg, RandomBaseline::kRandom);
  } else if (o.arm == "adaptive") {
    result = random_baseline_training(in.train, test, cfg, RandomBaseline::kAdaptiveRandom);
  } else {
    result = full_training(in.train, test, cfg);
  }

  write_metrics_csv(dir / "metrics.csv", result.history.metrics);
  write_selection_history_jsonl(dir / "selection_history.jsonl", result.history.events);
  json meta{{"command", "select"},
            {"arm", o.arm},
            {"data", in.description},
            {"config",
             {{"fraction", cfg.fraction}, {"interval", cfg.interval}, {"epochs", cfg.epochs},
              {"seed", cfg.seed}, {"scheme", to_string(cfg.kind)}, {"lr", cfg.train.lr},
              {"batch_size", cfg.train.batch_size}, {"threads", cfg.threads}}},
            {"selection_events", result.history.events.size()},
            {"total_seconds", seconds_since(t0)}};
  const auto& last = result.history.metrics.back();
  if (last.test_accuracy) meta["final_test_accuracy"] = *last.test_accuracy;
  write_json(dir / "run_meta.json", meta);
  out << "arm " << o.arm << ": " << result.history.events.size() << " selection events";
  if (last.test_accuracy) out << ", final test accuracy " << *last.test_accuracy;
  out << '\n';
  return kExitOk;
}

int cmd_oracle(const Options& o, std::ostream& out) {
  if (o.n == 0 || o.d == 0 || o.trials == 0) throw InputError("--n, --d and --trials must be positive");
  if (o.n > kDefaultExactLimit) throw SizeError("oracle: --n above the exact enumeration limit");
  double max_abs = 0.0, max_scaled = 0.0, max_eff = 0.0, max_mc = 0.0;
  for (std::size_t t = 0; t < o.trials; ++t) {
    Rng rng(stream_seed(o.seed, t));
    Matrix x(o.n, o.d);
    for (double& v : x.flat()) v = rng.normal();
    Vector alpha(o.d);
    for (double& v : alpha) v = rng.normal();

    const GameSpec game = make_chg_game(x, alpha);
    const Vector exact = exact_shapley(game).values;
    const Vector closed = chg_closed_form_shapley(x, alpha, o.threads).values;
    double scale = 1.0, lo = exact[0], hi = exact[0];
    for (double v : exact) {
      scale = std::max(scale, std::abs(v));
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    for (std::size_t j = 0; j < o.n; ++j) {
      const double err = std::abs(closed[j] - exact[j]);
      max_abs = std::max(max_abs, err);
      max_scaled = std::max(max_scaled, err / scale);
    }
    const double grand = game.utility(all_indices(o.n));
    max_eff = std::max(max_eff, std::abs(compensated_sum(closed) - grand) / std::max(1.0, std::abs(grand)));
    if (o.samples > 0) {
      const Vector mc = permutation_shapley(game, o.samples, stream_seed(o.seed, 1000 + t), o.threads).values;
      const double range = std::max(hi - lo, 1e-300);
      for (std::size_t j = 0; j < o.n; ++j) max_mc = std::max(max_mc, std::abs(mc[j] - exact[j]) / range);
    }
  }
  const bool passed = max_scaled <= 1e-9 && max_eff <= 1e-9;
  json report{{"command", "oracle"}, {"n", o.n}, {"d", o.d}, {"trials", o.trials},
              {"seed", o.seed},      {"max_abs_err", max_abs},
              {"max_scaled_err", max_scaled}, {"max_efficiency_violation", max_eff},
              {"passed", passed}};
  if (o.samples > 0) {
    report["mc_samples"] = o.samples;
    report["mc_max_err_over_range"] = max_mc;
  }
  if (!o.out_dir.empty() || std::getenv("CHG_OUT_DIR") != nullptr) {
    write_json(output_dir(o) / "oracle.json", report);
  }
  out << report.dump(2) << '\n';
  return passed ? kExitOk : kExitNumericError;
}

int cmd_bench(const Options& o, std::ostream& out) {
  if (o.seeds == 0) throw InputError("--seeds must be positive");
  if (o.noise_rate <= 0.0) throw InputError("bench needs --noise-rate > 0");
  const fs::path dir = output_dir(o);
  json runs = json::array();
  DetectionReport mean;
  for (std::size_t s = 0; s < o.seeds; ++s) {
    NoiseExperimentConfig cfg;
    cfg.n = o.n;
    cfg.p = o.p;
    cfg.num_classes = o.classes;
    cfg.separation = o.separation;
    cfg.noise_rate = o.noise_rate;
    cfg.valuation = valuation_config(o, o.seed + s);
    const NoiseExperiment ex = run_noise_experiment(cfg);
    runs.push_back({{"seed", o.seed + s},
                    {"auc", ex.detection.auc},
                    {"flipped", ex.noise.flipped()},
                    {"mean_value_noisy", ex.mean_value_noisy},
                    {"mean_value_clean", ex.mean_value_clean}});
    if (s == 0) {
      mean = ex.detection;
      write_values_csv(dir / "values.csv",
                       make_values_rows(ex.run.mean_values, ex.data.labels, ex.noise.flip_mask));
    } else {
      for (std::size_t k = 0; k < mean.detection_rate.size(); ++k) {
        mean.detection_rate[k] += ex.detection.detection_rate[k];
      }
      mean.auc += ex.detection.auc;
    }
  }
  const double count = static_cast<double>(o.seeds);
  for (double& r : mean.detection_rate) r /= count;
  mean.auc /= count;

  json report = to_json(mean);
  report["runs"] = runs;
  report["noise_rate"] = o.noise_rate;
  report["scheme"] = o.scheme;
  write_json(dir / "detection.json", report);
  if (o.plot_data) write_detection_long_csv(dir / "detection_long.csv", mean);
  out << json{{"auc", mean.auc}, {"seeds", o.seeds}, {"noise_rate", o.noise_rate}}.dump() << '\n';
  return kExitOk;
}

int cmd_removal(const Options& o, std::ostream& out) {
  const auto t0 = std::chrono::steady_clock::now();
  const Inputs in = load_inputs(o, true);
  const fs::path dir = output_dir(o);
  const ValuationConfig vcfg = valuation_config(o, o.seed);
  const ValuationRun run = run_valuation(in.train, vcfg);

  RemovalConfig rcfg;
  rcfg.fractions = o.fractions;
  rcfg.epochs = o.epochs;
  rcfg.train = vcfg.train;
  rcfg.seed = o.seed;
  rcfg.threads = o.threads;
  const RemovalCurve curve = point_removal_curve(run.mean_values, in.train, *in.test, rcfg);

  write_removal_csv(dir / "removal.csv", curve);
  write_values_csv(dir / "values.csv", make_values_rows(run.mean_values, in.train.labels, in.noise_mask));
  if (o.plot_data) write_removal_long_csv(dir / "removal_long.csv", curve);
  json meta{{"command", "removal"}, {"data", in.description},
            {"config", valuation_config_json(vcfg)}, {"fractions", rcfg.fractions}};
  meta.update(run_json(run));
  meta["total_seconds"] = seconds_since(t0);
  write_json(dir / "run_meta.json", meta);
  out << "wrote " << (dir / "removal.csv").string() << '\n';
  return kExitOk;
}

}  // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Closed-form CHG Shapley data valuation and selection", "chg"};
  app.require_subcommand(1);
  Options o;

  auto* value = app.add_subcommand("value", "value every training datum during one training run");
  add_data_flags(value, o);
  add_train_flags(value, o);
  value->add_flag("--per-class", o.per_class, "value each class against its own reference vector");
  value->add_option("--skip-first-epochs", o.skip_first_epochs, "epochs left out of the mean");

  auto* select = app.add_subcommand("select", "train on an interval-reselected weighted subset");
  add_data_flags(select, o);
  add_train_flags(select, o);
  select->add_option("--fraction", o.fraction, "fraction a of each class kept")
      ->check(CLI::Range(0.0, 1.0));
  select->add_option("--interval", o.interval, "epochs R between selection events");
  select->add_option("--arm", o.arm, "selection | random | adaptive | full")
      ->check(CLI::IsMember({"selection", "random", "adaptive", "full"}));

  auto* oracle = app.add_subcommand("oracle", "compare the closed form against enumeration");
  oracle->add_option("--n", o.n, "players per game");
  oracle->add_option("--d", o.d, "vector dimension");
  oracle->add_option("--trials", o.trials, "random games");
  oracle->add_option("--samples", o.samples, "Monte Carlo permutations per game (0: skip)");
  oracle->add_option("--seed", o.seed, "random seed");
  oracle->add_option("--threads", o.threads, "worker threads");
  oracle->add_option("--out-dir", o.out_dir, "also write oracle.json here");

  auto* bench = app.add_subcommand("bench", "noisy-label discovery experiment");
  add_data_flags(bench, o);
  add_train_flags(bench, o);
  bench->add_flag("--per-class", o.per_class, "value each class against its own reference vector");
  bench->add_option("--seeds", o.seeds, "number of consecutive seeds to average");

  auto* removal = app.add_subcommand("removal", "point-removal curves");
  add_data_flags(removal, o);
  add_train_flags(removal, o);
  removal->add_flag("--per-class", o.per_class, "value each class against its own reference vector");
  removal->add_option("--fractions", o.fractions, "removal fractions")->delimiter(',');

  // bench defaults to the 30% noise setting.
  bench->preparse_callback([&o](std::size_t) { o.noise_rate = 0.3; });

  std::vector<const char*> argv{"chg"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitInputError;
  }

  try {
    if (*value) return cmd_value(o, out);
    if (*select) return cmd_select(o, out);
    if (*oracle) return cmd_oracle(o, out);
    if (*bench) return cmd_bench(o, out);
    if (*removal) return cmd_removal(o, out);
  } catch (const InputError& e) {
    err << "input error: " << e.what() << '\n';
    return kExitInputError;
  } catch (const DomainError& e) {
    err << "input error: " << e.what() << '\n';
    return kExitInputError;
  } catch (const SizeError& e) {
    err << "input error: " << e.what() << '\n';
    return kExitInputError;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return kExitNumericError;
  } catch (const AuditError& e) {
    err << "audit failure: " << e.what() << '\n';
    return kExitNumericError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitInputError;
  }
  return kExitInputError;
}

}  // namespace chg
