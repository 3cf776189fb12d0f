#include "chg/selection.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <numeric>
#include <string>

#include "chg/errors.hpp"
#include "chg/random.hpp"

namespace chg {

void validate(const SelectionConfig& cfg) {
  if (!(cfg.fraction > 0.0 && cfg.fraction <= 1.0)) {
    throw InputError("selection fraction must lie in (0, 1]");
  }
  if (cfg.interval == 0) throw InputError("selection interval must be at least 1");
  if (cfg.epochs == 0) throw InputError("epochs must be positive");
  if (cfg.train.batch_size == 0) throw InputError("batch size must be positive");
}

std::size_t selection_count(double fraction, std::size_t count) {
  const double target = fraction * static_cast<double>(count);
  const double nearest = std::round(target);
  const double k = std::abs(target - nearest) < 1e-9 ? nearest : std::ceil(target);
  return std::min(count, static_cast<std::size_t>(k));
}

std::vector<std::size_t> select_top_fraction_per_class(const std::vector<ClassValues>& classes,
                                                       double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw InputError("fraction must lie in (0, 1]");
  std::vector<std::size_t> selected;
  for (std::size_t c = 0; c < classes.size(); ++c) {
    const auto& cls = classes[c];
    if (cls.indices.size() != cls.values.size()) {
      throw InputError("class values not aligned with indices");
    }
    if (cls.indices.empty()) {
      std::cerr << "warning: class " << c << " is empty, skipped\n";
      continue;
    }
    std::vector<std::size_t> order(cls.indices.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (cls.values[a] != cls.values[b]) return cls.values[a] > cls.values[b];
      return cls.indices[a] < cls.indices[b];
    });
    const std::size_t take = selection_count(fraction, cls.indices.size());
    for (std::size_t r = 0; r < take; ++r) selected.push_back(cls.indices[order[r]]);
  }
  std::sort(selected.begin(), selected.end());
  return selected;
}

Vector minmax_weights(std::span<const double> values) {
  if (values.empty()) return {};
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double min = *lo;
  const double range = *hi - *lo;
  Vector w(values.size(), 1.0);
  if (range > 0.0) {
    for (std::size_t i = 0; i < values.size(); ++i) {
      w[i] = std::clamp((values[i] - min) / range, 0.0, 1.0);
    }
  }
  return w;
}

SelectionPlan build_selection_plan(const ModelState& model, const Dataset& data,
                                   const SelectionConfig& cfg, std::size_t epoch) {
  std::vector<ClassValues> classes(data.num_classes);
  for (std::size_t c = 0; c < data.num_classes; ++c) {
    classes[c].indices = data.class_index[c];
    if (classes[c].indices.empty()) continue;
    const GradientSet gs = to_gradient_set(
        per_example_loss_and_grad(model, data, classes[c].indices, cfg.threads));
    classes[c].values = scheme_shapley(gs, cfg.kind, cfg.threads).values;
  }

  SelectionPlan plan;
  plan.epoch_created = epoch;
  plan.subset = select_top_fraction_per_class(classes, cfg.fraction);
  plan.per_class_counts.assign(data.num_classes, 0);
  plan.per_class_indices.assign(data.num_classes, {});
  for (std::size_t i : plan.subset) {
    const auto c = static_cast<std::size_t>(data.labels[i]);
    ++plan.per_class_counts[c];
    plan.per_class_indices[c].push_back(i);
  }

  if (cfg.uniform_weights) {
    plan.weights.assign(plan.subset.size(), 1.0);
  } else {
    const GradientSet on_subset = to_gradient_set(
        per_example_loss_and_grad(model, data, plan.subset, cfg.threads));
    plan.weights = minmax_weights(scheme_shapley(on_subset, cfg.kind, cfg.threads).values);
  }
  return plan;
}

namespace {

std::size_t planned_subset_size(const Dataset& data, double fraction) {
  std::size_t total = 0;
  for (const auto& rows : data.class_index) total += selection_count(fraction, rows.size());
  return total;
}

ModelState fresh_model(const Dataset& data, const TrainOptions& options, std::uint64_t seed,
                       std::size_t subset_size, std::size_t epochs) {
  ModelState model = init_model({data.dim(), data.num_classes, options.hidden}, seed);
  const std::size_t steps = (subset_size + options.batch_size - 1) / options.batch_size;
  model.schedule = {options.lr, options.cosine, steps * epochs};
  return model;
}

EpochMetrics measure(const ModelState& model, const Dataset& train, const Dataset* test,
                     std::size_t epoch, std::chrono::steady_clock::time_point start) {
  EpochMetrics m;
  m.epoch = epoch;
  m.train_loss = mean_loss(model, train);
  if (test != nullptr && test->size() > 0) m.test_accuracy = accuracy(model, *test);
  m.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return m;
}

template <typename Replan>
TrainingResult run_with_plans(const Dataset& train, const Dataset* test,
                              const SelectionConfig& cfg, std::size_t subset_size,
                              Replan&& replan) {
  validate(cfg);
  const auto start = std::chrono::steady_clock::now();
  TrainingResult result{fresh_model(train, cfg.train, cfg.seed, subset_size, cfg.epochs), {}};
  SelectionPlan plan;
  for (std::size_t k = 0; k < cfg.epochs; ++k) {
    try {
      if (k % cfg.interval == 0) {
        plan = replan(result.model, k);
        result.history.events.push_back(plan);
      }
      result.model = train_epoch(std::move(result.model), train, plan.subset, plan.weights,
                                 cfg.train, cfg.seed, k);
    } catch (const NumericError& e) {
      throw NumericError("training diverged at epoch " + std::to_string(k) + ": " + e.what());
    }
    result.history.metrics.push_back(measure(result.model, train, test, k, start));
  }
  return result;
}

}  // namespace

TrainingResult run_selection_training(const Dataset& train, const Dataset* test,
                                      const SelectionConfig& cfg) {
  return run_with_plans(train, test, cfg, planned_subset_size(train, cfg.fraction),
                        [&](const ModelState& model, std::size_t k) {
                          return build_selection_plan(model, train, cfg, k);
                        });
}

TrainingResult random_baseline_training(const Dataset& train, const Dataset* test,
                                        const SelectionConfig& cfg, RandomBaseline kind) {
  const std::size_t size = planned_subset_size(train, cfg.fraction);
  auto draw = [&](std::size_t k) {
    std::vector<std::size_t> pool = all_indices(train.size());
    Rng rng(stream_seed(cfg.seed, 0xbA5E0000ULL + k));
    rng.shuffle(pool);
    pool.resize(size);
    std::sort(pool.begin(), pool.end());
    return pool;
  };
  return run_with_plans(train, test, cfg, size, [&](const ModelState&, std::size_t k) {
    SelectionPlan plan;
    plan.epoch_created = k;
    plan.subset = (kind == RandomBaseline::kRandom) ? draw(0) : draw(k);
    plan.per_class_counts.assign(train.num_classes, 0);
    plan.per_class_indices.assign(train.num_classes, {});
    for (std::size_t i : plan.subset) {
      const auto c = static_cast<std::size_t>(train.labels[i]);
      ++plan.per_class_counts[c];
      plan.per_class_indices[c].push_back(i);
    }
    return plan;
  });
}

TrainingResult full_training(const Dataset& train, const Dataset* test,
                             const SelectionConfig& cfg) {
  SelectionConfig full = cfg;
  full.fraction = 1.0;
  full.interval = cfg.epochs;
  return run_with_plans(train, test, full, train.size(), [&](const ModelState&, std::size_t k) {
    SelectionPlan plan;
    plan.epoch_created = k;
    plan.subset = all_indices(train.size());
    plan.per_class_counts.resize(train.num_classes);
    plan.per_class_indices = train.class_index;
    for (std::size_t c = 0; c < train.num_classes; ++c) {
      plan.per_class_counts[c] = train.class_index[c].size();
    }
    return plan;
  });
}

ModelState train_from_scratch(const Dataset& data, std::span<const std::size_t> indices,
                              std::size_t epochs, const TrainOptions& options,
                              std::uint64_t seed) {
  if (indices.empty()) throw DomainError("train_from_scratch: no training rows");
  ModelState model = fresh_model(data, options, seed, indices.size(), epochs);
  for (std::size_t k = 0; k < epochs; ++k) {
    model = train_epoch(std::move(model), data, indices, {}, options, seed, k);
  }
  return model;
}

}  // namespace chg
