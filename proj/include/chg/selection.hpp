#pragma once

// Interval-based per-class data selection with min-max weighted training,
// plus the uniform-random baselines it is compared against.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "chg/linalg.hpp"
#include "chg/model_gradients.hpp"
#include "chg/utility_scores.hpp"

namespace chg {

struct SelectionConfig {
  double fraction = 0.1;     // a, in (0, 1]
  std::size_t interval = 20; // R, epochs between selection events
  std::size_t epochs = 20;
  std::uint64_t seed = 0;
  SchemeKind kind = SchemeKind::kChg;
  TrainOptions train;
  unsigned threads = 1;
  // Skip min-max weighting and train the selected subset with weight 1.
  bool uniform_weights = false;
};

// Throws InputError unless 0 < fraction <= 1, interval >= 1, epochs >= 1.
void validate(const SelectionConfig& cfg);

// ceil(a * count), treating products within 1e-9 of an integer as that
// integer so that e.g. 0.1 * 30 selects 3.
std::size_t selection_count(double fraction, std::size_t count);

struct ClassValues {
  std::vector<std::size_t> indices;  // dataset rows of the class
  Vector values;                     // aligned with indices
};

// Per class, the selection_count(a, N_c) highest values (ties: lower index
// first); the union is returned sorted. Empty classes are skipped with a
// warning on stderr.
std::vector<std::size_t> select_top_fraction_per_class(const std::vector<ClassValues>& classes,
                                                       double fraction);

// (v - min) / (max - min); all ones when max == min.
Vector minmax_weights(std::span<const double> values);

struct SelectionPlan {
  std::vector<std::size_t> subset;  // sorted
  Vector weights;                   // aligned with subset, in [0, 1]
  std::size_t epoch_created = 0;
  std::vector<std::size_t> per_class_counts;
  std::vector<std::vector<std::size_t>> per_class_indices;
};

// One selection event at the current parameters: per-class values against
// class-restricted reference vectors pick the subset, then values on the
// subset (reference vector restricted to it) give the min-max weights.
SelectionPlan build_selection_plan(const ModelState& model, const Dataset& data,
                                   const SelectionConfig& cfg, std::size_t epoch);

struct EpochMetrics {
  std::size_t epoch = 0;
  double train_loss = 0.0;  // mean loss over the full training set after the epoch
  std::optional<double> test_accuracy;
  double wall_time = 0.0;   // seconds since the run started
};

struct TrainingHistory {
  std::vector<SelectionPlan> events;
  std::vector<EpochMetrics> metrics;
};

struct TrainingResult {
  ModelState model;
  TrainingHistory history;
};

// Selection at every epoch k with k % R == 0 (k = 0 included), weighted
// training on the standing subset in between.
TrainingResult run_selection_training(const Dataset& train, const Dataset* test,
                                      const SelectionConfig& cfg);

enum class RandomBaseline { kRandom, kAdaptiveRandom };

// Random draws one uniform subset of the same size as the selection would;
// AdaptiveRandom redraws at each selection event. Training is unweighted.
TrainingResult random_baseline_training(const Dataset& train, const Dataset* test,
                                        const SelectionConfig& cfg, RandomBaseline kind);

// Plain unweighted training on all rows for cfg.epochs epochs.
TrainingResult full_training(const Dataset& train, const Dataset* test,
                             const SelectionConfig& cfg);

// Trains from init_model(seed) on `indices` for `epochs` epochs, unweighted.
ModelState train_from_scratch(const Dataset& data, std::span<const std::size_t> indices,
                              std::size_t epochs, const TrainOptions& options,
                              std::uint64_t seed);

}  // namespace chg
