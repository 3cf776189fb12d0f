#pragma once

// Synthetic tasks, label-noise injection and the evaluation curves used to
// judge a valuation: noisy-data discovery and point removal.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "chg/linalg.hpp"
#include "chg/model_gradients.hpp"
#include "chg/valuation.hpp"

namespace chg {

// Class-conditional unit-variance Gaussians. For C = 2 the means sit at
// +-separation/2 on the first axis; for C > 2 at (separation/sqrt 2) e_c,
// which needs p >= C. Every pair of means is `separation` apart. Labels are
// balanced up to the remainder and rows are shuffled.
Dataset make_synthetic_dataset(std::size_t n, std::size_t p, std::size_t num_classes,
                               double separation, std::uint64_t seed);

struct SyntheticSplit {
  Dataset train;
  Dataset test;
};

// Train and test drawn from the same class means with independent streams.
SyntheticSplit make_synthetic_split(std::size_t n_train, std::size_t n_test, std::size_t p,
                                    std::size_t num_classes, double separation,
                                    std::uint64_t seed);

struct NoiseSpec {
  double rate = 0.0;
  std::uint64_t seed = 0;
  std::vector<bool> flip_mask;

  std::size_t flipped() const;
};

struct NoisyLabels {
  std::vector<int> labels;
  NoiseSpec noise;
};

// Exactly round(rate * n) rows, chosen uniformly, get a uniformly chosen
// different label.
NoisyLabels inject_label_noise(std::span<const int> labels, std::size_t num_classes,
                               double rate, std::uint64_t seed);

struct DetectionReport {
  Vector fraction_inspected;
  Vector detection_rate;
  Vector random_baseline;
  double auc = 0.0;
};

// 0, 0.01, ..., 1.
Vector default_grid();

// Sorts ascending by value (ties by index) and reports, for each inspected
// fraction q, the share of all noisy rows among the first round(q n). AUC is
// the trapezoid area under the curve. Throws DomainError with no noisy rows.
DetectionReport detection_curve(std::span<const double> values, const std::vector<bool>& mask,
                                const Vector& grid = default_grid());

enum class RemovalOrder { kLowestFirst, kHighestFirst, kRandom };
std::string to_string(RemovalOrder order);

struct RemovalConfig {
  Vector fractions{0.0, 0.1, 0.2, 0.3, 0.4, 0.5};
  std::size_t epochs = 20;
  TrainOptions train;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

struct RemovalCurve {
  Vector removal_fractions;
  std::vector<RemovalOrder> orders{RemovalOrder::kLowestFirst, RemovalOrder::kHighestFirst,
                                   RemovalOrder::kRandom};
  // accuracy[o][f]; empty when the retained set was empty.
  std::vector<std::vector<std::optional<double>>> accuracy;
};

// For every order and fraction, removes round(f n) rows in that order,
// retrains from the same init seed on the rest and records test accuracy.
RemovalCurve point_removal_curve(std::span<const double> values, const Dataset& train,
                                 const Dataset& test, const RemovalConfig& cfg);

struct DescentCheck {
  double lhs = 0.0;
  double rhs = 0.0;
  bool holds = false;
};

// f(theta) = L/2 ||theta||^2 with step 1/L along x:
//   lhs = f(theta - x/L)
//   rhs = f(theta) - (1/(2L)) (||grad f||^2 - ||grad f - x||^2)
// `holds` is |lhs - rhs| <= 1e-9 * max(1, |lhs|).
DescentCheck descent_bound_check(double lipschitz, std::span<const double> theta,
                                 std::span<const double> x);

// Upper bound on the gradient Lipschitz constant of the mean softmax
// cross-entropy over `indices`: 1/2 max_i (||input_i||^2 + 1).
double softmax_smoothness_bound(const ModelState& model, const Dataset& data,
                                std::span<const std::size_t> indices);

// Same inequality on the mean cross-entropy over `indices`, with L from
// softmax_smoothness_bound; `holds` is lhs <= rhs + 1e-9.
DescentCheck softmax_descent_check(const ModelState& model, const Dataset& data,
                                   std::span<const std::size_t> indices,
                                   std::span<const double> x);

struct NoiseExperimentConfig {
  std::size_t n = 1000;
  std::size_t p = 20;
  std::size_t num_classes = 2;
  double separation = 4.0;
  double noise_rate = 0.3;
  ValuationConfig valuation;
};

struct NoiseExperiment {
  Dataset data;  // noisy labels
  NoiseSpec noise;
  ValuationRun run;
  DetectionReport detection;
  double mean_value_noisy = 0.0;
  double mean_value_clean = 0.0;
};

// Synthesizes a task from valuation.seed, flips labels, runs the valuation
// and scores discovery of the flipped rows.
NoiseExperiment run_noise_experiment(const NoiseExperimentConfig& cfg);

}  // namespace chg
