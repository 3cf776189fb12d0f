#pragma once

// Linear-softmax classifier with analytic per-example cross-entropy losses
// and last-layer gradients, plus weighted minibatch SGD.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "chg/linalg.hpp"
#include "chg/utility_scores.hpp"

namespace chg {

struct Dataset {
  Matrix features;  // n x p
  std::vector<int> labels;
  std::size_t num_classes = 0;
  // class_index[c] lists the rows with label c, ascending.
  std::vector<std::vector<std::size_t>> class_index;

  std::size_t size() const { return features.rows(); }
  std::size_t dim() const { return features.cols(); }
};

// Validates labels against num_classes and builds class_index.
Dataset make_dataset(Matrix features, std::vector<int> labels, std::size_t num_classes);

// Rows restricted to `indices` (in the given order).
Dataset subset(const Dataset& data, std::span<const std::size_t> indices);

// CSV with a header row; feature columns first, integer label column last.
// Labels must form the contiguous range 0..C-1 with every class present.
Dataset load_dataset_csv(const std::filesystem::path& path);
void save_dataset_csv(const Dataset& data, const std::filesystem::path& path);

// Fixed random map phi(v) = tanh(P v + c) feeding the head. Frozen after
// construction; only head gradients are ever taken.
struct FeatureMap {
  Matrix projection;  // h x p, entries N(0, 1/p)
  Vector offset;      // h, uniform in [-1, 1]
};

struct LearningRate {
  double base = 0.1;
  bool cosine = false;
  std::size_t total_steps = 0;  // cosine horizon

  double at(std::size_t step) const;
};

struct ModelShape {
  std::size_t input_dim = 0;
  std::size_t num_classes = 0;
  std::size_t hidden = 0;  // 0: plain linear-softmax
};

struct ModelState {
  Matrix weights;  // C x h
  Vector bias;     // C
  std::optional<FeatureMap> feature_map;
  std::size_t step = 0;
  LearningRate schedule;

  std::size_t num_classes() const { return weights.rows(); }
  std::size_t head_dim() const { return weights.cols(); }
  // C*h + C: length of one flattened last-layer gradient.
  std::size_t parameter_count() const { return weights.rows() * weights.cols() + bias.size(); }

  // Flattened head parameters: weights row-major, then bias.
  Vector parameters() const;
  void set_parameters(std::span<const double> flat);
};

// Uniform weights in [-0.01, 0.01], zero bias. Deterministic in seed.
ModelState init_model(const ModelShape& shape, std::uint64_t seed);

// Input to the head: the raw features or phi(features).
Vector head_input(const ModelState& model, std::span<const double> features);

struct PerExampleBatchResult {
  Vector losses;           // nats
  Matrix last_layer_grads; // |indices| x parameter_count()
};

// Softmax cross-entropy and its gradient (softmax(z) - onehot(y)) (x) input,
// flattened like ModelState::parameters(). Throws NumericError naming the
// example when its logits are non-finite.
PerExampleBatchResult per_example_loss_and_grad(const ModelState& model, const Dataset& data,
                                                std::span<const std::size_t> indices,
                                                unsigned threads = 1);

// Raw gradients and detached losses as a valuation input.
GradientSet to_gradient_set(PerExampleBatchResult batch);

double example_loss(const ModelState& model, const Dataset& data, std::size_t index);
double mean_loss(const ModelState& model, const Dataset& data);
double mean_loss(const ModelState& model, const Dataset& data, std::span<const std::size_t> indices);
double accuracy(const ModelState& model, const Dataset& data);
int predict(const ModelState& model, std::span<const double> features);

// theta <- theta - lr * (1/|batch|) * sum_i w_i grad_i. Increments step.
ModelState sgd_step_weighted(const ModelState& model, const Dataset& data,
                             std::span<const std::size_t> indices,
                             std::span<const double> weights, double lr);

struct TrainOptions {
  double lr = 0.1;
  bool cosine = false;
  std::size_t batch_size = 32;
  std::size_t hidden = 0;
};

// One pass over `indices` in minibatches, stepping with model.schedule, visiting them in an order shuffled
// by (seed, epoch). `weights` is aligned with `indices`; empty means all 1.
ModelState train_epoch(ModelState model, const Dataset& data,
                       std::span<const std::size_t> indices, std::span<const double> weights,
                       const TrainOptions& options, std::uint64_t seed, std::size_t epoch);

std::vector<std::size_t> all_indices(std::size_t n);

}  // namespace chg
