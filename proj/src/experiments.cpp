#include "chg/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "chg/errors.hpp"
#include "chg/parallel.hpp"
#include "chg/random.hpp"
#include "chg/selection.hpp"

namespace chg {

Dataset make_synthetic_dataset(std::size_t n, std::size_t p, std::size_t num_classes,
                               double separation, std::uint64_t seed) {
  if (num_classes < 2 || n < num_classes) {
    throw InputError("synthetic dataset needs n >= C >= 2");
  }
  if (p == 0 || (num_classes > 2 && p < num_classes)) {
    throw InputError("synthetic dataset needs p >= C for more than two classes");
  }
  if (!std::isfinite(separation) || separation < 0.0) {
    throw InputError("separation must be finite and non-negative");
  }
  Matrix means(num_classes, p, 0.0);
  if (num_classes == 2) {
    means(0, 0) = -separation / 2.0;
    means(1, 0) = separation / 2.0;
  } else {
    for (std::size_t c = 0; c < num_classes; ++c) means(c, c) = separation / std::sqrt(2.0);
  }

  Rng rng(stream_seed(seed, 0xda7a));
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % num_classes);
  rng.shuffle(labels);

  Matrix features(n, p);
  for (std::size_t i = 0; i < n; ++i) {
    const auto mean = means.row(static_cast<std::size_t>(labels[i]));
    auto row = features.row(i);
    for (std::size_t k = 0; k < p; ++k) row[k] = mean[k] + rng.normal();
  }
  return make_dataset(std::move(features), std::move(labels), num_classes);
}

SyntheticSplit make_synthetic_split(std::size_t n_train, std::size_t n_test, std::size_t p,
                                    std::size_t num_classes, double separation,
                                    std::uint64_t seed) {
  return {make_synthetic_dataset(n_train, p, num_classes, separation, stream_seed(seed, 1)),
          make_synthetic_dataset(n_test, p, num_classes, separation, stream_seed(seed, 2))};
}

std::size_t NoiseSpec::flipped() const {
  return static_cast<std::size_t>(std::count(flip_mask.begin(), flip_mask.end(), true));
}

NoisyLabels inject_label_noise(std::span<const int> labels, std::size_t num_classes,
                               double rate, std::uint64_t seed) {
  if (!(rate >= 0.0 && rate <= 1.0)) throw InputError("noise rate must lie in [0, 1]");
  const std::size_t n = labels.size();
  const auto count = static_cast<std::size_t>(std::llround(rate * static_cast<double>(n)));
  if (count > 0 && num_classes < 2) {
    throw DomainError("label noise needs at least two classes");
  }
  NoisyLabels out{std::vector<int>(labels.begin(), labels.end()),
                  NoiseSpec{rate, seed, std::vector<bool>(n, false)}};
  Rng rng(stream_seed(seed, 0x0f11b));
  std::vector<std::size_t> order = all_indices(n);
  rng.shuffle(order);
  for (std::size_t r = 0; r < count; ++r) {
    const std::size_t i = order[r];
    const auto shift = 1 + rng.below(num_classes - 1);
    out.labels[i] = static_cast<int>((static_cast<std::size_t>(labels[i]) + shift) % num_classes);
    out.noise.flip_mask[i] = true;
  }
  return out;
}

Vector default_grid() {
  Vector grid(101);
  for (std::size_t k = 0; k <= 100; ++k) grid[k] = static_cast<double>(k) / 100.0;
  return grid;
}

DetectionReport detection_curve(std::span<const double> values, const std::vector<bool>& mask,
                                const Vector& grid) {
  const std::size_t n = values.size();
  if (mask.size() != n) throw InputError("noise mask not aligned with values");
  const auto noisy_total = static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
  if (noisy_total == 0) throw DomainError("detection curve needs at least one noisy row");

  Vector fractions = grid;
  for (double q : fractions) {
    if (!(q >= 0.0 && q <= 1.0)) throw InputError("inspection grid must lie in [0, 1]");
  }
  fractions.push_back(0.0);
  fractions.push_back(1.0);
  std::sort(fractions.begin(), fractions.end());
  fractions.erase(std::unique(fractions.begin(), fractions.end()), fractions.end());

  std::vector<std::size_t> order = all_indices(n);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  // found[m] = noisy rows among the m lowest values.
  std::vector<std::size_t> found(n + 1, 0);
  for (std::size_t m = 0; m < n; ++m) found[m + 1] = found[m] + (mask[order[m]] ? 1 : 0);

  DetectionReport report;
  report.fraction_inspected = fractions;
  report.random_baseline = fractions;
  for (double q : fractions) {
    const auto m = static_cast<std::size_t>(std::llround(q * static_cast<double>(n)));
    report.detection_rate.push_back(static_cast<double>(found[std::min(m, n)]) /
                                    static_cast<double>(noisy_total));
  }
  for (std::size_t k = 1; k < fractions.size(); ++k) {
    report.auc += 0.5 * (fractions[k] - fractions[k - 1]) *
                  (report.detection_rate[k] + report.detection_rate[k - 1]);
  }
  return report;
}

std::string to_string(RemovalOrder order) {
  switch (order) {
    case RemovalOrder::kLowestFirst:
      return "lowest_first";
    case RemovalOrder::kHighestFirst:
      return "highest_first";
    case RemovalOrder::kRandom:
      return "random";
  }
  return "unknown";
}

RemovalCurve point_removal_curve(std::span<const double> values, const Dataset& train,
                                 const Dataset& test, const RemovalConfig& cfg) {
  const std::size_t n = train.size();
  if (values.size() != n) throw InputError("values not aligned with the training set");
  for (double f : cfg.fractions) {
    if (!(f >= 0.0 && f <= 1.0)) throw InputError("removal fractions must lie in [0, 1]");
  }

  RemovalCurve curve;
  curve.removal_fractions = cfg.fractions;
  const std::size_t num_orders = curve.orders.size();
  const std::size_t num_fractions = cfg.fractions.size();
  curve.accuracy.assign(num_orders, std::vector<std::optional<double>>(num_fractions));

  std::vector<std::vector<std::size_t>> removal_order(num_orders, all_indices(n));
  for (std::size_t o = 0; o < num_orders; ++o) {
    auto& order = removal_order[o];
    switch (curve.orders[o]) {
      case RemovalOrder::kLowestFirst:
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
        break;
      case RemovalOrder::kHighestFirst:
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
        break;
      case RemovalOrder::kRandom: {
        Rng rng(stream_seed(cfg.seed, 0x4e40));
        rng.shuffle(order);
        break;
      }
    }
  }

  parallel_for(num_orders * num_fractions, cfg.threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t job = begin; job < end; ++job) {
      const std::size_t o = job / num_fractions;
      const std::size_t f = job % num_fractions;
      const auto removed = static_cast<std::size_t>(
          std::llround(cfg.fractions[f] * static_cast<double>(n)));
      if (removed >= n) continue;
      std::vector<std::size_t> kept(removal_order[o].begin() + static_cast<std::ptrdiff_t>(removed),
                                    removal_order[o].end());
      std::sort(kept.begin(), kept.end());
      const ModelState model = train_from_scratch(train, kept, cfg.epochs, cfg.train, cfg.seed);
      curve.accuracy[o][f] = accuracy(model, test);
    }
  });
  return curve;
}

DescentCheck descent_bound_check(double lipschitz, std::span<const double> theta,
                                 std::span<const double> x) {
  if (!(lipschitz > 0.0)) throw DomainError("Lipschitz constant must be positive");
  if (theta.size() != x.size()) throw InputError("theta and x differ in dimension");
  const double eta = 1.0 / lipschitz;
  const auto f = [&](std::span<const double> v) { return 0.5 * lipschitz * squared_norm(v); };

  Vector grad(theta.size());
  Vector stepped(theta.size());
  for (std::size_t k = 0; k < theta.size(); ++k) {
    grad[k] = lipschitz * theta[k];
    stepped[k] = theta[k] - eta * x[k];
  }
  DescentCheck out;
  out.lhs = f(stepped);
  out.rhs = f(theta) - 0.5 * eta * (squared_norm(grad) - squared_distance(grad, x));
  out.holds = std::abs(out.lhs - out.rhs) <= 1e-9 * std::max(1.0, std::abs(out.lhs));
  return out;
}

double softmax_smoothness_bound(const ModelState& model, const Dataset& data,
                                std::span<const std::size_t> indices) {
  double worst = 0.0;
  for (std::size_t i : indices) {
    worst = std::max(worst, squared_norm(head_input(model, data.features.row(i))) + 1.0);
  }
  return 0.5 * worst;
}

DescentCheck softmax_descent_check(const ModelState& model, const Dataset& data,
                                   std::span<const std::size_t> indices,
                                   std::span<const double> x) {
  if (x.size() != model.parameter_count()) throw InputError("direction has the wrong length");
  const double lipschitz = softmax_smoothness_bound(model, data, indices);
  const double eta = 1.0 / lipschitz;

  const Matrix grads = per_example_loss_and_grad(model, data, indices).last_layer_grads;
  const Vector grad = column_means(grads);

  ModelState stepped = model;
  Vector theta = model.parameters();
  for (std::size_t k = 0; k < theta.size(); ++k) theta[k] -= eta * x[k];
  stepped.set_parameters(theta);

  DescentCheck out;
  out.lhs = mean_loss(stepped, data, indices);
  out.rhs = mean_loss(model, data, indices) -
            0.5 * eta * (squared_norm(grad) - squared_distance(grad, x));
  out.holds = out.lhs <= out.rhs + 1e-9;
  return out;
}

NoiseExperiment run_noise_experiment(const NoiseExperimentConfig& cfg) {
  const std::uint64_t seed = cfg.valuation.seed;
  Dataset clean = make_synthetic_dataset(cfg.n, cfg.p, cfg.num_classes, cfg.separation, seed);
  NoisyLabels noisy =
      inject_label_noise(clean.labels, cfg.num_classes, cfg.noise_rate, stream_seed(seed, 3));

  NoiseExperiment out;
  out.data = make_dataset(std::move(clean.features), std::move(noisy.labels), cfg.num_classes);
  out.noise = std::move(noisy.noise);
  out.run = run_valuation(out.data, cfg.valuation);
  out.detection = detection_curve(out.run.mean_values, out.noise.flip_mask);

  CompensatedSum noisy_sum, clean_sum;
  std::size_t noisy_count = 0;
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    if (out.noise.flip_mask[i]) {
      noisy_sum.add(out.run.mean_values[i]);
      ++noisy_count;
    } else {
      clean_sum.add(out.run.mean_values[i]);
    }
  }
  const std::size_t clean_count = out.data.size() - noisy_count;
  out.mean_value_noisy = noisy_count ? noisy_sum.value() / static_cast<double>(noisy_count) : 0.0;
  out.mean_value_clean = clean_count ? clean_sum.value() / static_cast<double>(clean_count) : 0.0;
  return out;
}

}  // namespace chg
