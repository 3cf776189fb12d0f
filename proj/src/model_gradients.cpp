#include "chg/model_gradients.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>
#include <string>

#include "chg/errors.hpp"
#include "chg/parallel.hpp"
#include "chg/random.hpp"

namespace chg {

Dataset make_dataset(Matrix features, std::vector<int> labels, std::size_t num_classes) {
  if (features.rows() != labels.size()) {
    throw InputError("dataset: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(features.rows()) + " rows");
  }
  if (num_classes == 0) throw InputError("dataset: no classes");
  if (!features.all_finite()) throw InputError("dataset: non-finite feature");
  Dataset data{std::move(features), std::move(labels), num_classes, {}};
  data.class_index.resize(num_classes);
  for (std::size_t i = 0; i < data.labels.size(); ++i) {
    const int y = data.labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
      throw InputError("dataset: label " + std::to_string(y) + " at row " +
                       std::to_string(i) + " outside [0, " + std::to_string(num_classes) + ")");
    }
    data.class_index[static_cast<std::size_t>(y)].push_back(i);
  }
  return data;
}

Dataset subset(const Dataset& data, std::span<const std::size_t> indices) {
  std::vector<int> labels;
  labels.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= data.size()) throw InputError("subset index out of range");
    labels.push_back(data.labels[i]);
  }
  return make_dataset(data.features.gather_rows(indices), std::move(labels), data.num_classes);
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ls(line);
  while (std::getline(ls, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_double(const std::string& s, std::size_t line_no) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size() && s.find_first_not_of(" \t\r", used) != std::string::npos) {
      throw std::invalid_argument(s);
    }
    return v;
  } catch (const std::exception&) {
    throw InputError("line " + std::to_string(line_no) + ": bad number '" + s + "'");
  }
}

}  // namespace

Dataset load_dataset_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open dataset file " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw InputError("empty dataset file " + path.string());
  const std::size_t columns = split_csv_line(line).size();
  if (columns < 2) throw InputError("dataset needs at least one feature and a label column");
  const std::size_t p = columns - 1;

  std::vector<double> values;
  std::vector<int> labels;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != columns) {
      throw InputError("line " + std::to_string(line_no) + ": expected " +
                       std::to_string(columns) + " columns, got " + std::to_string(cells.size()));
    }
    for (std::size_t k = 0; k < p; ++k) values.push_back(parse_double(cells[k], line_no));
    const double y = parse_double(cells[p], line_no);
    if (y != std::floor(y) || y < 0) {
      throw InputError("line " + std::to_string(line_no) + ": label must be a non-negative integer");
    }
    labels.push_back(static_cast<int>(y));
  }
  if (labels.empty()) throw InputError("dataset has no rows: " + path.string());

  const int max_label = *std::max_element(labels.begin(), labels.end());
  const std::size_t num_classes = static_cast<std::size_t>(max_label) + 1;
  Matrix features(labels.size(), p);
  std::copy(values.begin(), values.end(), features.flat().begin());
  Dataset data = make_dataset(std::move(features), std::move(labels), num_classes);
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (data.class_index[c].empty()) {
      throw InputError("dataset labels are not contiguous: class " + std::to_string(c) +
                       " has no rows");
    }
  }
  return data;
}

void save_dataset_csv(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  for (std::size_t k = 0; k < data.dim(); ++k) out << 'x' << k << ',';
  out << "label\n" << std::setprecision(17);
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (double v : data.features.row(i)) out << v << ',';
    out << data.labels[i] << '\n';
  }
}

double LearningRate::at(std::size_t step) const {
  if (!cosine || total_steps == 0) return base;
  const double t = std::min(1.0, static_cast<double>(step) / static_cast<double>(total_steps));
  return 0.5 * base * (1.0 + std::cos(std::numbers::pi * t));
}

Vector ModelState::parameters() const {
  Vector flat(weights.flat().begin(), weights.flat().end());
  flat.insert(flat.end(), bias.begin(), bias.end());
  return flat;
}

void ModelState::set_parameters(std::span<const double> flat) {
  if (flat.size() != parameter_count()) throw InputError("parameter vector has the wrong length");
  const std::size_t nw = weights.rows() * weights.cols();
  std::copy(flat.begin(), flat.begin() + static_cast<std::ptrdiff_t>(nw), weights.flat().begin());
  std::copy(flat.begin() + static_cast<std::ptrdiff_t>(nw), flat.end(), bias.begin());
}

ModelState init_model(const ModelShape& shape, std::uint64_t seed) {
  if (shape.input_dim == 0 || shape.num_classes == 0) throw InputError("init_model: empty shape");
  Rng rng(seed);
  ModelState model;
  std::size_t head = shape.input_dim;
  if (shape.hidden > 0) {
    FeatureMap map{Matrix(shape.hidden, shape.input_dim), Vector(shape.hidden)};
    const double scale = 1.0 / std::sqrt(static_cast<double>(shape.input_dim));
    for (double& v : map.projection.flat()) v = scale * rng.normal();
    for (double& v : map.offset) v = rng.uniform(-1.0, 1.0);
    model.feature_map = std::move(map);
    head = shape.hidden;
  }
  model.weights = Matrix(shape.num_classes, head);
  for (double& w : model.weights.flat()) w = rng.uniform(-0.01, 0.01);
  model.bias.assign(shape.num_classes, 0.0);
  return model;
}

Vector head_input(const ModelState& model, std::span<const double> features) {
  if (!model.feature_map) {
    if (features.size() != model.head_dim()) throw InputError("feature dimension mismatch");
    return Vector(features.begin(), features.end());
  }
  const FeatureMap& map = *model.feature_map;
  if (features.size() != map.projection.cols()) throw InputError("feature dimension mismatch");
  Vector h(map.projection.rows());
  for (std::size_t r = 0; r < h.size(); ++r) {
    h[r] = std::tanh(dot(map.projection.row(r), features) + map.offset[r]);
  }
  return h;
}

namespace {

// Logits, then log-softmax in place. Returns false on non-finite logits.
bool log_softmax(const ModelState& model, std::span<const double> input, Vector& out) {
  const std::size_t c = model.num_classes();
  out.resize(c);
  for (std::size_t k = 0; k < c; ++k) out[k] = dot(model.weights.row(k), input) + model.bias[k];
  if (!all_finite(out)) return false;
  const double top = *std::max_element(out.begin(), out.end());
  double z = 0.0;
  for (double v : out) z += std::exp(v - top);
  const double lse = top + std::log(z);
  for (double& v : out) v -= lse;
  return true;
}

[[noreturn]] void throw_non_finite(std::size_t index) {
  throw NumericError("non-finite logits for example " + std::to_string(index));
}

std::size_t checked_label(const Dataset& data, std::size_t i) {
  if (i >= data.size()) throw InputError("example index " + std::to_string(i) + " out of range");
  return static_cast<std::size_t>(data.labels[i]);
}

// Writes the flattened gradient of example i into grad; returns its loss.
double loss_and_grad(const ModelState& model, const Dataset& data, std::size_t i,
                     std::span<double> grad) {
  const std::size_t y = checked_label(data, i);
  const Vector input = head_input(model, data.features.row(i));
  Vector logp;
  if (!log_softmax(model, input, logp)) throw_non_finite(i);
  const std::size_t c = model.num_classes();
  const std::size_t h = model.head_dim();
  for (std::size_t k = 0; k < c; ++k) {
    const double r = std::exp(logp[k]) - (k == y ? 1.0 : 0.0);
    for (std::size_t m = 0; m < h; ++m) grad[k * h + m] = r * input[m];
    grad[c * h + k] = r;
  }
  // -log p_y is non-negative; clamp the rounding noise at p_y ~ 1.
  return std::max(0.0, -logp[y]);
}

}  // namespace

PerExampleBatchResult per_example_loss_and_grad(const ModelState& model, const Dataset& data,
                                                std::span<const std::size_t> indices,
                                                unsigned threads) {
  PerExampleBatchResult out{Vector(indices.size()),
                            Matrix(indices.size(), model.parameter_count())};
  parallel_for(indices.size(), threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t r = begin; r < end; ++r) {
      out.losses[r] = loss_and_grad(model, data, indices[r], out.last_layer_grads.row(r));
    }
  });
  return out;
}

GradientSet to_gradient_set(PerExampleBatchResult batch) {
  return GradientSet{std::move(batch.last_layer_grads), std::move(batch.losses), false};
}

double example_loss(const ModelState& model, const Dataset& data, std::size_t index) {
  const std::size_t y = checked_label(data, index);
  Vector logp;
  if (!log_softmax(model, head_input(model, data.features.row(index)), logp)) {
    throw_non_finite(index);
  }
  return std::max(0.0, -logp[y]);
}

double mean_loss(const ModelState& model, const Dataset& data,
                 std::span<const std::size_t> indices) {
  if (indices.empty()) throw DomainError("mean loss over no examples");
  CompensatedSum acc;
  for (std::size_t i : indices) acc.add(example_loss(model, data, i));
  return acc.value() / static_cast<double>(indices.size());
}

double mean_loss(const ModelState& model, const Dataset& data) {
  return mean_loss(model, data, all_indices(data.size()));
}

int predict(const ModelState& model, std::span<const double> features) {
  const Vector input = head_input(model, features);
  int best = 0;
  double best_logit = -INFINITY;
  for (std::size_t k = 0; k < model.num_classes(); ++k) {
    const double z = dot(model.weights.row(k), input) + model.bias[k];
    if (z > best_logit) {
      best_logit = z;
      best = static_cast<int>(k);
    }
  }
  return best;
}

double accuracy(const ModelState& model, const Dataset& data) {
  if (data.size() == 0) throw DomainError("accuracy of an empty dataset");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (predict(model, data.features.row(i)) == data.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

ModelState sgd_step_weighted(const ModelState& model, const Dataset& data,
                             std::span<const std::size_t> indices,
                             std::span<const double> weights, double lr) {
  if (weights.size() != indices.size()) {
    throw InputError("sgd_step_weighted: " + std::to_string(weights.size()) + " weights for " +
                     std::to_string(indices.size()) + " examples");
  }
  ModelState next = model;
  next.step += 1;
  if (indices.empty()) return next;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw InputError("sgd_step_weighted: bad weight");
  }
  const std::size_t d = model.parameter_count();
  Vector total(d, 0.0);
  Vector grad(d);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (weights[r] == 0.0) continue;
    loss_and_grad(model, data, indices[r], grad);
    for (std::size_t k = 0; k < d; ++k) total[k] += weights[r] * grad[k];
  }
  const double scale = lr / static_cast<double>(indices.size());
  Vector theta = model.parameters();
  for (std::size_t k = 0; k < d; ++k) theta[k] -= scale * total[k];
  if (!all_finite(theta)) throw NumericError("sgd step produced non-finite parameters");
  next.set_parameters(theta);
  return next;
}

ModelState train_epoch(ModelState model, const Dataset& data,
                       std::span<const std::size_t> indices, std::span<const double> weights,
                       const TrainOptions& options, std::uint64_t seed, std::size_t epoch) {
  if (!weights.empty() && weights.size() != indices.size()) {
    throw InputError("train_epoch: weights not aligned with indices");
  }
  if (options.batch_size == 0) throw InputError("train_epoch: batch size must be positive");
  std::vector<std::size_t> order(indices.size());
  for (std::size_t r = 0; r < order.size(); ++r) order[r] = r;
  Rng rng(stream_seed(seed, 0x5eed0000ULL + epoch));
  rng.shuffle(order);

  std::vector<std::size_t> batch;
  Vector batch_weights;
  for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
    const std::size_t stop = std::min(order.size(), start + options.batch_size);
    batch.clear();
    batch_weights.clear();
    for (std::size_t r = start; r < stop; ++r) {
      batch.push_back(indices[order[r]]);
      batch_weights.push_back(weights.empty() ? 1.0 : weights[order[r]]);
    }
    model = sgd_step_weighted(model, data, batch, batch_weights, model.schedule.at(model.step));
  }
  return model;
}

std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  return idx;
}

}  // namespace chg
