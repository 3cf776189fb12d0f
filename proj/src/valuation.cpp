#include "chg/valuation.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>
#include <string>

#include "chg/errors.hpp"

namespace chg {

namespace {

GradientSet gather(const GradientSet& gs, std::span<const std::size_t> rows) {
  GradientSet out{gs.vectors.gather_rows(rows), Vector(rows.size()), gs.weighted};
  for (std::size_t r = 0; r < rows.size(); ++r) out.losses[r] = gs.losses[rows[r]];
  return out;
}

}  // namespace

EpochValues value_snapshot(const GradientSet& gs, SchemeKind kind,
                           const std::vector<std::vector<std::size_t>>& groups,
                           unsigned threads) {
  if (groups.empty()) {
    return {scheme_shapley(gs, kind, threads).values, grand_coalition_utility(gs, kind)};
  }
  EpochValues out{Vector(gs.size(), 0.0), 0.0};
  std::vector<bool> seen(gs.size(), false);
  for (const auto& rows : groups) {
    if (rows.empty()) continue;
    const GradientSet part = gather(gs, rows);
    const Vector values = scheme_shapley(part, kind, threads).values;
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (seen[rows[r]]) throw InputError("value_snapshot: groups overlap");
      seen[rows[r]] = true;
      out.values[rows[r]] = values[r];
    }
    out.utility += grand_coalition_utility(part, kind);
  }
  if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
    throw InputError("value_snapshot: groups do not cover every row");
  }
  return out;
}

ValuationRun run_valuation(const Dataset& data, const ValuationConfig& config) {
  if (data.size() == 0) throw DomainError("run_valuation: empty dataset");
  if (config.epochs == 0) throw InputError("run_valuation: epochs must be positive");
  if (config.skip_first_epochs >= config.epochs) {
    throw InputError("run_valuation: skip_first_epochs leaves no epoch to average");
  }
  const std::size_t n = data.size();
  ModelState model =
      init_model({data.dim(), data.num_classes, config.train.hidden}, config.seed);
  const std::size_t steps_per_epoch =
      (n + config.train.batch_size - 1) / std::max<std::size_t>(1, config.train.batch_size);
  model.schedule = {config.train.lr, config.train.cosine, steps_per_epoch * config.epochs};

  ValuationRun run;
  run.config = config;
  run.per_epoch_values = Matrix(config.epochs, n);
  run.per_epoch_utility.assign(config.epochs, 0.0);
  run.epoch_seconds.assign(config.epochs, 0.0);

  const auto everyone = all_indices(n);
  static const std::vector<std::vector<std::size_t>> kWholeSet;
  const auto& groups = config.per_class ? data.class_index : kWholeSet;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    try {
      const GradientSet gs =
          to_gradient_set(per_example_loss_and_grad(model, data, everyone, config.threads));
      if (!all_finite(gs.losses)) throw NumericError("non-finite loss");
      const EpochValues ev = value_snapshot(gs, config.kind, groups, config.threads);
      std::copy(ev.values.begin(), ev.values.end(), run.per_epoch_values.row(epoch).begin());
      run.per_epoch_utility[epoch] = ev.utility;
      model = train_epoch(std::move(model), data, everyone, {}, config.train, config.seed, epoch);
    } catch (const NumericError& e) {
      throw NumericError("training diverged at epoch " + std::to_string(epoch) + ": " + e.what());
    }
    run.epoch_seconds[epoch] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }

  run.mean_values.assign(n, 0.0);
  const double kept = static_cast<double>(config.epochs - config.skip_first_epochs);
  for (std::size_t j = 0; j < n; ++j) {
    CompensatedSum acc;
    for (std::size_t e = config.skip_first_epochs; e < config.epochs; ++e) {
      acc.add(run.per_epoch_values(e, j));
    }
    run.mean_values[j] = acc.value() / kept;
  }
  return run;
}

AuditReport epoch_efficiency_audit(const ValuationRun& run, std::span<const double> utilities,
                                   double tolerance) {
  if (utilities.size() != run.epochs()) {
    throw InputError("efficiency audit: " + std::to_string(utilities.size()) +
                     " utilities for " + std::to_string(run.epochs()) + " epochs");
  }
  AuditReport report;
  for (std::size_t e = 0; e < run.epochs(); ++e) {
    const double total = compensated_sum(run.per_epoch_values.row(e));
    const double violation = std::abs(total - utilities[e]);
    const double scaled = violation / std::max(1.0, std::abs(utilities[e]));
    report.max_violation = std::max(report.max_violation, scaled);
    if (!(scaled <= tolerance)) report.failing_epochs.push_back(e);
  }
  if (!report.passed()) {
    std::string epochs;
    for (std::size_t e : report.failing_epochs) epochs += (epochs.empty() ? "" : ",") + std::to_string(e);
    throw AuditError("efficiency violated (max " + std::to_string(report.max_violation) +
                     ") at epochs " + epochs);
  }
  return report;
}

std::vector<std::size_t> value_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
  std::vector<std::size_t> rank(values.size());
  for (std::size_t r = 0; r < order.size(); ++r) rank[order[r]] = r + 1;
  return rank;
}

}  // namespace chg
