#pragma once

// Per-epoch closed-form valuation during a single training run, averaged over
// epochs.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "chg/linalg.hpp"
#include "chg/model_gradients.hpp"
#include "chg/utility_scores.hpp"

namespace chg {

struct ValuationConfig {
  SchemeKind kind = SchemeKind::kChg;
  std::size_t epochs = 20;
  TrainOptions train;
  std::uint64_t seed = 0;
  // Value each class separately against its own reference vector.
  bool per_class = false;
  // Epochs excluded from mean_values (they stay in per_epoch_values).
  std::size_t skip_first_epochs = 0;
  unsigned threads = 1;
};

struct ValuationRun {
  ValuationConfig config;
  Matrix per_epoch_values;  // epochs x n
  Vector mean_values;       // n
  // U(N) per epoch; in per-class mode the sum of the per-class U(N_c).
  Vector per_epoch_utility;
  Vector epoch_seconds;

  std::size_t epochs() const { return per_epoch_values.rows(); }
};

struct EpochValues {
  Vector values;
  double utility = 0.0;  // efficiency target: sum(values) should equal this
};

// Values of one gradient snapshot. `groups`, when non-empty, partitions the
// rows and each group is valued on its own (class-restricted reference
// vector); otherwise the whole set is one game.
EpochValues value_snapshot(const GradientSet& gs, SchemeKind kind,
                           const std::vector<std::vector<std::size_t>>& groups = {},
                           unsigned threads = 1);

// Each epoch: acquire losses and last-layer gradients at the current
// parameters, value every datum, then train one epoch. Throws NumericError
// naming the epoch if training diverges.
ValuationRun run_valuation(const Dataset& data, const ValuationConfig& config);

struct AuditReport {
  double max_violation = 0.0;
  std::vector<std::size_t> failing_epochs;
  bool passed() const { return failing_epochs.empty(); }
};

// Checks sum_j phi_j == U(N) per epoch within tolerance * max(1, |U(N)|).
// Throws AuditError listing the failing epochs.
AuditReport epoch_efficiency_audit(const ValuationRun& run, std::span<const double> utilities,
                                   double tolerance = 1e-9);

// Ranks by descending value (1 = most valuable); ties keep ascending index.
std::vector<std::size_t> value_ranks(std::span<const double> values);

}  // namespace chg
