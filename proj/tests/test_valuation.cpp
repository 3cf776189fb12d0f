#include <cmath>

#include "doctest.h"

#include "chg/errors.hpp"
#include "chg/experiments.hpp"
#include "chg/shapley_core.hpp"
#include "chg/valuation.hpp"
#include "test_support.hpp"

using namespace chg;
using namespace chg::testing;

namespace {

GradientSet random_set(std::size_t n, std::size_t d, Rng& rng) {
  GradientSet gs{random_matrix(n, d, rng), Vector(n), false};
  for (double& l : gs.losses) l = rng.uniform(0.1, 2.0);
  return gs;
}

ValuationConfig quick_config(std::size_t epochs, std::uint64_t seed) {
  ValuationConfig cfg;
  cfg.epochs = epochs;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("snapshot values satisfy efficiency for every scheme") {
  Rng rng(1);
  const GradientSet gs = random_set(40, 5, rng);
  for (SchemeKind kind : {SchemeKind::kChg, SchemeKind::kHardness, SchemeKind::kGradient}) {
    const EpochValues ev = value_snapshot(gs, kind);
    CHECK(sum(ev.values) == doctest::Approx(ev.utility).epsilon(1e-12));
  }
}

TEST_CASE("identical rows receive identical values") {
  Rng rng(2);
  GradientSet gs = random_set(12, 4, rng);
  for (std::size_t k = 0; k < 4; ++k) gs.vectors(7, k) = gs.vectors(3, k);
  gs.losses[7] = gs.losses[3];
  for (SchemeKind kind : {SchemeKind::kChg, SchemeKind::kHardness, SchemeKind::kGradient}) {
    const EpochValues ev = value_snapshot(gs, kind);
    CHECK(std::abs(ev.values[3] - ev.values[7]) <= 1e-12 * std::max(1.0, max_abs(ev.values)));
  }
}

TEST_CASE("gradient values scale quadratically") {
  Rng rng(3);
  const GradientSet gs = random_set(15, 3, rng);
  const double t = 2.5;
  GradientSet scaled = gs;
  for (double& v : scaled.vectors.flat()) v *= t;
  const Vector base = value_snapshot(gs, SchemeKind::kGradient).values;
  const Vector big = value_snapshot(scaled, SchemeKind::kGradient).values;
  for (std::size_t j = 0; j < base.size(); ++j) {
    CHECK(big[j] == doctest::Approx(t * t * base[j]).epsilon(1e-10));
  }
}

TEST_CASE("a single group is the whole-set game") {
  Rng rng(4);
  const GradientSet gs = random_set(20, 4, rng);
  const EpochValues whole = value_snapshot(gs, SchemeKind::kChg);
  const EpochValues grouped = value_snapshot(gs, SchemeKind::kChg, {all_indices(20)});
  CHECK(max_abs_diff(whole.values, grouped.values) <= 1e-14);
  CHECK(whole.utility == doctest::Approx(grouped.utility).epsilon(1e-14));

  std::vector<std::vector<std::size_t>> halves{{0, 2, 4, 6, 8, 10, 12, 14, 16, 18},
                                               {1, 3, 5, 7, 9, 11, 13, 15, 17, 19}};
  const EpochValues split = value_snapshot(gs, SchemeKind::kChg, halves);
  CHECK(sum(split.values) == doctest::Approx(split.utility).epsilon(1e-12));

  CHECK_THROWS_AS(value_snapshot(gs, SchemeKind::kChg, {{0, 1}}), InputError);
  CHECK_THROWS_AS(value_snapshot(gs, SchemeKind::kChg, {all_indices(20), {0}}), InputError);
}

TEST_CASE("valuation runs") {
  const Dataset data = make_synthetic_dataset(200, 5, 3, 3.0, 11);

  SUBCASE("one epoch means that epoch") {
    const ValuationRun run = run_valuation(data, quick_config(1, 5));
    CHECK(run.epochs() == 1);
    for (std::size_t j = 0; j < data.size(); ++j) {
      CHECK(run.mean_values[j] == run.per_epoch_values(0, j));
    }
  }
  SUBCASE("deterministic and thread independent") {
    ValuationConfig cfg = quick_config(4, 6);
    const ValuationRun a = run_valuation(data, cfg);
    cfg.threads = 4;
    const ValuationRun b = run_valuation(data, cfg);
    CHECK(a.per_epoch_values == b.per_epoch_values);
    CHECK(a.mean_values == b.mean_values);
  }
  SUBCASE("skipped epochs drop out of the mean") {
    ValuationConfig cfg = quick_config(3, 6);
    cfg.skip_first_epochs = 2;
    const ValuationRun run = run_valuation(data, cfg);
    for (std::size_t j = 0; j < data.size(); ++j) {
      CHECK(run.mean_values[j] == run.per_epoch_values(2, j));
    }
    cfg.skip_first_epochs = 3;
    CHECK_THROWS_AS(run_valuation(data, cfg), InputError);
  }
  SUBCASE("per-class audit") {
    ValuationConfig cfg = quick_config(3, 7);
    cfg.per_class = true;
    const ValuationRun run = run_valuation(data, cfg);
    CHECK(epoch_efficiency_audit(run, run.per_epoch_utility).passed());
  }
  SUBCASE("audit catches a perturbed utility") {
    const ValuationRun run = run_valuation(data, quick_config(3, 8));
    const AuditReport ok = epoch_efficiency_audit(run, run.per_epoch_utility);
    CHECK(ok.max_violation <= 1e-9);
    Vector off = run.per_epoch_utility;
    off[1] += 1e-3 * std::max(1.0, std::abs(off[1]));
    try {
      epoch_efficiency_audit(run, off);
      FAIL("expected AuditError");
    } catch (const AuditError& e) {
      CHECK(std::string(e.what()).find("epochs 1") != std::string::npos);
    }
    CHECK_THROWS_AS(epoch_efficiency_audit(run, Vector(2, 0.0)), InputError);
  }
  SUBCASE("bad configuration") {
    CHECK_THROWS_AS(run_valuation(data, quick_config(0, 1)), InputError);
  }
}

TEST_CASE("divergence names the epoch") {
  Dataset data = make_synthetic_dataset(64, 3, 2, 3.0, 12);
  for (double& v : data.features.flat()) v *= 1e10;
  ValuationConfig cfg = quick_config(5, 1);
  cfg.train.lr = 1e300;
  try {
    run_valuation(data, cfg);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("epoch") != std::string::npos);
  }
}

TEST_CASE("large run passes the audit") {
  const Dataset data = make_synthetic_dataset(10000, 10, 2, 4.0, 13);
  ValuationConfig cfg = quick_config(2, 1);
  cfg.threads = 4;
  const ValuationRun run = run_valuation(data, cfg);
  CHECK(epoch_efficiency_audit(run, run.per_epoch_utility).passed());
}

TEST_CASE("flipped labels are valued lower") {
  NoiseExperimentConfig cfg;
  cfg.n = 500;
  cfg.valuation.epochs = 10;
  cfg.valuation.seed = 21;
  const NoiseExperiment ex = run_noise_experiment(cfg);
  CHECK(ex.noise.flipped() == 150);
  CHECK(ex.mean_value_noisy < ex.mean_value_clean);
  CHECK(ex.detection.auc > 0.6);
}

TEST_CASE("value ranks") {
  const Vector v{0.5, 2.0, 0.5, -1.0};
  const auto r = value_ranks(v);
  CHECK(r == std::vector<std::size_t>{2, 1, 3, 4});
}
