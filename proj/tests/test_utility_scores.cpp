#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"

#include "chg/errors.hpp"
#include "chg/utility_scores.hpp"
#include "test_support.hpp"

using namespace chg;
using namespace chg::testing;

namespace {

GradientSet two_by_two(Vector losses) {
  Matrix g(2, 2, 0.0);
  g(0, 0) = 1.0;
  g(1, 1) = 1.0;
  return {g, std::move(losses), false};
}

GradientSet random_set(std::size_t n, std::size_t d, Rng& rng) {
  GradientSet gs{random_matrix(n, d, rng), Vector(n), false};
  for (double& l : gs.losses) l = rng.uniform(0.0, 3.0);
  return gs;
}

GameSpec scheme_game(const UtilityScheme& scheme, const GradientSet& gs) {
  return {gs.size(), [&](Coalition s) { return subset_utility(scheme, gs, s); }};
}

}  // namespace

TEST_CASE("reference vectors") {
  const GradientSet gs = two_by_two({1.0, 1.0});
  CHECK(reference_vector(gs, SchemeKind::kChg) == Vector{0.5, 0.5});
  CHECK(reference_vector(two_by_two({0.0, 0.0}), SchemeKind::kChg) == Vector{0.0, 0.0});
  CHECK(reference_vector(two_by_two({7.0, 0.1}), SchemeKind::kGradient) == Vector{0.5, 0.5});
  CHECK(reference_vector(gs, SchemeKind::kHardness) == Vector{0.0, 0.0});
  CHECK_THROWS_AS(reference_vector(GradientSet{Matrix(0, 2), {}, false}, SchemeKind::kChg),
                  DomainError);
}

TEST_CASE("subset utilities") {
  SUBCASE("mean equal to alpha gives ||alpha||^2") {
    const GradientSet gs = two_by_two({1.0, 1.0});
    const UtilityScheme scheme = make_scheme(gs, SchemeKind::kChg);
    const std::vector<std::size_t> both{0, 1};
    CHECK(subset_utility(scheme, gs, both) == doctest::Approx(0.5));
  }
  SUBCASE("singleton arithmetic") {
    const GradientSet gs = two_by_two({1.0, 1.0});
    const UtilityScheme scheme{SchemeKind::kChg, {1.0, 0.0}};
    const std::vector<std::size_t> s{1};
    CHECK(subset_utility(scheme, gs, s) == doctest::Approx(-1.0));
  }
  SUBCASE("hardness is the subset mean loss") {
    const GradientSet gs = two_by_two({0.2, 0.4});
    const UtilityScheme scheme = make_scheme(gs, SchemeKind::kHardness);
    const std::vector<std::size_t> both{0, 1};
    CHECK(subset_utility(scheme, gs, both) == doctest::Approx(0.3));
  }
  SUBCASE("empty set is zero for every kind") {
    const GradientSet gs = two_by_two({0.2, 0.4});
    for (auto kind : {SchemeKind::kChg, SchemeKind::kGradient, SchemeKind::kHardness}) {
      CHECK(subset_utility(make_scheme(gs, kind), gs, {}) == 0.0);
    }
  }
  SUBCASE("out of range index") {
    const GradientSet gs = two_by_two({0.2, 0.4});
    const std::vector<std::size_t> bad{2};
    CHECK_THROWS_AS(subset_utility(make_scheme(gs, SchemeKind::kChg), gs, bad), InputError);
  }
}

TEST_CASE("quadratic utilities never exceed ||alpha||^2") {
  Rng rng(1);
  const GradientSet gs = random_set(7, 3, rng);
  for (auto kind : {SchemeKind::kChg, SchemeKind::kGradient}) {
    const UtilityScheme scheme = make_scheme(gs, kind);
    const double cap = squared_norm(scheme.alpha);
    for (std::uint32_t mask = 1; mask < (1u << 7); ++mask) {
      std::vector<std::size_t> s;
      for (std::size_t i = 0; i < 7; ++i) {
        if (mask & (1u << i)) s.push_back(i);
      }
      const double u = subset_utility(scheme, gs, s);
      REQUIRE(std::isfinite(u));
      REQUIRE(u <= cap + 1e-12);
    }
  }
}

TEST_CASE("closed-form inputs") {
  Matrix g(2, 2, 0.0);
  g(0, 0) = 1.0;
  g(1, 1) = 1.0;
  const GradientSet gs{g, {2.0, 0.0}, false};
  SUBCASE("chg scales rows by loss") {
    const auto [x, alpha] = chg_inputs_for_closed_form(gs, SchemeKind::kChg);
    CHECK(x(0, 0) == 2.0);
    CHECK(x(0, 1) == 0.0);
    CHECK(x(1, 0) == 0.0);
    CHECK(x(1, 1) == 0.0);
    CHECK(alpha == Vector{1.0, 0.0});
  }
  SUBCASE("gradient keeps raw rows") {
    const auto [x, alpha] = chg_inputs_for_closed_form(gs, SchemeKind::kGradient);
    CHECK(x == g);
    CHECK(alpha == Vector{0.5, 0.5});
  }
  SUBCASE("hardness is unsupported") {
    CHECK_THROWS_AS(chg_inputs_for_closed_form(gs, SchemeKind::kHardness), InputError);
  }
  SUBCASE("pre-weighted rows are used as-is for chg") {
    const GradientSet weighted{g, {2.0, 0.0}, true};
    const auto [x, alpha] = chg_inputs_for_closed_form(weighted, SchemeKind::kChg);
    CHECK(x == g);
    CHECK_THROWS_AS(chg_inputs_for_closed_form(weighted, SchemeKind::kGradient), InputError);
  }
}

TEST_CASE("closed form on scheme inputs equals enumeration of subset_utility") {
  Rng rng(2);
  for (int trial = 0; trial < 5; ++trial) {
    const GradientSet gs = random_set(5, 3, rng);
    for (auto kind : {SchemeKind::kChg, SchemeKind::kGradient}) {
      const UtilityScheme scheme = make_scheme(gs, kind);
      const Vector exact = exact_shapley(scheme_game(scheme, gs)).values;
      const Vector closed = scheme_shapley(gs, kind).values;
      CHECK(max_abs_diff(closed, exact) <= 1e-9 * std::max(1.0, max_abs(exact)));
    }
  }
}

TEST_CASE("chg with unit losses equals the gradient scheme") {
  Rng rng(3);
  GradientSet gs = random_set(6, 4, rng);
  std::fill(gs.losses.begin(), gs.losses.end(), 1.0);
  const UtilityScheme chg_scheme = make_scheme(gs, SchemeKind::kChg);
  const UtilityScheme grad_scheme = make_scheme(gs, SchemeKind::kGradient);
  CHECK(chg_scheme.alpha == grad_scheme.alpha);
  const std::vector<std::size_t> s{0, 2, 5};
  CHECK(subset_utility(chg_scheme, gs, s) == subset_utility(grad_scheme, gs, s));
  CHECK(scheme_shapley(gs, SchemeKind::kChg).values == scheme_shapley(gs, SchemeKind::kGradient).values);
}

TEST_CASE("permuting data permutes values") {
  Rng rng(4);
  const GradientSet gs = random_set(9, 3, rng);
  const std::vector<std::size_t> perm{4, 0, 8, 2, 7, 1, 3, 6, 5};
  GradientSet shuffled{gs.vectors.gather_rows(perm), Vector(9), false};
  for (std::size_t r = 0; r < 9; ++r) shuffled.losses[r] = gs.losses[perm[r]];
  for (auto kind : {SchemeKind::kChg, SchemeKind::kGradient, SchemeKind::kHardness}) {
    const Vector a = scheme_shapley(gs, kind).values;
    const Vector b = scheme_shapley(shuffled, kind).values;
    for (std::size_t r = 0; r < 9; ++r) CHECK(b[r] == doctest::Approx(a[perm[r]]).epsilon(1e-12));
  }
}

TEST_CASE("hardness shapley") {
  SUBCASE("equal losses share the mean") {
    const Vector l(6, 0.7);
    for (double v : hardness_shapley(l).values) CHECK(v == doctest::Approx(0.7 / 6).epsilon(1e-14));
  }
  SUBCASE("single datum") { CHECK(hardness_shapley(Vector{2.5}).values[0] == 2.5); }
  SUBCASE("n = 4 basis input matches enumeration") {
    const Vector l{1.0, 0.0, 0.0, 0.0};
    const GradientSet gs{Matrix(4, 1, 0.0), l, false};
    const UtilityScheme scheme = make_scheme(gs, SchemeKind::kHardness);
    const Vector exact = exact_shapley(scheme_game(scheme, gs)).values;
    const Vector closed = hardness_shapley(l).values;
    CHECK(max_abs_diff(closed, exact) < 1e-14);
    // 25/48 for the datum itself, -13/144 for each of the others.
    CHECK(closed[0] == doctest::Approx(25.0 / 48.0).epsilon(1e-14));
    CHECK(closed[1] == doctest::Approx(-13.0 / 144.0).epsilon(1e-14));
  }
  SUBCASE("coefficients agree with enumeration on both basis inputs") {
    for (std::size_t n = 1; n <= 9; ++n) {
      const auto [self, other] = hardness_coefficients(n);
      Vector e(n, 0.0);
      e[0] = 1.0;
      const GradientSet gs{Matrix(n, 1, 0.0), e, false};
      const Vector exact = exact_shapley(scheme_game(make_scheme(gs, SchemeKind::kHardness), gs)).values;
      CHECK(self == doctest::Approx(exact[0]).epsilon(1e-13));
      if (n > 1) CHECK(other == doctest::Approx(exact[1]).epsilon(1e-13));
    }
  }
  SUBCASE("random losses: enumeration and efficiency") {
    Rng rng(5);
    const GradientSet gs = random_set(8, 1, rng);
    const Vector exact =
        exact_shapley(scheme_game(make_scheme(gs, SchemeKind::kHardness), gs)).values;
    const Vector closed = hardness_shapley(gs.losses).values;
    CHECK(max_abs_diff(closed, exact) < 1e-12);
    CHECK(sum(closed) == doctest::Approx(sum(gs.losses) / 8.0).epsilon(1e-13));
  }
}

TEST_CASE("validation") {
  CHECK_THROWS_AS(validate(GradientSet{Matrix(2, 2), {1.0}, false}), InputError);
  CHECK_THROWS_AS(validate(GradientSet{Matrix(2, 2), {1.0, -0.1}, false}), InputError);
  CHECK_THROWS_AS(parse_scheme_kind("cosine"), InputError);
  CHECK(parse_scheme_kind("hardness") == SchemeKind::kHardness);
}

TEST_CASE("gradient set files") {
  Rng rng(6);
  GradientSet gs = random_set(5, 3, rng);
  gs.weighted = true;
  const auto dir = std::filesystem::temp_directory_path();

  const auto text = dir / "chg_gs.txt";
  save_gradient_set_text(gs, text);
  const GradientSet t = load_gradient_set_text(text);
  CHECK(t.vectors == gs.vectors);
  CHECK(t.losses == gs.losses);
  CHECK(t.weighted);
  {
    std::ifstream in(text);
    std::string header;
    std::getline(in, header);
    CHECK(header == "5 3 1");
  }

  const auto bin = dir / "chg_gs.bin";
  save_gradient_set_binary(gs, bin);
  CHECK(std::filesystem::file_size(bin) == 4 + 4 + 8 + 8 + 1 + 8 * 15 + 8 * 5);
  const GradientSet b = load_gradient_set_binary(bin);
  CHECK(b.vectors == gs.vectors);
  CHECK(b.losses == gs.losses);
  CHECK(b.weighted);

  std::filesystem::resize_file(bin, 30);
  CHECK_THROWS_AS(load_gradient_set_binary(bin), InputError);
  CHECK_THROWS_AS(load_gradient_set_binary(text), InputError);
  CHECK_THROWS_AS(load_gradient_set_text(dir / "chg_missing_gs.txt"), InputError);
  std::filesystem::remove(text);
  std::filesystem::remove(bin);
}
