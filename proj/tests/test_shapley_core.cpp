#include <cmath>
#include <filesystem>
#include <numbers>

#include "doctest.h"

#include "chg/errors.hpp"
#include "chg/shapley_core.hpp"
#include "test_support.hpp"

using namespace chg;
using namespace chg::testing;

TEST_CASE("harmonic sums of small n") {
  const auto h1 = harmonic_sums(1);
  CHECK(h1.h1 == 1.0);
  CHECK(h1.h2 == 1.0);

  const auto h3 = harmonic_sums(3);
  CHECK(h3.h1 == doctest::Approx(11.0 / 6.0).epsilon(1e-15));
  CHECK(h3.h2 == doctest::Approx(49.0 / 36.0).epsilon(1e-15));

  const auto h4 = harmonic_sums(4);
  CHECK(h4.h1 == doctest::Approx(25.0 / 12.0).epsilon(1e-15));
  CHECK(h4.h2 == doctest::Approx(205.0 / 144.0).epsilon(1e-15));

  CHECK_THROWS_AS(harmonic_sums(0), DomainError);
}

TEST_CASE("harmonic sums are increasing and bounded") {
  auto prev = harmonic_sums(1);
  for (std::size_t n = 2; n <= 2000; ++n) {
    const auto h = harmonic_sums(n);
    REQUIRE(h.h1 > prev.h1);
    REQUIRE(h.h2 > prev.h2);
    REQUIRE(h.h2 < h.h1);
    REQUIRE(h.h2 < std::numbers::pi * std::numbers::pi / 6.0);
    REQUIRE(std::abs((h.h1 - prev.h1) - 1.0 / static_cast<double>(n)) < 1e-12);
    prev = h;
  }
}

TEST_CASE("closed-form coefficients need three players") {
  CHECK_THROWS_AS(closed_form_coefficients(0), DomainError);
  CHECK_THROWS_AS(closed_form_coefficients(2), DomainError);
  CHECK_NOTHROW(closed_form_coefficients(3));
}

TEST_CASE("closed-form coefficients are a pure function of n") {
  for (std::size_t n : {3u, 4u, 10u, 1000u}) {
    const auto a = closed_form_coefficients(n);
    const auto b = closed_form_coefficients(n);
    CHECK(a.c_self == b.c_self);
    CHECK(a.c_cross == b.c_cross);
    CHECK(a.c_sumsq == b.c_sumsq);
    CHECK(a.c_quad == b.c_quad);
    CHECK(a.c_alpha_self == b.c_alpha_self);
    CHECK(a.c_alpha_sum == b.c_alpha_sum);
  }
}

TEST_CASE("closed form matches enumeration at n = 3 and n = 10") {
  Rng rng(11);
  for (std::size_t n : {3u, 10u}) {
    for (int trial = 0; trial < 5; ++trial) {
      const Matrix x = random_matrix(n, 4, rng);
      const Vector alpha = random_vector(4, rng);
      const Vector exact = exact_shapley(make_chg_game(x, alpha)).values;
      const auto closed = chg_closed_form_shapley(x, alpha);
      CHECK(closed.method == ShapleyMethod::kClosedForm);
      CHECK(max_abs_diff(closed.values, exact) <= 1e-9 * std::max(1.0, max_abs(exact)));
    }
  }
}

TEST_CASE("exact enumeration agrees with the all-orderings oracle") {
  Rng rng(5);
  for (std::size_t n = 1; n <= 6; ++n) {
    const Matrix x = random_matrix(n, 3, rng);
    const Vector alpha = random_vector(3, rng);
    const GameSpec game = make_chg_game(x, alpha);
    CHECK(max_abs_diff(exact_shapley(game).values, all_orderings_shapley(game)) < 1e-12);
  }
}

TEST_CASE("one player gets the whole utility") {
  Matrix x(1, 2);
  x(0, 0) = 0.5;
  x(0, 1) = -1.0;
  const Vector alpha{2.0, 1.0};
  const double expected = squared_norm(alpha) - squared_distance(x.row(0), alpha);
  CHECK(chg_closed_form_shapley(x, alpha).values[0] == doctest::Approx(expected).epsilon(1e-15));
}

TEST_CASE("players equal to alpha split ||alpha||^2 evenly") {
  const Vector alpha{0.3, -1.2, 2.0};
  for (std::size_t n : {1u, 2u, 3u, 5u, 12u, 500u}) {
    Matrix x(n, 3);
    for (std::size_t i = 0; i < n; ++i) std::copy(alpha.begin(), alpha.end(), x.row(i).begin());
    const auto phi = chg_closed_form_shapley(x, alpha).values;
    for (double v : phi) CHECK(v == doctest::Approx(squared_norm(alpha) / n).epsilon(1e-12));
  }
}

TEST_CASE("zero game has zero values") {
  const Matrix x(6, 3, 0.0);
  const Vector alpha(3, 0.0);
  for (double v : chg_closed_form_shapley(x, alpha).values) CHECK(v == 0.0);
}

TEST_CASE("golden fixture n = 5, d = 3") {
  const std::filesystem::path dir = CHG_FIXTURE_DIR;
  const Vector input = read_values_file(dir / "chg_golden_n5_d3_input.txt");
  const Vector golden = read_values_file(dir / "chg_golden_n5_d3_values.txt");
  REQUIRE(input.size() == 18);
  REQUIRE(golden.size() == 5);
  Matrix x(5, 3);
  std::copy(input.begin(), input.begin() + 15, x.flat().begin());
  const Vector alpha(input.begin() + 15, input.end());

  const Vector closed = chg_closed_form_shapley(x, alpha).values;
  const Vector exact = exact_shapley(make_chg_game(x, alpha)).values;
  CHECK(max_abs_diff(closed, golden) < 1e-9);
  CHECK(max_abs_diff(exact, golden) < 1e-12);
}

TEST_CASE("values files keep 17 significant digits") {
  const auto path = std::filesystem::temp_directory_path() / "chg_values_roundtrip.txt";
  const Vector v{1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.1};
  write_values_file(path, v);
  CHECK(read_values_file(path) == v);
  std::filesystem::remove(path);
}

TEST_CASE("closed form rejects bad input") {
  Matrix x(4, 2, 1.0);
  CHECK_THROWS_AS(chg_closed_form_shapley(x, Vector{1.0}), InputError);
  x(2, 1) = std::nan("");
  CHECK_THROWS_AS(chg_closed_form_shapley(x, Vector{1.0, 0.0}), InputError);
  CHECK_THROWS_AS(chg_closed_form_shapley(Matrix(0, 2), Vector{1.0, 0.0}), InputError);
}

TEST_CASE("two players route to enumeration") {
  Rng rng(3);
  const Matrix x = random_matrix(2, 3, rng);
  const Vector alpha = random_vector(3, rng);
  const auto phi = chg_closed_form_shapley(x, alpha);
  CHECK(phi.method == ShapleyMethod::kExact);
  CHECK(max_abs_diff(phi.values, all_orderings_shapley(make_chg_game(x, alpha))) < 1e-14);
}

TEST_CASE("linear term") {
  Rng rng(8);
  SUBCASE("alpha = 0") {
    for (double v : shapley_linear_term(random_matrix(5, 3, rng), Vector(3, 0.0)).values) {
      CHECK(v == 0.0);
    }
  }
  SUBCASE("identical rows") {
    const Vector common{1.0, -2.0, 0.5};
    const Vector alpha{0.3, 0.1, -1.0};
    Matrix x(7, 3);
    for (std::size_t i = 0; i < 7; ++i) std::copy(common.begin(), common.end(), x.row(i).begin());
    for (double v : shapley_linear_term(x, alpha).values) {
      CHECK(v == doctest::Approx(2.0 * dot(common, alpha) / 7.0).epsilon(1e-12));
    }
  }
  SUBCASE("matches enumeration on U2") {
    const Matrix x = random_matrix(6, 4, rng);
    const Vector alpha = random_vector(4, rng);
    const Vector exact = exact_shapley(make_chg_game(x, alpha, ChgPart::kLinear)).values;
    CHECK(max_abs_diff(shapley_linear_term(x, alpha).values, exact) < 1e-9);
  }
  SUBCASE("single player") {
    Matrix x(1, 2);
    x(0, 0) = 1.0;
    x(0, 1) = 2.0;
    CHECK(shapley_linear_term(x, Vector{3.0, 4.0}).values[0] == doctest::Approx(22.0));
  }
}

TEST_CASE("exact shapley on textbook games") {
  SUBCASE("constant game") {
    const GameSpec game{3, [](Coalition s) { return s.empty() ? 0.0 : 6.0; }};
    for (double v : exact_shapley(game).values) CHECK(v == doctest::Approx(2.0).epsilon(1e-15));
  }
  SUBCASE("additive game") {
    const Vector v{1.5, -2.0, 0.25, 4.0};
    const GameSpec game{4, [&](Coalition s) {
                          double t = 0.0;
                          for (std::size_t i : s) t += v[i];
                          return t;
                        }};
    CHECK(max_abs_diff(exact_shapley(game).values, v) < 1e-14);
  }
  SUBCASE("squared size") {
    const GameSpec game{3, [](Coalition s) { return static_cast<double>(s.size() * s.size()); }};
    for (double v : exact_shapley(game).values) CHECK(v == doctest::Approx(3.0).epsilon(1e-14));
  }
  SUBCASE("dummy player is exactly zero") {
    Rng rng(21);
    const Matrix x = random_matrix(5, 2, rng);
    const Vector alpha = random_vector(2, rng);
    // Player 5 never changes the utility of the other five.
    const GameSpec game{6, [&](Coalition s) {
                          std::vector<std::size_t> others;
                          for (std::size_t i : s) {
                            if (i != 5) others.push_back(i);
                          }
                          return chg_utility(x, alpha, others);
                        }};
    CHECK(exact_shapley(game).values[5] == 0.0);
  }
}

TEST_CASE("exact shapley refuses large games") {
  const GameSpec game{21, [](Coalition) { return 0.0; }};
  CHECK_THROWS_AS(exact_shapley(game), SizeError);
  CHECK_THROWS_AS(exact_shapley(GameSpec{5, [](Coalition) { return 0.0; }}, 4), SizeError);
}

TEST_CASE("permutation sampling") {
  SUBCASE("additive game is exact for any sample count") {
    const Vector v{1.0, 2.0, -3.0, 0.5, 7.0};
    const GameSpec game{5, [&](Coalition s) {
                          double t = 0.0;
                          for (std::size_t i : s) t += v[i];
                          return t;
                        }};
    for (std::size_t samples : {1u, 3u, 300u}) {
      CHECK(max_abs_diff(permutation_shapley(game, samples, 9).values, v) < 1e-12);
    }
  }
  SUBCASE("one sample is the marginal vector of one ordering") {
    Rng rng(2);
    const Matrix x = random_matrix(4, 2, rng);
    const Vector alpha = random_vector(2, rng);
    const GameSpec game = make_chg_game(x, alpha);
    const Vector one = permutation_shapley(game, 1, 123).values;
    std::vector<std::size_t> perm{0, 1, 2, 3};
    bool matched = false;
    do {
      Vector marginal(4, 0.0);
      std::vector<std::size_t> prefix;
      double prev = 0.0;
      for (std::size_t p : perm) {
        prefix.push_back(p);
        std::vector<std::size_t> sorted = prefix;
        std::sort(sorted.begin(), sorted.end());
        const double cur = game.utility(sorted);
        marginal[p] = cur - prev;
        prev = cur;
      }
      matched = matched || max_abs_diff(marginal, one) == 0.0;
    } while (std::next_permutation(perm.begin(), perm.end()));
    CHECK(matched);
  }
  SUBCASE("converges on an n = 8 CHG game") {
    Rng rng(4);
    const Matrix x = random_matrix(8, 3, rng);
    const Vector alpha = random_vector(3, rng);
    const GameSpec game = make_chg_game(x, alpha);
    const Vector exact = exact_shapley(game).values;
    const auto [lo, hi] = std::minmax_element(exact.begin(), exact.end());
    const Vector mc = permutation_shapley(game, 10000, 77).values;
    CHECK(max_abs_diff(mc, exact) <= 1e-2 * (*hi - *lo));
  }
  SUBCASE("deterministic and thread independent") {
    Rng rng(6);
    const GameSpec game = make_chg_game(random_matrix(7, 3, rng), random_vector(3, rng));
    const Vector a = permutation_shapley(game, 1000, 5, 1).values;
    CHECK(a == permutation_shapley(game, 1000, 5, 1).values);
    CHECK(a == permutation_shapley(game, 1000, 5, 4).values);
    CHECK(a != permutation_shapley(game, 1000, 6, 1).values);
  }
  SUBCASE("input validation") {
    const GameSpec game{3, [](Coalition) { return 0.0; }};
    CHECK_THROWS_AS(permutation_shapley(game, 0, 1), InputError);
  }
}

TEST_CASE("closed form is thread independent") {
  Rng rng(12);
  const Matrix x = random_matrix(5000, 8, rng);
  const Vector alpha = random_vector(8, rng);
  CHECK(chg_closed_form_shapley(x, alpha, 1).values == chg_closed_form_shapley(x, alpha, 3).values);
}

TEST_CASE("efficiency holds up to n = 10^4") {
  Rng rng(13);
  for (std::size_t n : {3u, 17u, 250u, 10000u}) {
    const Matrix x = random_matrix(n, 5, rng);
    const Vector alpha = random_vector(5, rng);
    const Vector phi = chg_closed_form_shapley(x, alpha).values;
    const double grand = squared_norm(alpha) - squared_distance(column_means(x), alpha);
    CHECK(std::abs(compensated_sum(phi) - grand) <= 1e-9 * std::max(1.0, std::abs(grand)));
  }
}

TEST_CASE("duplicated rows receive equal values") {
  Rng rng(14);
  Matrix x = random_matrix(9, 4, rng);
  const Vector alpha = random_vector(4, rng);
  std::copy(x.row(2).begin(), x.row(2).end(), x.row(7).begin());
  const Vector phi = chg_closed_form_shapley(x, alpha).values;
  CHECK(std::abs(phi[2] - phi[7]) <= 1e-12);
  const Vector exact = exact_shapley(make_chg_game(x, alpha)).values;
  CHECK(std::abs(exact[2] - exact[7]) <= 1e-12);
}

TEST_CASE("closed form splits into quadratic and linear parts") {
  Rng rng(15);
  for (std::size_t n = 3; n <= 10; ++n) {
    const Matrix x = random_matrix(n, 3, rng);
    const Vector alpha = random_vector(3, rng);
    const Vector quad = exact_shapley(make_chg_game(x, alpha, ChgPart::kQuadratic)).values;
    const Vector lin = shapley_linear_term(x, alpha).values;
    const Vector full = chg_closed_form_shapley(x, alpha).values;
    for (std::size_t j = 0; j < n; ++j) CHECK(std::abs(full[j] - quad[j] - lin[j]) <= 1e-9);
  }
}

TEST_CASE("value differences depend only on the j-specific terms") {
  Rng rng(16);
  const std::size_t n = 11;
  const Matrix x = random_matrix(n, 4, rng);
  const Vector alpha = random_vector(4, rng);
  const Vector phi = chg_closed_form_shapley(x, alpha).values;
  const auto c = closed_form_coefficients(n);
  const Vector g = column_sums(x);
  const auto own = [&](std::size_t j) {
    return c.c_self * squared_norm(x.row(j)) + c.c_cross * dot(g, x.row(j)) +
           c.c_alpha_self * dot(x.row(j), alpha);
  };
  for (std::size_t j = 1; j < n; ++j) {
    CHECK((phi[j] - phi[0]) == doctest::Approx(own(j) - own(0)).epsilon(1e-12));
  }
}

TEST_CASE("oracle equivalence over 200 random instances") {
  Rng rng(17);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 3 + rng.below(10);
    const std::size_t d = 1 + rng.below(8);
    const Matrix x = random_matrix(n, d, rng);
    const Vector alpha = random_vector(d, rng);
    const Vector exact = exact_shapley(make_chg_game(x, alpha)).values;
    const Vector closed = chg_closed_form_shapley(x, alpha).values;
    worst = std::max(worst, max_abs_diff(closed, exact) / std::max(1.0, max_abs(exact)));
  }
  CHECK(worst <= 1e-9);
}
