#pragma once

// Shapley values for set-function games: exact enumeration, permutation
// Monte Carlo and the O(n*d) closed form for the quadratic CHG utility
//   U(S) = ||alpha||^2 - ||mean_{i in S} x_i - alpha||^2,  U(empty) = 0.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string_view>

#include "chg/linalg.hpp"

namespace chg {

struct HarmonicSums {
  std::size_t n = 0;
  double h1 = 0.0;  // sum_{k=1..n} 1/k
  double h2 = 0.0;  // sum_{k=1..n} 1/k^2
};

// Direct accumulation in increasing k. Throws DomainError for n = 0.
HarmonicSums harmonic_sums(std::size_t n);

// Coefficients of the six terms of the closed form; a pure function of n.
//   phi_j = c_self * ||x_j||^2 + c_cross * <g, x_j> + c_sumsq * ||g||^2
//         + c_quad * Q + c_alpha_self * <x_j, alpha> + c_alpha_sum * <g, alpha>
// with g = sum_i x_i and Q = sum_i ||x_i||^2.
struct ClosedFormCoefficients {
  std::size_t n = 0;
  double c_self = 0.0;
  double c_cross = 0.0;
  double c_sumsq = 0.0;
  double c_quad = 0.0;
  double c_alpha_self = 0.0;
  double c_alpha_sum = 0.0;
};

// Throws DomainError for n < 3 (the closed form divides by (n-1)(n-2)).
ClosedFormCoefficients closed_form_coefficients(std::size_t n);

// A coalition is the sorted list of member indices.
using Coalition = std::span<const std::size_t>;
using Utility = std::function<double(Coalition)>;

struct GameSpec {
  std::size_t n = 0;
  Utility utility;  // must return 0 for the empty coalition
};

enum class ShapleyMethod { kClosedForm, kExact, kPermutationMonteCarlo };

std::string_view to_string(ShapleyMethod m);

struct ShapleyValues {
  Vector values;
  ShapleyMethod method = ShapleyMethod::kExact;
};

inline constexpr std::size_t kDefaultExactLimit = 20;

// Enumerates every coalition once (2^n utility calls) and accumulates the
// weighted marginals. Throws SizeError when n > limit.
ShapleyValues exact_shapley(const GameSpec& game,
                            std::size_t limit = kDefaultExactLimit);

// Averages marginal contributions over `samples` random permutations.
// Permutation k draws from its own stream derived from (seed, k), so the
// result does not depend on `threads`.
ShapleyValues permutation_shapley(const GameSpec& game, std::size_t samples,
                                  std::uint64_t seed, unsigned threads = 1);

// Which part of the CHG utility a game evaluates. The full utility splits as
// U = U1 + U2 with U1(S) = -||mean_S x||^2 and U2(S) = 2 <mean_S x, alpha>.
enum class ChgPart { kFull, kQuadratic, kLinear };

// Wraps (X, alpha) as a game. The matrix and vector are shared, not copied
// per call.
GameSpec make_chg_game(Matrix x, Vector alpha, ChgPart part = ChgPart::kFull);

// U(S) for the CHG utility, directly from the definition.
double chg_utility(const Matrix& x, std::span<const double> alpha, Coalition s);

// Closed-form Shapley values of the CHG game in O(n*d). For n <= 2 the values
// come from exact enumeration. Throws InputError on non-finite input or a
// dimension mismatch.
ShapleyValues chg_closed_form_shapley(const Matrix& x, std::span<const double> alpha,
                                      unsigned threads = 1);

// Shapley values of the linear part U2 alone:
//   phi_j(U2) = 2 H_{n-1}/(n-1) <x_j, alpha> - 2 (H_n - 1)/(n(n-1)) <g, alpha>.
ShapleyValues shapley_linear_term(const Matrix& x, std::span<const double> alpha);

// Golden fixtures: plain text, one value per line, 17 significant digits.
void write_values_file(const std::filesystem::path& path, std::span<const double> values);
Vector read_values_file(const std::filesystem::path& path);

}  // namespace chg
