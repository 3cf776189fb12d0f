#pragma once

// Subset utilities scoring a data subset from per-datum gradients and losses:
//   chg       ||alpha||^2 - ||alpha - mean_S l_i g_i||^2, alpha = mean_N l_i g_i
//   gradient  same quadratic form on the raw gradients g_i
//   hardness  mean_S l_i

#include <cstddef>
#include <filesystem>
#include <span>
#include <string_view>
#include <utility>

#include "chg/linalg.hpp"
#include "chg/shapley_core.hpp"

namespace chg {

struct GradientSet {
  Matrix vectors;  // n x d
  Vector losses;   // n, non-negative, detached
  // True when rows already hold l_i * grad_i.
  bool weighted = false;

  std::size_t size() const { return vectors.rows(); }
  std::size_t dim() const { return vectors.cols(); }
};

// Throws InputError unless the set is non-empty, shapes agree, entries are
// finite and losses are non-negative.
void validate(const GradientSet& gs);

enum class SchemeKind { kChg, kHardness, kGradient };

std::string_view to_string(SchemeKind kind);
// Accepts "chg", "hardness", "gradient"; throws InputError otherwise.
SchemeKind parse_scheme_kind(std::string_view name);

struct UtilityScheme {
  SchemeKind kind = SchemeKind::kChg;
  Vector alpha;  // zero-length for hardness
};

// chg: mean of l_i * grad_i; gradient: mean of grad_i; hardness: zero vector.
// Throws DomainError on an empty set.
Vector reference_vector(const GradientSet& gs, SchemeKind kind);

// Reference vector computed from the current set. Never cache across
// parameter updates.
UtilityScheme make_scheme(const GradientSet& gs, SchemeKind kind);

// U(S) for the scheme. U(empty) = 0 for every kind. Indices must be < n.
double subset_utility(const UtilityScheme& scheme, const GradientSet& gs,
                      std::span<const std::size_t> subset);

// The (X, alpha) pair on which chg_closed_form_shapley yields the Shapley
// values of subset_utility. Throws InputError for hardness or for the
// gradient kind on a pre-weighted set.
std::pair<Matrix, Vector> chg_inputs_for_closed_form(const GradientSet& gs,
                                                     SchemeKind kind);

// Coefficients of the mean game U(S) = mean_S l_i:
//   phi_j = self * l_j + other * sum_{i != j} l_i.
struct HardnessCoefficients {
  double self = 0.0;
  double other = 0.0;
};

// `self` is the Shapley sum evaluated on the basis input l = e_j, grouped by
// coalition size (O(n)); `other` then follows from l = 1 whose values are
// all 1/n.
HardnessCoefficients hardness_coefficients(std::size_t n);

ShapleyValues hardness_shapley(std::span<const double> losses);

// Values of every datum under the scheme, closed form where one exists.
ShapleyValues scheme_shapley(const GradientSet& gs, SchemeKind kind, unsigned threads = 1);

// U(N) for the scheme; the efficiency target of scheme_shapley.
double grand_coalition_utility(const GradientSet& gs, SchemeKind kind);

// Text format: header line "n d weighted_flag", then n rows of d values, then
// n losses (one per line). Binary format: magic "CHGS", uint32 version (1),
// uint64 n, uint64 d, uint8 weighted, n*d float64 row-major, n float64 losses;
// every field little-endian.
void save_gradient_set_text(const GradientSet& gs, const std::filesystem::path& path);
GradientSet load_gradient_set_text(const std::filesystem::path& path);
void save_gradient_set_binary(const GradientSet& gs, const std::filesystem::path& path);
GradientSet load_gradient_set_binary(const std::filesystem::path& path);

}  // namespace chg
