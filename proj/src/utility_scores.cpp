#include "chg/utility_scores.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

#include "chg/errors.hpp"

namespace chg {

void validate(const GradientSet& gs) {
  if (gs.size() == 0 || gs.dim() == 0) throw InputError("gradient set is empty");
  if (gs.losses.size() != gs.size()) {
    throw InputError("gradient set: " + std::to_string(gs.losses.size()) +
                     " losses for " + std::to_string(gs.size()) + " vectors");
  }
  if (!gs.vectors.all_finite() || !all_finite(gs.losses)) {
    throw InputError("gradient set has non-finite entries");
  }
  for (double l : gs.losses) {
    if (l < 0.0) throw InputError("gradient set has a negative loss");
  }
}

std::string_view to_string(SchemeKind kind) {
  switch (kind) {
    case SchemeKind::kChg:
      return "chg";
    case SchemeKind::kHardness:
      return "hardness";
    case SchemeKind::kGradient:
      return "gradient";
  }
  return "unknown";
}

SchemeKind parse_scheme_kind(std::string_view name) {
  if (name == "chg") return SchemeKind::kChg;
  if (name == "hardness") return SchemeKind::kHardness;
  if (name == "gradient") return SchemeKind::kGradient;
  throw InputError("unknown scheme '" + std::string(name) + "'");
}

namespace {

// Per-datum vectors entering the quadratic utility for `kind`.
Matrix scheme_vectors(const GradientSet& gs, SchemeKind kind) {
  switch (kind) {
    case SchemeKind::kChg: {
      if (gs.weighted) return gs.vectors;
      Matrix x = gs.vectors;
      for (std::size_t i = 0; i < x.rows(); ++i) {
        for (double& v : x.row(i)) v *= gs.losses[i];
      }
      return x;
    }
    case SchemeKind::kGradient:
      if (gs.weighted) {
        throw InputError("gradient scheme needs raw (unweighted) gradients");
      }
      return gs.vectors;
    case SchemeKind::kHardness:
      break;
  }
  throw InputError("hardness scheme has no vector form");
}

}  // namespace

Vector reference_vector(const GradientSet& gs, SchemeKind kind) {
  if (gs.size() == 0) throw DomainError("reference vector of an empty set");
  if (kind == SchemeKind::kHardness) return Vector(gs.dim(), 0.0);
  return column_means(scheme_vectors(gs, kind));
}

UtilityScheme make_scheme(const GradientSet& gs, SchemeKind kind) {
  validate(gs);
  if (kind == SchemeKind::kHardness) return {kind, {}};
  return {kind, reference_vector(gs, kind)};
}

double subset_utility(const UtilityScheme& scheme, const GradientSet& gs,
                      std::span<const std::size_t> subset) {
  for (std::size_t i : subset) {
    if (i >= gs.size()) throw InputError("subset index " + std::to_string(i) + " out of range");
  }
  if (subset.empty()) return 0.0;
  const double inv = 1.0 / static_cast<double>(subset.size());

  if (scheme.kind == SchemeKind::kHardness) {
    double s = 0.0;
    for (std::size_t i : subset) s += gs.losses[i];
    return s * inv;
  }
  if (scheme.alpha.size() != gs.dim()) throw InputError("scheme alpha has the wrong dimension");
  if (scheme.kind == SchemeKind::kGradient && gs.weighted) {
    throw InputError("gradient scheme needs raw (unweighted) gradients");
  }
  const bool scale = scheme.kind == SchemeKind::kChg && !gs.weighted;
  Vector mean(gs.dim(), 0.0);
  for (std::size_t i : subset) {
    const double w = scale ? gs.losses[i] : 1.0;
    const auto row = gs.vectors.row(i);
    for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += w * row[k];
  }
  for (double& m : mean) m *= inv;
  return squared_norm(scheme.alpha) - squared_distance(scheme.alpha, mean);
}

std::pair<Matrix, Vector> chg_inputs_for_closed_form(const GradientSet& gs, SchemeKind kind) {
  validate(gs);
  if (kind == SchemeKind::kHardness) {
    throw InputError("hardness scheme is not a quadratic utility; use hardness_shapley");
  }
  Matrix x = scheme_vectors(gs, kind);
  Vector alpha = column_means(x);
  return {std::move(x), std::move(alpha)};
}

HardnessCoefficients hardness_coefficients(std::size_t n) {
  if (n == 0) throw DomainError("hardness_coefficients: n must be positive");
  // For l = e_j every predecessor set S of size s has U(S) = 0 and
  // U(S + j) = 1/(s+1). All C(n-1, s) such sets carry weight
  // 1/(n C(n-1, s)), so each size contributes (1/n) * 1/(s+1).
  const double nn = static_cast<double>(n);
  double self = 0.0;
  for (std::size_t s = 0; s < n; ++s) self += 1.0 / (nn * static_cast<double>(s + 1));
  // l = 1: U(S) = 1 on every non-empty S, so phi_j = 1/n = self + (n-1) other.
  const double other = n == 1 ? 0.0 : (1.0 / nn - self) / (nn - 1.0);
  return {self, other};
}

ShapleyValues hardness_shapley(std::span<const double> losses) {
  const std::size_t n = losses.size();
  if (n == 0) throw InputError("hardness_shapley: no losses");
  if (!all_finite(losses)) throw InputError("hardness_shapley: non-finite loss");
  const auto [self, other] = hardness_coefficients(n);
  const double total = compensated_sum(losses);
  ShapleyValues out{Vector(n), ShapleyMethod::kClosedForm};
  for (std::size_t j = 0; j < n; ++j) {
    out.values[j] = (self - other) * losses[j] + other * total;
  }
  return out;
}

ShapleyValues scheme_shapley(const GradientSet& gs, SchemeKind kind, unsigned threads) {
  validate(gs);
  if (kind == SchemeKind::kHardness) return hardness_shapley(gs.losses);
  const auto [x, alpha] = chg_inputs_for_closed_form(gs, kind);
  return chg_closed_form_shapley(x, alpha, threads);
}

double grand_coalition_utility(const GradientSet& gs, SchemeKind kind) {
  validate(gs);
  if (kind == SchemeKind::kHardness) {
    return compensated_sum(gs.losses) / static_cast<double>(gs.size());
  }
  // alpha is the mean over N, so U(N) = ||alpha||^2 exactly in exact
  // arithmetic; evaluate the definition anyway.
  const auto [x, alpha] = chg_inputs_for_closed_form(gs, kind);
  const Vector mean = column_means(x);
  return squared_norm(alpha) - squared_distance(mean, alpha);
}

void save_gradient_set_text(const GradientSet& gs, const std::filesystem::path& path) {
  validate(gs);
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << gs.size() << ' ' << gs.dim() << ' ' << (gs.weighted ? 1 : 0) << '\n';
  out << std::setprecision(17);
  for (std::size_t i = 0; i < gs.size(); ++i) {
    const auto row = gs.vectors.row(i);
    for (std::size_t k = 0; k < row.size(); ++k) out << (k ? " " : "") << row[k];
    out << '\n';
  }
  for (double l : gs.losses) out << l << '\n';
}

GradientSet load_gradient_set_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read " + path.string());
  std::size_t n = 0, d = 0;
  int flag = 0;
  if (!(in >> n >> d >> flag) || (flag != 0 && flag != 1)) {
    throw InputError("malformed gradient set header in " + path.string());
  }
  GradientSet gs{Matrix(n, d), Vector(n), flag == 1};
  for (double& v : gs.vectors.flat()) {
    if (!(in >> v)) throw InputError("truncated gradient rows in " + path.string());
  }
  for (double& l : gs.losses) {
    if (!(in >> l)) throw InputError("truncated losses in " + path.string());
  }
  validate(gs);
  return gs;
}

namespace {

constexpr std::array<char, 4> kMagic{'C', 'H', 'G', 'S'};
constexpr std::uint32_t kBinaryVersion = 1;

template <typename T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  }
  return v;
}

template <typename T>
void put(std::ostream& out, T v) {
  v = to_little(v);
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::filesystem::path& path) {
  T v;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) {
    throw InputError("truncated binary gradient set " + path.string());
  }
  return to_little(v);
}

}  // namespace

void save_gradient_set_binary(const GradientSet& gs, const std::filesystem::path& path) {
  validate(gs);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out.write(kMagic.data(), kMagic.size());
  put<std::uint32_t>(out, kBinaryVersion);
  put<std::uint64_t>(out, gs.size());
  put<std::uint64_t>(out, gs.dim());
  put<std::uint8_t>(out, gs.weighted ? 1 : 0);
  for (double v : gs.vectors.flat()) put(out, v);
  for (double l : gs.losses) put(out, l);
}

GradientSet load_gradient_set_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read " + path.string());
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) {
    throw InputError("not a binary gradient set: " + path.string());
  }
  if (get<std::uint32_t>(in, path) != kBinaryVersion) {
    throw InputError("unsupported gradient set version in " + path.string());
  }
  const auto n = get<std::uint64_t>(in, path);
  const auto d = get<std::uint64_t>(in, path);
  const auto flag = get<std::uint8_t>(in, path);
  if (flag > 1) throw InputError("bad weighted flag in " + path.string());
  GradientSet gs{Matrix(n, d), Vector(n), flag == 1};
  for (double& v : gs.vectors.flat()) v = get<double>(in, path);
  for (double& l : gs.losses) l = get<double>(in, path);
  validate(gs);
  return gs;
}

}  // namespace chg
