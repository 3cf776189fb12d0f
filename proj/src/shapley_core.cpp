#include "chg/shapley_core.hpp"

#include <algorithm>
#include <bit>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>

#include "chg/errors.hpp"
#include "chg/parallel.hpp"
#include "chg/random.hpp"

namespace chg {

HarmonicSums harmonic_sums(std::size_t n) {
  if (n == 0) throw DomainError("harmonic_sums: n must be positive");
  HarmonicSums h{n, 0.0, 0.0};
  for (std::size_t k = 1; k <= n; ++k) {
    const double kk = static_cast<double>(k);
    h.h1 += 1.0 / kk;
    h.h2 += 1.0 / (kk * kk);
  }
  return h;
}

ClosedFormCoefficients closed_form_coefficients(std::size_t n) {
  if (n < 3) {
    throw DomainError("closed_form_coefficients: n must be at least 3, got " +
                      std::to_string(n));
  }
  const auto [_, h1, h2] = harmonic_sums(n);
  const double nn = static_cast<double>(n);
  const double inv_n = 1.0 / nn;
  const double n1 = nn - 1.0;
  const double n2 = nn - 2.0;

  // Shared numerator of the n(n-1)(n-2) groups. The c_quad group is printed
  // with sums starting at k = 2; the two dropped k = 1 terms cancel, so the
  // full sums give the same number.
  const double b = 2.0 * h1 - 2.0 * h2 - 1.0 + inv_n;

  ClosedFormCoefficients c;
  c.n = n;
  c.c_self = -h2 / nn + (2.0 * h1 - 3.0 * h2 + inv_n) / (nn * n1) +
             2.0 * b / (nn * n1 * n2);
  c.c_cross = -2.0 * (h1 - h2 - inv_n + inv_n * inv_n) / (n1 * n2);
  c.c_sumsq = b / (nn * n1 * n2);
  c.c_quad = (h2 - inv_n) / (nn * n1) - b / (nn * n1 * n2);
  c.c_alpha_self = 2.0 * (h1 - inv_n) / n1;
  c.c_alpha_sum = -2.0 * (h1 - 1.0) / (nn * n1);
  return c;
}

std::string_view to_string(ShapleyMethod m) {
  switch (m) {
    case ShapleyMethod::kClosedForm:
      return "closed_form";
    case ShapleyMethod::kExact:
      return "exact";
    case ShapleyMethod::kPermutationMonteCarlo:
      return "permutation_mc";
  }
  return "unknown";
}

ShapleyValues exact_shapley(const GameSpec& game, std::size_t limit) {
  const std::size_t n = game.n;
  if (n == 0) throw DomainError("exact_shapley: empty game");
  if (n > limit || n >= 63) {
    throw SizeError("exact_shapley: n = " + std::to_string(n) +
                    " exceeds the enumeration limit " + std::to_string(limit));
  }
  const std::uint64_t count = std::uint64_t{1} << n;

  std::vector<double> utility(count, 0.0);
  std::vector<std::size_t> members;
  members.reserve(n);
  for (std::uint64_t mask = 1; mask < count; ++mask) {
    members.clear();
    for (std::size_t i = 0; i < n; ++i) {
      if (mask & (std::uint64_t{1} << i)) members.push_back(i);
    }
    utility[mask] = game.utility(members);
  }

  // weight[s] = 1 / (n * C(n-1, s)), the probability of a given predecessor
  // set of size s.
  std::vector<double> weight(n);
  double binom = 1.0;
  for (std::size_t s = 0; s < n; ++s) {
    weight[s] = 1.0 / (static_cast<double>(n) * binom);
    binom = binom * static_cast<double>(n - 1 - s) / static_cast<double>(s + 1);
  }

  ShapleyValues out{Vector(n, 0.0), ShapleyMethod::kExact};
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint64_t bit = std::uint64_t{1} << i;
    CompensatedSum acc;
    for (std::uint64_t mask = 0; mask < count; ++mask) {
      if (mask & bit) continue;
      const double marginal = utility[mask | bit] - utility[mask];
      if (marginal != 0.0) {
        acc.add(weight[static_cast<std::size_t>(std::popcount(mask))] * marginal);
      }
    }
    out.values[i] = acc.value();
  }
  return out;
}

namespace {

constexpr std::size_t kPermutationBlock = 256;

std::vector<std::size_t> draw_permutation(std::size_t n, std::uint64_t seed,
                                          std::uint64_t index) {
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  Rng rng(stream_seed(seed, index));
  rng.shuffle(perm);
  return perm;
}

// Adds the marginal contribution of every player along `perm` into `acc`.
void accumulate_marginals(const GameSpec& game, std::span<const std::size_t> perm,
                          std::span<double> acc) {
  std::vector<std::size_t> prefix;
  prefix.reserve(perm.size());
  double previous = 0.0;
  for (std::size_t player : perm) {
    prefix.insert(std::upper_bound(prefix.begin(), prefix.end(), player), player);
    const double current = game.utility(prefix);
    acc[player] += current - previous;
    previous = current;
  }
}

}  // namespace

ShapleyValues permutation_shapley(const GameSpec& game, std::size_t samples,
                                  std::uint64_t seed, unsigned threads) {
  const std::size_t n = game.n;
  if (n == 0) throw DomainError("permutation_shapley: empty game");
  if (samples == 0) throw InputError("permutation_shapley: samples must be positive");

  // Fixed blocks, combined in block order: independent of the thread count.
  const std::size_t blocks = (samples + kPermutationBlock - 1) / kPermutationBlock;
  Matrix partial(blocks, n);
  parallel_for(blocks, threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t b = begin; b < end; ++b) {
      const std::size_t first = b * kPermutationBlock;
      const std::size_t last = std::min(samples, first + kPermutationBlock);
      for (std::size_t k = first; k < last; ++k) {
        accumulate_marginals(game, draw_permutation(n, seed, k), partial.row(b));
      }
    }
  });

  ShapleyValues out{column_sums(partial), ShapleyMethod::kPermutationMonteCarlo};
  for (double& v : out.values) v /= static_cast<double>(samples);
  return out;
}

namespace {

struct ChgGameData {
  Matrix x;
  Vector alpha;
  ChgPart part;
};

double part_utility(const ChgGameData& g, Coalition s) {
  if (s.empty()) return 0.0;
  const std::size_t d = g.x.cols();
  Vector mean(d, 0.0);
  for (std::size_t i : s) {
    const auto row = g.x.row(i);
    for (std::size_t k = 0; k < d; ++k) mean[k] += row[k];
  }
  const double inv = 1.0 / static_cast<double>(s.size());
  for (double& m : mean) m *= inv;
  switch (g.part) {
    case ChgPart::kFull:
      return squared_norm(g.alpha) - squared_distance(mean, g.alpha);
    case ChgPart::kQuadratic:
      return -squared_norm(mean);
    case ChgPart::kLinear:
      return 2.0 * dot(mean, g.alpha);
  }
  return 0.0;
}

void check_chg_inputs(const Matrix& x, std::span<const double> alpha,
                      std::string_view who) {
  if (x.rows() == 0 || x.cols() == 0) {
    throw InputError(std::string(who) + ": empty gradient matrix");
  }
  if (alpha.size() != x.cols()) {
    throw InputError(std::string(who) + ": alpha has dimension " +
                     std::to_string(alpha.size()) + ", expected " +
                     std::to_string(x.cols()));
  }
  if (!x.all_finite() || !all_finite(alpha)) {
    throw InputError(std::string(who) + ": non-finite input");
  }
}

}  // namespace

GameSpec make_chg_game(Matrix x, Vector alpha, ChgPart part) {
  if (alpha.size() != x.cols()) throw InputError("make_chg_game: dimension mismatch");
  auto data = std::make_shared<const ChgGameData>(
      ChgGameData{std::move(x), std::move(alpha), part});
  const std::size_t n = data->x.rows();
  return GameSpec{n, [data](Coalition s) { return part_utility(*data, s); }};
}

double chg_utility(const Matrix& x, std::span<const double> alpha, Coalition s) {
  if (s.empty()) return 0.0;
  Vector mean(x.cols(), 0.0);
  for (std::size_t i : s) {
    if (i >= x.rows()) throw InputError("chg_utility: index out of range");
    const auto row = x.row(i);
    for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += row[k];
  }
  for (double& m : mean) m /= static_cast<double>(s.size());
  return squared_norm(alpha) - squared_distance(mean, alpha);
}

ShapleyValues chg_closed_form_shapley(const Matrix& x, std::span<const double> alpha,
                                      unsigned threads) {
  check_chg_inputs(x, alpha, "chg_closed_form_shapley");
  const std::size_t n = x.rows();
  if (n < 3) {
    return exact_shapley(make_chg_game(x, Vector(alpha.begin(), alpha.end())));
  }
  const ClosedFormCoefficients c = closed_form_coefficients(n);

  const Vector g = column_sums(x);
  CompensatedSum q_acc;
  for (std::size_t i = 0; i < n; ++i) q_acc.add(squared_norm(x.row(i)));
  const double q = q_acc.value();

  // j-independent part.
  const double shared = c.c_sumsq * squared_norm(g) + c.c_quad * q +
                        c.c_alpha_sum * dot(g, alpha);

  ShapleyValues out{Vector(n), ShapleyMethod::kClosedForm};
  parallel_for(n, threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t j = begin; j < end; ++j) {
      const auto xj = x.row(j);
      out.values[j] = c.c_self * squared_norm(xj) + c.c_cross * dot(g, xj) +
                      c.c_alpha_self * dot(xj, alpha) + shared;
    }
  });
  return out;
}

ShapleyValues shapley_linear_term(const Matrix& x, std::span<const double> alpha) {
  check_chg_inputs(x, alpha, "shapley_linear_term");
  const std::size_t n = x.rows();
  if (n < 2) {
    return exact_shapley(
        make_chg_game(x, Vector(alpha.begin(), alpha.end()), ChgPart::kLinear));
  }
  const double nn = static_cast<double>(n);
  const double hn = harmonic_sums(n).h1;
  const double hn1 = harmonic_sums(n - 1).h1;
  const double self = 2.0 * hn1 / (nn - 1.0);
  const double rest = -2.0 * (hn - 1.0) / (nn * (nn - 1.0));
  const double g_alpha = dot(column_sums(x), alpha);

  ShapleyValues out{Vector(n), ShapleyMethod::kClosedForm};
  for (std::size_t j = 0; j < n; ++j) {
    out.values[j] = self * dot(x.row(j), alpha) + rest * g_alpha;
  }
  return out;
}

void write_values_file(const std::filesystem::path& path, std::span<const double> values) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << std::setprecision(17);
  for (double v : values) out << v << '\n';
}

Vector read_values_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read " + path.string());
  Vector values;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    double v;
    if (!(ls >> v)) throw InputError("malformed value in " + path.string() + ": " + line);
    values.push_back(v);
  }
  return values;
}

}  // namespace chg
