#include "chg/linalg.hpp"

#include "chg/errors.hpp"

namespace chg {

Matrix Matrix::gather_rows(std::span<const std::size_t> idx) const {
  Matrix out(idx.size(), cols_);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= rows_) throw InputError("row index out of range");
    const auto src = row(idx[r]);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

bool Matrix::all_finite() const { return chg::all_finite(data_); }

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

double squared_norm(std::span<const double> a) { return dot(a, a); }

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double t = a[k] - b[k];
    s += t * t;
  }
  return s;
}

double compensated_sum(std::span<const double> v) {
  CompensatedSum acc;
  for (double x : v) acc.add(x);
  return acc.value();
}

bool all_finite(std::span<const double> v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

Vector column_sums(const Matrix& m) {
  std::vector<CompensatedSum> acc(m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto row = m.row(r);
    for (std::size_t c = 0; c < m.cols(); ++c) acc[c].add(row[c]);
  }
  Vector out(m.cols());
  for (std::size_t c = 0; c < m.cols(); ++c) out[c] = acc[c].value();
  return out;
}

Vector column_means(const Matrix& m) {
  if (m.rows() == 0) throw DomainError("mean of an empty set of vectors");
  Vector out = column_sums(m);
  for (double& v : out) v /= static_cast<double>(m.rows());
  return out;
}

}  // namespace chg
