#include "cmlr/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "cmlr/kernels.hpp"

namespace cmlr {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> entries)
    : rows_(rows), cols_(cols), data_(std::move(entries)) {
  if (data_.size() != rows_ * cols_) {
    throw DimensionError("Matrix: entry count " + std::to_string(data_.size()) +
                         " does not match " + std::to_string(rows_) + "x" +
                         std::to_string(cols_));
  }
  ensure_finite("Matrix");
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::diagonal(std::span<const double> d) {
  Matrix m(d.size(), d.size());
  for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
  return m;
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  Matrix m(r, c);
  std::size_t i = 0;
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("from_rows: ragged rows");
    std::size_t j = 0;
    for (double v : row) m(i, j++) = v;
    ++i;
  }
  return m;
}

Matrix Matrix::row_vector(std::span<const double> v) {
  return Matrix(1, v.size(), std::vector<double>(v.begin(), v.end()));
}

Matrix Matrix::column_vector(std::span<const double> v) {
  return Matrix(v.size(), 1, std::vector<double>(v.begin(), v.end()));
}

bool Matrix::is_finite() const noexcept {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void Matrix::ensure_finite(const char* what) const {
  if (!is_finite()) throw DataError(std::string(what) + ": non-finite entry");
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

Matrix multiply(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("multiply: " + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " times " + std::to_string(b.rows()) +
                         "x" + std::to_string(b.cols()));
  }
  Matrix out(a.rows(), b.cols());
  kernels::multiply_into(a, b, out);
  return out;
}

Matrix operator*(const Matrix& a, const Matrix& b) { return multiply(a, b); }

Matrix operator+(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw DimensionError("operator+: shape");
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += b.data()[i];
  return out;
}

Matrix operator-(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw DimensionError("operator-: shape");
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] -= b.data()[i];
  return out;
}

Matrix scale(const Matrix& a, double s) {
  Matrix out = a;
  for (double& v : out.data()) v *= s;
  return out;
}

std::vector<double> matvec(const Matrix& a, std::span<const double> v) {
  std::vector<double> out(a.rows());
  kernels::matvec_into(a, v, out);
  return out;
}

std::vector<double> vecmat(std::span<const double> v, const Matrix& a) {
  if (v.size() != a.rows()) throw DimensionError("vecmat: shape mismatch");
  std::vector<double> out(a.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double s = v[i];
    if (s == 0.0) continue;
    for (std::size_t j = 0; j < a.cols(); ++j) out[j] += s * a(i, j);
  }
  return out;
}

double max_abs(const Matrix& a) {
  double m = 0.0;
  for (double v : a.data()) m = std::max(m, std::abs(v));
  return m;
}

double frobenius_norm(const Matrix& a) {
  double s = 0.0;
  for (double v : a.data()) s += v * v;
  return std::sqrt(s);
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw DimensionError("max_abs_diff: shape");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

double relative_frobenius_distance(const Matrix& a, const Matrix& b) {
  const double denom = frobenius_norm(b);
  const double num = frobenius_norm(a - b);
  if (denom == 0.0) return num == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return num / denom;
}

namespace {

// In-place partial-pivot elimination of [a | rhs]; shared by solve/inverse.
Matrix eliminate(Matrix a, Matrix rhs) {
  const std::size_t n = a.rows();
  if (a.cols() != n) throw DimensionError("solve: matrix not square");
  if (rhs.rows() != n) throw DimensionError("solve: rhs rows != a rows");
  const double threshold = 1e-10 * std::max(max_abs(a), 1e-300);
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    double best = std::abs(a(c, c));
    for (std::size_t r = c + 1; r < n; ++r) {
      const double v = std::abs(a(r, c));
      if (v > best) {
        best = v;
        piv = r;
      }
    }
    if (best < threshold) {
      throw SingularMatrixError("solve: pivot " + std::to_string(best) +
                                    " below threshold " + std::to_string(threshold),
                                best);
    }
    if (piv != c) {
      for (std::size_t j = 0; j < n; ++j) std::swap(a(c, j), a(piv, j));
      for (std::size_t j = 0; j < rhs.cols(); ++j) std::swap(rhs(c, j), rhs(piv, j));
    }
    const double inv_piv = 1.0 / a(c, c);
    for (std::size_t r = c + 1; r < n; ++r) {
      const double factor = a(r, c) * inv_piv;
      if (factor == 0.0) continue;
      a(r, c) = 0.0;
      for (std::size_t j = c + 1; j < n; ++j) a(r, j) -= factor * a(c, j);
      for (std::size_t j = 0; j < rhs.cols(); ++j) rhs(r, j) -= factor * rhs(c, j);
    }
  }
  // Back substitution.
  Matrix x(n, rhs.cols());
  for (std::size_t jj = 0; jj < rhs.cols(); ++jj) {
    for (std::size_t ii = n; ii-- > 0;) {
      double acc = rhs(ii, jj);
      for (std::size_t kk = ii + 1; kk < n; ++kk) acc -= a(ii, kk) * x(kk, jj);
      x(ii, jj) = acc / a(ii, ii);
    }
  }
  return x;
}

}  // namespace

Matrix solve(const Matrix& a, const Matrix& rhs) { return eliminate(a, rhs); }

std::vector<double> solve(const Matrix& a, std::span<const double> rhs) {
  Matrix x = eliminate(a, Matrix::column_vector(rhs));
  return x.data();
}

Matrix inverse(const Matrix& a) { return eliminate(a, Matrix::identity(a.rows())); }

RrefResult rref(const Matrix& a, double tol) {
  if (!(tol > 0.0)) throw ConfigError("rref: tol must be positive");
  RrefResult res;
  res.reduced = a;
  Matrix& m = res.reduced;
  const std::size_t rows = m.rows(), cols = m.cols();
  std::size_t r = 0;
  for (std::size_t c = 0; c < cols && r < rows; ++c) {
    std::size_t piv = r;
    double best = std::abs(m(r, c));
    for (std::size_t i = r + 1; i < rows; ++i) {
      const double v = std::abs(m(i, c));
      if (v > best) {
        best = v;
        piv = i;
      }
    }
    if (best < tol) {
      for (std::size_t i = r; i < rows; ++i) m(i, c) = 0.0;
      continue;
    }
    if (piv != r) {
      for (std::size_t j = 0; j < cols; ++j) std::swap(m(r, j), m(piv, j));
    }
    const double inv_piv = 1.0 / m(r, c);
    for (std::size_t j = 0; j < cols; ++j) m(r, j) *= inv_piv;
    m(r, c) = 1.0;
    for (std::size_t i = 0; i < rows; ++i) {
      if (i == r) continue;
      const double factor = m(i, c);
      if (factor == 0.0) continue;
      for (std::size_t j = 0; j < cols; ++j) m(i, j) -= factor * m(r, j);
      m(i, c) = 0.0;
    }
    res.pivot_columns.push_back(c);
    ++r;
  }
  for (double& v : m.data()) {
    if (std::abs(v) < tol) v = 0.0;
  }
  res.rank = res.pivot_columns.size();
  return res;
}

RrefResult rref(const Matrix& a) { return rref(a, 1e-10 * (1.0 + max_abs(a))); }

PermutationKey::PermutationKey(std::vector<std::size_t> image) : image_(std::move(image)) {
  std::vector<bool> seen(image_.size(), false);
  for (std::size_t v : image_) {
    if (v >= image_.size() || seen[v]) {
      throw ConfigError("PermutationKey: image is not a bijection");
    }
    seen[v] = true;
  }
}

PermutationKey PermutationKey::identity(std::size_t n) {
  std::vector<std::size_t> image(n);
  std::iota(image.begin(), image.end(), 0);
  return PermutationKey(std::move(image));
}

PermutationKey PermutationKey::inverse() const {
  std::vector<std::size_t> inv(image_.size());
  for (std::size_t i = 0; i < image_.size(); ++i) inv[image_[i]] = i;
  return PermutationKey(std::move(inv));
}

Matrix apply_permutation(const PermutationKey& key, const Matrix& m, Side side,
                         bool inverse) {
  const std::size_t dim = side == Side::rows ? m.rows() : m.cols();
  if (key.size() != dim) throw DimensionError("apply_permutation: key size mismatch");
  Matrix out(m.rows(), m.cols());
  if (side == Side::rows) {
    for (std::size_t i = 0; i < m.rows(); ++i) {
      const std::size_t dst = inverse ? i : key.image_of(i);
      const std::size_t src = inverse ? key.image_of(i) : i;
      auto in_row = m.row(src);
      auto out_row = out.row(dst);
      std::copy(in_row.begin(), in_row.end(), out_row.begin());
    }
  } else {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      const std::size_t dst = inverse ? j : key.image_of(j);
      const std::size_t src = inverse ? key.image_of(j) : j;
      for (std::size_t i = 0; i < m.rows(); ++i) out(i, dst) = m(i, src);
    }
  }
  return out;
}

Matrix permutation_matrix(const PermutationKey& key) {
  Matrix p(key.size(), key.size());
  for (std::size_t i = 0; i < key.size(); ++i) p(key.image_of(i), i) = 1.0;
  return p;
}

PermutationKey compose(const PermutationKey& after, const PermutationKey& before) {
  if (after.size() != before.size()) throw DimensionError("compose: size mismatch");
  std::vector<std::size_t> image(before.size());
  for (std::size_t i = 0; i < before.size(); ++i) {
    image[i] = after.image_of(before.image_of(i));
  }
  return PermutationKey(std::move(image));
}

std::vector<double> row_sums(const Matrix& a) {
  std::vector<double> sums(a.rows(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) sums[i] += a(i, j);
  }
  return sums;
}

Matrix sorted_rows(const Matrix& a) {
  std::vector<std::size_t> order(a.rows());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t lhs, std::size_t rhs) {
    auto lr = a.row(lhs);
    auto rr = a.row(rhs);
    return std::lexicographical_compare(lr.begin(), lr.end(), rr.begin(), rr.end());
  });
  Matrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto src = a.row(order[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

}  // namespace cmlr
