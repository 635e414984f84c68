#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

#include "cmlr/error.hpp"

namespace cmlr {

// Dense real matrix, row-major. Values are immutable by convention once a
// matrix leaves the function that built it; all operations return new
// matrices and are safe to run concurrently on shared inputs.
class Matrix {
public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> entries);

  static Matrix identity(std::size_t n);
  static Matrix diagonal(std::span<const double> d);
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix row_vector(std::span<const double> v);
  static Matrix column_vector(std::span<const double> v);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }
  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }

  const std::vector<double>& data() const noexcept { return data_; }
  std::vector<double>& data() noexcept { return data_; }

  bool is_finite() const noexcept;
  void ensure_finite(const char* what) const;

private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix transpose(const Matrix& a);
Matrix multiply(const Matrix& a, const Matrix& b);
Matrix operator*(const Matrix& a, const Matrix& b);
Matrix operator+(const Matrix& a, const Matrix& b);
Matrix operator-(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double s);

std::vector<double> matvec(const Matrix& a, std::span<const double> v);
std::vector<double> vecmat(std::span<const double> v, const Matrix& a);

double max_abs(const Matrix& a);
double frobenius_norm(const Matrix& a);
double max_abs_diff(const Matrix& a, const Matrix& b);
// ||a - b||_F / ||b||_F (0/0 -> 0).
double relative_frobenius_distance(const Matrix& a, const Matrix& b);

// Row-pivoted Gaussian elimination; pivot threshold is 1e-10 * max|a|.
// Throws SingularMatrixError carrying the failing pivot magnitude.
Matrix solve(const Matrix& a, const Matrix& rhs);
std::vector<double> solve(const Matrix& a, std::span<const double> rhs);
Matrix inverse(const Matrix& a);

struct RrefResult {
  Matrix reduced;
  std::size_t rank = 0;
  std::vector<std::size_t> pivot_columns;
};

// Gauss-Jordan with partial pivoting; entries below tol are treated as zero.
RrefResult rref(const Matrix& a, double tol);
RrefResult rref(const Matrix& a);  // tol = 1e-10 * (1 + max|a|)

// Secret row (or column) shuffle: image[i] is the destination of source i.
class PermutationKey {
public:
  PermutationKey() = default;
  explicit PermutationKey(std::vector<std::size_t> image);
  static PermutationKey identity(std::size_t n);

  std::size_t size() const noexcept { return image_.size(); }
  std::size_t image_of(std::size_t i) const { return image_[i]; }
  const std::vector<std::size_t>& image() const noexcept { return image_; }
  PermutationKey inverse() const;

  bool operator==(const PermutationKey&) const = default;

private:
  std::vector<std::size_t> image_;
};

enum class Side { rows, cols };

// Forward on rows: out[image[i], :] = in[i, :] (left-multiplication by the
// permutation matrix); cols side corresponds to right-multiplication by its
// transpose. inverse applies the inverse key.
Matrix apply_permutation(const PermutationKey& key, const Matrix& m, Side side,
                         bool inverse = false);
Matrix permutation_matrix(const PermutationKey& key);
// compose(after, before): apply `before`, then `after`.
PermutationKey compose(const PermutationKey& after, const PermutationKey& before);

std::vector<double> row_sums(const Matrix& a);
// Rows sorted lexicographically; canonical form for permutation-invariant
// comparisons.
Matrix sorted_rows(const Matrix& a);

}  // namespace cmlr
