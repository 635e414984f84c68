#include "cmlr/kernels.hpp"

#include <cstdint>

namespace cmlr::kernels {

namespace {

void check_multiply(const Matrix& a, const Matrix& b, const Matrix& out) {
  if (a.cols() != b.rows() || out.rows() != a.rows() || out.cols() != b.cols()) {
    throw DimensionError("multiply: shape mismatch");
  }
}

void check_gram(const Matrix& x, std::span<const double> w, const Matrix& out) {
  if (w.size() != x.rows() || out.rows() != x.cols() || out.cols() != x.cols()) {
    throw DimensionError("weighted_gram: shape mismatch");
  }
}

}  // namespace

void multiply_into(const Matrix& a, const Matrix& b, Matrix& out) {
  check_multiply(a, b, out);
  const std::int64_t n = static_cast<std::int64_t>(a.rows());
  const std::size_t k = a.cols();
  const std::size_t m = b.cols();
  const double* ad = a.data().data();
  const double* bd = b.data().data();
  double* od = out.data().data();
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    double* orow = od + static_cast<std::size_t>(i) * m;
    for (std::size_t j = 0; j < m; ++j) orow[j] = 0.0;
    const double* arow = ad + static_cast<std::size_t>(i) * k;
    for (std::size_t l = 0; l < k; ++l) {
      const double av = arow[l];
      const double* brow = bd + l * m;
      for (std::size_t j = 0; j < m; ++j) orow[j] += av * brow[j];
    }
  }
}

void weighted_gram_into(const Matrix& x, std::span<const double> w, Matrix& out) {
  check_gram(x, w, out);
  const std::size_t n = x.rows();
  const std::int64_t p = static_cast<std::int64_t>(x.cols());
  const double* xd = x.data().data();
  double* od = out.data().data();
#pragma omp parallel for schedule(static)
  for (std::int64_t j = 0; j < p; ++j) {
    double* orow = od + static_cast<std::size_t>(j) * static_cast<std::size_t>(p);
    for (std::int64_t c = 0; c < p; ++c) orow[c] = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double* xrow = xd + i * static_cast<std::size_t>(p);
      const double scaled = w[i] * xrow[j];
      if (scaled == 0.0) continue;
      for (std::int64_t c = 0; c < p; ++c) orow[c] += scaled * xrow[c];
    }
  }
}

void matvec_into(const Matrix& a, std::span<const double> v, std::span<double> out) {
  if (v.size() != a.cols() || out.size() != a.rows()) {
    throw DimensionError("matvec: shape mismatch");
  }
  const std::int64_t n = static_cast<std::int64_t>(a.rows());
  const std::size_t k = a.cols();
  const double* ad = a.data().data();
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    const double* arow = ad + static_cast<std::size_t>(i) * k;
    double acc = 0.0;
    for (std::size_t j = 0; j < k; ++j) acc += arow[j] * v[j];
    out[i] = acc;
  }
}

namespace serial {

void multiply_into(const Matrix& a, const Matrix& b, Matrix& out) {
  check_multiply(a, b, out);
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) out(i, j) = 0.0;
    for (std::size_t l = 0; l < k; ++l) {
      const double av = a(i, l);
      for (std::size_t j = 0; j < m; ++j) out(i, j) += av * b(l, j);
    }
  }
}

void weighted_gram_into(const Matrix& x, std::span<const double> w, Matrix& out) {
  check_gram(x, w, out);
  const std::size_t n = x.rows(), p = x.cols();
  for (std::size_t j = 0; j < p; ++j) {
    for (std::size_t c = 0; c < p; ++c) out(j, c) = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double scaled = w[i] * x(i, j);
      if (scaled == 0.0) continue;
      for (std::size_t c = 0; c < p; ++c) out(j, c) += scaled * x(i, c);
    }
  }
}

void matvec_into(const Matrix& a, std::span<const double> v, std::span<double> out) {
  if (v.size() != a.cols() || out.size() != a.rows()) {
    throw DimensionError("matvec: shape mismatch");
  }
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) acc += a(i, j) * v[j];
    out[i] = acc;
  }
}

}  // namespace serial

}  // namespace cmlr::kernels
