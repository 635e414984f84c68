#pragma once

#include <span>

#include "cmlr/matrix.hpp"

namespace cmlr::kernels {

// Hot data-parallel loops. The OpenMP versions are deterministic: every
// output element is written by exactly one thread and each inner reduction
// runs in a fixed serial order, so results are identical for any thread
// count (and identical to the serial reference below).

void multiply_into(const Matrix& a, const Matrix& b, Matrix& out);

// out = x^T diag(w) x; out must be cols x cols.
void weighted_gram_into(const Matrix& x, std::span<const double> w, Matrix& out);

void matvec_into(const Matrix& a, std::span<const double> v, std::span<double> out);

namespace serial {

// Reference implementations kept for testing and the kernel benchmark.
void multiply_into(const Matrix& a, const Matrix& b, Matrix& out);
void weighted_gram_into(const Matrix& x, std::span<const double> w, Matrix& out);
void matvec_into(const Matrix& a, std::span<const double> v, std::span<double> out);

}  // namespace serial

}  // namespace cmlr::kernels
