#pragma once

#include <vector>

#include "etax/common.hpp"

namespace etax::linalg {

// Solve A x = b for a general square A via LU with partial pivoting.
// A is modified in place. Throws Error when A is numerically singular.
std::vector<double> lu_solve(Matrix a, std::vector<double> b);

// Solve A x = b for a symmetric positive definite A via Cholesky.
// Returns false (leaving x untouched) when the factorization breaks down.
bool cholesky_solve(const Matrix& a, const std::vector<double>& b, std::vector<double>& x);

// Eigenvalues of a symmetric matrix via cyclic Jacobi sweeps, ascending.
std::vector<double> symmetric_eigenvalues(Matrix a, int max_sweeps = 64);

// Ratio of extreme absolute eigenvalues. Returns +inf when the smallest
// magnitude is zero or the matrix is indefinite enough to cross zero.
double condition_number_sym(const Matrix& a);

}  // namespace etax::linalg
