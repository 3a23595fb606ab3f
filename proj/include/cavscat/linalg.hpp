#pragma once

#include <vector>

#include "cavscat/vec.hpp"

namespace cavscat::linalg {

/// Small dense complex matrix, row-major.
struct CMatrix {
  int n = 0;
  std::vector<Complex> a;

  explicit CMatrix(int size = 0) : n(size), a(static_cast<std::size_t>(size) * size) {}
  Complex& operator()(int i, int j) { return a[static_cast<std::size_t>(i) * n + j]; }
  const Complex& operator()(int i, int j) const { return a[static_cast<std::size_t>(i) * n + j]; }
};

struct SolveResult {
  std::vector<Complex> x;
  bool singular = false;
  double condition_estimate = 0.0;  ///< 1-norm condition number estimate
  double relative_residual = 0.0;   ///< |Ax - b| / (|A| |x| + |b|), infinity norms
};

/// Gaussian elimination with partial pivoting. The condition number is
/// estimated with Hager's 1-norm power iteration on the LU factors. A zero
/// pivot or an estimate above 1e14 flags the result as singular.
SolveResult solve(const CMatrix& m, const std::vector<Complex>& b);

std::vector<Complex> multiply(const CMatrix& m, const std::vector<Complex>& x);

}  // namespace cavscat::linalg
