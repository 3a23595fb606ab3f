#pragma once

#include <vector>

namespace cavscat::quadrature {

struct Rule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// Gauss-Legendre rule with n points on [-1, 1].
Rule gauss_legendre(int n);

/// Gauss-Lobatto-Legendre rule of polynomial degree N (N + 1 points).
Rule gauss_lobatto_legendre(int degree);

/// Legendre polynomial P_n(x) and its derivative.
void legendre_with_derivative(int n, double x, double& p, double& dp);

/// Lagrange interpolation on a fixed node set (barycentric form).
class Lagrange {
 public:
  explicit Lagrange(std::vector<double> nodes);

  int size() const { return static_cast<int>(nodes_.size()); }
  const std::vector<double>& nodes() const { return nodes_; }

  /// Basis values l_j(x).
  void values(double x, double* out) const;
  /// Basis values and first derivatives.
  void values_and_derivatives(double x, double* val, double* der) const;
  /// Differentiation matrix D(i, j) = l_j'(x_i), row-major.
  std::vector<double> differentiation_matrix() const;

 private:
  std::vector<double> nodes_;
  std::vector<double> bary_;
};

}  // namespace cavscat::quadrature
