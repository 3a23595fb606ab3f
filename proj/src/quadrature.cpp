#include "cavscat/quadrature.hpp"

#include <cmath>

#include "cavscat/errors.hpp"

namespace cavscat::quadrature {

void legendre_with_derivative(int n, double x, double& p, double& dp) {
  double p0 = 1.0, p1 = x;
  if (n == 0) {
    p = 1.0;
    dp = 0.0;
    return;
  }
  for (int k = 1; k < n; ++k) {
    const double p2 = ((2 * k + 1) * x * p1 - k * p0) / (k + 1);
    p0 = p1;
    p1 = p2;
  }
  p = p1;
  if (std::abs(x) == 1.0) {
    dp = (x > 0 ? 1.0 : ((n % 2) ? 1.0 : -1.0)) * 0.5 * n * (n + 1);
  } else {
    dp = n * (x * p1 - p0) / (x * x - 1.0);
  }
}

Rule gauss_legendre(int n) {
  if (n < 1) throw DomainError("quadrature", "Gauss-Legendre needs n >= 1");
  Rule r;
  r.nodes.resize(n);
  r.weights.resize(n);
  for (int i = 0; i < n; ++i) {
    double x = -std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double p = 0.0, dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      legendre_with_derivative(n, x, p, dp);
      const double dx = p / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    legendre_with_derivative(n, x, p, dp);
    r.nodes[i] = x;
    r.weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
  }
  return r;
}

Rule gauss_lobatto_legendre(int degree) {
  if (degree < 1) throw DomainError("quadrature", "GLL needs degree >= 1");
  const int n = degree + 1;
  Rule r;
  r.nodes.resize(n);
  r.weights.resize(n);
  r.nodes[0] = -1.0;
  r.nodes[n - 1] = 1.0;
  // Interior nodes are roots of P_N'; Newton on (1 - x^2) P_N' starting from
  // Chebyshev-Gauss-Lobatto points.
  for (int i = 1; i < n - 1; ++i) {
    double x = -std::cos(M_PI * i / degree);
    for (int it = 0; it < 100; ++it) {
      double p, dp;
      legendre_with_derivative(degree, x, p, dp);
      // d/dx[(1-x^2) P'] = -N(N+1) P
      const double f = (1.0 - x * x) * dp;
      const double df = -degree * (degree + 1.0) * p;
      const double dx = f / df;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    r.nodes[i] = x;
  }
  for (int i = 0; i < n; ++i) {
    double p, dp;
    legendre_with_derivative(degree, r.nodes[i], p, dp);
    r.weights[i] = 2.0 / (degree * (degree + 1.0) * p * p);
  }
  return r;
}

Lagrange::Lagrange(std::vector<double> nodes) : nodes_(std::move(nodes)), bary_(nodes_.size(), 1.0) {
  for (std::size_t j = 0; j < nodes_.size(); ++j)
    for (std::size_t k = 0; k < nodes_.size(); ++k)
      if (k != j) bary_[j] /= (nodes_[j] - nodes_[k]);
}

void Lagrange::values(double x, double* out) const {
  const int n = size();
  for (int j = 0; j < n; ++j) {
    if (x == nodes_[j]) {
      for (int k = 0; k < n; ++k) out[k] = (k == j) ? 1.0 : 0.0;
      return;
    }
  }
  double sum = 0.0;
  for (int j = 0; j < n; ++j) {
    out[j] = bary_[j] / (x - nodes_[j]);
    sum += out[j];
  }
  for (int j = 0; j < n; ++j) out[j] /= sum;
}

void Lagrange::values_and_derivatives(double x, double* val, double* der) const {
  // Direct product form: robust at the nodes, n is small.
  const int n = size();
  for (int j = 0; j < n; ++j) {
    double v = 1.0;
    double d = 0.0;
    for (int k = 0; k < n; ++k) {
      if (k == j) continue;
      const double denom = nodes_[j] - nodes_[k];
      double term = 1.0 / denom;
      for (int m = 0; m < n; ++m) {
        if (m == j || m == k) continue;
        term *= (x - nodes_[m]) / (nodes_[j] - nodes_[m]);
      }
      d += term;
      v *= (x - nodes_[k]) / denom;
    }
    val[j] = v;
    der[j] = d;
  }
}

std::vector<double> Lagrange::differentiation_matrix() const {
  const int n = size();
  std::vector<double> d(static_cast<std::size_t>(n) * n);
  std::vector<double> val(n), der(n);
  for (int i = 0; i < n; ++i) {
    values_and_derivatives(nodes_[i], val.data(), der.data());
    for (int j = 0; j < n; ++j) d[static_cast<std::size_t>(i) * n + j] = der[j];
  }
  return d;
}

}  // namespace cavscat::quadrature
