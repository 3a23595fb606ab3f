#include "cavscat/linalg.hpp"

#include <algorithm>
#include <cmath>

namespace cavscat::linalg {
namespace {

struct Lu {
  CMatrix f;
  std::vector<int> piv;
  bool zero_pivot = false;
};

Lu factor(const CMatrix& m) {
  Lu lu{m, std::vector<int>(static_cast<std::size_t>(m.n)), false};
  const int n = m.n;
  for (int k = 0; k < n; ++k) {
    int p = k;
    for (int i = k + 1; i < n; ++i)
      if (std::abs(lu.f(i, k)) > std::abs(lu.f(p, k))) p = i;
    lu.piv[k] = p;
    if (p != k)
      for (int j = 0; j < n; ++j) std::swap(lu.f(k, j), lu.f(p, j));
    if (lu.f(k, k) == Complex(0.0)) {
      lu.zero_pivot = true;
      continue;
    }
    for (int i = k + 1; i < n; ++i) {
      lu.f(i, k) /= lu.f(k, k);
      for (int j = k + 1; j < n; ++j) lu.f(i, j) -= lu.f(i, k) * lu.f(k, j);
    }
  }
  return lu;
}

std::vector<Complex> lu_solve(const Lu& lu, std::vector<Complex> b) {
  const int n = lu.f.n;
  for (int k = 0; k < n; ++k) std::swap(b[k], b[lu.piv[k]]);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < i; ++j) b[i] -= lu.f(i, j) * b[j];
  for (int i = n - 1; i >= 0; --i) {
    for (int j = i + 1; j < n; ++j) b[i] -= lu.f(i, j) * b[j];
    b[i] /= lu.f(i, i);
  }
  return b;
}

// Solves A^H y = b using the same factors.
std::vector<Complex> lu_solve_adjoint(const Lu& lu, std::vector<Complex> b) {
  const int n = lu.f.n;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < i; ++j) b[i] -= std::conj(lu.f(j, i)) * b[j];
    b[i] /= std::conj(lu.f(i, i));
  }
  for (int i = n - 1; i >= 0; --i)
    for (int j = i + 1; j < n; ++j) b[i] -= std::conj(lu.f(j, i)) * b[j];
  for (int k = n - 1; k >= 0; --k) std::swap(b[k], b[lu.piv[k]]);
  return b;
}

double norm1(const CMatrix& m) {
  double best = 0.0;
  for (int j = 0; j < m.n; ++j) {
    double s = 0.0;
    for (int i = 0; i < m.n; ++i) s += std::abs(m(i, j));
    best = std::max(best, s);
  }
  return best;
}

double norm_inf(const CMatrix& m) {
  double best = 0.0;
  for (int i = 0; i < m.n; ++i) {
    double s = 0.0;
    for (int j = 0; j < m.n; ++j) s += std::abs(m(i, j));
    best = std::max(best, s);
  }
  return best;
}

double vec_norm1(const std::vector<Complex>& v) {
  double s = 0.0;
  for (const auto& z : v) s += std::abs(z);
  return s;
}

double vec_norm_inf(const std::vector<Complex>& v) {
  double s = 0.0;
  for (const auto& z : v) s = std::max(s, std::abs(z));
  return s;
}

// Hager's estimate of |A^{-1}|_1.
double inverse_norm1_estimate(const Lu& lu) {
  const int n = lu.f.n;
  std::vector<Complex> x(static_cast<std::size_t>(n), Complex(1.0 / n));
  double est = 0.0;
  for (int iter = 0; iter < 5; ++iter) {
    const std::vector<Complex> y = lu_solve(lu, x);
    est = vec_norm1(y);
    std::vector<Complex> s(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) s[i] = std::abs(y[i]) > 0.0 ? y[i] / std::abs(y[i]) : Complex(1.0);
    const std::vector<Complex> z = lu_solve_adjoint(lu, s);
    int jmax = 0;
    for (int j = 1; j < n; ++j)
      if (std::abs(z[j]) > std::abs(z[jmax])) jmax = j;
    Complex zx = 0.0;
    for (int j = 0; j < n; ++j) zx += std::conj(z[j]) * x[j];
    if (std::abs(z[jmax]) <= std::real(zx)) break;
    std::fill(x.begin(), x.end(), Complex(0.0));
    x[jmax] = 1.0;
  }
  return est;
}

}  // namespace

std::vector<Complex> multiply(const CMatrix& m, const std::vector<Complex>& x) {
  std::vector<Complex> y(static_cast<std::size_t>(m.n), Complex(0.0));
  for (int i = 0; i < m.n; ++i)
    for (int j = 0; j < m.n; ++j) y[i] += m(i, j) * x[j];
  return y;
}

SolveResult solve(const CMatrix& m, const std::vector<Complex>& b) {
  SolveResult r;
  const Lu lu = factor(m);
  if (lu.zero_pivot) {
    r.singular = true;
    r.condition_estimate = INFINITY;
    r.x.assign(static_cast<std::size_t>(m.n), Complex(NAN, NAN));
    r.relative_residual = INFINITY;
    return r;
  }
  r.x = lu_solve(lu, b);
  r.condition_estimate = norm1(m) * inverse_norm1_estimate(lu);
  r.singular = !(r.condition_estimate < 1e14);
  const std::vector<Complex> ax = multiply(m, r.x);
  double res = 0.0;
  for (int i = 0; i < m.n; ++i) res = std::max(res, std::abs(ax[i] - b[i]));
  const double scale = norm_inf(m) * vec_norm_inf(r.x) + vec_norm_inf(b);
  r.relative_residual = scale > 0.0 ? res / scale : res;
  return r;
}

}  // namespace cavscat::linalg
