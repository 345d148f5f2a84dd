#pragma once

// Krylov methods for symmetric operators given only through their action,
// dense matrix exponentials, and numerical Laplace inversion.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <vector>
#include <unsupported/Eigen/MatrixFunctions>

#include "sep/common.hpp"

namespace sep {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
/// y = A x for a symmetric A.
using LinearMap = std::function<void(const Vector& x, Vector& y)>;

/// e^M by scaling and squaring with a degree-13 Padé approximant.
template <class Derived>
auto expm(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> out = m.derived().exp();
  return out;
}

inline bool is_symmetric(const Matrix& a, double tol = 1e-12) {
  if (a.rows() != a.cols()) return false;
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  return (a - a.transpose()).cwiseAbs().maxCoeff() <= tol * scale;
}

/// Lanczos basis with full reorthogonalisation.
class LanczosBasis {
 public:
  LanczosBasis(const LinearMap& apply, const Vector& start) : apply_(&apply) {
    const double n = start.norm();
    if (!(n > 0)) throw Error("Lanczos start vector is zero");
    norm_ = n;
    basis_.push_back(start / n);
  }

  /// Adds one vector; false once the Krylov space is invariant.
  bool extend() {
    if (done_) return false;
    const Vector& q = basis_.back();
    Vector w(q.size());
    (*apply_)(q, w);
    const double a = q.dot(w);
    alpha_.push_back(a);
    for (int pass = 0; pass < 2; ++pass) {
      for (const auto& b : basis_) w -= b.dot(w) * b;
    }
    const double b = w.norm();
    const double scale = std::max(1.0, std::abs(a));
    if (b <= 1e-13 * scale) {
      done_ = true;
      beta_.push_back(0.0);
      return false;
    }
    beta_.push_back(b);
    basis_.push_back(w / b);
    return true;
  }

  int steps() const { return static_cast<int>(alpha_.size()); }
  bool invariant() const { return done_; }
  double start_norm() const { return norm_; }
  /// β_k: coupling of the current tridiagonal block to the next basis vector.
  double residual_coupling() const { return beta_.empty() ? 0.0 : beta_.back(); }

  Matrix tridiagonal() const {
    const int k = steps();
    Matrix t = Matrix::Zero(k, k);
    for (int j = 0; j < k; ++j) {
      t(j, j) = alpha_[j];
      if (j + 1 < k) t(j, j + 1) = t(j + 1, j) = beta_[j];
    }
    return t;
  }

  /// Σ_j y_j q_j over the first y.size() basis vectors.
  Vector combine(const Vector& y) const {
    Vector out = Vector::Zero(basis_.front().size());
    for (Eigen::Index j = 0; j < y.size(); ++j) out += y[j] * basis_[j];
    return out;
  }

 private:
  const LinearMap* apply_;
  std::vector<Vector> basis_;
  std::vector<double> alpha_, beta_;
  double norm_ = 0;
  bool done_ = false;
};

struct EigenEstimate {
  double value = 0;
  Vector vector;
  double residual = 0;
  int iterations = 0;
};

/// Largest eigenvalue of a symmetric operator of dimension `dim`.
inline EigenEstimate lanczos_largest(const LinearMap& apply, Eigen::Index dim, double tol = tol::eigen,
                                     int max_iter = 400, const Vector* start = nullptr) {
  if (dim <= 0) throw Error("empty operator");
  LanczosBasis lb(apply, start ? *start : Vector::Ones(dim));
  EigenEstimate est;
  for (int k = 0; k < max_iter; ++k) {
    const bool grew = lb.extend();
    Eigen::SelfAdjointEigenSolver<Matrix> es(lb.tridiagonal());
    const Eigen::Index top = es.eigenvalues().size() - 1;
    est.value = es.eigenvalues()[top];
    const Vector y = es.eigenvectors().col(top);
    est.residual = std::abs(lb.residual_coupling() * y[y.size() - 1]);
    est.iterations = lb.steps();
    if (!grew || est.residual <= tol * std::max(1.0, std::abs(est.value))) {
      est.vector = lb.combine(y);
      return est;
    }
  }
  throw Error("Lanczos did not converge in " + std::to_string(max_iter) + " steps");
}

/// e^{tA} v by Lanczos, enlarging the Krylov space until the coefficients
/// of e^{tT_k} e_1 change by less than tol on two consecutive steps.
inline Vector krylov_expv(const LinearMap& apply, double t, const Vector& v, double tol = 1e-13,
                          int max_iter = 400) {
  if (v.norm() == 0) return v;
  LanczosBasis lb(apply, v);
  Vector last;
  int stable = 0;
  for (int k = 0; k < max_iter; ++k) {
    const bool grew = lb.extend();
    const Vector y = expm(Matrix(t * lb.tridiagonal())).col(0);
    if (last.size()) {
      Vector padded = Vector::Zero(y.size());
      padded.head(last.size()) = last;
      stable = (y - padded).norm() <= tol * y.norm() ? stable + 1 : 0;
    }
    if (!grew || stable >= 2) return lb.start_norm() * lb.combine(y);
    last = y;
  }
  throw Error("Krylov exponential did not converge in " + std::to_string(max_iter) + " steps");
}

/// vᵀ e^{tA} v by Gauss quadrature on the Lanczos tridiagonal matrix.
inline double krylov_quadratic_exp(const LinearMap& apply, double t, const Vector& v, double tol = 1e-13,
                                   int max_iter = 400) {
  LanczosBasis lb(apply, v);
  double last = 0;
  int stable = 0;
  for (int k = 0; k < max_iter; ++k) {
    const bool grew = lb.extend();
    const double val = lb.start_norm() * lb.start_norm() * expm(Matrix(t * lb.tridiagonal()))(0, 0);
    stable = k > 0 && std::abs(val - last) <= tol * std::abs(val) ? stable + 1 : 0;
    if (!grew || stable >= 2) return val;
    last = val;
  }
  throw Error("Krylov quadratic form did not converge in " + std::to_string(max_iter) + " steps");
}

/// P(X ≤ x) for X ≥ 0 from its Laplace transform s ↦ E e^{−sX} (Re s > 0),
/// by the Euler algorithm (Abate and Whitt): trapezoidal Bromwich sum with
/// binomial averaging of the last `m` partial sums. Discretisation error is
/// about e^{−A}.
inline double euler_cdf(const std::function<std::complex<double>(std::complex<double>)>& laplace, double x,
                        double A = 18.4, int n = 38, int m = 11) {
  if (!(x > 0)) throw ConfigError("Laplace inversion needs x > 0");
  const auto F = [&](std::complex<double> s) { return laplace(s) / s; };
  const double pi = std::numbers::pi;
  const double scale = std::exp(A / 2) / x;
  std::vector<double> partial(n + m + 1);
  double sum = 0.5 * scale * F({A / (2 * x), 0.0}).real();
  partial[0] = sum;
  for (int k = 1; k <= n + m; ++k) {
    const std::complex<double> s(A / (2 * x), k * pi / x);
    sum += (k % 2 ? -1.0 : 1.0) * scale * F(s).real();
    partial[k] = sum;
  }
  double out = 0, binom = 1;
  for (int k = 0; k <= m; ++k) {
    out += binom * partial[n + k];
    binom = binom * (m - k) / (k + 1);
  }
  return out / std::ldexp(1.0, m);
}

}  // namespace sep
