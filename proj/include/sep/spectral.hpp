#pragma once

// Exact desk-scale oracle on Z_m = {0,1}^{V_m}: the generator t_m L_m, its
// perturbation by a potential aV, top eigenvalues, the variational principle,
// the Feynman–Kac bound, the path lemma, and exact exceedance probabilities
// of ∫V. Functions on Z_m are vectors indexed by state (bit x is η_x).
//
// Dense matrices are built up to 2^12 states; from 2^12 to 2^16 the operator
// is applied matrix-free and eigenvalues and exponentials come from Lanczos.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <vector>

#include "sep/bundles.hpp"
#include "sep/common.hpp"
#include "sep/configuration.hpp"
#include "sep/linalg.hpp"
#include "sep/measure.hpp"
#include "sep/quotient_graph.hpp"
#include "sep/rng.hpp"

namespace sep {

inline void check_dense_sites(std::size_t n) {
  if (n > static_cast<std::size_t>(caps::dense_sites)) {
    throw CapExceeded("dense generator on 2^" + std::to_string(n) + " states exceeds the cap 2^" +
                      std::to_string(caps::dense_sites));
  }
}

/// V(η) for every state η ∈ Z_m.
inline Vector potential_vector(const VFunctional& v) {
  const std::size_t n = v.graph().vertex_count();
  check_exact_sites(n);
  Vector out(Eigen::Index{1} << n);
  for (Eigen::Index s = 0; s < out.size(); ++s) {
    out[s] = v(Configuration::from_index(static_cast<std::uint64_t>(s), n));
  }
  return out;
}

/// Product-measure weights ν_ρ(η) for every state.
inline Vector bernoulli_vector(double rho, std::size_t sites) {
  const auto mu = bernoulli_measure(rho, sites);
  return Eigen::Map<const Vector>(mu.probabilities().data(), static_cast<Eigen::Index>(mu.size()));
}

/// Explicit matrix of t_m L_m (+ aV) on functions over Z_m.
struct DenseOperator {
  std::size_t sites = 0;
  Matrix matrix;
  bool symmetric = false;

  Eigen::Index dimension() const { return matrix.rows(); }
};

inline DenseOperator build_generator(const ExclusionModel& model, double t_m) {
  check_dense_sites(model.sites());
  if (!(t_m > 0)) throw ConfigError("t_m must be positive");
  const Eigen::Index dim = Eigen::Index{1} << model.sites();
  DenseOperator op;
  op.sites = model.sites();
  op.matrix = Matrix::Zero(dim, dim);
  for (Eigen::Index s = 0; s < dim; ++s) {
    const auto st = static_cast<std::uint64_t>(s);
    for (std::size_t e = 0; e < model.edge_count(); ++e) {
      const auto& edge = model.edge(e);
      if (((st >> edge.origin) & 1U) == ((st >> edge.terminus) & 1U)) continue;
      const double r = t_m * model.rate(e, st);
      op.matrix(s, static_cast<Eigen::Index>(model.swapped(st, e))) += r;
      op.matrix(s, s) -= r;
    }
  }
  op.symmetric = is_symmetric(op.matrix);
  return op;
}

inline DenseOperator build_generator(const QuotientGraph& graph, const JumpRate& c, double t_m) {
  return build_generator(make_exclusion_model(graph, c), t_m);
}

/// op + a·diag(V).
inline DenseOperator add_potential(DenseOperator op, double a, const Vector& V) {
  if (V.size() != op.dimension()) throw ConfigError("potential has the wrong dimension");
  op.matrix.diagonal() += a * V;
  return op;
}

/// t_m L_m + aV applied without storing a matrix. The transitions of every
/// state are listed once at construction.
class GeneratorOperator {
 public:
  GeneratorOperator(const ExclusionModel& model, double t_m, double a = 0, Vector V = {})
      : sites_(model.sites()), diagonal_(Vector::Zero(Eigen::Index{1} << model.sites())) {
    check_exact_sites(sites_);
    if (!(t_m > 0)) throw ConfigError("t_m must be positive");
    const Eigen::Index dim = diagonal_.size();
    if (V.size() != 0 && V.size() != dim) throw ConfigError("potential has the wrong dimension");
    offsets_.reserve(static_cast<std::size_t>(dim) + 1);
    offsets_.push_back(0);
    for (Eigen::Index s = 0; s < dim; ++s) {
      const auto st = static_cast<std::uint64_t>(s);
      for (std::size_t e = 0; e < model.edge_count(); ++e) {
        const auto& edge = model.edge(e);
        if (((st >> edge.origin) & 1U) == ((st >> edge.terminus) & 1U)) continue;
        const double r = t_m * model.rate(e, st);
        targets_.push_back(static_cast<std::uint32_t>(model.swapped(st, e)));
        rates_.push_back(r);
        diagonal_[s] -= r;
      }
      offsets_.push_back(targets_.size());
    }
    if (V.size() != 0) diagonal_ += a * V;
  }

  Eigen::Index dimension() const { return diagonal_.size(); }
  std::size_t sites() const { return sites_; }

  void apply(const Vector& x, Vector& y) const {
    y.resize(x.size());
    for (Eigen::Index s = 0; s < x.size(); ++s) {
      double acc = diagonal_[s] * x[s];
      for (std::size_t j = offsets_[s]; j < offsets_[s + 1]; ++j) acc += rates_[j] * x[targets_[j]];
      y[s] = acc;
    }
  }

  LinearMap map() const {
    return [this](const Vector& x, Vector& y) { apply(x, y); };
  }

 private:
  std::size_t sites_;
  Vector diagonal_;
  std::vector<std::size_t> offsets_;
  std::vector<std::uint32_t> targets_;
  std::vector<double> rates_;
};

/// Top eigenvalue of a symmetric dense operator.
inline double largest_eigenvalue(const DenseOperator& op, double tol = tol::eigen) {
  if (!op.symmetric || !is_symmetric(op.matrix)) throw Error("largest_eigenvalue needs a symmetric operator");
  const Matrix& m = op.matrix;
  const LinearMap apply = [&m](const Vector& x, Vector& y) { y.noalias() = m * x; };
  return lanczos_largest(apply, op.dimension(), tol).value;
}

inline double largest_eigenvalue(const GeneratorOperator& op, double tol = tol::eigen) {
  return lanczos_largest(op.map(), op.dimension(), tol).value;
}

/// λ(a): top eigenvalue of t_m L_m + aV, dense up to 2^12 states, matrix-free beyond.
inline double perturbed_top_eigenvalue(const ExclusionModel& model, double t_m, double a, const Vector& V) {
  if (model.sites() <= static_cast<std::size_t>(caps::dense_sites)) {
    return largest_eigenvalue(add_potential(build_generator(model, t_m), a, V));
  }
  return largest_eigenvalue(GeneratorOperator(model, t_m, a, V));
}

// --- Variational principle -----------------------------------------------------

/// a∫V dμ − t_m I_m(μ) for μ = F² dν / ∫F² dν.
inline double variational_value(const ExclusionModel& model, double t_m, double a, const Vector& V, const Vector& F) {
  std::vector<double> w(static_cast<std::size_t>(F.size()));
  for (Eigen::Index s = 0; s < F.size(); ++s) w[s] = F[s] * F[s];
  const auto mu = SmallMeasure::from_weights(model.sites(), std::move(w));
  double energy = 0;
  for (Eigen::Index s = 0; s < V.size(); ++s) energy += V[s] * mu[static_cast<std::uint64_t>(s)];
  double form = 0;
  for (double v : edge_energies(mu.probabilities(), model)) form += 0.5 * v;
  return a * energy - t_m * form;
}

struct VariationalReport {
  double lambda_eig = 0;
  double lambda_var = 0;
  double gap = 0;
  int restarts = 0;
  Vector maximizer;
};

/// Projected ascent of the Rayleigh quotient over non-negative F: each step
/// maximises over span{F, residual, previous step}, then projects onto F ≥ 0.
inline Vector rayleigh_ascent(const Matrix& A, Vector F, double tol = 1e-13, int max_iter = 20000) {
  Vector prev;
  F /= F.norm();
  for (int it = 0; it < max_iter; ++it) {
    const Vector AF = A * F;
    const double theta = F.dot(AF);
    const Vector r = AF - theta * F;
    if (r.norm() <= tol * std::max(1.0, std::abs(theta))) break;
    Matrix S(F.size(), prev.size() ? 3 : 2);
    S.col(0) = F;
    S.col(1) = r;
    if (prev.size()) S.col(2) = prev;
    Eigen::HouseholderQR<Matrix> qr(S);
    Matrix Q = qr.householderQ() * Matrix::Identity(S.rows(), S.cols());
    Eigen::SelfAdjointEigenSolver<Matrix> es(Q.transpose() * A * Q);
    Vector y = es.eigenvectors().col(S.cols() - 1);
    Vector next = Q * y;
    if (next.sum() < 0) next = -next;
    next = next.cwiseAbs();
    next /= next.norm();
    prev = next - F * F.dot(next);
    if (prev.norm() < 1e-300) prev.resize(0);
    F = next;
  }
  return F;
}

/// λ_var = sup over μ = F²dν of {a∫V dμ − t_m I_m(μ)} from `restarts` random
/// starts, against λ_eig; asserts |λ_eig − λ_var| < 1e−8.
inline VariationalReport variational_check(const ExclusionModel& model, double t_m, double a, const Vector& V,
                                           int restarts = 20, std::uint64_t seed = 1, double tol = 1e-8) {
  const auto op = add_potential(build_generator(model, t_m), a, V);
  VariationalReport r;
  r.lambda_eig = largest_eigenvalue(op);
  r.lambda_var = -std::numeric_limits<double>::infinity();
  r.restarts = restarts;
  for (int k = 0; k < restarts; ++k) {
    Philox rng(derive_seed(seed, static_cast<std::uint64_t>(k)));
    Vector F(op.dimension());
    for (Eigen::Index s = 0; s < F.size(); ++s) F[s] = rng.uniform_open0();
    F = rayleigh_ascent(op.matrix, F);
    const double value = variational_value(model, t_m, a, V, F);
    if (value > r.lambda_var) {
      r.lambda_var = value;
      r.maximizer = F;
    }
  }
  r.gap = r.lambda_eig - r.lambda_var;
  if (!(std::abs(r.gap) < tol)) {
    throw AssertionFailure("variational principle fails: eigenvalue " + std::to_string(r.lambda_eig) +
                           " vs supremum " + std::to_string(r.lambda_var));
  }
  return r;
}

inline VariationalReport variational_check(const QuotientGraph& graph, const JumpRate& c, double t_m, double a,
                                           const Vector& V, int restarts = 20, std::uint64_t seed = 1) {
  return variational_check(make_exclusion_model(graph, c), t_m, a, V, restarts, seed);
}

// --- Feynman–Kac ---------------------------------------------------------------

struct FeynmanKacReport {
  double expectation = 0;  // E^eq exp(a∫₀ᵀ V dt)
  double lambda = 0;       // λ(a)
  double bound = 0;        // exp(Tλ(a))
  double margin = 0;       // Tλ(a) − log expectation
};

/// ⟨1, e^{T(t_m L + aV)} 1⟩_ν with the uniform ν_m, and the bound exp(Tλ(a)).
inline FeynmanKacReport feynman_kac(const ExclusionModel& model, double t_m, double a, const Vector& V, double T,
                                    double tol = 1e-9) {
  if (!(T > 0)) throw ConfigError("horizon T must be positive");
  check_exact_sites(model.sites());
  FeynmanKacReport r;
  const Eigen::Index dim = Eigen::Index{1} << model.sites();
  if (model.sites() <= static_cast<std::size_t>(caps::dense_sites)) {
    const auto op = add_potential(build_generator(model, t_m), a, V);
    r.lambda = largest_eigenvalue(op);
    r.expectation = expm(Matrix(T * op.matrix)).sum() / static_cast<double>(dim);
  } else {
    const GeneratorOperator op(model, t_m, a, V);
    r.lambda = largest_eigenvalue(op);
    r.expectation = krylov_quadratic_exp(op.map(), T, Vector::Ones(dim)) / static_cast<double>(dim);
  }
  r.bound = std::exp(T * r.lambda);
  r.margin = T * r.lambda - std::log(r.expectation);
  if (r.margin < -tol) {
    throw AssertionFailure("Feynman-Kac bound fails with margin " + std::to_string(r.margin));
  }
  return r;
}

inline FeynmanKacReport feynman_kac(const QuotientGraph& graph, const JumpRate& c, double t_m, double a,
                                    const Vector& V, double T) {
  return feynman_kac(make_exclusion_model(graph, c), t_m, a, V, T);
}

/// min over the a grid of exp(Tλ(a) − aδN): the Chebyshev–Feynman–Kac upper
/// bound on P^eq((1/N)∫₀ᵀV dt ≥ δ).
inline double chebyshev_fk_bound(const ExclusionModel& model, double t_m, const Vector& V, double T, double delta,
                                 const std::vector<double>& a_grid) {
  const double N = static_cast<double>(model.sites());
  double best = 1.0;
  for (double a : a_grid) {
    if (!(a > 0)) throw ConfigError("a must be positive");
    best = std::min(best, std::exp(T * perturbed_top_eigenvalue(model, t_m, a, V) - a * delta * N));
  }
  return best;
}

// --- Path lemma ------------------------------------------------------------------

struct PathLemmaReport {
  double lhs = 0;  // ∫ (π_{o,σo} F)² dν
  double rhs = 0;  // 4 d(o,σo)² Σ_{E⁰} ∫ (π_e F)² dν
  double margin = 0;
  int distance = 0;
};

inline PathLemmaReport path_lemma_check(const QuotientGraph& graph, Vertex sigma, const Vector& F,
                                        bool assert_bound = true) {
  const std::size_t n = graph.vertex_count();
  check_exact_sites(n);
  if (F.size() != (Eigen::Index{1} << n)) throw ConfigError("F has the wrong dimension");
  if (sigma >= n) throw ConfigError("group element out of range");
  const int o = static_cast<int>(graph.origin());
  const int so = static_cast<int>(graph.act(graph.element(sigma), graph.origin()));
  const double inv = 1.0 / static_cast<double>(F.size());
  PathLemmaReport r;
  r.distance = graph.distance(graph.origin(), static_cast<Vertex>(so));
  for (Eigen::Index s = 0; s < F.size(); ++s) {
    const auto st = static_cast<std::uint64_t>(s);
    const double d = F[static_cast<Eigen::Index>(swap_bits(st, o, so))] - F[s];
    r.lhs += d * d * inv;
  }
  double origin_sum = 0;
  for (int g = 0; g < graph.degree(); ++g) {
    const auto& e = graph.edge(graph.edge_index(graph.origin(), g));
    for (Eigen::Index s = 0; s < F.size(); ++s) {
      const auto st = static_cast<std::uint64_t>(s);
      const double d = F[static_cast<Eigen::Index>(swap_bits(st, static_cast<int>(e.origin),
                                                             static_cast<int>(e.terminus)))] - F[s];
      origin_sum += d * d * inv;
    }
  }
  r.rhs = 4.0 * r.distance * r.distance * origin_sum;
  r.margin = r.rhs - r.lhs;
  if (assert_bound && r.margin < -tol::identity_abs * std::max(1.0, r.rhs)) {
    throw AssertionFailure("path lemma fails for sigma=" + std::to_string(sigma) + ": " + std::to_string(r.lhs) +
                           " > " + std::to_string(r.rhs));
  }
  return r;
}

/// C̃ = 4C/c₀.
inline double inclusion_constant(double C, double c0) {
  if (!(C > 0) || !(c0 > 0)) throw ConfigError("inclusion constant needs C > 0 and c0 > 0");
  return 4.0 * C / c0;
}

// --- Exact exceedance probability ----------------------------------------------

/// E_{ν_ρ} e^{−s∫₀ᵀ V dt} = ν_ρᵀ e^{T(t_m L − sV)} 1 for complex s.
inline std::complex<double> path_laplace_transform(const Matrix& generator, const Vector& V, const Vector& initial,
                                                   double T, std::complex<double> s) {
  using CMatrix = Eigen::MatrixXcd;
  CMatrix m = generator.cast<std::complex<double>>();
  m.diagonal() -= s * V.cast<std::complex<double>>();
  const CMatrix e = expm(CMatrix(T * m));
  return initial.cast<std::complex<double>>().dot(e.rowwise().sum());
}

/// P_{ν_ρ}(∫₀ᵀ V dt ≥ threshold) by Euler inversion of the path Laplace transform.
inline double exact_exceedance_probability(const ExclusionModel& model, double t_m, const Vector& V, double T,
                                           double threshold, double rho = 0.5) {
  if (!(T > 0)) throw ConfigError("horizon T must be positive");
  if (!(threshold > 0)) return 1.0;
  if (V.maxCoeff() * T < threshold) return 0.0;
  const auto op = build_generator(model, t_m);
  const Vector init = bernoulli_vector(rho, model.sites());
  const double p = 1.0 - euler_cdf([&](std::complex<double> s) {
    return path_laplace_transform(op.matrix, V, init, T, s);
  }, threshold);
  return std::clamp(p, 0.0, 1.0);
}

}  // namespace sep
