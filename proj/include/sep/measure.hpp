#pragma once

// Exact measures on small configuration spaces, Dirichlet forms (full,
// restricted to a ball of the Cayley graph, two-block), group averages and
// empirical marginals.
//
// States are indices: bit x of a state is η_x. Since ν_m is uniform, the
// density is φ = 2^n μ, and ∫ (π_e √φ)² dν = Σ_η (√μ(η^e) − √μ(η))², which is
// how every form below is evaluated.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "sep/bundles.hpp"
#include "sep/common.hpp"
#include "sep/configuration.hpp"
#include "sep/group.hpp"
#include "sep/quotient_graph.hpp"
#include "sep/rng.hpp"

namespace sep {

inline void check_exact_sites(std::size_t n, int cap = caps::exact_sites) {
  if (n > static_cast<std::size_t>(cap)) {
    throw CapExceeded("state space 2^" + std::to_string(n) + " exceeds the exact cap 2^" + std::to_string(cap));
  }
}

inline std::uint64_t swap_bits(std::uint64_t state, int x, int y) {
  const std::uint64_t d = ((state >> x) ^ (state >> y)) & 1U;
  return state ^ ((d << x) | (d << y));
}

/// Exclusion dynamics on a finite site set: oriented edges with reversal and a
/// jump rate read through per-edge windows of site indices.
class ExclusionModel {
 public:
  struct Edge {
    int origin = 0;
    int terminus = 0;
    int generator = 0;
    std::uint32_t reverse = 0;
    std::vector<int> window;
  };

  ExclusionModel(std::size_t sites, std::vector<Edge> edges, JumpRate rate)
      : sites_(sites), edges_(std::move(edges)), rate_(std::move(rate)) {
    for (std::size_t e = 0; e < edges_.size(); ++e) {
      const auto& r = edges_[edges_[e].reverse];
      if (r.reverse != e || r.origin != edges_[e].terminus || r.terminus != edges_[e].origin) {
        throw Error("edge reversal is not an involution");
      }
    }
  }

  std::size_t sites() const { return sites_; }
  std::size_t edge_count() const { return edges_.size(); }
  const Edge& edge(std::size_t e) const { return edges_[e]; }
  const std::vector<Edge>& edges() const { return edges_; }
  const JumpRate& jump_rate() const { return rate_; }

  Pattern pattern(std::size_t e, std::uint64_t state) const {
    const auto& w = edges_[e].window;
    Pattern p = 0;
    for (std::size_t j = 0; j < w.size(); ++j) p |= static_cast<Pattern>((state >> w[j]) & 1U) << j;
    return p;
  }

  double rate(std::size_t e, std::uint64_t state) const {
    return rate_.bundle().value(edges_[e].generator, pattern(e, state));
  }

  std::uint64_t swapped(std::uint64_t state, std::size_t e) const {
    return swap_bits(state, edges_[e].origin, edges_[e].terminus);
  }

 private:
  std::size_t sites_;
  std::vector<Edge> edges_;
  JumpRate rate_;
};

/// The full exclusion model on X_m.
inline ExclusionModel make_exclusion_model(const QuotientGraph& graph, const JumpRate& rate) {
  if (rate.bundle().spec().generators != graph.spec().generators) throw ConfigError("jump rate built for another group");
  std::vector<ExclusionModel::Edge> edges(graph.edges().size());
  BoundEdgeBundle bound(rate.bundle(), graph);
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const auto& ge = graph.edge(e);
    auto& out = edges[e];
    out.origin = static_cast<int>(ge.origin);
    out.terminus = static_cast<int>(ge.terminus);
    out.generator = ge.generator;
    out.reverse = ge.reverse;
    std::size_t width = 0;
    const Vertex* row = bound.window_row(e, &width);
    out.window.assign(row, row + width);
  }
  return ExclusionModel(graph.vertex_count(), std::move(edges), rate);
}

/// The model restricted to a vertex subset of X_m: sites are `vertices` in
/// the given order, edges those of X_m with both endpoints inside. Every rate
/// window must lie inside the subset.
inline ExclusionModel restrict_model(const QuotientGraph& graph, const JumpRate& rate,
                                     const std::vector<Vertex>& vertices) {
  std::vector<int> local(graph.vertex_count(), -1);
  for (std::size_t j = 0; j < vertices.size(); ++j) {
    if (local[vertices[j]] >= 0) throw ConfigError("repeated vertex in restriction");
    local[vertices[j]] = static_cast<int>(j);
  }
  const auto full = make_exclusion_model(graph, rate);
  std::vector<std::size_t> kept;
  std::vector<std::int64_t> new_index(full.edge_count(), -1);
  for (std::size_t e = 0; e < full.edge_count(); ++e) {
    if (local[full.edge(e).origin] >= 0 && local[full.edge(e).terminus] >= 0) {
      new_index[e] = static_cast<std::int64_t>(kept.size());
      kept.push_back(e);
    }
  }
  std::vector<ExclusionModel::Edge> edges;
  for (std::size_t e : kept) {
    ExclusionModel::Edge out = full.edge(e);
    out.origin = local[out.origin];
    out.terminus = local[out.terminus];
    out.reverse = static_cast<std::uint32_t>(new_index[out.reverse]);
    for (int& w : out.window) {
      if (local[w] < 0) throw ConfigError("jump-rate window leaves the restricted vertex set");
      w = local[w];
    }
    edges.push_back(std::move(out));
  }
  return ExclusionModel(vertices.size(), std::move(edges), rate);
}

/// Λ ⊂ X given by group elements; E_Λ = {(x, xs) : x, xs ∈ Λ} with unit rates.
inline ExclusionModel cayley_window_model(const TowerSpec& spec, const std::vector<Element>& sites) {
  std::vector<ExclusionModel::Edge> edges;
  auto find = [&](const Element& g) {
    auto it = std::find(sites.begin(), sites.end(), g);
    return it == sites.end() ? -1 : static_cast<int>(it - sites.begin());
  };
  std::vector<std::vector<int>> index(sites.size(), std::vector<int>(spec.generator_count(), -1));
  for (std::size_t x = 0; x < sites.size(); ++x) {
    for (int s = 0; s < spec.generator_count(); ++s) {
      const int y = find(spec.multiply(sites[x], spec.generators[s]));
      if (y < 0) continue;
      index[x][s] = static_cast<int>(edges.size());
      ExclusionModel::Edge e;
      e.origin = static_cast<int>(x);
      e.terminus = y;
      e.generator = s;
      e.window = {e.origin, e.terminus};
      edges.push_back(e);
    }
  }
  for (auto& e : edges) e.reverse = static_cast<std::uint32_t>(index[e.terminus][spec.inverse_generator(e.generator)]);
  // radius-0 unit rate, so every window is the two endpoints
  return ExclusionModel(sites.size(), std::move(edges), constant_rate(spec, 1.0));
}

// --- measures ---------------------------------------------------------------

/// Probability vector over all 2^n configurations.
class SmallMeasure {
 public:
  SmallMeasure() = default;
  SmallMeasure(std::size_t sites, std::vector<double> p) : sites_(sites), p_(std::move(p)) {
    check_exact_sites(sites);
    if (p_.size() != (std::size_t{1} << sites)) throw ConfigError("measure vector must have 2^n entries");
    validate();
  }

  void validate() const {
    double sum = 0;
    for (double v : p_) {
      if (!(v >= 0)) throw AssertionFailure("measure has a negative or NaN entry");
      sum += v;
    }
    if (std::abs(sum - 1.0) > tol::probability_sum * static_cast<double>(std::max<std::size_t>(p_.size() / 1024, 1))) {
      throw AssertionFailure("measure does not sum to 1");
    }
  }

  std::size_t sites() const { return sites_; }
  std::size_t size() const { return p_.size(); }
  double operator[](std::uint64_t state) const { return p_[state]; }
  const std::vector<double>& probabilities() const { return p_; }

  static SmallMeasure point_mass(const Configuration& eta) {
    std::vector<double> p(std::size_t{1} << eta.size(), 0.0);
    p[eta.index()] = 1.0;
    return SmallMeasure(eta.size(), std::move(p));
  }

  /// Normalises a non-negative weight vector.
  static SmallMeasure from_weights(std::size_t sites, std::vector<double> w) {
    double sum = 0;
    for (double v : w) sum += v;
    if (!(sum > 0)) throw ConfigError("weights must have positive mass");
    for (double& v : w) v /= sum;
    return SmallMeasure(sites, std::move(w));
  }

 private:
  std::size_t sites_ = 0;
  std::vector<double> p_;
};

inline double bernoulli_weight(double rho, int ones, int zeros) {
  return std::pow(rho, ones) * std::pow(1 - rho, zeros);
}

inline SmallMeasure bernoulli_measure(double rho, std::size_t sites) {
  if (!(rho >= 0 && rho <= 1)) throw ConfigError("density must lie in [0, 1]");
  check_exact_sites(sites);
  std::vector<double> p(std::size_t{1} << sites);
  const int n = static_cast<int>(sites);
  for (std::size_t s = 0; s < p.size(); ++s) {
    const int k = std::popcount(s);
    p[s] = bernoulli_weight(rho, k, n - k);
  }
  return SmallMeasure(sites, std::move(p));
}

/// Product Bernoulli sampler for spaces beyond the exact cap.
class BernoulliSampler {
 public:
  BernoulliSampler(double rho, std::size_t sites) : rho_(rho), sites_(sites) {
    if (!(rho >= 0 && rho <= 1)) throw ConfigError("density must lie in [0, 1]");
  }
  Configuration operator()(Philox& rng) const {
    Configuration eta(sites_);
    if (rho_ == 0.5) {
      // one random bit per site, drawn 64 at a time
      for (std::size_t x = 0; x < sites_; x += 64) {
        const std::uint64_t w = rng();
        for (std::size_t j = 0; j < 64 && x + j < sites_; ++j) eta.set(x + j, (w >> j) & 1U);
      }
    } else {
      for (std::size_t x = 0; x < sites_; ++x) eta.set(x, rng.coin(rho_));
    }
    return eta;
  }
  double rho() const { return rho_; }
  std::size_t sites() const { return sites_; }

 private:
  double rho_;
  std::size_t sites_;
};

/// Exact vector up to the cap, otherwise a sampler.
inline std::variant<SmallMeasure, BernoulliSampler> bernoulli(double rho, std::size_t sites) {
  if (sites <= static_cast<std::size_t>(caps::exact_sites)) return bernoulli_measure(rho, sites);
  return BernoulliSampler(rho, sites);
}

/// μ̄ = (1/N) Σ_σ μ∘σ.
inline SmallMeasure group_average(const SmallMeasure& mu, const QuotientGraph& graph) {
  if (mu.sites() != graph.vertex_count()) throw ConfigError("measure and graph sizes differ");
  std::vector<double> out(mu.size(), 0.0);
  const double n = static_cast<double>(graph.vertex_count());
  for (Vertex s = 0; s < graph.vertex_count(); ++s) {
    const auto perm = graph.action_permutation(s);
    for (std::uint64_t st = 0; st < mu.size(); ++st) out[act_on_index(perm, st)] += mu[st] / n;
  }
  return SmallMeasure(mu.sites(), std::move(out));
}

inline bool is_invariant(const SmallMeasure& mu, const QuotientGraph& graph, double tol = 1e-14) {
  for (Vertex s = 1; s < graph.vertex_count(); ++s) {
    const auto perm = graph.action_permutation(s);
    for (std::uint64_t st = 0; st < mu.size(); ++st) {
      if (std::abs(mu[act_on_index(perm, st)] - mu[st]) > tol) return false;
    }
  }
  return true;
}

/// Marginal of μ on the sites listed in `sites` (bit j of the result index = η_{sites[j]}).
inline std::vector<double> marginal(const SmallMeasure& mu, const std::vector<Vertex>& sites) {
  check_exact_sites(sites.size());
  std::vector<double> out(std::size_t{1} << sites.size(), 0.0);
  for (std::uint64_t st = 0; st < mu.size(); ++st) {
    if (mu[st] == 0) continue;
    std::uint64_t q = 0;
    for (std::size_t j = 0; j < sites.size(); ++j) q |= ((st >> sites[j]) & 1U) << j;
    out[q] += mu[st];
  }
  return out;
}

// --- Dirichlet forms ----------------------------------------------------------

struct DirichletReport {
  double total = 0;               // (1/2) Σ_{E_m} ∫ c (π_e √φ)² dν
  double fundamental_domain = 0;  // N · (1/2) Σ_{E⁰} ∫ c (π_e √φ)² dν
  std::vector<double> per_edge;   // ∫ c (π_e √φ)² dν for each e
};

/// ∫ c (π_e √φ)² dν for each oriented edge; with c ≡ 1 when `unit` is set.
inline std::vector<double> edge_energies(const std::vector<double>& p, const ExclusionModel& model, bool unit = false) {
  std::vector<double> out(model.edge_count(), 0.0);
  std::vector<double> root(p.size());
  for (std::size_t s = 0; s < p.size(); ++s) root[s] = std::sqrt(p[s]);
  for (std::size_t e = 0; e < model.edge_count(); ++e) {
    double acc = 0;
    const int x = model.edge(e).origin, y = model.edge(e).terminus;
    for (std::uint64_t st = 0; st < p.size(); ++st) {
      if (((st >> x) & 1U) == ((st >> y) & 1U)) continue;
      const double d = root[swap_bits(st, x, y)] - root[st];
      acc += (unit ? 1.0 : model.rate(e, st)) * d * d;
    }
    out[e] = acc;
  }
  return out;
}

/// I_m(μ) and its E⁰ decomposition on X_m. E⁰ is the set of edges leaving the origin.
inline DirichletReport dirichlet_form(const SmallMeasure& mu, const ExclusionModel& model, int degree,
                                      std::size_t index) {
  if (mu.sites() != model.sites()) throw ConfigError("measure and model sizes differ");
  DirichletReport r;
  r.per_edge = edge_energies(mu.probabilities(), model);
  double origin_sum = 0;
  for (std::size_t e = 0; e < r.per_edge.size(); ++e) {
    r.total += 0.5 * r.per_edge[e];
    if (model.edge(e).origin == 0 && e < static_cast<std::size_t>(degree)) origin_sum += r.per_edge[e];
  }
  r.fundamental_domain = static_cast<double>(index) * 0.5 * origin_sum;
  return r;
}

inline DirichletReport dirichlet_form(const SmallMeasure& mu, const JumpRate& c, const QuotientGraph& graph) {
  return dirichlet_form(mu, make_exclusion_model(graph, c), graph.degree(), graph.vertex_count());
}

/// Asserts I_m(μ) = [Γ:Γ_m]·(1/2)Σ_{E⁰}∫c(π_e√φ)²dν for an invariant μ.
inline DirichletReport checked_dirichlet_form(const SmallMeasure& mu, const JumpRate& c, const QuotientGraph& graph) {
  auto r = dirichlet_form(mu, c, graph);
  if (is_invariant(mu, graph) &&
      !approx_equal(r.total, r.fundamental_domain, tol::identity_abs, tol::identity_rel)) {
    throw AssertionFailure("Dirichlet identity fails: " + std::to_string(r.total) + " vs " +
                           std::to_string(r.fundamental_domain));
  }
  return r;
}

/// −⟨√φ, L √φ⟩_ν evaluated directly from the generator action.
inline double dirichlet_form_via_generator(const SmallMeasure& mu, const ExclusionModel& model) {
  const auto& p = mu.probabilities();
  double acc = 0;
  for (std::uint64_t st = 0; st < p.size(); ++st) {
    if (p[st] == 0) continue;
    const double h = std::sqrt(p[st]);
    double lh = 0;
    for (std::size_t e = 0; e < model.edge_count(); ++e) {
      lh += model.rate(e, st) * (std::sqrt(p[model.swapped(st, e)]) - h);
    }
    acc += h * lh;
  }
  return -acc;
}

/// −∫ √φ L° √φ dν on Z_Λ with L° = (1/2) Σ_{E_Λ} π_e, for a probability
/// vector `p` on Z_Λ; equals (1/4) Σ_{E_Λ} ∫ (π_e √φ)² dν.
inline double restricted_form(const std::vector<double>& p, const ExclusionModel& lambda) {
  if (p.size() != (std::size_t{1} << lambda.sites())) throw ConfigError("marginal has the wrong size");
  double s = 0;
  for (double v : edge_energies(p, lambda, true)) s += v;
  return 0.25 * s;
}

/// Λ = B_X(o, K) in the Cayley graph, in canonical order.
inline std::vector<Element> cayley_ball_sites(const TowerSpec& spec, int K) { return vertex_window(spec, K); }

/// μ|_Λ for Λ ⊂ X: the marginal of the periodic lift of μ.
inline std::vector<double> lifted_marginal(const SmallMeasure& mu, const QuotientGraph& graph,
                                           const std::vector<Element>& sites) {
  std::vector<Vertex> images(sites.size());
  for (std::size_t j = 0; j < sites.size(); ++j) images[j] = graph.vertex_of(sites[j]);
  return marginal(mu, images);
}

/// I°_Λ(μ) with Λ = B_X(o, K).
inline double restricted_dirichlet(const SmallMeasure& mu, const QuotientGraph& graph, int K) {
  const auto sites = cayley_ball_sites(graph.spec(), K);
  check_exact_sites(sites.size());
  return restricted_form(lifted_marginal(mu, graph, sites), cayley_window_model(graph.spec(), sites));
}

/// |B_Γ(K)| / (c₀ [Γ:Γ_m]) · I_m(μ), the bound on I°_Λ for invariant μ.
inline double one_block_form_bound(const SmallMeasure& mu, const JumpRate& c, const QuotientGraph& graph, int K) {
  WordMetric metric(graph.spec());
  const double ball = static_cast<double>(metric.ball_size(K));
  return ball / (c.c0() * static_cast<double>(graph.vertex_count())) * dirichlet_form(mu, c, graph).total;
}

struct TwoBlockForms {
  double product = 0;         // I°_{Λ×Λ}
  double origin_exchange = 0;  // I^{(o,o)}_{Λ×Λ}
};

/// Forms of a probability vector on Z_Λ × Z_Λ (index = ξ | ξ' << |Λ|); site
/// `origin` of Λ is the one exchanged by π̃_{o,o}.
inline TwoBlockForms two_block_forms(const std::vector<double>& p, const ExclusionModel& lambda, int origin = 0) {
  const std::size_t n = lambda.sites();
  check_exact_sites(2 * n);
  if (p.size() != (std::size_t{1} << (2 * n))) throw ConfigError("two-block measure has the wrong size");
  std::vector<double> root(p.size());
  for (std::size_t s = 0; s < p.size(); ++s) root[s] = std::sqrt(p[s]);
  TwoBlockForms out;
  for (std::size_t e = 0; e < lambda.edge_count(); ++e) {
    const int x = lambda.edge(e).origin, y = lambda.edge(e).terminus;
    for (int copy = 0; copy < 2; ++copy) {
      const int xs = x + copy * static_cast<int>(n), ys = y + copy * static_cast<int>(n);
      for (std::uint64_t st = 0; st < p.size(); ++st) {
        const double d = root[swap_bits(st, xs, ys)] - root[st];
        out.product += 0.25 * d * d;
      }
    }
  }
  const int o1 = origin, o2 = origin + static_cast<int>(n);
  for (std::uint64_t st = 0; st < p.size(); ++st) {
    const double d = root[swap_bits(st, o1, o2)] - root[st];
    out.origin_exchange += 0.5 * d * d;
  }
  return out;
}

/// (σ̂μ)|_{Λ×Λ}: the law of (η|_Λ, (σ^{-1}η)|_Λ) with (σ^{-1}η)_z = η_{σz}, for
/// μ on X_m lifted periodically. `sigma` is a group element.
inline std::vector<double> sigma_hat_pushforward(const SmallMeasure& mu, const QuotientGraph& graph,
                                                 const std::vector<Element>& sites, const Element& sigma) {
  std::vector<Vertex> images;
  for (const auto& z : sites) images.push_back(graph.vertex_of(z));
  for (const auto& z : sites) images.push_back(graph.vertex_of(graph.spec().multiply(sigma, z)));
  return marginal(mu, images);
}

// --- empirical measures -----------------------------------------------------

/// Weighted samples of configurations; histograms of marginals on site lists.
class EmpiricalMeasure {
 public:
  explicit EmpiricalMeasure(std::size_t sites) : sites_(sites) {}

  void add(const Configuration& eta, double weight = 1.0) {
    if (eta.size() != sites_) throw ConfigError("sample has the wrong size");
    samples_.push_back(eta);
    weights_.push_back(weight);
    total_ += weight;
  }

  std::size_t count() const { return samples_.size(); }
  double total_weight() const { return total_; }

  std::vector<double> marginal_histogram(const std::vector<Vertex>& sites) const {
    check_exact_sites(sites.size());
    std::vector<double> h(std::size_t{1} << sites.size(), 0.0);
    for (std::size_t k = 0; k < samples_.size(); ++k) {
      std::uint64_t q = 0;
      for (std::size_t j = 0; j < sites.size(); ++j) q |= static_cast<std::uint64_t>(samples_[k][sites[j]]) << j;
      h[q] += weights_[k] / total_;
    }
    return h;
  }

  /// Plug-in I°_Λ from the marginal histogram on Λ.
  double restricted_form(const std::vector<Vertex>& sites, const ExclusionModel& lambda) const {
    return sep::restricted_form(marginal_histogram(sites), lambda);
  }

 private:
  std::size_t sites_;
  std::vector<Configuration> samples_;
  std::vector<double> weights_;
  double total_ = 0;
};

// --- serialisation ----------------------------------------------------------

inline void write_measure_csv(std::ostream& os, const SmallMeasure& mu) {
  os << "state_index,probability\n";
  char buf[64];
  for (std::uint64_t s = 0; s < mu.size(); ++s) {
    std::snprintf(buf, sizeof buf, "%.17g", mu[s]);
    os << s << ',' << buf << '\n';
  }
}

inline SmallMeasure read_measure_csv(std::istream& is, std::size_t sites) {
  std::string line;
  std::vector<double> p(std::size_t{1} << sites, 0.0);
  bool header = true;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (header) {
      header = false;
      if (line.find("probability") != std::string::npos) continue;
    }
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw ConfigError("measure CSV line lacks a comma");
    const std::uint64_t s = std::stoull(line.substr(0, comma));
    if (s >= p.size()) throw ConfigError("measure CSV state index out of range");
    p[s] = std::stod(line.substr(comma + 1));
  }
  return SmallMeasure(sites, std::move(p));
}

}  // namespace sep
