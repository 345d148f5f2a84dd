#pragma once

// Finite quotient graphs X_m = Γ_m \ X of the Cayley graph, their group
// action, covering maps and metric balls.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "sep/common.hpp"
#include "sep/group.hpp"

namespace sep {

using Vertex = std::uint32_t;

struct OrientedEdge {
  Vertex origin = 0;
  Vertex terminus = 0;
  int generator = 0;
  std::uint32_t reverse = 0;  // index of (terminus, origin, s^-1)
};

/// X_m with vertices indexed by residues of coordinates mod base^m (mixed
/// radix, coordinate 0 fastest). Edge x*|S| + s is (x, x·s, s). The origin o
/// is vertex 0 (the identity).
class QuotientGraph {
 public:
  QuotientGraph(TowerSpec spec, int level, std::size_t vertex_cap = caps::quotient_vertices)
      : spec_(std::move(spec)), level_(level) {
    if (level < 1) throw ConfigError("tower level must be >= 1");
    spec_.validate();
    modulus_ = 1;
    for (int j = 0; j < level; ++j) modulus_ *= spec_.base;
    const long double n = std::pow(static_cast<long double>(modulus_), spec_.coord_count());
    if (n > static_cast<long double>(vertex_cap)) {
      throw CapExceeded("quotient at level " + std::to_string(level) + " of " + spec_.describe() +
                        " exceeds the vertex cap");
    }
    vertex_count_ = static_cast<std::size_t>(n);
    const int deg = spec_.generator_count();
    std::vector<int> inv(deg);
    for (int s = 0; s < deg; ++s) inv[s] = spec_.inverse_generator(s);
    edges_.resize(vertex_count_ * deg);
    for (std::size_t x = 0; x < vertex_count_; ++x) {
      const Element gx = element(static_cast<Vertex>(x));
      for (int s = 0; s < deg; ++s) {
        const Vertex y = vertex_of(spec_.multiply(gx, spec_.generators[s]));
        auto& e = edges_[x * deg + s];
        e.origin = static_cast<Vertex>(x);
        e.terminus = y;
        e.generator = s;
        e.reverse = static_cast<std::uint32_t>(y * deg + inv[s]);
      }
    }
    compute_distances();
  }

  const TowerSpec& spec() const { return spec_; }
  int level() const { return level_; }
  std::int64_t modulus() const { return modulus_; }
  std::size_t vertex_count() const { return vertex_count_; }
  int degree() const { return spec_.generator_count(); }
  Vertex origin() const { return 0; }
  const std::vector<OrientedEdge>& edges() const { return edges_; }
  const OrientedEdge& edge(std::size_t e) const { return edges_[e]; }
  std::size_t edge_index(Vertex x, int s) const { return static_cast<std::size_t>(x) * degree() + s; }

  Vertex vertex_of(const Element& g) const {
    const Element r = spec_.reduce(g, modulus_);
    std::uint64_t idx = 0;
    for (int j = spec_.coord_count() - 1; j >= 0; --j) {
      idx = idx * static_cast<std::uint64_t>(modulus_) + static_cast<std::uint64_t>(r.c[j]);
    }
    return static_cast<Vertex>(idx);
  }

  /// Canonical representative in the fundamental domain [0, base^m)^coords.
  Element element(Vertex x) const {
    Element g;
    std::uint64_t idx = x;
    for (int j = 0; j < spec_.coord_count(); ++j) {
      g.c[j] = static_cast<std::int64_t>(idx % static_cast<std::uint64_t>(modulus_));
      idx /= static_cast<std::uint64_t>(modulus_);
    }
    return g;
  }

  /// Left action σ·x.
  Vertex act(const Element& sigma, Vertex x) const {
    return vertex_of(spec_.multiply(sigma, element(x)));
  }
  /// Right translation x·g (moves along the Cayley graph).
  Vertex translate(Vertex x, const Element& g) const {
    return vertex_of(spec_.multiply(element(x), g));
  }

  /// Permutation of V_m induced by the left action of the class of `sigma`.
  std::vector<Vertex> action_permutation(Vertex sigma) const {
    const Element g = element(sigma);
    std::vector<Vertex> perm(vertex_count_);
    for (std::size_t x = 0; x < vertex_count_; ++x) perm[x] = act(g, static_cast<Vertex>(x));
    return perm;
  }

  /// Graph distance; vertex transitivity gives d(x,y) = d(o, x^-1 y).
  int distance(Vertex x, Vertex y) const {
    const Element d = spec_.multiply(spec_.inverse(element(x)), element(y));
    return dist_from_origin_[vertex_of(d)];
  }
  int distance_from_origin(Vertex y) const { return dist_from_origin_[y]; }
  int diameter() const { return diameter_; }

  /// BFS ball B(x, r), sorted by distance then first visit.
  std::vector<Vertex> ball(Vertex x, int r) const {
    std::vector<Vertex> out{x};
    std::vector<int> seen(vertex_count_, -1);
    seen[x] = 0;
    for (std::size_t q = 0; q < out.size(); ++q) {
      const Vertex u = out[q];
      if (seen[u] >= r) continue;
      for (int s = 0; s < degree(); ++s) {
        const Vertex v = edges_[edge_index(u, s)].terminus;
        if (seen[v] < 0) {
          seen[v] = seen[u] + 1;
          out.push_back(v);
        }
      }
    }
    return out;
  }

  /// Covering map X_level -> X_coarse on vertices (coordinate reduction).
  Vertex cover(Vertex x, const QuotientGraph& coarse) const {
    return coarse.vertex_of(element(x));
  }

  /// Edge list, one "origin terminus generator" triple per line.
  void write_edge_list(std::ostream& os) const {
    for (const auto& e : edges_) os << e.origin << ' ' << e.terminus << ' ' << e.generator << '\n';
  }

 private:
  void compute_distances() {
    dist_from_origin_.assign(vertex_count_, -1);
    std::deque<Vertex> queue{origin()};
    dist_from_origin_[origin()] = 0;
    while (!queue.empty()) {
      const Vertex u = queue.front();
      queue.pop_front();
      for (int s = 0; s < degree(); ++s) {
        const Vertex v = edges_[edge_index(u, s)].terminus;
        if (dist_from_origin_[v] < 0) {
          dist_from_origin_[v] = dist_from_origin_[u] + 1;
          queue.push_back(v);
        }
      }
    }
    diameter_ = *std::max_element(dist_from_origin_.begin(), dist_from_origin_.end());
  }

  TowerSpec spec_;
  int level_ = 1;
  std::int64_t modulus_ = 1;
  std::size_t vertex_count_ = 0;
  std::vector<OrientedEdge> edges_;
  std::vector<int> dist_from_origin_;
  int diameter_ = 0;
};

/// Checks that `fine` covers `coarse`: coordinate reduction is surjective on
/// vertices and maps every edge to an edge with the same generator label.
inline bool validate_covering(const QuotientGraph& fine, const QuotientGraph& coarse) {
  std::vector<char> hit(coarse.vertex_count(), 0);
  for (std::size_t x = 0; x < fine.vertex_count(); ++x) hit[fine.cover(static_cast<Vertex>(x), coarse)] = 1;
  if (std::find(hit.begin(), hit.end(), 0) != hit.end()) return false;
  for (const auto& e : fine.edges()) {
    const Vertex o = fine.cover(e.origin, coarse);
    const auto& image = coarse.edge(coarse.edge_index(o, e.generator));
    if (image.terminus != fine.cover(e.terminus, coarse)) return false;
  }
  return true;
}

/// Levels 1..depth of the congruence tower, each validated as a covering of the previous.
inline std::vector<QuotientGraph> build_tower(const TowerSpec& spec, int depth,
                                              std::size_t vertex_cap = caps::quotient_vertices) {
  if (depth < 1) throw ConfigError("tower depth must be >= 1");
  std::vector<QuotientGraph> tower;
  tower.reserve(depth);
  for (int m = 1; m <= depth; ++m) {
    tower.emplace_back(spec, m, vertex_cap);
    if (m > 1 && !validate_covering(tower[m - 1], tower[m - 2])) {
      throw AssertionFailure("level " + std::to_string(m) + " does not cover level " +
                             std::to_string(m - 1));
    }
  }
  return tower;
}

/// Largest r such that X -> X_m is injective on balls of radius r, found by
/// comparing |B_X(o,r)| with |B_{X_m}(o,r)|.
inline int injectivity_radius(const QuotientGraph& graph) {
  WordMetric metric(graph.spec());
  int r = 0;
  while (true) {
    const std::size_t cover_size = graph.ball(graph.origin(), r + 1).size();
    if (metric.ball_size(r + 1) != cover_size) return r;
    ++r;
  }
}

}  // namespace sep
