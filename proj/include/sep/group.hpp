#pragma once

// Finitely generated groups with congruence towers: integer lattices Z^d and
// the discrete Heisenberg group. Elements are coordinate tuples; the Cayley
// graph uses right multiplication by generators, the group acts on it from the
// left.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <tuple>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "sep/common.hpp"

namespace sep {

inline constexpr int kMaxCoords = 4;

struct Element {
  std::array<std::int64_t, kMaxCoords> c{};

  friend bool operator==(const Element&, const Element&) = default;
  friend auto operator<=>(const Element&, const Element&) = default;
};

struct ElementHash {
  std::size_t operator()(const Element& e) const noexcept {
    std::uint64_t h = 0x9e3779b97f4a7c15ULL;
    for (auto v : e.c) {
      h ^= static_cast<std::uint64_t>(v) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    }
    return static_cast<std::size_t>(h);
  }
};

using ElementSet = std::unordered_set<Element, ElementHash>;

enum class Family { IntegerLattice, Heisenberg };

inline std::string to_string(Family f) {
  return f == Family::IntegerLattice ? "lattice" : "heisenberg";
}

/// A group family with a symmetric generating set and its congruence tower
/// Γ_m = kernel of reduction mod base^m.
struct TowerSpec {
  Family family = Family::IntegerLattice;
  int dimension = 1;  // lattice rank; ignored for Heisenberg
  int base = 2;
  std::vector<Element> generators;

  static TowerSpec integer_lattice(int d, int k) {
    if (d < 1 || d > kMaxCoords) throw ConfigError("lattice dimension must be in [1, 4]");
    if (k < 2) throw ConfigError("congruence base must be >= 2");
    TowerSpec s;
    s.family = Family::IntegerLattice;
    s.dimension = d;
    s.base = k;
    for (int j = 0; j < d; ++j) {
      Element plus, minus;
      plus.c[j] = 1;
      minus.c[j] = -1;
      s.generators.push_back(plus);
      s.generators.push_back(minus);
    }
    s.validate();
    return s;
  }

  static TowerSpec heisenberg(int k) {
    if (k < 2) throw ConfigError("congruence base must be >= 2");
    TowerSpec s;
    s.family = Family::Heisenberg;
    s.dimension = 3;
    s.base = k;
    s.generators = {Element{{1, 0, 0, 0}}, Element{{-1, 0, 0, 0}}, Element{{0, 1, 0, 0}},
                    Element{{0, -1, 0, 0}}};
    s.validate();
    return s;
  }

  int coord_count() const { return family == Family::Heisenberg ? 3 : dimension; }
  int generator_count() const { return static_cast<int>(generators.size()); }
  Element identity() const { return Element{}; }

  /// (a,b,c) is the matrix [[1,a,c],[0,1,b],[0,0,1]].
  Element multiply(const Element& x, const Element& y) const {
    Element r;
    if (family == Family::Heisenberg) {
      r.c[0] = x.c[0] + y.c[0];
      r.c[1] = x.c[1] + y.c[1];
      r.c[2] = x.c[2] + y.c[2] + x.c[0] * y.c[1];
    } else {
      for (int j = 0; j < dimension; ++j) r.c[j] = x.c[j] + y.c[j];
    }
    return r;
  }

  Element inverse(const Element& x) const {
    Element r;
    if (family == Family::Heisenberg) {
      r.c[0] = -x.c[0];
      r.c[1] = -x.c[1];
      r.c[2] = -x.c[2] + x.c[0] * x.c[1];
    } else {
      for (int j = 0; j < dimension; ++j) r.c[j] = -x.c[j];
    }
    return r;
  }

  /// Canonical representative of x Γ_m where Γ_m is the kernel of reduction mod `modulus`.
  Element reduce(const Element& x, std::int64_t modulus) const {
    Element r;
    for (int j = 0; j < coord_count(); ++j) {
      std::int64_t v = x.c[j] % modulus;
      r.c[j] = v < 0 ? v + modulus : v;
    }
    return r;
  }

  /// Index of the inverse of generator `s` in the generating list.
  int inverse_generator(int s) const {
    const Element inv = inverse(generators.at(s));
    for (int t = 0; t < generator_count(); ++t) {
      if (generators[t] == inv) return t;
    }
    throw ConfigError("generating set is not symmetric");
  }

  void validate() const {
    if (generators.empty()) throw ConfigError("empty generating set");
    for (int s = 0; s < generator_count(); ++s) {
      if (generators[s] == identity()) throw ConfigError("identity must not be a generator");
      (void)inverse_generator(s);
    }
  }

  /// Index [Γ:Γ_m] = base^(m * coord_count).
  std::uint64_t index_at(int level) const {
    std::uint64_t n = 1;
    for (int j = 0; j < level * coord_count(); ++j) n *= static_cast<std::uint64_t>(base);
    return n;
  }

  std::string describe() const {
    if (family == Family::Heisenberg) return "heisenberg(k=" + std::to_string(base) + ")";
    return "lattice(d=" + std::to_string(dimension) + ",k=" + std::to_string(base) + ")";
  }
};

/// Breadth-first exploration of the Cayley graph from the identity. The visit
/// order (BFS, ties broken by generator label) is the canonical ordering used
/// for bundle windows.
class WordMetric {
 public:
  explicit WordMetric(const TowerSpec& spec) : spec_(spec) {
    order_.push_back(spec_.identity());
    dist_.emplace(spec_.identity(), 0);
  }

  /// Grow the explored ball to radius r.
  void explore(int r) {
    while (radius_ < r) {
      const std::size_t begin = frontier_begin_;
      const std::size_t end = order_.size();
      for (std::size_t q = begin; q < end; ++q) {
        const Element x = order_[q];
        for (const auto& s : spec_.generators) {
          Element y = spec_.multiply(x, s);
          if (dist_.emplace(y, radius_ + 1).second) order_.push_back(y);
        }
      }
      frontier_begin_ = end;
      ++radius_;
      radius_sizes_.push_back(order_.size());
    }
  }

  /// Elements of B(id, r) in canonical order.
  std::vector<Element> ball(int r) {
    explore(r);
    const std::size_t n = r == 0 ? 1 : radius_sizes_[r - 1];
    return {order_.begin(), order_.begin() + static_cast<std::ptrdiff_t>(n)};
  }

  std::size_t ball_size(int r) {
    explore(r);
    return r == 0 ? 1 : radius_sizes_[r - 1];
  }

  /// Word norm |g|, exploring up to `max_radius`; returns -1 when farther.
  int norm(const Element& g, int max_radius) {
    if (auto it = dist_.find(g); it != dist_.end()) return it->second;
    if (spec_.family == Family::IntegerLattice && is_standard_lattice()) {
      std::int64_t n = 0;
      for (int j = 0; j < spec_.dimension; ++j) n += g.c[j] < 0 ? -g.c[j] : g.c[j];
      return n <= max_radius ? static_cast<int>(n) : -1;
    }
    while (radius_ < max_radius) {
      explore(radius_ + 1);
      if (auto it = dist_.find(g); it != dist_.end()) return it->second;
    }
    return -1;
  }

  int explored_radius() const { return radius_; }

 private:
  bool is_standard_lattice() const {
    const auto ref = TowerSpec::integer_lattice(spec_.dimension, spec_.base);
    return ref.generators == spec_.generators;
  }

  TowerSpec spec_;
  std::vector<Element> order_;
  std::unordered_map<Element, int, ElementHash> dist_;
  std::vector<std::size_t> radius_sizes_;
  std::size_t frontier_begin_ = 0;
  int radius_ = 0;
};

/// Ball B(x, r) in the Cayley graph, x·B(id, r) in canonical order.
inline std::vector<Element> cayley_ball(const TowerSpec& spec, const Element& x, int r) {
  WordMetric metric(spec);
  auto ball = metric.ball(r);
  for (auto& g : ball) g = spec.multiply(x, g);
  return ball;
}

struct FolnerData {
  int index = 1;
  std::vector<Element> elements;
  std::vector<Element> boundary;  // F S \ F

  double boundary_ratio() const {
    return static_cast<double>(boundary.size()) / static_cast<double>(elements.size());
  }
};

/// F_i: the box [-i,i]^d for lattices; {|a|,|b| <= i, |c| <= i^2} for Heisenberg.
inline FolnerData folner_set(const TowerSpec& spec, int i) {
  if (i < 1) throw ConfigError("Folner index must be >= 1");
  FolnerData data;
  data.index = i;
  if (spec.family == Family::Heisenberg) {
    const std::int64_t ii = i, cc = static_cast<std::int64_t>(i) * i;
    for (std::int64_t c = -cc; c <= cc; ++c)
      for (std::int64_t b = -ii; b <= ii; ++b)
        for (std::int64_t a = -ii; a <= ii; ++a) data.elements.push_back(Element{{a, b, c, 0}});
  } else {
    const int d = spec.dimension;
    std::array<std::int64_t, kMaxCoords> cur{};
    cur.fill(0);
    for (int j = 0; j < d; ++j) cur[j] = -i;
    while (true) {
      Element e;
      for (int j = 0; j < d; ++j) e.c[j] = cur[j];
      data.elements.push_back(e);
      int j = 0;
      while (j < d && cur[j] == i) cur[j++] = -i;
      if (j == d) break;
      ++cur[j];
    }
  }
  ElementSet inside(data.elements.begin(), data.elements.end());
  ElementSet seen;
  for (const auto& f : data.elements) {
    for (const auto& s : spec.generators) {
      Element g = spec.multiply(f, s);
      if (!inside.contains(g) && seen.insert(g).second) data.boundary.push_back(g);
    }
  }
  std::sort(data.boundary.begin(), data.boundary.end());
  return data;
}

/// Largest word norm attained on F_i.
inline int folner_radius(const TowerSpec& spec, int i) {
  if (spec.family == Family::IntegerLattice &&
      spec.generators == TowerSpec::integer_lattice(spec.dimension, spec.base).generators) {
    return spec.dimension * i;
  }
  static std::mutex mutex;
  static std::map<std::tuple<int, std::vector<Element>, int>, int> cache;
  const auto key = std::make_tuple(static_cast<int>(spec.family), spec.generators, i);
  {
    std::lock_guard lock(mutex);
    if (auto it = cache.find(key); it != cache.end()) return it->second;
  }
  WordMetric metric(spec);
  const auto f = folner_set(spec, i);
  int best = 0;
  for (const auto& g : f.elements) {
    int n = -1;
    for (int r = std::max(best, 1); n < 0; r *= 2) n = metric.norm(g, r);
    best = std::max(best, n);
  }
  std::lock_guard lock(mutex);
  cache.emplace(key, best);
  return best;
}

struct BIndex {
  int value = 1;
  bool clamped = false;
};

/// b(K) = max{ i : F_i ⊆ B(o, K) }, clamped to 1 when F_1 does not fit.
inline BIndex b_index(const TowerSpec& spec, double K) {
  if (!(K >= 0)) throw ConfigError("b_index requires K >= 0");
  BIndex out;
  int i = 0;
  if (spec.family == Family::IntegerLattice &&
      spec.generators == TowerSpec::integer_lattice(spec.dimension, spec.base).generators) {
    i = static_cast<int>(std::floor(K / spec.dimension + 1e-12));
  } else {
    // the Folner radius grows at least linearly, so the scan terminates
    while (folner_radius(spec, i + 1) <= K + 1e-12) ++i;
  }
  if (i < 1) {
    out.value = 1;
    out.clamped = true;
  } else {
    out.value = i;
  }
  return out;
}

}  // namespace sep
