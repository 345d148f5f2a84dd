#pragma once

// Γ-invariant local function bundles stored as truth tables over canonical
// window patterns, jump rates, local averages, global-average polynomials and
// the time-integrand V of the super-exponential estimate.
//
// A vertex bundle of radius r has the window W = B(id, r) in canonical BFS
// order; f_x(η) = table[pattern of η on x·W]. An edge bundle stores one table
// per generator s over W_s = B(id, r) ∪ s·B(id, r) (B(id,r) first, then the
// new elements of s·B(id,r)); for e = (x, xs, s) the window is x·W_s.
// Evaluation on X_m reads η through the periodic lift, so windows that wrap
// around a small quotient are handled uniformly.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "sep/common.hpp"
#include "sep/configuration.hpp"
#include "sep/group.hpp"
#include "sep/quotient_graph.hpp"

namespace sep {

using Pattern = std::uint32_t;

inline std::vector<Element> vertex_window(const TowerSpec& spec, int radius) {
  if (radius < 0) throw ConfigError("bundle radius must be >= 0");
  WordMetric metric(spec);
  return metric.ball(radius);
}

inline std::vector<Element> edge_window(const TowerSpec& spec, int radius, int generator) {
  auto window = vertex_window(spec, radius);
  ElementSet seen(window.begin(), window.end());
  const Element s = spec.generators.at(generator);
  const std::size_t base = window.size();
  for (std::size_t j = 0; j < base; ++j) {
    Element g = spec.multiply(s, window[j]);
    if (seen.insert(g).second) window.push_back(g);
  }
  return window;
}

inline int position_in(const std::vector<Element>& window, const Element& g) {
  auto it = std::find(window.begin(), window.end(), g);
  if (it == window.end()) throw Error("element not in window");
  return static_cast<int>(it - window.begin());
}

inline void check_window_size(std::size_t n) {
  if (n > static_cast<std::size_t>(caps::window_sites)) {
    throw CapExceeded("bundle window of " + std::to_string(n) + " sites exceeds the enumeration cap");
  }
}

/// Vertex lists x·w_j for every vertex x of a quotient, row-major.
class BoundWindow {
 public:
  BoundWindow() = default;
  BoundWindow(const QuotientGraph& graph, const std::vector<Element>& window)
      : width_(window.size()), rows_(graph.vertex_count()) {
    std::vector<Element> reduced(window.size());
    for (std::size_t j = 0; j < window.size(); ++j) reduced[j] = graph.spec().reduce(window[j], graph.modulus());
    offsets_.resize(rows_ * width_);
    for (std::size_t x = 0; x < rows_; ++x) {
      const Element gx = graph.element(static_cast<Vertex>(x));
      for (std::size_t j = 0; j < width_; ++j) {
        offsets_[x * width_ + j] = graph.vertex_of(graph.spec().multiply(gx, reduced[j]));
      }
    }
  }

  std::size_t width() const { return width_; }
  std::size_t rows() const { return rows_; }
  const Vertex* row(std::size_t x) const { return offsets_.data() + x * width_; }

  Pattern pattern(std::size_t x, const Configuration& eta) const {
    const Vertex* r = row(x);
    Pattern p = 0;
    for (std::size_t j = 0; j < width_; ++j) p |= static_cast<Pattern>(eta[r[j]]) << j;
    return p;
  }

 private:
  std::size_t width_ = 0;
  std::size_t rows_ = 0;
  std::vector<Vertex> offsets_;
};

class VertexBundle {
 public:
  using Rule = std::function<double(Pattern, const std::vector<Element>&)>;

  VertexBundle() = default;
  VertexBundle(std::string name, const TowerSpec& spec, int radius, std::vector<double> table)
      : name_(std::move(name)), spec_(spec), radius_(radius), window_(vertex_window(spec, radius)),
        table_(std::move(table)) {
    check_window_size(window_.size());
    if (table_.size() != (std::size_t{1} << window_.size())) {
      throw ConfigError("bundle '" + name_ + "' table must have 2^" + std::to_string(window_.size()) +
                        " entries");
    }
  }

  static VertexBundle from_rule(std::string name, const TowerSpec& spec, int radius, const Rule& rule) {
    const auto window = vertex_window(spec, radius);
    check_window_size(window.size());
    std::vector<double> table(std::size_t{1} << window.size());
    for (std::size_t p = 0; p < table.size(); ++p) table[p] = rule(static_cast<Pattern>(p), window);
    return VertexBundle(std::move(name), spec, radius, std::move(table));
  }

  const std::string& name() const { return name_; }
  const TowerSpec& spec() const { return spec_; }
  int radius() const { return radius_; }
  const std::vector<Element>& window() const { return window_; }
  const std::vector<double>& table() const { return table_; }
  double value(Pattern p) const { return table_[p]; }

  double max_abs() const {
    double m = 0;
    for (double v : table_) m = std::max(m, std::abs(v));
    return m;
  }

  /// αf + βg on a common radius (the smaller table is re-indexed).
  friend VertexBundle combine(double alpha, const VertexBundle& f, double beta, const VertexBundle& g) {
    const int r = std::max(f.radius(), g.radius());
    const auto window = vertex_window(f.spec(), r);
    auto remap = [&](const VertexBundle& h) {
      std::vector<int> pos(h.window().size());
      for (std::size_t j = 0; j < pos.size(); ++j) pos[j] = position_in(window, h.window()[j]);
      return pos;
    };
    const auto pf = remap(f), pg = remap(g);
    auto sub = [](Pattern p, const std::vector<int>& pos) {
      Pattern q = 0;
      for (std::size_t j = 0; j < pos.size(); ++j) q |= ((p >> pos[j]) & 1U) << j;
      return q;
    };
    return from_rule("combine(" + f.name() + "," + g.name() + ")", f.spec(), r,
                     [&](Pattern p, const std::vector<Element>&) {
                       return alpha * f.value(sub(p, pf)) + beta * g.value(sub(p, pg));
                     });
  }

 private:
  std::string name_;
  TowerSpec spec_;
  int radius_ = 0;
  std::vector<Element> window_;
  std::vector<double> table_;
};

class EdgeBundle {
 public:
  using Rule = std::function<double(int generator, Pattern, const std::vector<Element>&)>;

  EdgeBundle() = default;
  EdgeBundle(std::string name, const TowerSpec& spec, int radius, std::vector<std::vector<double>> tables)
      : name_(std::move(name)), spec_(spec), radius_(radius), tables_(std::move(tables)) {
    if (static_cast<int>(tables_.size()) != spec.generator_count()) {
      throw ConfigError("edge bundle '" + name_ + "' needs one table per generator");
    }
    for (int s = 0; s < spec.generator_count(); ++s) {
      windows_.push_back(edge_window(spec, radius, s));
      check_window_size(windows_.back().size());
      if (tables_[s].size() != (std::size_t{1} << windows_.back().size())) {
        throw ConfigError("edge bundle '" + name_ + "' table for generator " + std::to_string(s) +
                          " has the wrong size");
      }
    }
  }

  static EdgeBundle from_rule(std::string name, const TowerSpec& spec, int radius, const Rule& rule) {
    std::vector<std::vector<double>> tables;
    for (int s = 0; s < spec.generator_count(); ++s) {
      const auto window = edge_window(spec, radius, s);
      check_window_size(window.size());
      std::vector<double> t(std::size_t{1} << window.size());
      for (std::size_t p = 0; p < t.size(); ++p) t[p] = rule(s, static_cast<Pattern>(p), window);
      tables.push_back(std::move(t));
    }
    return EdgeBundle(std::move(name), spec, radius, std::move(tables));
  }

  const std::string& name() const { return name_; }
  const TowerSpec& spec() const { return spec_; }
  int radius() const { return radius_; }
  const std::vector<Element>& window(int s) const { return windows_[s]; }
  const std::vector<double>& table(int s) const { return tables_[s]; }
  double value(int s, Pattern p) const { return tables_[s][p]; }

  double min_value() const {
    double m = tables_[0][0];
    for (const auto& t : tables_)
      for (double v : t) m = std::min(m, v);
    return m;
  }
  double max_value() const {
    double m = tables_[0][0];
    for (const auto& t : tables_)
      for (double v : t) m = std::max(m, v);
    return m;
  }
  bool is_constant() const { return min_value() == max_value(); }

 private:
  std::string name_;
  TowerSpec spec_;
  int radius_ = 0;
  std::vector<std::vector<Element>> windows_;
  std::vector<std::vector<double>> tables_;
};

/// Pattern over W_s with the values at the endpoints of e = (id, s) exchanged.
inline Pattern swap_endpoints(Pattern p, int terminus_pos) {
  const Pattern a = p & 1U, b = (p >> terminus_pos) & 1U;
  if (a != b) p ^= 1U | (Pattern{1} << terminus_pos);
  return p;
}

struct RateDefect {
  std::string what;
  int generator = 0;
  Pattern pattern = 0;
};

/// Exhaustive check of c(e,η) = c(ē,η), c(e,η) = c(e,η^e) and c >= c0 > 0.
inline std::vector<RateDefect> jump_rate_defects(const EdgeBundle& c) {
  std::vector<RateDefect> out;
  const auto& spec = c.spec();
  for (int s = 0; s < spec.generator_count(); ++s) {
    const auto& w = c.window(s);
    const int t = position_in(w, spec.generators[s]);
    const int sr = spec.inverse_generator(s);
    const auto& wr = c.window(sr);
    // ē = (s, id, s^-1) has window s·W_{s^-1}; locate each element inside W_s.
    std::vector<int> map(wr.size());
    for (std::size_t j = 0; j < wr.size(); ++j) map[j] = position_in(w, spec.multiply(spec.generators[s], wr[j]));
    for (std::size_t p = 0; p < c.table(s).size(); ++p) {
      const double v = c.value(s, static_cast<Pattern>(p));
      if (!(v > 0)) out.push_back({"non-positive rate", s, static_cast<Pattern>(p)});
      if (c.value(s, swap_endpoints(static_cast<Pattern>(p), t)) != v) {
        out.push_back({"c(e,eta) != c(e,eta^e)", s, static_cast<Pattern>(p)});
      }
      Pattern q = 0;
      for (std::size_t j = 0; j < map.size(); ++j) q |= ((static_cast<Pattern>(p) >> map[j]) & 1U) << j;
      if (c.value(sr, q) != v) out.push_back({"c(e,eta) != c(reverse e,eta)", s, static_cast<Pattern>(p)});
    }
  }
  return out;
}

/// A symmetric, non-degenerate edge bundle.
class JumpRate {
 public:
  JumpRate() = default;
  explicit JumpRate(EdgeBundle bundle) : bundle_(std::move(bundle)) {
    const auto defects = jump_rate_defects(bundle_);
    if (!defects.empty()) {
      throw ConfigError("'" + bundle_.name() + "' is not a jump rate: " + defects.front().what +
                        " (generator " + std::to_string(defects.front().generator) + ", pattern " +
                        std::to_string(defects.front().pattern) + ")");
    }
    c0_ = bundle_.min_value();
  }

  const EdgeBundle& bundle() const { return bundle_; }
  const std::string& name() const { return bundle_.name(); }
  double c0() const { return c0_; }
  int radius() const { return bundle_.radius(); }

 private:
  EdgeBundle bundle_;
  double c0_ = 0;
};

// --- builtin catalog -------------------------------------------------------

/// f_x(η) = η_x.
inline VertexBundle occupancy(const TowerSpec& spec) {
  return VertexBundle::from_rule("occupancy", spec, 0, [](Pattern p, const auto&) { return double(p & 1U); });
}

/// f_x(η) = Π_{e: oe = x} η_{te}.
inline VertexBundle neighbor_product(const TowerSpec& spec) {
  std::vector<int> pos;
  const auto window = vertex_window(spec, 1);
  for (const auto& s : spec.generators) pos.push_back(position_in(window, s));
  return VertexBundle::from_rule("neighbor_product", spec, 1, [pos](Pattern p, const auto&) {
    for (int j : pos)
      if (!((p >> j) & 1U)) return 0.0;
    return 1.0;
  });
}

/// f_e(η) = η_{oe} + η_{te}.
inline EdgeBundle edge_sum(const TowerSpec& spec) {
  return EdgeBundle::from_rule("edge_sum", spec, 0, [&spec](int s, Pattern p, const std::vector<Element>& w) {
    const int t = position_in(w, spec.generators[s]);
    return double(p & 1U) + double((p >> t) & 1U);
  });
}

/// f_e(η) = Π_{e' ∈ E_oe} η_{te'} + Π_{e' ∈ E_te} η_{te'} + c.
inline EdgeBundle edge_product_plus_c(const TowerSpec& spec, double c) {
  return EdgeBundle::from_rule("edge_product_plus_c", spec, 1,
                               [&spec, c](int s, Pattern p, const std::vector<Element>& w) {
                                 double first = 1, second = 1;
                                 for (const auto& g : spec.generators) {
                                   first *= double((p >> position_in(w, g)) & 1U);
                                   second *= double((p >> position_in(w, spec.multiply(spec.generators[s], g))) & 1U);
                                 }
                                 return first + second + c;
                               });
}

inline JumpRate constant_rate(const TowerSpec& spec, double c = 1.0) {
  if (!(c > 0)) throw ConfigError("constant jump rate must be positive");
  return JumpRate(EdgeBundle::from_rule("constant", spec, 0, [c](int, Pattern, const auto&) { return c; }));
}

/// Swap-symmetrisation (f(e,η) + f(e,η^e))/2 of edge_product_plus_c; a jump rate with c0 = c.
inline JumpRate ex4_symmetrized(const TowerSpec& spec, double c = 1.0) {
  if (!(c > 0)) throw ConfigError("ex4 rate constant must be positive");
  const EdgeBundle raw = edge_product_plus_c(spec, c);
  std::vector<std::vector<double>> tables;
  for (int s = 0; s < spec.generator_count(); ++s) {
    const int t = position_in(raw.window(s), spec.generators[s]);
    std::vector<double> table(raw.table(s).size());
    for (std::size_t p = 0; p < table.size(); ++p) {
      table[p] = 0.5 * (raw.value(s, static_cast<Pattern>(p)) + raw.value(s, swap_endpoints(static_cast<Pattern>(p), t)));
    }
    tables.push_back(std::move(table));
  }
  return JumpRate(EdgeBundle("ex4_symmetrized", spec, 1, std::move(tables)));
}

inline std::vector<std::string> builtin_vertex_names() { return {"occupancy", "neighbor_product"}; }
inline std::vector<std::string> builtin_edge_names() { return {"edge_sum", "edge_product_plus_c"}; }
inline std::vector<std::string> builtin_rate_names() { return {"constant", "ex4_symmetrized"}; }

inline VertexBundle builtin_vertex_bundle(const TowerSpec& spec, const std::string& name) {
  if (name == "occupancy") return occupancy(spec);
  if (name == "neighbor_product") return neighbor_product(spec);
  throw ConfigError("unknown vertex bundle '" + name + "'");
}

inline EdgeBundle builtin_edge_bundle(const TowerSpec& spec, const std::string& name, double c = 1.0) {
  if (name == "edge_sum") return edge_sum(spec);
  if (name == "edge_product_plus_c") return edge_product_plus_c(spec, c);
  throw ConfigError("unknown edge bundle '" + name + "'");
}

inline JumpRate builtin_jump_rate(const TowerSpec& spec, const std::string& name, double c = 1.0) {
  if (name == "constant") return constant_rate(spec, c);
  if (name == "ex4_symmetrized") return ex4_symmetrized(spec, c);
  if (name == "edge_product_plus_c" || name == "edge_sum") return JumpRate(builtin_edge_bundle(spec, name, c));
  throw ConfigError("unknown jump rate '" + name + "'");
}

// --- text format -----------------------------------------------------------
//
//   # comment
//   kind vertex | edge
//   name <identifier>
//   radius <r>
//   <bits> <value>                 (vertex bundles)
//   <generator> <bits> <value>     (edge bundles)
//
// <bits> lists the window pattern in canonical order, first character = bit 0.
// Every pattern must appear exactly once.

struct BundleFile {
  std::string kind;
  std::string name;
  int radius = -1;
  std::vector<std::tuple<int, std::string, double>> rows;
};

inline BundleFile parse_bundle_text(std::istream& in) {
  BundleFile file;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    std::istringstream ls(line);
    std::string head;
    if (!(ls >> head)) continue;
    auto fail = [&](const std::string& msg) {
      throw ConfigError("bundle file line " + std::to_string(lineno) + ": " + msg);
    };
    if (head == "kind") {
      ls >> file.kind;
      if (file.kind != "vertex" && file.kind != "edge") fail("kind must be vertex or edge");
    } else if (head == "name") {
      ls >> file.name;
    } else if (head == "radius") {
      if (!(ls >> file.radius) || file.radius < 0) fail("radius must be a non-negative integer");
    } else if (file.kind == "edge") {
      int s = 0;
      try {
        s = std::stoi(head);
      } catch (const std::exception&) {
        fail("expected generator index");
      }
      std::string bits;
      double v;
      if (!(ls >> bits >> v)) fail("expected '<generator> <bits> <value>'");
      file.rows.emplace_back(s, bits, v);
    } else if (file.kind == "vertex") {
      double v;
      if (!(ls >> v)) fail("expected '<bits> <value>'");
      file.rows.emplace_back(0, head, v);
    } else {
      fail("'kind' must precede the table");
    }
  }
  if (file.kind.empty() || file.radius < 0) throw ConfigError("bundle file needs 'kind' and 'radius'");
  if (file.name.empty()) file.name = "file";
  return file;
}

inline Pattern parse_pattern_bits(const std::string& bits, std::size_t width) {
  if (bits.size() != width) throw ConfigError("pattern '" + bits + "' must have " + std::to_string(width) + " bits");
  Pattern p = 0;
  for (std::size_t j = 0; j < width; ++j) {
    if (bits[j] == '1') {
      p |= Pattern{1} << j;
    } else if (bits[j] != '0') {
      throw ConfigError("pattern '" + bits + "' may only contain 0 and 1");
    }
  }
  return p;
}

inline std::vector<double> fill_table(const std::vector<std::pair<std::string, double>>& rows, std::size_t width) {
  std::vector<double> table(std::size_t{1} << width, 0.0);
  std::vector<char> seen(table.size(), 0);
  for (const auto& [bits, v] : rows) {
    const Pattern p = parse_pattern_bits(bits, width);
    if (seen[p]) throw ConfigError("pattern '" + bits + "' listed twice");
    seen[p] = 1;
    table[p] = v;
  }
  if (std::find(seen.begin(), seen.end(), 0) != seen.end()) throw ConfigError("bundle table is incomplete");
  return table;
}

inline VertexBundle read_vertex_bundle(std::istream& in, const TowerSpec& spec) {
  const auto file = parse_bundle_text(in);
  if (file.kind != "vertex") throw ConfigError("expected a vertex bundle file");
  const auto window = vertex_window(spec, file.radius);
  check_window_size(window.size());
  std::vector<std::pair<std::string, double>> rows;
  for (const auto& [s, bits, v] : file.rows) rows.emplace_back(bits, v);
  return VertexBundle(file.name, spec, file.radius, fill_table(rows, window.size()));
}

inline EdgeBundle read_edge_bundle(std::istream& in, const TowerSpec& spec) {
  const auto file = parse_bundle_text(in);
  if (file.kind != "edge") throw ConfigError("expected an edge bundle file");
  std::vector<std::vector<std::pair<std::string, double>>> per(spec.generator_count());
  for (const auto& [s, bits, v] : file.rows) {
    if (s < 0 || s >= spec.generator_count()) throw ConfigError("generator index out of range");
    per[s].emplace_back(bits, v);
  }
  std::vector<std::vector<double>> tables;
  for (int s = 0; s < spec.generator_count(); ++s) {
    const auto window = edge_window(spec, file.radius, s);
    check_window_size(window.size());
    tables.push_back(fill_table(per[s], window.size()));
  }
  return EdgeBundle(file.name, spec, file.radius, std::move(tables));
}

inline std::string pattern_bits(Pattern p, std::size_t width) {
  std::string s(width, '0');
  for (std::size_t j = 0; j < width; ++j) s[j] = ((p >> j) & 1U) ? '1' : '0';
  return s;
}

inline void write_bundle(std::ostream& os, const VertexBundle& f) {
  os << "kind vertex\nname " << f.name() << "\nradius " << f.radius() << '\n';
  for (std::size_t p = 0; p < f.table().size(); ++p) {
    os << pattern_bits(static_cast<Pattern>(p), f.window().size()) << ' ' << f.table()[p] << '\n';
  }
}

inline void write_bundle(std::ostream& os, const EdgeBundle& f) {
  os << "kind edge\nname " << f.name() << "\nradius " << f.radius() << '\n';
  for (int s = 0; s < f.spec().generator_count(); ++s) {
    for (std::size_t p = 0; p < f.table(s).size(); ++p) {
      os << s << ' ' << pattern_bits(static_cast<Pattern>(p), f.window(s).size()) << ' ' << f.table(s)[p] << '\n';
    }
  }
}

/// Builtin name, or "file:<path>" for the text format.
inline VertexBundle load_vertex_bundle(const TowerSpec& spec, const std::string& ref) {
  if (ref.rfind("file:", 0) == 0) {
    std::ifstream in(ref.substr(5));
    if (!in) throw ConfigError("cannot open bundle file " + ref.substr(5));
    return read_vertex_bundle(in, spec);
  }
  return builtin_vertex_bundle(spec, ref);
}

inline JumpRate load_jump_rate(const TowerSpec& spec, const std::string& ref, double c = 1.0) {
  if (ref.rfind("file:", 0) == 0) {
    std::ifstream in(ref.substr(5));
    if (!in) throw ConfigError("cannot open rate file " + ref.substr(5));
    return JumpRate(read_edge_bundle(in, spec));
  }
  return builtin_jump_rate(spec, ref, c);
}

// --- evaluation on quotients -----------------------------------------------

/// f bound to a quotient: precomputed lifted windows for every vertex.
class BoundVertexBundle {
 public:
  BoundVertexBundle(const VertexBundle& f, const QuotientGraph& graph) : f_(&f), window_(graph, f.window()) {}
  double operator()(Vertex x, const Configuration& eta) const { return f_->value(window_.pattern(x, eta)); }
  const BoundWindow& window() const { return window_; }
  const VertexBundle& bundle() const { return *f_; }

 private:
  const VertexBundle* f_;
  BoundWindow window_;
};

/// Edge bundle bound to a quotient; row e of the window is x·W_s for e = (x, xs, s).
class BoundEdgeBundle {
 public:
  BoundEdgeBundle(const EdgeBundle& c, const QuotientGraph& graph) : c_(&c), degree_(graph.degree()) {
    for (int s = 0; s < degree_; ++s) per_generator_.emplace_back(graph, c.window(s));
  }
  double operator()(std::size_t e, const Configuration& eta) const {
    const std::size_t x = e / degree_;
    const int s = static_cast<int>(e % degree_);
    return c_->value(s, per_generator_[s].pattern(x, eta));
  }
  const Vertex* window_row(std::size_t e, std::size_t* width) const {
    const int s = static_cast<int>(e % degree_);
    *width = per_generator_[s].width();
    return per_generator_[s].row(e / degree_);
  }

 private:
  const EdgeBundle* c_;
  int degree_;
  std::vector<BoundWindow> per_generator_;
};

inline double eval_vertex(const VertexBundle& f, const QuotientGraph& graph, Vertex x, const Configuration& eta) {
  return BoundVertexBundle(f, graph)(x, eta);
}

inline double eval_edge(const EdgeBundle& c, const QuotientGraph& graph, std::size_t e, const Configuration& eta) {
  return BoundEdgeBundle(c, graph)(e, eta);
}

/// f̄_{x,i}(η) = (1/|F_i|) Σ_{σ ∈ F_i} f_{x·σ}(η).
inline double local_average(const VertexBundle& f, const QuotientGraph& graph, Vertex x, int i,
                            const Configuration& eta) {
  const auto folner = folner_set(graph.spec(), i);
  const BoundVertexBundle bound(f, graph);
  double sum = 0;
  for (const auto& sigma : folner.elements) sum += bound(graph.translate(x, sigma), eta);
  return sum / static_cast<double>(folner.elements.size());
}

// --- global averages ---------------------------------------------------------

/// Dense polynomial in monomial coefficients, low degree first.
struct Polynomial {
  std::vector<double> coefficients;

  double operator()(double x) const {
    double v = 0;
    for (auto it = coefficients.rbegin(); it != coefficients.rend(); ++it) v = v * x + *it;
    return v;
  }
  int degree() const {
    int d = static_cast<int>(coefficients.size()) - 1;
    while (d > 0 && coefficients[d] == 0) --d;
    return d;
  }
};

/// ⟨f_o⟩(ρ) = Σ_k A_k ρ^k (1-ρ)^{n-k}, A_k = sum of table values over patterns
/// with k ones. Evaluated in this Bernstein-like form; monomial coefficients
/// are exposed for reporting.
class GlobalAverage {
 public:
  GlobalAverage() = default;
  explicit GlobalAverage(const std::vector<double>& table, std::size_t sites) : sites_(sites), by_count_(sites + 1, 0.0) {
    for (std::size_t p = 0; p < table.size(); ++p) by_count_[std::popcount(p)] += table[p];
    std::vector<double> coeff(sites + 1, 0.0);
    for (std::size_t k = 0; k <= sites; ++k) {
      double binom = 1;  // C(n-k, j)
      for (std::size_t j = 0; j + k <= sites; ++j) {
        coeff[k + j] += by_count_[k] * binom * ((j % 2) ? -1.0 : 1.0);
        binom = binom * static_cast<double>(sites - k - j) / static_cast<double>(j + 1);
      }
    }
    polynomial_.coefficients = std::move(coeff);
  }

  double operator()(double rho) const {
    double v = 0;
    for (std::size_t k = 0; k <= sites_; ++k) {
      v += by_count_[k] * std::pow(rho, static_cast<double>(k)) * std::pow(1 - rho, static_cast<double>(sites_ - k));
    }
    return v;
  }

  const Polynomial& polynomial() const { return polynomial_; }
  const std::vector<double>& by_count() const { return by_count_; }

 private:
  std::size_t sites_ = 0;
  std::vector<double> by_count_;
  Polynomial polynomial_;
};

inline GlobalAverage global_average_polynomial(const VertexBundle& f) {
  return GlobalAverage(f.table(), f.window().size());
}

/// ⟨f_e⟩(ρ) for the edge with generator s.
inline GlobalAverage global_average_polynomial(const EdgeBundle& f, int s) {
  return GlobalAverage(f.table(s), f.window(s).size());
}

/// Exact Var_{ν_ρ}(f̄_{o,i}) on the Cayley graph, summing Cov(f_σ, f_τ) over
/// σ, τ ∈ F_i; each covariance is an enumeration over the union of the two windows.
inline double local_average_variance(const VertexBundle& f, int i, double rho) {
  const auto& spec = f.spec();
  const auto folner = folner_set(spec, i);
  const auto& w = f.window();
  std::map<Element, double> cache;
  auto covariance = [&](const Element& d) {
    if (auto it = cache.find(d); it != cache.end()) return it->second;
    // windows W and d·W
    std::vector<Element> sites = w;
    std::vector<int> pos_b(w.size());
    for (std::size_t j = 0; j < w.size(); ++j) {
      const Element g = spec.multiply(d, w[j]);
      auto it = std::find(sites.begin(), sites.end(), g);
      if (it == sites.end()) {
        pos_b[j] = static_cast<int>(sites.size());
        sites.push_back(g);
      } else {
        pos_b[j] = static_cast<int>(it - sites.begin());
      }
    }
    double cov = 0;
    if (sites.size() < 2 * w.size()) {
      check_window_size(sites.size());
      double ea = 0, eb = 0, eab = 0;
      for (std::uint64_t p = 0; p < (std::uint64_t{1} << sites.size()); ++p) {
        const int ones = std::popcount(p);
        const double weight = std::pow(rho, ones) * std::pow(1 - rho, static_cast<int>(sites.size()) - ones);
        const Pattern pa = static_cast<Pattern>(p & ((std::uint64_t{1} << w.size()) - 1));
        Pattern pb = 0;
        for (std::size_t j = 0; j < w.size(); ++j) pb |= static_cast<Pattern>((p >> pos_b[j]) & 1U) << j;
        const double a = f.value(pa), b = f.value(pb);
        ea += weight * a;
        eb += weight * b;
        eab += weight * a * b;
      }
      cov = eab - ea * eb;
    }
    cache.emplace(d, cov);
    return cov;
  };
  double total = 0;
  for (const auto& s : folner.elements) {
    const Element sinv = spec.inverse(s);
    for (const auto& t : folner.elements) total += covariance(spec.multiply(sinv, t));
  }
  const double n = static_cast<double>(folner.elements.size());
  return total / (n * n);
}

// --- the integrand V ---------------------------------------------------------

/// V_{o,m,ε,i}(η) = Σ_x | f̄_{x,i}(η) − ⟨f_o⟩(η̄_{x,b(ε√t_m)}) |, with all
/// windows precomputed on one quotient.
class VFunctional {
 public:
  VFunctional(const VertexBundle& f, const QuotientGraph& graph, double eps, int i, double t_m)
      : graph_(&graph), f_(f), bound_f_(f_, graph), i_(i), eps_(eps), t_m_(t_m) {
    if (i < 1) throw ConfigError("Folner index i must be >= 1");
    if (!(eps > 0)) throw ConfigError("eps must be positive");
    K_ = eps * std::sqrt(t_m);
    const BIndex b = b_index(graph.spec(), K_);
    b_ = b.value;
    clamped_ = b.clamped;
    const auto fi = folner_set(graph.spec(), i).elements;
    const auto fb = folner_set(graph.spec(), b_).elements;
    avg_f_ = BoundWindow(graph, fi);
    avg_occ_ = BoundWindow(graph, fb);
    average_ = global_average_polynomial(f_);
    const std::size_t nb = fb.size();
    profile_.resize(nb + 1);
    for (std::size_t k = 0; k <= nb; ++k) profile_[k] = average_(static_cast<double>(k) / static_cast<double>(nb));
  }

  double operator()(const Configuration& eta) const {
    const std::size_t n = graph_->vertex_count();
    std::vector<double> fv(n);
    for (std::size_t y = 0; y < n; ++y) fv[y] = bound_f_(static_cast<Vertex>(y), eta);
    double total = 0;
    for (std::size_t x = 0; x < n; ++x) total += term(x, fv, eta);
    return total;
  }

  double term(std::size_t x, const std::vector<double>& f_values, const Configuration& eta) const {
    double s = 0;
    const Vertex* r = avg_f_.row(x);
    for (std::size_t j = 0; j < avg_f_.width(); ++j) s += f_values[r[j]];
    return std::abs(s / static_cast<double>(avg_f_.width()) - profile_[occupied_in_block(x, eta)]);
  }

  std::size_t occupied_in_block(std::size_t x, const Configuration& eta) const {
    std::size_t k = 0;
    const Vertex* r = avg_occ_.row(x);
    for (std::size_t j = 0; j < avg_occ_.width(); ++j) k += eta[r[j]];
    return k;
  }

  /// C(f)·[Γ:Γ_m] with C(f) = 2 max|f|.
  double upper_bound() const { return 2 * f_.max_abs() * static_cast<double>(graph_->vertex_count()); }

  const QuotientGraph& graph() const { return *graph_; }
  const VertexBundle& bundle() const { return f_; }
  const BoundVertexBundle& bound_bundle() const { return bound_f_; }
  const BoundWindow& average_window() const { return avg_f_; }
  const BoundWindow& block_window() const { return avg_occ_; }
  const GlobalAverage& global_average() const { return average_; }
  /// ⟨f_o⟩(k/|F_b|) for k = 0..|F_b|.
  const std::vector<double>& profile() const { return profile_; }
  int i() const { return i_; }
  int b() const { return b_; }
  bool b_clamped() const { return clamped_; }
  double K() const { return K_; }
  double eps() const { return eps_; }
  double t_m() const { return t_m_; }

 private:
  const QuotientGraph* graph_;
  VertexBundle f_;
  BoundVertexBundle bound_f_;
  BoundWindow avg_f_;
  BoundWindow avg_occ_;
  GlobalAverage average_;
  std::vector<double> profile_;
  int i_;
  int b_ = 1;
  bool clamped_ = false;
  double eps_;
  double t_m_;
  double K_ = 0;
};

inline double eval_V(const VertexBundle& f, const QuotientGraph& graph, double eps, int i, double t_m,
                     const Configuration& eta) {
  return VFunctional(f, graph, eps, i, t_m)(eta);
}

}  // namespace sep
