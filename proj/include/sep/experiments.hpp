#pragma once

// Experiment orchestration: INI configuration, the finite-size trend studies
// behind the superexponential, one-block and two-blocks estimates, the Følner
// report, spectral and path-lemma checks, and CSV/JSON/SVG output.

#include <algorithm>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "json.hpp"
#include "sep/bundles.hpp"
#include "sep/common.hpp"
#include "sep/dynamics.hpp"
#include "sep/group.hpp"
#include "sep/measure.hpp"
#include "sep/quotient_graph.hpp"
#include "sep/spectral.hpp"

namespace sep {

// --- configuration -------------------------------------------------------------

struct ExperimentConfig {
  std::string family = "integer_lattice";
  int dimension = 1;
  int base = 2;
  std::vector<int> levels{3, 4, 5, 6, 7};
  std::string bundle = "neighbor_product";
  std::string rate = "constant";
  double rate_c = 1.0;
  std::vector<double> t_m;  // empty: diffusive t_m = diam(X_m)²
  double T = 1.0;
  std::vector<double> eps{0.25};
  std::vector<int> i{3};
  double delta = 0.25;
  std::vector<double> a{0.25, 0.5, 1.0, 2.0, 4.0};
  std::size_t replicas = 1000;
  std::uint64_t seed = 1;
  double rho = 0.5;
  unsigned threads = 0;
  SimulationMode mode = SimulationMode::Thinned;
  int L = 1;
  std::size_t samples = 100;
  std::size_t functions = 1000;
  int spectral_sites = caps::dense_sites;
  int variational_sites = 8;
  int exact_sites = 8;
  std::string output = "results";
  bool svg = false;

  TowerSpec spec() const {
    if (family == "integer_lattice") return TowerSpec::integer_lattice(dimension, base);
    if (family == "heisenberg") return TowerSpec::heisenberg(base);
    throw ConfigError("unknown group family '" + family + "'");
  }

  double time_scale(const QuotientGraph& g, std::size_t level_index) const {
    return t_m.empty() ? diffusive_time(g) : t_m[level_index];
  }
};

namespace detail {

template <class T>
T parse_scalar(const std::string& key, const std::string& text) {
  std::istringstream in(text);
  T value{};
  if (!(in >> value)) throw ConfigError("config key '" + key + "': cannot parse '" + text + "'");
  std::string rest;
  if (in >> rest) throw ConfigError("config key '" + key + "': trailing text in '" + text + "'");
  return value;
}

template <class T>
std::vector<T> parse_list(const std::string& key, const std::string& text) {
  std::vector<T> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    const auto b = item.find_first_not_of(" \t"), e = item.find_last_not_of(" \t");
    if (b == std::string::npos) continue;
    out.push_back(parse_scalar<T>(key, item.substr(b, e - b + 1)));
  }
  if (out.empty()) throw ConfigError("config key '" + key + "' is an empty list");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError("config key '" + key + "': expected true or false");
}

}  // namespace detail

/// Keys accepted in each section; anything else is rejected.
inline const std::map<std::string, std::set<std::string>>& config_schema() {
  static const std::map<std::string, std::set<std::string>> schema{
      {"tower", {"family", "dimension", "base", "levels"}},
      {"experiment",
       {"bundle", "rate", "rate_c", "t_m", "T", "eps", "i", "delta", "a", "replicas", "seed", "rho", "threads", "mode",
        "L", "samples", "functions", "spectral_sites", "variational_sites", "exact_sites"}},
      {"output", {"directory", "svg"}},
  };
  return schema;
}

inline ExperimentConfig config_from_tree(const boost::property_tree::ptree& tree) {
  const auto& schema = config_schema();
  for (const auto& [section, body] : tree) {
    auto it = schema.find(section);
    if (it == schema.end()) throw ConfigError("unknown config section [" + section + "]");
    for (const auto& [key, value] : body) {
      if (!it->second.contains(key)) throw ConfigError("unknown config key '" + section + "." + key + "'");
    }
  }
  ExperimentConfig c;
  auto get = [&](const std::string& path) -> std::optional<std::string> {
    if (auto v = tree.get_optional<std::string>(boost::property_tree::ptree::path_type(path, '.'))) return *v;
    return std::nullopt;
  };
  using detail::parse_list;
  using detail::parse_scalar;
  if (auto v = get("tower.family")) c.family = *v;
  if (auto v = get("tower.dimension")) c.dimension = parse_scalar<int>("dimension", *v);
  if (auto v = get("tower.base")) c.base = parse_scalar<int>("base", *v);
  if (auto v = get("tower.levels")) c.levels = parse_list<int>("levels", *v);
  if (auto v = get("experiment.bundle")) c.bundle = *v;
  if (auto v = get("experiment.rate")) c.rate = *v;
  if (auto v = get("experiment.rate_c")) c.rate_c = parse_scalar<double>("rate_c", *v);
  if (auto v = get("experiment.t_m"); v && *v != "diffusive") c.t_m = parse_list<double>("t_m", *v);
  if (auto v = get("experiment.T")) c.T = parse_scalar<double>("T", *v);
  if (auto v = get("experiment.eps")) c.eps = parse_list<double>("eps", *v);
  if (auto v = get("experiment.i")) c.i = parse_list<int>("i", *v);
  if (auto v = get("experiment.delta")) c.delta = parse_scalar<double>("delta", *v);
  if (auto v = get("experiment.a")) c.a = parse_list<double>("a", *v);
  if (auto v = get("experiment.replicas")) {
    const auto r = parse_scalar<long long>("replicas", *v);
    if (r < 1) throw ConfigError("replicas must be >= 1");
    c.replicas = static_cast<std::size_t>(r);
  }
  if (auto v = get("experiment.seed")) c.seed = parse_scalar<std::uint64_t>("seed", *v);
  if (auto v = get("experiment.rho")) c.rho = parse_scalar<double>("rho", *v);
  if (auto v = get("experiment.threads")) c.threads = parse_scalar<unsigned>("threads", *v);
  if (auto v = get("experiment.mode")) {
    if (*v == "thinned") {
      c.mode = SimulationMode::Thinned;
    } else if (*v == "literal") {
      c.mode = SimulationMode::Literal;
    } else {
      throw ConfigError("mode must be thinned or literal");
    }
  }
  if (auto v = get("experiment.L")) c.L = parse_scalar<int>("L", *v);
  if (auto v = get("experiment.samples")) c.samples = parse_scalar<std::size_t>("samples", *v);
  if (auto v = get("experiment.functions")) c.functions = parse_scalar<std::size_t>("functions", *v);
  if (auto v = get("experiment.spectral_sites")) c.spectral_sites = parse_scalar<int>("spectral_sites", *v);
  if (auto v = get("experiment.variational_sites")) c.variational_sites = parse_scalar<int>("variational_sites", *v);
  if (auto v = get("experiment.exact_sites")) c.exact_sites = parse_scalar<int>("exact_sites", *v);
  if (auto v = get("output.directory")) c.output = *v;
  if (auto v = get("output.svg")) c.svg = detail::parse_bool("svg", *v);
  return c;
}

/// Checks everything that can be checked before a simulation starts: the
/// group, the levels, the bundle and the jump rate (symmetry, positivity).
inline void validate_config(const ExperimentConfig& c) {
  const auto spec = c.spec();
  spec.validate();
  if (c.levels.empty()) throw ConfigError("levels must not be empty");
  for (int m : c.levels) {
    if (m < 1) throw ConfigError("levels must be >= 1");
  }
  if (!c.t_m.empty() && c.t_m.size() != c.levels.size()) throw ConfigError("t_m needs one value per level");
  for (double t : c.t_m) {
    if (!(t > 0)) throw ConfigError("t_m values must be positive");
  }
  if (!(c.T > 0)) throw ConfigError("T must be positive");
  for (double e : c.eps) {
    if (!(e > 0)) throw ConfigError("eps values must be positive");
  }
  for (int i : c.i) {
    if (i < 1) throw ConfigError("i values must be >= 1");
  }
  if (!(c.delta >= 0)) throw ConfigError("delta must be non-negative");
  for (double a : c.a) {
    if (!(a > 0)) throw ConfigError("a values must be positive");
  }
  if (!(c.rho >= 0 && c.rho <= 1)) throw ConfigError("rho must lie in [0, 1]");
  if (c.L < 0) throw ConfigError("L must be >= 0");
  if (c.samples < 1 || c.functions < 1) throw ConfigError("samples and functions must be >= 1");
  if (c.spectral_sites > caps::exact_sites || c.exact_sites > caps::dense_sites ||
      c.variational_sites > caps::dense_sites) {
    throw ConfigError("spectral_sites <= 16, exact_sites <= 12 and variational_sites <= 12 are required");
  }
  load_vertex_bundle(spec, c.bundle);
  load_jump_rate(spec, c.rate, c.rate_c);
}

/// Applies "section.key=value" overrides.
inline void apply_overrides(boost::property_tree::ptree& tree, const std::vector<std::string>& overrides) {
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    const auto dot = o.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
      throw ConfigError("override '" + o + "' must look like section.key=value");
    }
    tree.put(boost::property_tree::ptree::path_type(o.substr(0, eq), '.'), o.substr(eq + 1));
  }
}

inline ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {}) {
  boost::property_tree::ptree tree;
  if (!path.empty()) {
    try {
      boost::property_tree::read_ini(path, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
      throw ConfigError(std::string("cannot read config: ") + e.what());
    }
  }
  apply_overrides(tree, overrides);
  auto c = config_from_tree(tree);
  validate_config(c);
  return c;
}

inline ExperimentConfig parse_config_text(const std::string& text, const std::vector<std::string>& overrides = {}) {
  boost::property_tree::ptree tree;
  std::istringstream in(text);
  try {
    boost::property_tree::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("cannot read config: ") + e.what());
  }
  apply_overrides(tree, overrides);
  auto c = config_from_tree(tree);
  validate_config(c);
  return c;
}

/// The output directory, under $SEP_OUTPUT_ROOT when that is set and the
/// configured directory is relative.
inline std::filesystem::path output_directory(const ExperimentConfig& c) {
  std::filesystem::path dir(c.output);
  if (const char* root = std::getenv("SEP_OUTPUT_ROOT"); root && *root && dir.is_relative()) {
    dir = std::filesystem::path(root) / dir;
  }
  return dir;
}

// --- reports --------------------------------------------------------------------

struct Report {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
  nlohmann::ordered_json summary = nlohmann::ordered_json::object();
  // optional plot: y against x, one line per distinct value of `series`
  std::string plot_x, plot_y, plot_series;

  std::size_t column(const std::string& c) const {
    const auto it = std::find(columns.begin(), columns.end(), c);
    if (it == columns.end()) throw Error("report " + name + " has no column " + c);
    return static_cast<std::size_t>(it - columns.begin());
  }
  double at(std::size_t row, const std::string& c) const { return rows[row][column(c)]; }
};

inline std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string report_csv(const Report& r) {
  std::string out;
  for (std::size_t j = 0; j < r.columns.size(); ++j) out += (j ? "," : "") + r.columns[j];
  out += '\n';
  for (const auto& row : r.rows) {
    for (std::size_t j = 0; j < row.size(); ++j) out += (j ? "," : "") + format_number(row[j]);
    out += '\n';
  }
  return out;
}

inline nlohmann::ordered_json report_json(const Report& r) {
  nlohmann::ordered_json j;
  j["experiment"] = r.name;
  j["summary"] = r.summary;
  auto rows = nlohmann::ordered_json::array();
  for (const auto& row : r.rows) {
    nlohmann::ordered_json o;
    for (std::size_t c = 0; c < r.columns.size(); ++c) {
      if (std::isfinite(row[c])) {
        o[r.columns[c]] = row[c];
      } else {
        o[r.columns[c]] = format_number(row[c]);
      }
    }
    rows.push_back(std::move(o));
  }
  j["rows"] = std::move(rows);
  return j;
}

/// A line plot of the report's plot columns; non-finite points are skipped.
inline std::string report_svg(const Report& r) {
  const std::size_t xc = r.column(r.plot_x), yc = r.column(r.plot_y);
  const std::size_t sc = r.plot_series.empty() ? r.columns.size() : r.column(r.plot_series);
  std::map<double, std::vector<std::pair<double, double>>> lines;
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& row : r.rows) {
    if (!std::isfinite(row[xc]) || !std::isfinite(row[yc])) continue;
    lines[sc < row.size() ? row[sc] : 0.0].emplace_back(row[xc], row[yc]);
    x0 = std::min(x0, row[xc]);
    x1 = std::max(x1, row[xc]);
    y0 = std::min(y0, row[yc]);
    y1 = std::max(y1, row[yc]);
  }
  const double W = 640, H = 400, pad = 50;
  if (!(x1 > x0)) x1 = x0 + 1;
  if (!(y1 > y0)) y1 = y0 + 1;
  auto px = [&](double x) { return pad + (x - x0) / (x1 - x0) * (W - 2 * pad); };
  auto py = [&](double y) { return H - pad - (y - y0) / (y1 - y0) * (H - 2 * pad); };
  static const char* colors[] = {"#1b6ca8", "#c0392b", "#27ae60", "#8e44ad", "#d35400", "#2c3e50"};
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"400\">\n";
  s += "<rect width=\"640\" height=\"400\" fill=\"white\"/>\n";
  s += "<line x1=\"50\" y1=\"350\" x2=\"590\" y2=\"350\" stroke=\"black\"/>\n";
  s += "<line x1=\"50\" y1=\"50\" x2=\"50\" y2=\"350\" stroke=\"black\"/>\n";
  s += "<text x=\"320\" y=\"390\" text-anchor=\"middle\">" + r.plot_x + " [" + format_number(x0) + ", " +
       format_number(x1) + "]</text>\n";
  s += "<text x=\"15\" y=\"200\" transform=\"rotate(-90 15 200)\" text-anchor=\"middle\">" + r.plot_y + " [" +
       format_number(y0) + ", " + format_number(y1) + "]</text>\n";
  std::size_t k = 0;
  for (const auto& [series, pts] : lines) {
    std::string path;
    for (const auto& [x, y] : pts) path += format_number(px(x)) + "," + format_number(py(y)) + " ";
    s += "<polyline fill=\"none\" stroke=\"" + std::string(colors[k % 6]) + "\" stroke-width=\"2\" points=\"" + path +
         "\"/>\n";
    if (!r.plot_series.empty()) {
      s += "<text x=\"600\" y=\"" + format_number(60 + 16.0 * k) + "\" font-size=\"12\" fill=\"" + colors[k % 6] +
           "\" text-anchor=\"end\">" + r.plot_series + "=" + format_number(series) + "</text>\n";
    }
    ++k;
  }
  return s + "</svg>\n";
}

/// Writes <name>.csv and <name>.json (and <name>.svg when requested) per report.
inline std::vector<std::filesystem::path> emit_outputs(const std::vector<Report>& reports,
                                                       const std::filesystem::path& dir, bool svg = false) {
  std::vector<std::filesystem::path> written;
  if (reports.empty()) return written;
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error("cannot create output directory " + dir.string() + ": " + ec.message());
  auto write = [&](const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error("cannot write " + p.string());
    out << text;
    if (!out) throw Error("cannot write " + p.string());
    written.push_back(p);
  };
  for (const auto& r : reports) {
    write(dir / (r.name + ".csv"), report_csv(r));
    write(dir / (r.name + ".json"), report_json(r).dump(2) + "\n");
    if (svg && !r.plot_x.empty()) write(dir / (r.name + ".svg"), report_svg(r));
  }
  return written;
}

// --- shared helpers ----------------------------------------------------------------

inline std::vector<QuotientGraph> build_levels(const ExperimentConfig& c) {
  const auto spec = c.spec();
  std::vector<QuotientGraph> out;
  for (int m : c.levels) out.emplace_back(spec, m);
  return out;
}

/// Least-squares slope of log y against log x.
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw Error("slope needs at least two points");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double lx = std::log(x[k]), ly = std::log(y[k]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

/// Levels (by row) whose log-rate interval lies entirely above the previous level's.
inline std::vector<int> trend_violations(const std::vector<double>& lo, const std::vector<double>& hi,
                                         const std::vector<int>& levels) {
  std::vector<int> bad;
  for (std::size_t k = 1; k < lo.size(); ++k) {
    if (lo[k] > hi[k - 1]) bad.push_back(levels[k]);
  }
  return bad;
}

// --- build-tower -------------------------------------------------------------------

inline std::vector<Report> run_build_tower(const ExperimentConfig& c, bool edge_lists = false) {
  const auto spec = c.spec();
  const int depth = *std::max_element(c.levels.begin(), c.levels.end());
  const auto tower = build_tower(spec, depth);
  Report r;
  r.name = "tower";
  r.columns = {"m", "N", "oriented_edges", "degree", "diameter", "injectivity_radius", "covers_previous"};
  for (int m : c.levels) {
    const auto& g = tower[m - 1];
    const double covers = m == 1 ? 1.0 : (validate_covering(g, tower[m - 2]) ? 1.0 : 0.0);
    r.rows.push_back({double(m), double(g.vertex_count()), double(g.edges().size()), double(g.degree()),
                      double(g.diameter()), double(injectivity_radius(g)), covers});
    if (edge_lists) {
      std::ostringstream os;
      g.write_edge_list(os);
      r.summary["edge_list_m" + std::to_string(m)] = os.str();
    }
  }
  r.summary["family"] = spec.describe();
  return {r};
}

// --- superexponential trend ------------------------------------------------------------

inline std::vector<Report> run_superexp(const ExperimentConfig& c) {
  const auto spec = c.spec();
  const auto f = load_vertex_bundle(spec, c.bundle);
  const auto rate = load_jump_rate(spec, c.rate, c.rate_c);
  const auto graphs = build_levels(c);
  Report r;
  r.name = "superexp";
  r.columns = {"m",       "N",    "eps", "i", "delta",    "p_hat",        "ci_lo", "ci_hi", "log_rate", "log_rate_lo",
               "log_rate_hi", "t_m", "b", "b_clamped", "T", "replicas", "hits", "censored", "fk_bound", "exact_p",
               "exact_z"};
  r.plot_x = "m";
  r.plot_y = "log_rate";
  r.plot_series = "i";
  r.summary["bundle"] = f.name();
  r.summary["rate"] = rate.name();
  auto trends = nlohmann::ordered_json::array();
  for (double eps : c.eps) {
    for (int i : c.i) {
      std::vector<double> lo, hi;
      for (std::size_t li = 0; li < graphs.size(); ++li) {
        const auto& g = graphs[li];
        const double tm = c.time_scale(g, li);
        ExceedanceParams p;
        p.eps = eps;
        p.i = i;
        p.delta = c.delta;
        p.T = c.T;
        p.t_m = tm;
        p.replicas = c.replicas;
        p.seed = c.seed;
        p.rho = c.rho;
        p.threads = c.threads;
        p.mode = c.mode;
        const auto e = estimate_exceedance(g, f, rate, p);
        double fk = std::numeric_limits<double>::quiet_NaN();
        double exact = fk, z = fk;
        const auto n = g.vertex_count();
        if (n <= static_cast<std::size_t>(c.spectral_sites) || n <= static_cast<std::size_t>(c.exact_sites)) {
          const auto model = make_exclusion_model(g, rate);
          const Vector V = potential_vector(VFunctional(f, g, eps, i, tm));
          if (n <= static_cast<std::size_t>(c.spectral_sites) && c.delta > 0) {
            fk = chebyshev_fk_bound(model, tm, V, c.T, c.delta, c.a);
          }
          if (n <= static_cast<std::size_t>(c.exact_sites)) {
            exact = exact_exceedance_probability(model, tm, V, c.T, c.delta * static_cast<double>(n), c.rho);
            const double se = std::sqrt(exact * (1 - exact) / static_cast<double>(c.replicas));
            z = se > 0 ? (e.p_hat - exact) / se : (e.p_hat == exact ? 0.0 : std::numeric_limits<double>::infinity());
          }
        }
        const double N = static_cast<double>(n);
        lo.push_back(e.log_rate_lo);
        hi.push_back(e.log_rate_hi);
        r.rows.push_back({double(e.m), N, eps, double(i), c.delta, e.p_hat, e.ci_lo, e.ci_hi, e.log_rate, e.log_rate_lo, e.log_rate_hi,
                          e.t_m, double(e.b), e.b_clamped ? 1.0 : 0.0, e.T, double(e.replicas), double(e.hits),
                          e.censored ? 1.0 : 0.0, fk, exact, z});
      }
      const auto bad = trend_violations(lo, hi, c.levels);
      nlohmann::ordered_json t;
      t["eps"] = eps;
      t["i"] = i;
      t["non_increasing"] = bad.empty();
      t["violating_levels"] = bad;
      trends.push_back(t);
    }
  }
  r.summary["trend"] = trends;
  return {r};
}

// --- one-block ------------------------------------------------------------------------

inline std::vector<Report> run_one_block(const ExperimentConfig& c) {
  const auto spec = c.spec();
  const auto f = load_vertex_bundle(spec, c.bundle);
  const auto rate = load_jump_rate(spec, c.rate, c.rate_c);
  const auto graphs = build_levels(c);
  const auto average = global_average_polynomial(f);
  const double mean_f = average(c.rho);
  Report r;
  r.name = "one_block";
  r.columns = {"m", "N", "i", "F_size", "rho", "exact_variance", "sim_variance", "sim_variance_se", "scaled_variance",
               "one_block_mean", "one_block_se", "t_m", "T", "replicas", "samples"};
  r.plot_x = "F_size";
  r.plot_y = "sim_variance";
  r.plot_series = "m";
  auto slopes = nlohmann::ordered_json::array();
  for (std::size_t li = 0; li < graphs.size(); ++li) {
    const auto& g = graphs[li];
    const double tm = c.time_scale(g, li);
    const SimulationPlan plan(g, rate, tm, c.mode);
    const BoundVertexBundle bf(f, g);
    std::vector<BoundWindow> windows;
    std::vector<std::vector<double>> profiles;
    for (int i : c.i) {
      const auto fi = folner_set(spec, i).elements;
      windows.emplace_back(g, fi);
      std::vector<double> prof(fi.size() + 1);
      for (std::size_t k = 0; k <= fi.size(); ++k) prof[k] = average(double(k) / double(fi.size()));
      profiles.push_back(std::move(prof));
    }
    const std::size_t ni = c.i.size(), n = g.vertex_count();
    // per replica and i: mean squared deviation and mean one-block term
    std::vector<std::vector<double>> sq(c.replicas, std::vector<double>(ni)), ob(sq);
    const BernoulliSampler sampler(c.rho, n);
    parallel_for_replicas(c.replicas, c.threads, [&](std::size_t k, unsigned) {
      Philox rng(derive_seed(c.seed, k));
      Simulator sim(plan);
      sim.reset(sampler(rng));
      std::vector<double> fv(n);
      for (std::size_t s = 0; s < c.samples; ++s) {
        sim.run(c.T / static_cast<double>(c.samples), rng, [](double, std::uint32_t) { return true; });
        const auto& eta = sim.state();
        for (std::size_t y = 0; y < n; ++y) fv[y] = bf(static_cast<Vertex>(y), eta);
        for (std::size_t q = 0; q < ni; ++q) {
          const auto& w = windows[q];
          double s2 = 0, s1 = 0;
          for (std::size_t x = 0; x < n; ++x) {
            const Vertex* row = w.row(x);
            double fs = 0;
            std::size_t occ = 0;
            for (std::size_t j = 0; j < w.width(); ++j) {
              fs += fv[row[j]];
              occ += eta[row[j]];
            }
            const double fbar = fs / double(w.width());
            s2 += (fbar - mean_f) * (fbar - mean_f);
            s1 += std::abs(fbar - profiles[q][occ]);
          }
          sq[k][q] += s2 / double(n);
          ob[k][q] += s1 / double(n);
        }
      }
      for (std::size_t q = 0; q < ni; ++q) {
        sq[k][q] /= double(c.samples);
        ob[k][q] /= double(c.samples);
      }
    });
    std::vector<double> sizes, sim_var, exact_var;
    for (std::size_t q = 0; q < ni; ++q) {
      double m1 = 0, m2 = 0, o1 = 0, o2 = 0;
      for (std::size_t k = 0; k < c.replicas; ++k) {
        m1 += sq[k][q];
        m2 += sq[k][q] * sq[k][q];
        o1 += ob[k][q];
        o2 += ob[k][q] * ob[k][q];
      }
      const double R = double(c.replicas);
      m1 /= R;
      o1 /= R;
      const double se_v = c.replicas > 1 ? std::sqrt(std::max(0.0, m2 / R - m1 * m1) / (R - 1)) : 0.0;
      const double se_o = c.replicas > 1 ? std::sqrt(std::max(0.0, o2 / R - o1 * o1) / (R - 1)) : 0.0;
      const double size = double(windows[q].width());
      const double exact = local_average_variance(f, c.i[q], c.rho);
      sizes.push_back(size);
      sim_var.push_back(m1);
      exact_var.push_back(exact);
      r.rows.push_back({double(g.level()), double(n), double(c.i[q]), size, c.rho, exact, m1, se_v, size * m1, o1, se_o,
                        tm, c.T, R, double(c.samples)});
    }
    nlohmann::ordered_json s;
    s["m"] = g.level();
    if (ni >= 2) {
      s["exact_slope"] = loglog_slope(sizes, exact_var);
      s["sim_slope"] = loglog_slope(sizes, sim_var);
    }
    slopes.push_back(s);
  }
  r.summary["slopes"] = slopes;
  return {r};
}

// --- two-blocks ------------------------------------------------------------------------

/// E|X − X'|/n for independent X, X' ~ Bin(n, ρ).
inline double binomial_abs_difference(int n, double rho) {
  std::vector<double> p(n + 1);
  for (int k = 0; k <= n; ++k) {
    p[k] = std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0)) *
           std::pow(rho, k) * std::pow(1 - rho, n - k);
  }
  double e = 0;
  for (int a = 0; a <= n; ++a)
    for (int b = 0; b <= n; ++b) e += p[a] * p[b] * std::abs(a - b);
  return e / n;
}

inline std::vector<Report> run_two_blocks(const ExperimentConfig& c) {
  const auto spec = c.spec();
  const auto rate = load_jump_rate(spec, c.rate, c.rate_c);
  const auto graphs = build_levels(c);
  Report r;
  r.name = "two_blocks";
  r.columns = {"m", "N", "eps", "i", "norm", "elements", "mean_abs_difference", "se", "exact_iid", "t_m", "T",
               "replicas"};
  r.plot_x = "norm";
  r.plot_y = "mean_abs_difference";
  r.plot_series = "i";
  for (std::size_t li = 0; li < graphs.size(); ++li) {
    const auto& g = graphs[li];
    const double tm = c.time_scale(g, li);
    const SimulationPlan plan(g, rate, tm, c.mode);
    const std::size_t n = g.vertex_count();
    for (double eps : c.eps) {
      const int R = static_cast<int>(std::floor(eps * std::sqrt(tm) + 1e-12));
      if (R <= c.L) continue;
      // group elements σ with L < |σ| ≤ ε√t_m, bucketed by word norm
      WordMetric metric(spec);
      std::map<int, std::vector<Vertex>> buckets;
      {
        const auto ball = metric.ball(R);
        std::unordered_set<Vertex> seen;
        for (const auto& s : ball) {
          const int d = metric.norm(s, R);
          if (d <= c.L) continue;
          buckets[d].push_back(g.vertex_of(s));
        }
      }
      for (int i : c.i) {
        const BoundWindow w(g, folner_set(spec, i).elements);
        const int width = static_cast<int>(w.width());
        std::vector<std::vector<double>> acc(c.replicas, std::vector<double>(buckets.size(), 0.0));
        const BernoulliSampler sampler(c.rho, n);
        parallel_for_replicas(c.replicas, c.threads, [&](std::size_t k, unsigned) {
          Philox rng(derive_seed(c.seed, k));
          Simulator sim(plan);
          sim.reset(sampler(rng));
          std::vector<double> avg(n);
          for (std::size_t s = 0; s < c.samples; ++s) {
            sim.run(c.T / static_cast<double>(c.samples), rng, [](double, std::uint32_t) { return true; });
            const auto& eta = sim.state();
            for (std::size_t x = 0; x < n; ++x) {
              const Vertex* row = w.row(x);
              int occ = 0;
              for (int j = 0; j < width; ++j) occ += eta[row[j]];
              avg[x] = double(occ) / width;
            }
            std::size_t b = 0;
            for (const auto& [d, elems] : buckets) {
              double sum = 0;
              for (Vertex sigma : elems) {
                const Element se = g.element(sigma);
                for (std::size_t x = 0; x < n; ++x) {
                  const Vertex y = g.translate(static_cast<Vertex>(x), se);
                  sum += std::abs(avg[x] - avg[y]);
                }
              }
              acc[k][b++] += sum / double(n * elems.size());
            }
          }
          for (auto& v : acc[k]) v /= double(c.samples);
        });
        std::size_t b = 0;
        for (const auto& [d, elems] : buckets) {
          double m1 = 0, m2 = 0;
          for (std::size_t k = 0; k < c.replicas; ++k) {
            m1 += acc[k][b];
            m2 += acc[k][b] * acc[k][b];
          }
          const double Rn = double(c.replicas);
          m1 /= Rn;
          const double se = c.replicas > 1 ? std::sqrt(std::max(0.0, m2 / Rn - m1 * m1) / (Rn - 1)) : 0.0;
          // windows F_i and σF_i are disjoint once |σ| exceeds the diameter of F_i
          const double exact = d > 2 * folner_radius(spec, i) ? binomial_abs_difference(width, c.rho)
                                                                : std::numeric_limits<double>::quiet_NaN();
          r.rows.push_back({double(g.level()), double(n), eps, double(i), double(d), double(elems.size()), m1, se, exact,
                            tm, c.T, Rn});
          ++b;
        }
      }
    }
  }
  return {r};
}

// --- Følner report ------------------------------------------------------------------------

inline std::vector<Report> run_folner_report(const ExperimentConfig& c) {
  const auto spec = c.spec();
  const auto graphs = build_levels(c);
  WordMetric metric(spec);
  const auto ballL = metric.ball(c.L);
  std::unordered_set<Element, ElementHash> in_ball(ballL.begin(), ballL.end());
  Report r;
  r.name = "folner";
  r.columns = {"m",      "N",         "eps",         "t_m",       "K",         "b",     "b_clamped",
               "F_size", "boundary",  "ratio_boundary", "closed_form", "ball_L", "ratio_ball", "i",
               "max_deviation", "bound", "deviation_over_ratios"};
  r.plot_x = "m";
  r.plot_y = "ratio_boundary";
  r.plot_series = "eps";
  for (std::size_t li = 0; li < graphs.size(); ++li) {
    const auto& g = graphs[li];
    const double tm = c.time_scale(g, li);
    for (double eps : c.eps) {
      const double K = eps * std::sqrt(tm);
      const auto b = b_index(spec, K);
      const auto Fb = folner_set(spec, b.value);
      const double r1 = Fb.boundary_ratio();
      const double r2 = double(ballL.size()) / double(Fb.elements.size());
      const double closed = spec.family == Family::IntegerLattice ? 2.0 * spec.dimension / (2.0 * b.value + 1)
                                                                  : std::numeric_limits<double>::quiet_NaN();
      const BoundWindow block(g, Fb.elements);
      std::vector<Vertex> outer;  // σo for σ ∈ F_b \ B(L)
      for (const auto& s : Fb.elements) {
        if (!in_ball.contains(s)) outer.push_back(g.vertex_of(s));
      }
      for (int i : c.i) {
        const BoundWindow small(g, folner_set(spec, i).elements);
        double worst = 0;
        for (std::size_t j = 0; j < c.samples; ++j) {
          Philox rng(derive_seed(c.seed, j));
          const auto eta = BernoulliSampler(c.rho, g.vertex_count())(rng);
          auto avg = [&](const BoundWindow& w, Vertex x) {
            const Vertex* row = w.row(x);
            double s = 0;
            for (std::size_t q = 0; q < w.width(); ++q) s += eta[row[q]];
            return s / double(w.width());
          };
          double outer_sum = 0;
          for (Vertex v : outer) outer_sum += avg(small, v);
          worst = std::max(worst, std::abs(avg(block, g.origin()) - outer_sum / double(Fb.elements.size())));
        }
        r.rows.push_back({double(g.level()), double(g.vertex_count()), eps, tm, K, double(b.value),
                          b.clamped ? 1.0 : 0.0, double(Fb.elements.size()), double(Fb.boundary.size()), r1, closed,
                          double(ballL.size()), r2, double(i), worst, 2 * (r1 + r2), worst / (r1 + r2)});
      }
    }
  }
  return {r};
}

// --- spectral check --------------------------------------------------------------------------

inline std::vector<Report> run_spectral_check(const ExperimentConfig& c) {
  const auto spec = c.spec();
  const auto f = load_vertex_bundle(spec, c.bundle);
  const auto rate = load_jump_rate(spec, c.rate, c.rate_c);
  Report r;
  r.name = "spectral";
  r.columns = {"m", "N", "eps", "i", "a", "T", "t_m", "b", "lambda", "fk_expectation", "bound", "bound_margin",
               "lambda_var", "variational_gap"};
  r.plot_x = "a";
  r.plot_y = "lambda";
  r.plot_series = "m";
  auto records = nlohmann::ordered_json::array();
  for (std::size_t li = 0; li < c.levels.size(); ++li) {
    const QuotientGraph g(spec, c.levels[li]);
    if (g.vertex_count() > static_cast<std::size_t>(c.spectral_sites)) {
      throw CapExceeded("level " + std::to_string(c.levels[li]) + " has " + std::to_string(g.vertex_count()) +
                        " sites, above spectral_sites");
    }
    const double tm = c.time_scale(g, li);
    const auto model = make_exclusion_model(g, rate);
    for (double eps : c.eps) {
      for (int i : c.i) {
        const VFunctional v(f, g, eps, i, tm);
        const Vector V = potential_vector(v);
        for (double a : c.a) {
          const auto fk = feynman_kac(model, tm, a, V, c.T);
          double lv = std::numeric_limits<double>::quiet_NaN(), gap = lv;
          if (g.vertex_count() <= static_cast<std::size_t>(c.variational_sites)) {
            const auto vr = variational_check(model, tm, a, V, 20, c.seed);
            lv = vr.lambda_var;
            gap = vr.gap;
          }
          r.rows.push_back({double(g.level()), double(g.vertex_count()), eps, double(i), a, c.T, tm, double(v.b()),
                            fk.lambda, fk.expectation, fk.bound, fk.margin, lv, gap});
          nlohmann::ordered_json rec;
          rec["m"] = g.level();
          rec["a"] = a;
          rec["T"] = c.T;
          rec["lambda"] = fk.lambda;
          rec["fk_expectation"] = fk.expectation;
          rec["bound_margin"] = fk.margin;
          records.push_back(rec);
        }
      }
    }
  }
  r.summary["records"] = records;
  return {r};
}

// --- path lemma -------------------------------------------------------------------------------

inline std::vector<Report> run_path_lemma(const ExperimentConfig& c) {
  const auto spec = c.spec();
  Report r;
  r.name = "path_lemma";
  r.columns = {"m", "N", "sigma", "distance", "functions", "violations", "min_margin", "max_ratio"};
  r.plot_x = "distance";
  r.plot_y = "max_ratio";
  r.plot_series = "m";
  std::size_t total = 0;
  for (int m : c.levels) {
    const QuotientGraph g(spec, m);
    check_exact_sites(g.vertex_count());
    const Eigen::Index dim = Eigen::Index{1} << g.vertex_count();
    const std::size_t n = g.vertex_count();
    std::vector<std::size_t> violations(n, 0);
    std::vector<double> min_margin(n, std::numeric_limits<double>::infinity()), max_ratio(n, 0.0);
    std::vector<int> dist(n, 0);
    for (std::size_t k = 0; k < c.functions; ++k) {
      Philox rng(derive_seed(c.seed, k));
      Vector F(dim);
      for (Eigen::Index s = 0; s < dim; ++s) F[s] = 2 * rng.uniform() - 1;
      for (std::size_t sigma = 0; sigma < n; ++sigma) {
        const auto rep = path_lemma_check(g, static_cast<Vertex>(sigma), F, false);
        dist[sigma] = rep.distance;
        if (rep.margin < -tol::identity_abs * std::max(1.0, rep.rhs)) ++violations[sigma];
        min_margin[sigma] = std::min(min_margin[sigma], rep.margin);
        if (rep.rhs > 0) max_ratio[sigma] = std::max(max_ratio[sigma], rep.lhs / rep.rhs);
      }
    }
    for (std::size_t sigma = 0; sigma < n; ++sigma) {
      total += violations[sigma];
      r.rows.push_back({double(m), double(n), double(sigma), double(dist[sigma]), double(c.functions),
                        double(violations[sigma]), min_margin[sigma], max_ratio[sigma]});
    }
  }
  r.summary["violations"] = total;
  if (total > 0) throw AssertionFailure("path lemma violated " + std::to_string(total) + " times");
  return {r};
}

}  // namespace sep
