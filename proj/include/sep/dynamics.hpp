#pragma once

// Continuous-time simulation of the speeded-up exclusion process t_m L_m.
//
// Thinned mode (default) schedules one clock per bond {e, ē} with rate
// t_m (c(e,η) + c(ē,η)) when the endpoint values differ and 0 otherwise.
// Literal mode runs one clock of rate t_m c(e,η) per oriented edge and
// discards swaps of equal values; it exists to test the thinning. Rates live
// in a binary sum tree; after a swap only the units whose rate windows contain
// a swapped site are recomputed.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <functional>
#include <limits>
#include <mutex>
#include <ostream>
#include <thread>
#include <vector>

#include "sep/bundles.hpp"
#include "sep/common.hpp"
#include "sep/configuration.hpp"
#include "sep/measure.hpp"
#include "sep/quotient_graph.hpp"
#include "sep/rng.hpp"

namespace sep {

// --- time scales --------------------------------------------------------------

/// Default t_m = (diam X_m)².
inline double diffusive_time(const QuotientGraph& graph) {
  const double d = graph.diameter();
  return d * d;
}

inline void validate_time(double t_m, const QuotientGraph& graph) {
  if (!(t_m > 0) || !std::isfinite(t_m)) throw ConfigError("time scale t_m must be positive and finite");
  if (std::sqrt(t_m) > 2.0 * graph.diameter() * (1 + 1e-12)) {
    throw ConfigError("time scale violates sqrt(t_m) <= 2 diam X_m at level " + std::to_string(graph.level()));
  }
}

class TimeScale {
 public:
  TimeScale() = default;
  TimeScale(std::vector<int> levels, std::vector<double> times, std::vector<int> diameters)
      : levels_(std::move(levels)), times_(std::move(times)), diameters_(std::move(diameters)) {
    if (levels_.size() != times_.size() || levels_.size() != diameters_.size()) {
      throw ConfigError("time schedule and level list differ in length");
    }
    for (std::size_t j = 0; j < times_.size(); ++j) {
      if (!(times_[j] > 0)) throw ConfigError("time scale t_m must be positive");
      if (j > 0 && levels_[j] > levels_[j - 1] && !(times_[j] > times_[j - 1])) {
        throw ConfigError("time scale must be strictly increasing in m");
      }
      if (std::sqrt(times_[j]) > 2.0 * diameters_[j] * (1 + 1e-12)) {
        throw ConfigError("time scale violates sqrt(t_m) <= 2 diam X_m at level " + std::to_string(levels_[j]));
      }
    }
  }

  /// t_m = (diam X_m)² for each graph.
  static TimeScale diffusive(const std::vector<const QuotientGraph*>& graphs) {
    std::vector<int> levels, diam;
    std::vector<double> t;
    for (const auto* g : graphs) {
      levels.push_back(g->level());
      diam.push_back(g->diameter());
      t.push_back(diffusive_time(*g));
    }
    return TimeScale(std::move(levels), std::move(t), std::move(diam));
  }

  double at(int level) const {
    for (std::size_t j = 0; j < levels_.size(); ++j)
      if (levels_[j] == level) return times_[j];
    throw ConfigError("no time scale for level " + std::to_string(level));
  }
  const std::vector<int>& levels() const { return levels_; }
  const std::vector<double>& times() const { return times_; }

 private:
  std::vector<int> levels_;
  std::vector<double> times_;
  std::vector<int> diameters_;
};

// --- trajectories -----------------------------------------------------------

struct TrajectoryEvent {
  double time = 0;
  std::uint32_t edge = 0;
};

struct Trajectory {
  int level = 0;
  Configuration initial;
  std::vector<TrajectoryEvent> events;
  double horizon = 0;

  /// ∫₀ᵀ G(η(t)) dt over the piecewise-constant path.
  template <class G>
  double integrate(const QuotientGraph& graph, G&& observable) const {
    Configuration eta = initial;
    double last = 0, acc = 0;
    for (const auto& ev : events) {
      acc += (ev.time - last) * observable(eta);
      const auto& e = graph.edge(ev.edge);
      eta = pair_swap(std::move(eta), e.origin, e.terminus);
      last = ev.time;
    }
    return acc + (horizon - last) * observable(eta);
  }

  Configuration final_state(const QuotientGraph& graph) const {
    Configuration eta = initial;
    for (const auto& ev : events) {
      const auto& e = graph.edge(ev.edge);
      eta = pair_swap(std::move(eta), e.origin, e.terminus);
    }
    return eta;
  }

  void write_csv(std::ostream& os, const QuotientGraph& graph) const {
    os << "time,edge_origin,edge_terminus\n";
    char buf[64];
    for (const auto& ev : events) {
      std::snprintf(buf, sizeof buf, "%.17g", ev.time);
      os << buf << ',' << graph.edge(ev.edge).origin << ',' << graph.edge(ev.edge).terminus << '\n';
    }
  }
};

template <class G>
double integrate_observable(const Trajectory& traj, const QuotientGraph& graph, G&& observable) {
  return traj.integrate(graph, std::forward<G>(observable));
}

// --- simulator ----------------------------------------------------------------

class SumTree {
 public:
  explicit SumTree(std::size_t n = 0) { resize(n); }

  void resize(std::size_t n) {
    cap_ = 1;
    while (cap_ < std::max<std::size_t>(n, 1)) cap_ <<= 1;
    nodes_.assign(2 * cap_, 0.0);
  }

  void set(std::size_t i, double v) {
    std::size_t j = cap_ + i;
    nodes_[j] = v;
    for (j >>= 1; j > 0; j >>= 1) nodes_[j] = nodes_[2 * j] + nodes_[2 * j + 1];
  }

  double total() const { return nodes_[1]; }
  double leaf(std::size_t i) const { return nodes_[cap_ + i]; }

  /// Leaf whose cumulative interval contains u ∈ [0, total).
  std::size_t find(double u) const {
    std::size_t j = 1;
    while (j < cap_) {
      const double left = nodes_[2 * j];
      if (u < left || nodes_[2 * j + 1] <= 0) {
        j = 2 * j;
      } else {
        u -= left;
        j = 2 * j + 1;
      }
    }
    return j - cap_;
  }

 private:
  std::size_t cap_ = 1;
  std::vector<double> nodes_;
};

enum class SimulationMode { Thinned, Literal };

/// Precomputed, immutable description of the clocks; shareable across threads.
class SimulationPlan {
 public:
  SimulationPlan(const QuotientGraph& graph, const JumpRate& rate, double t_m,
                 SimulationMode mode = SimulationMode::Thinned)
      : graph_(&graph), model_(make_exclusion_model(graph, rate)), t_m_(t_m), mode_(mode),
        constant_(rate.bundle().is_constant()), constant_value_(rate.bundle().min_value()) {
    validate_time(t_m, graph);
    const std::size_t ne = graph.edges().size();
    if (mode == SimulationMode::Thinned) {
      for (std::size_t e = 0; e < ne; ++e) {
        if (e < graph.edge(e).reverse) units_.push_back({static_cast<std::uint32_t>(e), graph.edge(e).reverse});
        if (e == graph.edge(e).reverse) units_.push_back({static_cast<std::uint32_t>(e), static_cast<std::uint32_t>(e)});
      }
    } else {
      for (std::size_t e = 0; e < ne; ++e) units_.push_back({static_cast<std::uint32_t>(e), static_cast<std::uint32_t>(e)});
    }
    dependents_.assign(graph.vertex_count(), {});
    for (std::size_t u = 0; u < units_.size(); ++u) {
      std::vector<int> sites;
      for (std::uint32_t e : {units_[u].edge, units_[u].partner}) {
        const auto& w = model_.edge(e).window;
        if (constant_) {
          sites.push_back(model_.edge(e).origin);
          sites.push_back(model_.edge(e).terminus);
        } else {
          sites.insert(sites.end(), w.begin(), w.end());
        }
      }
      std::sort(sites.begin(), sites.end());
      sites.erase(std::unique(sites.begin(), sites.end()), sites.end());
      for (int v : sites) dependents_[v].push_back(static_cast<std::uint32_t>(u));
    }
  }

  struct Unit {
    std::uint32_t edge;
    std::uint32_t partner;  // ē for bonds, e itself in literal mode
  };

  const QuotientGraph& graph() const { return *graph_; }
  const ExclusionModel& model() const { return model_; }
  double t_m() const { return t_m_; }
  SimulationMode mode() const { return mode_; }
  const std::vector<Unit>& units() const { return units_; }
  const std::vector<std::uint32_t>& dependents(Vertex v) const { return dependents_[v]; }

  double edge_rate(std::size_t e, const Configuration& eta) const {
    if (constant_) return constant_value_;
    const auto& w = model_.edge(e).window;
    Pattern p = 0;
    for (std::size_t j = 0; j < w.size(); ++j) p |= static_cast<Pattern>(eta[w[j]]) << j;
    return model_.jump_rate().bundle().value(model_.edge(e).generator, p);
  }

  double unit_rate(std::size_t u, const Configuration& eta) const {
    const auto& unit = units_[u];
    const auto& e = model_.edge(unit.edge);
    if (mode_ == SimulationMode::Thinned) {
      if (eta[e.origin] == eta[e.terminus]) return 0.0;
      if (unit.partner == unit.edge) return t_m_ * edge_rate(unit.edge, eta);
      return t_m_ * (edge_rate(unit.edge, eta) + edge_rate(unit.partner, eta));
    }
    return t_m_ * edge_rate(unit.edge, eta);
  }

 private:
  const QuotientGraph* graph_;
  ExclusionModel model_;
  double t_m_;
  SimulationMode mode_;
  bool constant_;
  double constant_value_;
  std::vector<Unit> units_;
  std::vector<std::vector<std::uint32_t>> dependents_;
};

/// One trajectory at a time; instantiate one per thread.
class Simulator {
 public:
  explicit Simulator(const SimulationPlan& plan)
      : plan_(&plan), tree_(plan.units().size()), stamp_(plan.units().size(), 0) {}

  void reset(const Configuration& eta) {
    if (eta.size() != plan_->graph().vertex_count()) throw ConfigError("initial configuration has the wrong size");
    eta_ = eta;
    for (std::size_t u = 0; u < plan_->units().size(); ++u) tree_.set(u, plan_->unit_rate(u, eta_));
    noops_ = 0;
    events_ = 0;
  }

  /// Runs to horizon T from the current state. `on_event(time, edge)` is
  /// called after every state change, with state() already updated.
  template <class OnEvent>
  void run(double T, Philox& rng, OnEvent&& on_event) {
    if (!(T > 0)) throw ConfigError("horizon T must be positive");
    double t = 0;
    while (true) {
      const double total = tree_.total();
      if (!(total > 0)) break;
      t += rng.exponential(total);
      if (t > T) break;
      const std::size_t u = tree_.find(rng.uniform() * total);
      const auto& unit = plan_->units()[u];
      const auto& e = plan_->model().edge(unit.edge);
      if (eta_[e.origin] == eta_[e.terminus]) {
        ++noops_;  // literal mode only
        continue;
      }
      eta_.flip(e.origin);
      eta_.flip(e.terminus);
      ++events_;
      refresh(static_cast<Vertex>(e.origin), static_cast<Vertex>(e.terminus));
      if (!on_event(t, unit.edge)) return;
    }
  }

  Trajectory simulate(const Configuration& init, double T, Philox& rng) {
    reset(init);
    Trajectory traj;
    traj.level = plan_->graph().level();
    traj.initial = init;
    traj.horizon = T;
    run(T, rng, [&](double t, std::uint32_t e) {
      traj.events.push_back({t, e});
      return true;
    });
    return traj;
  }

  const Configuration& state() const { return eta_; }
  std::uint64_t noop_events() const { return noops_; }
  std::uint64_t events() const { return events_; }
  double total_rate() const { return tree_.total(); }

 private:
  void refresh(Vertex x, Vertex y) {
    ++clock_;
    for (Vertex v : {x, y}) {
      for (std::uint32_t u : plan_->dependents(v)) {
        if (stamp_[u] == clock_) continue;
        stamp_[u] = clock_;
        tree_.set(u, plan_->unit_rate(u, eta_));
      }
    }
  }

  const SimulationPlan* plan_;
  SumTree tree_;
  std::vector<std::uint64_t> stamp_;
  std::uint64_t clock_ = 0;
  Configuration eta_;
  std::uint64_t noops_ = 0;
  std::uint64_t events_ = 0;
};

inline Trajectory simulate(const QuotientGraph& graph, const JumpRate& c, double t_m, double T,
                           const Configuration& init, std::uint64_t seed,
                           SimulationMode mode = SimulationMode::Thinned) {
  SimulationPlan plan(graph, c, t_m, mode);
  Simulator sim(plan);
  Philox rng(seed);
  return sim.simulate(init, T, rng);
}

// --- incremental V ----------------------------------------------------------

/// Maintains V(η) under swaps: f values, F_i-average numerators and F_b
/// occupancy counts are updated only where the swapped sites enter.
class VTracker {
 public:
  explicit VTracker(const VFunctional& v) : v_(&v) {
    const auto& graph = v.graph();
    const std::size_t n = graph.vertex_count();
    const auto& fw = v.bound_bundle().window();
    f_deps_.assign(n, {});
    for (std::size_t z = 0; z < n; ++z) {
      const Vertex* row = fw.row(z);
      for (std::size_t j = 0; j < fw.width(); ++j) f_deps_[row[j]].push_back(static_cast<Vertex>(z));
    }
    for (auto& d : f_deps_) {
      std::sort(d.begin(), d.end());
      d.erase(std::unique(d.begin(), d.end()), d.end());
    }
    const auto& aw = v.average_window();
    avg_inv_.assign(n, {});
    for (std::size_t w = 0; w < n; ++w) {
      const Vertex* row = aw.row(w);
      for (std::size_t j = 0; j < aw.width(); ++j) avg_inv_[row[j]].push_back(static_cast<Vertex>(w));
    }
    // per oriented edge (x, y): coefficient mult(w ∋ x) − mult(w ∋ y) of the F_b blocks
    const auto& bw = v.block_window();
    std::vector<std::vector<Vertex>> block_inv(n);
    for (std::size_t w = 0; w < n; ++w) {
      const Vertex* row = bw.row(w);
      for (std::size_t j = 0; j < bw.width(); ++j) block_inv[row[j]].push_back(static_cast<Vertex>(w));
    }
    std::vector<int> coef(n, 0);
    block_delta_.resize(graph.edges().size());
    for (std::size_t e = 0; e < graph.edges().size(); ++e) {
      const auto& ed = graph.edge(e);
      for (Vertex w : block_inv[ed.origin]) ++coef[w];
      for (Vertex w : block_inv[ed.terminus]) --coef[w];
      for (Vertex w : block_inv[ed.origin])
        if (coef[w] != 0) {
          block_delta_[e].push_back({w, coef[w]});
          coef[w] = 0;
        }
      for (Vertex w : block_inv[ed.terminus])
        if (coef[w] != 0) {
          block_delta_[e].push_back({w, coef[w]});
          coef[w] = 0;
        }
    }
    f_.assign(n, 0.0);
    num_.assign(n, 0.0);
    count_.assign(n, 0);
    term_.assign(n, 0.0);
    stamp_.assign(n, 0);
    inv_width_ = 1.0 / static_cast<double>(aw.width());
  }

  void reset(const Configuration& eta) {
    const std::size_t n = f_.size();
    const auto& bf = v_->bound_bundle();
    for (std::size_t z = 0; z < n; ++z) f_[z] = bf(static_cast<Vertex>(z), eta);
    const auto& aw = v_->average_window();
    total_ = 0;
    for (std::size_t w = 0; w < n; ++w) {
      double s = 0;
      const Vertex* row = aw.row(w);
      for (std::size_t j = 0; j < aw.width(); ++j) s += f_[row[j]];
      num_[w] = s;
      count_[w] = static_cast<int>(v_->occupied_in_block(w, eta));
      term_[w] = term(w);
      total_ += term_[w];
    }
    since_resync_ = 0;
  }

  /// Update after the swap along oriented edge e; `eta` is the new state.
  void on_swap(const Configuration& eta, std::size_t e) {
    const auto& ed = v_->graph().edge(e);
    ++clock_;
    touched_.clear();
    const int dx = eta[ed.origin] ? 1 : -1;  // change of η at the origin
    for (const auto& [w, c] : block_delta_[e]) {
      count_[w] += c * dx;
      touch(w);
    }
    const auto& bf = v_->bound_bundle();
    for (Vertex v : {ed.origin, ed.terminus}) {
      for (Vertex z : f_deps_[v]) {
        const double nf = bf(z, eta);
        const double d = nf - f_[z];
        if (d == 0) continue;
        f_[z] = nf;
        for (Vertex w : avg_inv_[z]) {
          num_[w] += d;
          touch(w);
        }
      }
    }
    for (Vertex w : touched_) {
      const double t = term(w);
      total_ += t - term_[w];
      term_[w] = t;
    }
    if (++since_resync_ >= resync_interval) reset(eta);
  }

  double value() const { return total_ > 0 ? total_ : 0.0; }

  static constexpr int resync_interval = 4096;

 private:
  double term(std::size_t w) const { return std::abs(num_[w] * inv_width_ - v_->profile()[count_[w]]); }

  void touch(Vertex w) {
    if (stamp_[w] != clock_) {
      stamp_[w] = clock_;
      touched_.push_back(w);
    }
  }

  const VFunctional* v_;
  std::vector<std::vector<Vertex>> f_deps_;
  std::vector<std::vector<Vertex>> avg_inv_;
  std::vector<std::vector<std::pair<Vertex, int>>> block_delta_;
  std::vector<double> f_, num_, term_;
  std::vector<int> count_;
  std::vector<std::uint64_t> stamp_;
  std::vector<Vertex> touched_;
  std::uint64_t clock_ = 0;
  double inv_width_ = 1;
  double total_ = 0;
  int since_resync_ = 0;
};

// --- exceedance estimation ------------------------------------------------------

inline constexpr double wilson_z95 = 1.959963984540054;

struct Interval {
  double lo = 0;
  double hi = 1;
};

inline Interval wilson_interval(std::size_t hits, std::size_t n, double z = wilson_z95) {
  if (n == 0) return {0, 1};
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(hits) / nn;
  const double z2 = z * z;
  const double denom = 1 + z2 / nn;
  const double center = (p + z2 / (2 * nn)) / denom;
  const double half = z / denom * std::sqrt(p * (1 - p) / nn + z2 / (4 * nn * nn));
  return {hits == 0 ? 0.0 : std::max(0.0, center - half), hits == n ? 1.0 : std::min(1.0, center + half)};
}

/// Runs `body(k)` for k = 0..n-1 across worker threads; each k is handled once
/// and results must be written by index, so the outcome does not depend on
/// the thread count.
template <class Body>
void parallel_for_replicas(std::size_t n, unsigned threads, Body&& body) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(n, 1)));
  if (threads <= 1) {
    for (std::size_t k = 0; k < n; ++k) body(k, 0u);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr failure;
  std::mutex failure_mutex;
  for (unsigned w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t k = next++; k < n; k = next++) body(k, w);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

struct ExceedanceParams {
  double eps = 0.5;
  int i = 1;
  double delta = 0.1;
  double T = 1.0;
  double t_m = 0;  // 0 selects the diffusive default
  std::size_t replicas = 1000;
  std::uint64_t seed = 1;
  double rho = 0.5;
  unsigned threads = 0;
  SimulationMode mode = SimulationMode::Thinned;
};

struct ExceedanceResult {
  int m = 0;
  std::size_t N = 0;
  double eps = 0;
  int i = 0;
  double delta = 0;
  double T = 0;
  double t_m = 0;
  int b = 1;
  bool b_clamped = false;
  std::size_t replicas = 0;
  std::size_t hits = 0;
  double p_hat = 0;
  double ci_lo = 0;
  double ci_hi = 1;
  double log_rate = 0;
  double log_rate_lo = 0;
  double log_rate_hi = 0;
  bool censored = false;
  double mean_integral = 0;  // mean of (1/N)∫V over replicas that ran to T
  std::uint64_t events = 0;
};

/// Time integral ∫₀ᵀ V(η(t)) dt along one replica started from ν_ρ. With
/// `stop_at` finite the run ends as soon as the integral reaches it.
struct ReplicaOutcome {
  double integral = 0;
  bool reached = false;
  std::uint64_t events = 0;
};

class ReplicaRunner {
 public:
  ReplicaRunner(const SimulationPlan& plan, const VFunctional& v) : plan_(&plan), v_(&v) {}

  ReplicaOutcome run(std::uint64_t seed, std::size_t replica, double T, double rho, double stop_at) const {
    Philox rng(derive_seed(seed, replica));
    const auto init = BernoulliSampler(rho, plan_->graph().vertex_count())(rng);
    Simulator sim(*plan_);
    VTracker tracker(*v_);
    sim.reset(init);
    tracker.reset(init);
    ReplicaOutcome out;
    double last = 0;
    double current = tracker.value();
    if (out.integral >= stop_at) {
      out.reached = true;
      return out;
    }
    sim.run(T, rng, [&](double t, std::uint32_t e) {
      out.integral += (t - last) * current;
      last = t;
      tracker.on_swap(sim.state(), e);
      current = tracker.value();
      return out.integral < stop_at;
    });
    if (out.integral < stop_at) out.integral += (T - last) * current;
    out.reached = out.integral >= stop_at;
    out.events = sim.events();
    return out;
  }

 private:
  const SimulationPlan* plan_;
  const VFunctional* v_;
};

/// Monte Carlo estimate of P( (1/N) ∫₀ᵀ V dt ≥ δ ) from ν_ρ.
inline ExceedanceResult estimate_exceedance(const QuotientGraph& graph, const VertexBundle& f, const JumpRate& c,
                                            const ExceedanceParams& p) {
  if (p.replicas < 1) throw ConfigError("replicas must be >= 1");
  if (!(p.T > 0)) throw ConfigError("horizon T must be positive");
  if (!(p.delta >= 0)) throw ConfigError("delta must be >= 0");
  const double t_m = p.t_m > 0 ? p.t_m : diffusive_time(graph);
  SimulationPlan plan(graph, c, t_m, p.mode);
  VFunctional v(f, graph, p.eps, p.i, t_m);
  ReplicaRunner runner(plan, v);
  const double N = static_cast<double>(graph.vertex_count());
  const double threshold = p.delta * N;
  std::vector<ReplicaOutcome> outcomes(p.replicas);
  parallel_for_replicas(p.replicas, p.threads, [&](std::size_t k, unsigned) {
    outcomes[k] = runner.run(p.seed, k, p.T, p.rho, threshold);
  });
  ExceedanceResult r;
  r.m = graph.level();
  r.N = graph.vertex_count();
  r.eps = p.eps;
  r.i = p.i;
  r.delta = p.delta;
  r.T = p.T;
  r.t_m = t_m;
  r.b = v.b();
  r.b_clamped = v.b_clamped();
  r.replicas = p.replicas;
  double full = 0;
  std::size_t full_count = 0;
  for (const auto& o : outcomes) {
    r.hits += o.reached;
    r.events += o.events;
    if (!o.reached) {
      full += o.integral / N;
      ++full_count;
    }
  }
  r.mean_integral = full_count ? full / static_cast<double>(full_count) : std::numeric_limits<double>::quiet_NaN();
  r.p_hat = static_cast<double>(r.hits) / static_cast<double>(p.replicas);
  const auto ci = wilson_interval(r.hits, p.replicas);
  r.ci_lo = ci.lo;
  r.ci_hi = ci.hi;
  r.censored = r.hits == 0;
  r.log_rate_hi = std::log(r.ci_hi) / N;
  r.log_rate_lo = r.ci_lo > 0 ? std::log(r.ci_lo) / N : -std::numeric_limits<double>::infinity();
  r.log_rate = r.censored ? r.log_rate_hi : std::log(r.p_hat) / N;
  return r;
}

/// ∫₀ᵀ V dt for each of `replicas` independent runs from ν_ρ (no early stop).
inline std::vector<double> sample_path_integrals(const QuotientGraph& graph, const VertexBundle& f, const JumpRate& c,
                                                 double eps, int i, double T, double t_m, std::size_t replicas,
                                                 std::uint64_t seed, double rho = 0.5, unsigned threads = 0) {
  SimulationPlan plan(graph, c, t_m);
  VFunctional v(f, graph, eps, i, t_m);
  ReplicaRunner runner(plan, v);
  std::vector<double> out(replicas);
  parallel_for_replicas(replicas, threads, [&](std::size_t k, unsigned) {
    out[k] = runner.run(seed, k, T, rho, std::numeric_limits<double>::infinity()).integral;
  });
  return out;
}

}  // namespace sep
