#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "sep/dynamics.hpp"

using namespace sep;

namespace {

// Asymptotic two-sample Kolmogorov-Smirnov p-value.
double ks_pvalue(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(double(i) / a.size() - double(j) / b.size()));
  }
  const double ne = double(a.size()) * b.size() / (a.size() + b.size());
  const double lambda = (std::sqrt(ne) + 0.12 + 0.11 / std::sqrt(ne)) * d;
  double q = 0;
  for (int k = 1; k <= 100; ++k) q += 2 * ((k % 2) ? 1 : -1) * std::exp(-2.0 * k * k * lambda * lambda);
  return std::clamp(q, 0.0, 1.0);
}

}  // namespace

TEST(TimeScale, DiffusiveDefaultAndValidation) {
  const auto tower = build_tower(TowerSpec::integer_lattice(1, 2), 5);
  std::vector<const QuotientGraph*> ptrs;
  for (const auto& g : tower) ptrs.push_back(&g);
  const auto ts = TimeScale::diffusive(ptrs);
  EXPECT_EQ(ts.at(3), 16.0);
  EXPECT_EQ(ts.at(5), 256.0);
  EXPECT_THROW(TimeScale({1, 2}, {4.0, 4.0}, {1, 2}), ConfigError);
  EXPECT_THROW(TimeScale({1}, {5.0}, {1}), ConfigError);
  EXPECT_NO_THROW(TimeScale({1}, {4.0}, {1}));
  EXPECT_THROW(validate_time(-1.0, tower[0]), ConfigError);
  EXPECT_THROW(validate_time(17.0, tower[0]), ConfigError);
}

TEST(SumTree, SamplesProportionally) {
  SumTree t(5);
  const std::vector<double> w{1, 0, 3, 0.5, 2};
  for (std::size_t j = 0; j < w.size(); ++j) t.set(j, w[j]);
  EXPECT_DOUBLE_EQ(t.total(), 6.5);
  Philox g(1);
  std::vector<int> c(5, 0);
  const int n = 200000;
  for (int k = 0; k < n; ++k) ++c[t.find(g.uniform() * t.total())];
  EXPECT_EQ(c[1], 0);
  for (std::size_t j = 0; j < w.size(); ++j) {
    const double p = w[j] / 6.5;
    EXPECT_NEAR(c[j] / double(n), p, 4 * std::sqrt(p * (1 - p) / n) + 1e-12);
  }
  EXPECT_NE(t.find(6.5), 1u);
}

TEST(Simulate, AllZerosHasNoEvents) {
  QuotientGraph c8(TowerSpec::integer_lattice(1, 2), 3);
  const auto traj = simulate(c8, constant_rate(c8.spec()), 16, 1.0, Configuration(8), 1);
  EXPECT_TRUE(traj.events.empty());
}

TEST(Simulate, TrajectoryInvariants) {
  const auto spec = TowerSpec::integer_lattice(2, 2);
  QuotientGraph t(spec, 2);
  for (auto mode : {SimulationMode::Thinned, SimulationMode::Literal}) {
    const auto init = Configuration::from_bits("1100101001110001");
    const auto traj = simulate(t, ex4_symmetrized(spec, 1.0), 16, 1.0, init, 9, mode);
    ASSERT_FALSE(traj.events.empty());
    Configuration eta = init;
    double last = 0;
    for (const auto& ev : traj.events) {
      EXPECT_GT(ev.time, last);
      EXPECT_LE(ev.time, 1.0);
      const auto& e = t.edge(ev.edge);
      EXPECT_NE(eta[e.origin], eta[e.terminus]);
      eta = pair_swap(eta, e.origin, e.terminus);
      EXPECT_EQ(eta.particle_count(), init.particle_count());
      last = ev.time;
    }
  }
}

TEST(Simulate, RejectsBadParameters) {
  QuotientGraph c8(TowerSpec::integer_lattice(1, 2), 3);
  EXPECT_THROW(simulate(c8, constant_rate(c8.spec()), 100, 1.0, Configuration(8), 1), ConfigError);
  EXPECT_THROW(simulate(c8, constant_rate(c8.spec()), 16, 0.0, Configuration(8), 1), ConfigError);
}

TEST(Simulate, SingleParticleIsUniformAfterMixing) {
  const auto spec = TowerSpec::integer_lattice(1, 2);
  QuotientGraph c8(spec, 3);
  SimulationPlan plan(c8, constant_rate(spec), 16);
  Simulator sim(plan);
  Philox g(3);
  const int n = 20000;
  std::vector<int> hits(8, 0);
  Configuration init(8);
  init.set(0, true);
  for (int k = 0; k < n; ++k) {
    sim.reset(init);
    sim.run(2.0, g, [](double, std::uint32_t) { return true; });
    for (int x = 0; x < 8; ++x)
      if (sim.state()[x]) ++hits[x];
  }
  for (int x = 0; x < 8; ++x) EXPECT_NEAR(hits[x] / double(n), 0.125, 3 * std::sqrt(0.125 * 0.875 / n));
}

TEST(Simulate, SingleParticleJumpRate) {
  const auto spec = TowerSpec::integer_lattice(1, 2);
  QuotientGraph c8(spec, 3);
  SimulationPlan plan(c8, constant_rate(spec), 4);
  Simulator sim(plan);
  Configuration init(8);
  init.set(3, true);
  sim.reset(init);
  // two bonds touch the particle, each at rate t_m (c(e) + c(ē)) = 8
  EXPECT_DOUBLE_EQ(sim.total_rate(), 16.0);
}

TEST(Simulate, EquilibriumDensityPreserved) {
  const auto spec = TowerSpec::integer_lattice(1, 2);
  QuotientGraph c8(spec, 3);
  SimulationPlan plan(c8, ex4_symmetrized(spec, 1.0), 16);
  Simulator sim(plan);
  Philox g(4);
  BernoulliSampler nu(0.5, 8);
  const int n = 20000;
  std::vector<int> occ(8, 0);
  for (int k = 0; k < n; ++k) {
    sim.reset(nu(g));
    sim.run(1.0, g, [](double, std::uint32_t) { return true; });
    for (int x = 0; x < 8; ++x) occ[x] += sim.state()[x];
  }
  for (int x = 0; x < 8; ++x) EXPECT_NEAR(occ[x] / double(n), 0.5, 3 * std::sqrt(0.25 / n));
}

TEST(Simulate, StationarySectorsUniform) {
  const auto spec = TowerSpec::integer_lattice(1, 2);
  QuotientGraph c8(spec, 3);
  for (const auto& rate : {constant_rate(spec), ex4_symmetrized(spec, 1.0)}) {
    SimulationPlan plan(c8, rate, 16);
    Simulator sim(plan);
    Philox g(17);
    BernoulliSampler nu(0.5, 8);
    std::vector<int> counts(256, 0);
    const int n = 100000;
    for (int k = 0; k < n; ++k) {
      sim.reset(nu(g));
      sim.run(1.0, g, [](double, std::uint32_t) { return true; });
      ++counts[sim.state().index()];
    }
    for (int p = 0; p <= 8; ++p) {
      int sector = 0, size = 0;
      for (int s = 0; s < 256; ++s)
        if (__builtin_popcount(s) == p) {
          sector += counts[s];
          ++size;
        }
      double tv = 0;
      for (int s = 0; s < 256; ++s)
        if (__builtin_popcount(s) == p) tv += 0.5 * std::abs(counts[s] / double(sector) - 1.0 / size);
      EXPECT_LT(tv, 0.05) << rate.name() << " sector " << p;
    }
  }
}

TEST(Simulate, ThinningPreservesLaw) {
  const auto spec = TowerSpec::integer_lattice(1, 2);
  QuotientGraph c8(spec, 3);
  const auto rate = ex4_symmetrized(spec, 1.0);
  SimulationPlan thin(c8, rate, 16, SimulationMode::Thinned), lit(c8, rate, 16, SimulationMode::Literal);
  Simulator st(thin), sl(lit);
  Philox g1(5), g2(6);
  const auto init = Configuration::from_bits("11010010");
  std::vector<double> ev1, ev2, obs1, obs2;
  std::uint64_t noops = 0;
  for (int k = 0; k < 4000; ++k) {
    st.reset(init);
    sl.reset(init);
    double a1 = 0, a2 = 0, last1 = 0, last2 = 0;
    auto occ0_1 = [&] { return double(st.state()[0]); };
    auto occ0_2 = [&] { return double(sl.state()[0]); };
    double v1 = occ0_1(), v2 = occ0_2();
    st.run(0.5, g1, [&](double t, std::uint32_t) { a1 += (t - last1) * v1; last1 = t; v1 = occ0_1(); return true; });
    sl.run(0.5, g2, [&](double t, std::uint32_t) { a2 += (t - last2) * v2; last2 = t; v2 = occ0_2(); return true; });
    a1 += (0.5 - last1) * v1;
    a2 += (0.5 - last2) * v2;
    ev1.push_back(double(st.events()));
    ev2.push_back(double(sl.events()));
    obs1.push_back(a1);
    obs2.push_back(a2);
    noops += sl.noop_events();
  }
  EXPECT_GT(noops, 0u);
  EXPECT_GT(ks_pvalue(ev1, ev2), 0.01);
  EXPECT_GT(ks_pvalue(obs1, obs2), 0.01);
}

TEST(Simulate, TimeScalingLaw) {
  const auto spec = TowerSpec::integer_lattice(1, 2);
  QuotientGraph c8(spec, 3);
  const auto rate = ex4_symmetrized(spec, 1.0);
  SimulationPlan fast(c8, rate, 16), slow(c8, rate, 8);
  Simulator sf(fast), ss(slow);
  Philox g1(7), g2(8);
  const auto init = Configuration::from_bits("11110000");
  std::vector<double> a, b;
  for (int k = 0; k < 4000; ++k) {
    sf.reset(init);
    sf.run(0.5, g1, [](double, std::uint32_t) { return true; });
    ss.reset(init);
    ss.run(1.0, g2, [](double, std::uint32_t) { return true; });
    a.push_back(double(sf.events()));
    b.push_back(double(ss.events()));
  }
  EXPECT_GT(ks_pvalue(a, b), 0.01);
}

TEST(IntegrateObservable, Examples) {
  const auto spec = TowerSpec::integer_lattice(1, 2);
  QuotientGraph c8(spec, 3);
  const auto init = Configuration::from_bits("10110010");
  const auto traj = simulate(c8, constant_rate(spec), 16, 1.5, init, 2);
  EXPECT_DOUBLE_EQ(integrate_observable(traj, c8, [](const Configuration&) { return 1.0; }), 1.5);
  EXPECT_NEAR(integrate_observable(traj, c8, [](const Configuration& e) { return double(e.particle_count()); }), 4 * 1.5,
              1e-12);
}

TEST(IntegrateObservable, RiemannSumWithinRigorousBound) {
  const auto spec = TowerSpec::integer_lattice(1, 2);
  QuotientGraph c8(spec, 3);
  const double T = 1.0;
  const auto traj = simulate(c8, constant_rate(spec), 16, T, Configuration::from_bits("11010010"), 3);
  VFunctional v(neighbor_product(spec), c8, 0.5, 1, 16);
  const double exact = integrate_observable(traj, c8, v);
  // left Riemann sum on a grid of 10^6 steps, replaying the path
  const int steps = 1000000;
  const double h = T / steps;
  Configuration eta = traj.initial;
  std::size_t next = 0;
  double riemann = 0, jumps = 0, current = v(eta);
  for (int k = 0; k < steps; ++k) {
    const double t = k * h;
    while (next < traj.events.size() && traj.events[next].time <= t) {
      const auto& e = c8.edge(traj.events[next].edge);
      eta = pair_swap(eta, e.origin, e.terminus);
      const double nv = v(eta);
      jumps += std::abs(nv - current);
      current = nv;
      ++next;
    }
    riemann += h * current;
  }
  while (next < traj.events.size()) {
    const auto& e = c8.edge(traj.events[next++].edge);
    eta = pair_swap(eta, e.origin, e.terminus);
    const double nv = v(eta);
    jumps += std::abs(nv - current);
    current = nv;
  }
  EXPECT_LE(std::abs(exact - riemann), h * jumps + 1e-9);
  EXPECT_LT(std::abs(exact - riemann) / exact, 1e-3);
}

TEST(VTracker, MatchesDirectEvaluation) {
  for (const auto& [spec, level, eps, i] : std::vector<std::tuple<TowerSpec, int, double, int>>{
           {TowerSpec::integer_lattice(1, 2), 5, 0.3, 2},
           {TowerSpec::integer_lattice(1, 2), 2, 0.5, 1},
           {TowerSpec::integer_lattice(2, 2), 2, 0.5, 1},
           {TowerSpec::heisenberg(2), 1, 0.5, 1}}) {
    QuotientGraph graph(spec, level);
    const double t_m = diffusive_time(graph);
    const auto rate = ex4_symmetrized(spec, 1.0);
    SimulationPlan plan(graph, rate, t_m);
    Simulator sim(plan);
    VFunctional v(neighbor_product(spec), graph, eps, i, t_m);
    VTracker tracker(v);
    Philox g(10);
    const auto init = BernoulliSampler(0.5, graph.vertex_count())(g);
    sim.reset(init);
    tracker.reset(init);
    EXPECT_NEAR(tracker.value(), v(init), 1e-12);
    int checked = 0;
    sim.run(0.2, g, [&](double, std::uint32_t e) {
      tracker.on_swap(sim.state(), e);
      EXPECT_NEAR(tracker.value(), v(sim.state()), 1e-9);
      return ++checked < 6000;
    });
    EXPECT_GT(checked, 10);
  }
}

TEST(Exceedance, TrivialThresholds) {
  const auto spec = TowerSpec::integer_lattice(1, 2);
  QuotientGraph c8(spec, 3);
  const auto f = neighbor_product(spec);
  ExceedanceParams p;
  p.eps = 0.5;
  p.i = 1;
  p.replicas = 200;
  p.delta = 0;
  auto r = estimate_exceedance(c8, f, constant_rate(spec), p);
  EXPECT_EQ(r.p_hat, 1.0);
  EXPECT_EQ(r.log_rate, 0.0);
  p.delta = 2 * f.max_abs() * p.T + 0.01;
  r = estimate_exceedance(c8, f, constant_rate(spec), p);
  EXPECT_EQ(r.p_hat, 0.0);
  EXPECT_TRUE(r.censored);
  const double z2 = wilson_z95 * wilson_z95;
  EXPECT_NEAR(r.ci_hi, z2 / (200 + z2), 1e-15);
}

TEST(Exceedance, OccupancyAtMatchingIndexNeverExceeds) {
  const auto spec = TowerSpec::integer_lattice(1, 2);
  QuotientGraph c16(spec, 4);
  ExceedanceParams p;
  p.eps = 0.25;  // ε√t = 0.25·8 = 2
  p.i = 2;
  p.delta = 1e-9;
  p.replicas = 100;
  const auto r = estimate_exceedance(c16, occupancy(spec), constant_rate(spec), p);
  EXPECT_EQ(r.b, 2);
  EXPECT_EQ(r.hits, 0u);
}

TEST(Exceedance, DeterministicAcrossThreadCounts) {
  const auto spec = TowerSpec::integer_lattice(1, 2);
  QuotientGraph c16(spec, 4);
  ExceedanceParams p;
  p.eps = 0.5;
  p.i = 1;
  p.delta = 0.2;
  p.replicas = 64;
  p.seed = 99;
  p.threads = 1;
  const auto a = estimate_exceedance(c16, neighbor_product(spec), constant_rate(spec), p);
  p.threads = 4;
  const auto b = estimate_exceedance(c16, neighbor_product(spec), constant_rate(spec), p);
  EXPECT_EQ(a.hits, b.hits);
  EXPECT_EQ(a.events, b.events);
  EXPECT_EQ(a.mean_integral, b.mean_integral);
}

TEST(Wilson, KnownValues) {
  // 5/100 at 95%: (0.02154, 0.11175) from the closed form
  const auto ci = wilson_interval(5, 100);
  const double z = wilson_z95, n = 100, p = 0.05;
  const double c = (p + z * z / (2 * n)) / (1 + z * z / n);
  const double h = z / (1 + z * z / n) * std::sqrt(p * (1 - p) / n + z * z / (4 * n * n));
  EXPECT_NEAR(ci.lo, c - h, 1e-15);
  EXPECT_NEAR(ci.hi, c + h, 1e-15);
  EXPECT_NEAR(ci.lo, 0.02154, 1e-4);
  EXPECT_NEAR(ci.hi, 0.11175, 1e-4);
  EXPECT_EQ(wilson_interval(0, 10).lo, 0.0);
}

TEST(Trajectory, CsvExport) {
  const auto spec = TowerSpec::integer_lattice(1, 2);
  QuotientGraph c4(spec, 2);
  Trajectory t;
  t.level = 2;
  t.initial = Configuration::from_bits("1000");
  t.horizon = 1;
  t.events = {{0.25, static_cast<std::uint32_t>(c4.edge_index(0, 0))}};
  std::ostringstream os;
  t.write_csv(os, c4);
  EXPECT_EQ(os.str(), "time,edge_origin,edge_terminus\n0.25,0,1\n");
  EXPECT_EQ(t.final_state(c4).bits(), "0100");
}
