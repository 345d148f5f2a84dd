#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "sep/bundles.hpp"
#include "sep/rng.hpp"

using namespace sep;

namespace {

Configuration random_configuration(std::size_t n, Philox& g, double rho = 0.5) {
  Configuration eta(n);
  for (std::size_t x = 0; x < n; ++x) eta.set(x, g.coin(rho));
  return eta;
}

int mod(int a, int n) { return ((a % n) + n) % n; }

}  // namespace

TEST(Builtins, Examples) {
  const auto z = TowerSpec::integer_lattice(1, 2);
  QuotientGraph c8(z, 3);
  const auto eta = Configuration::from_bits("01100000");
  EXPECT_EQ(eval_vertex(occupancy(z), c8, 1, eta), 1.0);
  EXPECT_EQ(eval_vertex(occupancy(z), c8, 0, eta), 0.0);
  EXPECT_EQ(eval_vertex(neighbor_product(z), c8, 3, Configuration::from_bits("11111111")), 1.0);
  const auto ex4 = edge_product_plus_c(z, 0.5);
  for (std::size_t e = 0; e < c8.edges().size(); ++e) {
    EXPECT_EQ(eval_edge(ex4, c8, e, Configuration(8)), 0.5);
  }
  EXPECT_EQ(eval_edge(edge_sum(z), c8, c8.edge_index(1, 0), eta), 2.0);
  EXPECT_EQ(eval_edge(edge_sum(z), c8, c8.edge_index(0, 0), eta), 1.0);
}

TEST(EvalVertex, NeighborProductOnCycleOfTwoThroughLift) {
  const auto z = TowerSpec::integer_lattice(1, 2);
  QuotientGraph c2(z, 1);
  const auto f = neighbor_product(z);
  for (const char* bits : {"00", "01", "10", "11"}) {
    const auto eta = Configuration::from_bits(bits);
    for (Vertex x = 0; x < 2; ++x) {
      // both neighbours of x lift to the other vertex
      const double expected = eta[1 - x] * eta[1 - x];
      EXPECT_EQ(eval_vertex(f, c2, x, eta), expected) << bits << " x=" << x;
    }
  }
}

TEST(EvalVertex, InvarianceUnderGroupAction) {
  Philox g(11);
  for (const auto& spec : {TowerSpec::integer_lattice(1, 2), TowerSpec::integer_lattice(2, 2), TowerSpec::heisenberg(2)}) {
    QuotientGraph graph(spec, 2);
    const auto f = neighbor_product(spec);
    const auto c = ex4_symmetrized(spec, 1.0);
    BoundVertexBundle bf(f, graph);
    BoundEdgeBundle bc(c.bundle(), graph);
    for (int trial = 0; trial < 100; ++trial) {
      const auto eta = random_configuration(graph.vertex_count(), g);
      const Vertex sigma = static_cast<Vertex>(g() % graph.vertex_count());
      const Vertex x = static_cast<Vertex>(g() % graph.vertex_count());
      const auto perm = graph.action_permutation(sigma);
      const auto moved = act(perm, eta);
      EXPECT_EQ(bf(perm[x], moved), bf(x, eta));
      const int s = static_cast<int>(g() % graph.degree());
      EXPECT_EQ(bc(graph.edge_index(perm[x], s), moved), bc(graph.edge_index(x, s), eta));
    }
  }
}

TEST(LocalAverage, Examples) {
  const auto z = TowerSpec::integer_lattice(1, 2);
  QuotientGraph c8(z, 3);
  const auto occ = occupancy(z);
  EXPECT_DOUBLE_EQ(local_average(occ, c8, 4, 2, Configuration::from_bits("11111111")), 1.0);
  const auto alt = Configuration::from_bits("10101010");
  for (Vertex x = 0; x < 8; ++x) {
    EXPECT_DOUBLE_EQ(local_average(occ, c8, x, 1, alt), x % 2 == 0 ? 1.0 / 3 : 2.0 / 3);
  }
}

TEST(LocalAverage, Linearity) {
  const auto z2 = TowerSpec::integer_lattice(2, 2);
  QuotientGraph t(z2, 2);
  const auto f = occupancy(z2), g = neighbor_product(z2);
  const auto h = combine(2.5, f, -0.75, g);
  Philox rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const auto eta = random_configuration(16, rng);
    const Vertex x = static_cast<Vertex>(rng() % 16);
    EXPECT_NEAR(local_average(h, t, x, 1, eta),
                2.5 * local_average(f, t, x, 1, eta) - 0.75 * local_average(g, t, x, 1, eta), 1e-12);
  }
}

TEST(LocalAverage, AverageIsInvariantBundle) {
  Philox g(5);
  const auto h = TowerSpec::heisenberg(2);
  QuotientGraph graph(h, 2);
  const auto f = neighbor_product(h);
  for (int trial = 0; trial < 30; ++trial) {
    const auto eta = random_configuration(graph.vertex_count(), g);
    const Vertex sigma = static_cast<Vertex>(g() % graph.vertex_count());
    const Vertex x = static_cast<Vertex>(g() % graph.vertex_count());
    const auto perm = graph.action_permutation(sigma);
    EXPECT_NEAR(local_average(f, graph, perm[x], 1, act(perm, eta)), local_average(f, graph, x, 1, eta), 1e-12);
  }
}

TEST(GlobalAverage, Examples) {
  const auto z = TowerSpec::integer_lattice(1, 2);
  for (double rho : {0.0, 0.1, 0.37, 0.5, 0.9, 1.0}) {
    EXPECT_NEAR(global_average_polynomial(occupancy(z))(rho), rho, 1e-15);
    EXPECT_NEAR(global_average_polynomial(neighbor_product(z))(rho), rho * rho, 1e-15);
    EXPECT_NEAR(global_average_polynomial(neighbor_product(z)).polynomial()(rho), rho * rho, 1e-14);
  }
  const auto occ = global_average_polynomial(occupancy(z)).polynomial();
  EXPECT_EQ(occ.degree(), 1);
  EXPECT_NEAR(occ.coefficients[1], 1.0, 1e-15);
}

TEST(GlobalAverage, ExampleFourByEnumerationOracle) {
  // independent oracle: enumerate η on {-2,...,2} and average
  // η_{-1}η_{1} + η_{0}η_{2} + c for the edge (0, 1)
  const auto z = TowerSpec::integer_lattice(1, 2);
  const double c = 0.7;
  const auto ex4 = edge_product_plus_c(z, c);
  for (double rho : {0.0, 0.2, 0.5, 0.81, 1.0}) {
    double oracle = 0;
    for (int p = 0; p < 32; ++p) {
      auto bit = [&](int z0) { return (p >> (z0 + 2)) & 1; };
      const int ones = __builtin_popcount(p);
      const double w = std::pow(rho, ones) * std::pow(1 - rho, 5 - ones);
      oracle += w * (bit(-1) * bit(1) + bit(0) * bit(2) + c);
    }
    EXPECT_NEAR(oracle, 2 * rho * rho + c, 1e-14);
    EXPECT_NEAR(global_average_polynomial(ex4, 0)(rho), oracle, 1e-14);
    EXPECT_NEAR(global_average_polynomial(ex4, 1)(rho), oracle, 1e-14);
  }
}

TEST(GlobalAverage, OccupancyMatchesSampledMean) {
  const auto z = TowerSpec::integer_lattice(1, 2);
  Philox g(9);
  const double rho = 0.3;
  const int n = 100000;
  double hits = 0;
  for (int k = 0; k < n; ++k) hits += g.coin(rho);
  const double se = std::sqrt(rho * (1 - rho) / n);
  EXPECT_NEAR(hits / n, global_average_polynomial(occupancy(z))(rho), 3 * se);
}

TEST(LocalAverageVariance, OccupancyIsBinomial) {
  for (const auto& spec : {TowerSpec::integer_lattice(1, 2), TowerSpec::integer_lattice(2, 2), TowerSpec::heisenberg(2)}) {
    for (int i = 1; i <= 3; ++i) {
      if (spec.family == Family::Heisenberg && i > 2) continue;
      const double n = static_cast<double>(folner_set(spec, i).elements.size());
      for (double rho : {0.5, 0.2}) {
        EXPECT_NEAR(local_average_variance(occupancy(spec), i, rho), rho * (1 - rho) / n, 1e-15);
      }
    }
  }
}

TEST(LocalAverageVariance, NeighborProductOnZ) {
  // oracle: enumerate η on [-i-1, i+1] and compute the variance of the block mean
  const auto z = TowerSpec::integer_lattice(1, 2);
  const double rho = 0.5;
  for (int i = 1; i <= 3; ++i) {
    const int w = 2 * i + 3;
    double m1 = 0, m2 = 0;
    for (int p = 0; p < (1 << w); ++p) {
      auto bit = [&](int z0) { return (p >> (z0 + i + 1)) & 1; };
      double s = 0;
      for (int x = -i; x <= i; ++x) s += bit(x - 1) * bit(x + 1);
      s /= 2 * i + 1;
      const double weight = std::ldexp(1.0, -w);
      m1 += weight * s;
      m2 += weight * s * s;
    }
    EXPECT_NEAR(local_average_variance(neighbor_product(z), i, rho), m2 - m1 * m1, 1e-14);
  }
}

TEST(JumpRate, Validation) {
  const auto z = TowerSpec::integer_lattice(1, 2);
  EXPECT_EQ(constant_rate(z).c0(), 1.0);
  EXPECT_THROW(JumpRate(edge_product_plus_c(z, 1.0)), ConfigError);
  EXPECT_FALSE(jump_rate_defects(edge_sum(z)).empty());
  for (const auto& spec : {z, TowerSpec::integer_lattice(2, 3), TowerSpec::heisenberg(2)}) {
    const auto c = ex4_symmetrized(spec, 1.0);
    EXPECT_EQ(c.c0(), 1.0);
    EXPECT_TRUE(jump_rate_defects(c.bundle()).empty());
  }
  // asymmetric under reversal: rate depends on the direction of the edge
  auto directed = EdgeBundle::from_rule("directed", z, 0, [](int s, Pattern, const auto&) { return s == 0 ? 1.0 : 2.0; });
  EXPECT_THROW(JumpRate{directed}, ConfigError);
  auto zero = EdgeBundle::from_rule("zero", z, 0, [](int, Pattern p, const auto&) { return p == 0 ? 0.0 : 1.0; });
  EXPECT_THROW(JumpRate{zero}, ConfigError);
  EXPECT_THROW(builtin_vertex_bundle(z, "nope"), ConfigError);
}

TEST(JumpRate, DetailedBalanceOnQuotient) {
  const auto z = TowerSpec::integer_lattice(1, 2);
  QuotientGraph c8(z, 3);
  const auto c = ex4_symmetrized(z, 1.0);
  BoundEdgeBundle bc(c.bundle(), c8);
  Philox g(1);
  for (int trial = 0; trial < 200; ++trial) {
    const auto eta = random_configuration(8, g);
    for (std::size_t e = 0; e < c8.edges().size(); ++e) {
      // ν uniform: c(e,η)ν(η) = c(e,η^e)ν(η^e) reduces to swap invariance
      EXPECT_EQ(bc(e, eta), bc(e, swap(eta, c8, e)));
      EXPECT_EQ(bc(e, eta), bc(c8.edge(e).reverse, eta));
    }
  }
}

TEST(BundleText, RoundTripAndErrors) {
  const auto z2 = TowerSpec::integer_lattice(2, 2);
  const auto f = neighbor_product(z2);
  std::stringstream ss;
  write_bundle(ss, f);
  const auto g = read_vertex_bundle(ss, z2);
  EXPECT_EQ(g.table(), f.table());
  EXPECT_EQ(g.name(), "neighbor_product");

  const auto c = ex4_symmetrized(z2, 1.0);
  std::stringstream se;
  write_bundle(se, c.bundle());
  const JumpRate back(read_edge_bundle(se, z2));
  for (int s = 0; s < 4; ++s) EXPECT_EQ(back.bundle().table(s), c.bundle().table(s));

  std::istringstream bad1("kind vertex\nradius 0\n0 1\n");
  EXPECT_THROW(read_vertex_bundle(bad1, z2), ConfigError);
  std::istringstream bad2("kind vertex\nradius 0\n0 1\n0 2\n1 3\n");
  EXPECT_THROW(read_vertex_bundle(bad2, z2), ConfigError);
  std::istringstream ok("# occupancy\nkind vertex\nname occ\nradius 0\n0 0\n1 1\n");
  EXPECT_EQ(read_vertex_bundle(ok, z2).table(), occupancy(z2).table());
}

TEST(EvalV, OccupancyAtMatchingIndexVanishes) {
  const auto z = TowerSpec::integer_lattice(1, 2);
  QuotientGraph c16(z, 4);
  const double t = 64.0, eps = 0.5;  // ε√t = 4, b = 4
  VFunctional v(occupancy(z), c16, eps, 4, t);
  ASSERT_EQ(v.b(), 4);
  Philox g(2);
  for (int trial = 0; trial < 20; ++trial) EXPECT_NEAR(v(random_configuration(16, g)), 0.0, 1e-12);
}

TEST(EvalV, AllOnesVanishes) {
  for (const auto& spec : {TowerSpec::integer_lattice(1, 2), TowerSpec::heisenberg(2)}) {
    QuotientGraph graph(spec, 2);
    Configuration ones(graph.vertex_count());
    for (std::size_t x = 0; x < ones.size(); ++x) ones.set(x, true);
    EXPECT_NEAR(eval_V(neighbor_product(spec), graph, 0.5, 1, 16.0, ones), 0.0, 1e-12);
  }
}

TEST(EvalV, BruteForceOnCycleOfEight) {
  const auto z = TowerSpec::integer_lattice(1, 2);
  QuotientGraph c8(z, 3);
  const double eps = 0.75, t = 16.0;  // ε√t = 3
  const int i = 1;
  VFunctional v(neighbor_product(z), c8, eps, i, t);
  EXPECT_EQ(v.b(), 3);
  Philox g(4);
  for (int trial = 0; trial < 50; ++trial) {
    const auto eta = random_configuration(8, g);
    double expected = 0;
    for (int x = 0; x < 8; ++x) {
      double fbar = 0;
      for (int s = -i; s <= i; ++s) fbar += eta[mod(x + s - 1, 8)] * eta[mod(x + s + 1, 8)];
      fbar /= 2 * i + 1;
      double occ = 0;
      for (int s = -3; s <= 3; ++s) occ += eta[mod(x + s, 8)];
      occ /= 7;
      expected += std::abs(fbar - occ * occ);
    }
    EXPECT_NEAR(v(eta), expected, 1e-12);
    EXPECT_GE(v(eta), 0.0);
    EXPECT_LE(v(eta), v.upper_bound());
  }
}

TEST(EvalV, ClampedIndex) {
  const auto z = TowerSpec::integer_lattice(1, 2);
  QuotientGraph c8(z, 3);
  VFunctional v(occupancy(z), c8, 0.1, 1, 4.0);
  EXPECT_EQ(v.b(), 1);
  EXPECT_TRUE(v.b_clamped());
}
