#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "hhkg/knowledge_graph.hpp"
#include "hhkg/pagerank.hpp"

using namespace hhkg;

namespace {

KnowledgeGraph graph(std::size_t n, const std::vector<std::pair<NodeId, NodeId>>& edges) {
  KnowledgeGraph kg;
  for (std::size_t i = 0; i < n; ++i) kg.add_node("n" + std::to_string(i));
  const RelationId r = kg.add_relation("r");
  for (auto [a, b] : edges) kg.add_triple(a, r, b);
  kg.finalize();
  return kg;
}

// Dense transition matrix iterated to a fixed point.
std::vector<double> dense_pagerank(std::size_t n, const std::vector<std::pair<NodeId, NodeId>>& edges,
                                   std::vector<double> teleport, double d) {
  if (teleport.empty()) teleport.assign(n, 1.0 / n);
  std::vector<std::vector<double>> w(n, std::vector<double>(n, 0.0));
  std::vector<double> out(n, 0.0);
  for (auto [a, b] : edges) {
    w[a][b] += 1.0;
    out[a] += 1.0;
  }
  std::vector<double> x(n, 1.0 / n);
  for (int it = 0; it < 5000; ++it) {
    std::vector<double> y(n, 0.0);
    double dangling = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (out[i] == 0.0) {
        dangling += x[i];
        continue;
      }
      for (std::size_t j = 0; j < n; ++j) y[j] += d * x[i] * w[i][j] / out[i];
    }
    for (std::size_t j = 0; j < n; ++j) y[j] += (d * dangling + 1.0 - d) * teleport[j];
    x = y;
  }
  return x;
}

double max_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

std::vector<std::pair<NodeId, NodeId>> random_edges(std::size_t n, double p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution keep(p);
  std::vector<std::pair<NodeId, NodeId>> e;
  for (NodeId a = 0; a < n; ++a) {
    for (NodeId b = 0; b < n; ++b) {
      if (a != b && keep(rng)) e.emplace_back(a, b);
    }
  }
  return e;
}

}  // namespace

TEST_CASE("two nodes linked both ways share the mass") {
  const auto pr = pagerank(graph(2, {{0, 1}, {1, 0}}));
  CHECK(pr[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(pr[1] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("pagerank is a distribution and matches the dense oracle") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    CAPTURE(seed);
    const std::size_t n = 10;
    const auto edges = random_edges(n, 0.2, seed);
    const auto pr = pagerank(graph(n, edges));
    CHECK(std::accumulate(pr.begin(), pr.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(max_diff(pr, dense_pagerank(n, edges, {}, 0.85)) <= 1e-8);
  }
}

TEST_CASE("zero damping returns the teleport distribution") {
  const auto edges = random_edges(8, 0.3, 1);
  PageRankOptions opts;
  opts.damping = 0.0;
  const auto pr = pagerank(graph(8, edges), opts);
  for (double v : pr) CHECK(v == doctest::Approx(1.0 / 8).epsilon(1e-15));
  std::vector<double> t{0.5, 0.0, 0.1, 0.1, 0.1, 0.1, 0.1, 0.0};
  const auto p = ppr(graph(8, edges), t, opts);
  CHECK(max_diff(p, t) <= 1e-15);
}

TEST_CASE("uniform personalization reduces to pagerank") {
  const auto edges = random_edges(12, 0.2, 2);
  const auto kg = graph(12, edges);
  const std::vector<double> uniform(12, 1.0 / 12);
  CHECK(max_diff(ppr(kg, uniform), pagerank(kg)) <= 1e-12);
}

TEST_CASE("personalized pagerank on a star favours the centre and the seed") {
  std::vector<std::pair<NodeId, NodeId>> edges;
  for (NodeId i = 1; i <= 6; ++i) {
    edges.emplace_back(0, i);
    edges.emplace_back(i, 0);
  }
  std::vector<double> delta(7, 0.0);
  delta[3] = 1.0;
  const auto p = ppr(graph(7, edges), delta);
  CHECK(max_diff(p, dense_pagerank(7, edges, delta, 0.85)) <= 1e-8);
  CHECK(std::accumulate(p.begin(), p.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-9));
  for (NodeId i = 1; i <= 6; ++i) {
    if (i == 3) continue;
    CHECK(p[0] > p[i]);
    CHECK(p[3] > p[i]);
  }
}

TEST_CASE("dangling mass follows the teleport distribution") {
  const std::vector<std::pair<NodeId, NodeId>> edges{{0, 1}, {1, 2}};
  const auto pr = pagerank(graph(3, edges));
  CHECK(max_diff(pr, dense_pagerank(3, edges, {}, 0.85)) <= 1e-8);
  std::vector<double> t{0.2, 0.3, 0.5};
  CHECK(max_diff(ppr(graph(3, edges), t), dense_pagerank(3, edges, t, 0.85)) <= 1e-8);
}

TEST_CASE("invalid personalization vectors are rejected") {
  const auto kg = graph(3, {{0, 1}, {1, 2}});
  CHECK_THROWS_AS(ppr(kg, std::vector<double>{0.5, 0.5}), DataError);
  CHECK_THROWS_AS(ppr(kg, std::vector<double>{0.6, 0.6, -0.2}), DataError);
  CHECK_THROWS_AS(ppr(kg, std::vector<double>{0.2, 0.2, 0.2}), DataError);
}

TEST_CASE("non-convergence is reported") {
  PageRankOptions opts;
  opts.max_iter = 2;
  opts.tol = 1e-300;
  CHECK_THROWS_AS(pagerank(graph(10, random_edges(10, 0.3, 3)), opts), NumericError);
}
