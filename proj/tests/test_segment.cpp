#include <doctest.h>

#include <random>

#include "hhkg/segment_ops.hpp"
#include "hhkg/synthetic.hpp"

using namespace hhkg;

TEST_CASE("scatter softmax closed forms") {
  const std::vector<Index> one = {0, 0};
  auto w = scatter_softmax<double>(std::vector<double>{0.0, 0.0}, one, 1);
  CHECK(w[0] == doctest::Approx(0.5));
  CHECK(w[1] == doctest::Approx(0.5));
  w = scatter_softmax<double>(std::vector<double>{std::log(2.0), 0.0}, one, 1);
  CHECK(w[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
  CHECK(w[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  w = scatter_softmax<double>(std::vector<double>{42.0}, std::vector<Index>{0}, 1);
  CHECK(w[0] == 1.0);
}

TEST_CASE("scatter softmax handles interleaved segments and large logits") {
  const std::vector<double> v = {1000.0, -5.0, 1001.0, 3.0};
  const std::vector<Index> seg = {0, 1, 0, 1};
  const auto w = scatter_softmax<double>(v, seg, 2);
  CHECK(w[0] + w[2] == doctest::Approx(1.0));
  CHECK(w[1] + w[3] == doctest::Approx(1.0));
  CHECK(w[2] / w[0] == doctest::Approx(std::exp(1.0)));
}

TEST_CASE("chunked softmax is independent of the chunk size") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 3.0);
  std::uniform_int_distribution<Index> s(0, 9);
  std::vector<double> v(300);
  std::vector<Index> seg(300);
  for (auto& x : v) x = g(rng);
  for (auto& x : seg) x = s(rng);
  std::sort(seg.begin(), seg.end());
  const auto ref = chunked_scatter_softmax<double>(v, seg, 10, v.size());
  for (std::size_t chunk : {1, 2, 7, 64, 299}) {
    const auto w = chunked_scatter_softmax<double>(v, seg, 10, chunk);
    double d = 0;
    for (std::size_t i = 0; i < w.size(); ++i) d = std::max(d, std::abs(w[i] - ref[i]));
    CHECK(d <= 1e-12);
  }
}

TEST_CASE("chunk count") {
  std::vector<double> v(20, 0.5);
  std::vector<Index> seg(20, 0);
  ChunkStats stats;
  const auto w = chunked_scatter_softmax<double>(v, seg, 1, 7, &stats);
  CHECK(stats.chunks == 3);
  CHECK(stats.max_chunk_rows == 7);
  for (double x : w) CHECK(x == doctest::Approx(0.05));
  CHECK_THROWS_AS(chunked_scatter_softmax<double>(v, seg, 1, 0), DataError);
}

TEST_CASE("chunked softmax over a random incidence matches a dense masked softmax") {
  const auto hg = random_hypergraph(64, 32, 0.1, 1, 12);
  const auto pairs = CooPairs::from_hypergraph(hg);
  pairs.validate();
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  Matrix<double> logits(64, 32);
  for (auto& x : logits.flat()) x = g(rng);
  // Softmax over each hyperedge's member nodes (segments are columns).
  std::vector<double> v(pairs.nnz());
  std::vector<Index> seg(pairs.nnz());
  for (std::size_t i = 0; i < pairs.nnz(); ++i) {
    v[i] = logits(pairs.rows[i], pairs.cols[i]);
    seg[i] = pairs.cols[i];
  }
  const auto w = chunked_scatter_softmax<double>(v, seg, 32, 13);
  Matrix<unsigned char> mask(64, 32);
  for (std::size_t i = 0; i < pairs.nnz(); ++i) mask(pairs.rows[i], pairs.cols[i]) = 1;
  double worst = 0;
  for (std::size_t e = 0; e < 32; ++e) {
    double mx = -INFINITY, sum = 0;
    for (std::size_t n = 0; n < 64; ++n) {
      if (mask(n, e)) mx = std::max(mx, logits(n, e));
    }
    for (std::size_t n = 0; n < 64; ++n) {
      sum += mask(n, e) ? std::exp(logits(n, e) - mx) : 0.0;
    }
    for (std::size_t i = 0; i < pairs.nnz(); ++i) {
      if (pairs.cols[i] != e) continue;
      worst = std::max(worst, std::abs(w[i] - std::exp(logits(pairs.rows[i], e) - mx) / sum));
    }
  }
  CHECK(worst <= 1e-10);
}

TEST_CASE("attention plans cover every incidence entry once per direction") {
  const auto hg = random_hypergraph(30, 12, 0.2, 1, 2);
  const auto pairs = CooPairs::from_hypergraph(hg);
  const auto n2e = AttentionPlan::node_to_edge(pairs);
  const auto e2n = AttentionPlan::edge_to_node(pairs);
  CHECK(n2e.size() == hg.nnz());
  CHECK(e2n.size() == hg.nnz());
  CHECK(n2e.n_segments == 12);
  CHECK(e2n.n_segments == 30);
  CHECK(std::is_sorted(n2e.segment.begin(), n2e.segment.end()));
  CHECK(std::is_sorted(e2n.segment.begin(), e2n.segment.end()));
  for (std::size_t i = 0; i < n2e.size(); ++i) {
    CHECK(n2e.segment[i] == n2e.key[i]);
    CHECK(n2e.query[i] == n2e.value[i]);
    CHECK(e2n.segment[i] == e2n.query[i]);
    CHECK(e2n.key[i] == e2n.value[i]);
  }
}
