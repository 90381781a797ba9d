#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>
#include <span>
#include <vector>

#include "hhkg/graph_context.hpp"
#include "hhkg/ingest.hpp"
#include "hhkg/model.hpp"
#include "hhkg/synthetic.hpp"

namespace hhkg::test {

inline Matrix<double> random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng,
                                    double scale = 1.0) {
  std::normal_distribution<double> gauss(0.0, scale);
  Matrix<double> m(rows, cols);
  for (auto& v : m.flat()) v = gauss(rng);
  return m;
}

template <typename T>
double max_abs_diff(const Matrix<T>& a, const Matrix<T>& b) {
  if (!a.same_shape(b)) return INFINITY;
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d = std::max(d, std::abs(static_cast<double>(a.flat()[i]) - static_cast<double>(b.flat()[i])));
  }
  return d;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) return INFINITY;
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

// Random hypergraph plus matching features and a context over it.
struct RandomCase {
  Hypergraph hg;
  FeatureBundle features;
  std::unique_ptr<GraphContext> ctx;

  RandomCase(std::size_t n, std::size_t e, double density, std::size_t types, std::size_t d1,
             std::size_t d2, std::uint64_t seed) {
    hg = random_hypergraph(n, e, density, types, seed);
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
    features.x1 = random_matrix(n, d1, rng);
    features.x2 = random_matrix(n, d2, rng);
    features.e_type_ids = hg.type_ids;
    features.n_types = types;
    ctx = std::make_unique<GraphContext>(hg, hg.type_ids, types);
  }
};

// Hypergraph from explicit member lists; members need not be sorted.
inline Hypergraph make_hypergraph(std::size_t n_nodes, std::vector<std::vector<NodeId>> edges,
                                  std::vector<Index> types = {}) {
  Hypergraph hg;
  hg.n_nodes = n_nodes;
  hg.n_hyperedges = edges.size();
  hg.edge_offsets.push_back(0);
  if (types.empty()) types.assign(edges.size(), 0);
  std::size_t n_types = 0;
  for (std::size_t e = 0; e < edges.size(); ++e) {
    std::sort(edges[e].begin(), edges[e].end());
    for (NodeId v : edges[e]) hg.incidence.push_back({v, static_cast<EdgeId>(e)});
    hg.edge_offsets.push_back(hg.incidence.size());
    n_types = std::max<std::size_t>(n_types, types[e] + 1);
  }
  hg.type_table.resize(n_types);
  for (std::size_t t = 0; t < n_types; ++t) hg.type_table[t] = {static_cast<RelationId>(t)};
  hg.type_ids = types;
  for (Index t : types) hg.type_tuples.push_back(hg.type_table[t]);
  return hg;
}

// Plain double-loop helpers for hand-written forward oracles.
inline Matrix<double> mm(const Matrix<double>& a, const Matrix<double>& b) {
  Matrix<double> c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      for (std::size_t k = 0; k < a.cols(); ++k) c(i, j) += a(i, k) * b(k, j);
    }
  }
  return c;
}

inline Matrix<double> plus_row(Matrix<double> a, const Matrix<double>& row) {
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) a(i, j) += row(0, j);
  }
  return a;
}

inline Matrix<double> plus(Matrix<double> a, const Matrix<double>& b) {
  for (std::size_t i = 0; i < a.size(); ++i) a.flat()[i] += b.flat()[i];
  return a;
}

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

inline Matrix<double> gelu(Matrix<double> a) {
  for (auto& v : a.flat()) v = gelu(v);
  return a;
}

// 12-node synthetic graph: 8 users, 4 items.
inline SyntheticData tiny_synthetic(std::uint64_t seed = 3) {
  SyntheticConfig c;
  c.n_users = 8;
  c.n_items = 4;
  c.n_relations = 2;
  c.avg_degree = 2.0;
  c.semantic_dim = 4;
  c.seed = seed;
  return gen_synthetic(c);
}

inline ModelConfig tiny_model_config() {
  ModelConfig m;
  m.hidden = 8;
  m.heads = 2;
  m.layers = 1;
  m.type_dim = 4;
  return m;
}

}  // namespace hhkg::test
