#include "hhkg/synthetic.hpp"

#include <cmath>
#include <random>

#include "hhkg/pagerank.hpp"

namespace hhkg {

SyntheticData gen_synthetic(const SyntheticConfig& c) {
  require(c.n_users >= 1 && c.n_items >= 1 && c.n_relations >= 1,
          "gen_synthetic: counts must be >= 1");
  require(c.avg_degree > 0.0, "gen_synthetic: avg_degree must be positive");
  require(c.semantic_dim >= 1, "gen_synthetic: semantic_dim must be >= 1");
  std::mt19937_64 rng(c.seed);
  SyntheticData d;

  for (std::size_t u = 0; u < c.n_users; ++u) d.kg.add_node("u" + std::to_string(u), 0);
  for (std::size_t i = 0; i < c.n_items; ++i) d.kg.add_node("i" + std::to_string(i), 1);
  for (std::size_t r = 0; r < c.n_relations; ++r) d.kg.add_relation("r" + std::to_string(r));

  std::vector<double> popularity(c.n_items);
  for (std::size_t i = 0; i < c.n_items; ++i) {
    popularity[i] = 1.0 / std::pow(static_cast<double>(i + 1), c.zipf_exponent);
  }
  std::discrete_distribution<std::size_t> pick_item(popularity.begin(), popularity.end());
  std::uniform_int_distribution<std::size_t> pick_relation(0, c.n_relations - 1);
  std::poisson_distribution<int> degree(c.avg_degree);
  for (std::size_t u = 0; u < c.n_users; ++u) {
    const int k = std::max(1, degree(rng));
    for (int j = 0; j < k; ++j) {
      const auto item = static_cast<NodeId>(c.n_users + pick_item(rng));
      d.kg.add_triple(static_cast<NodeId>(u), static_cast<RelationId>(pick_relation(rng)), item);
    }
  }
  d.kg.finalize();
  const std::size_t n = d.kg.n_nodes();

  // Undirected user-item expansion, parallel triples add weight.
  std::vector<WeightedEdge> edges;
  for (const auto& e : triple_edges(d.kg)) {
    edges.push_back(e);
    edges.push_back({e.dst, e.src, e.weight});
  }
  const auto pr = pagerank_weighted(n, edges, {});
  std::normal_distribution<double> gauss(0.0, 1.0);
  d.clean_scores.resize(n);
  for (std::size_t v = 0; v < n; ++v) {
    d.clean_scores[v] = pr[v] * static_cast<double>(n);
    d.labels.nodes.push_back(static_cast<NodeId>(v));
    d.labels.scores.push_back(d.clean_scores[v] * std::exp(c.label_noise * gauss(rng)));
  }

  d.hg = build_hypergraph(d.kg, c.grouping);
  d.features.x1 = structural_features(d.kg, d.hg);
  d.features.e_type_ids = d.hg.type_ids;
  d.features.n_types = d.hg.n_types();

  // Semantic signal: standardized log score and an independent latent factor.
  Matrix<double> signal(n, 2);
  for (std::size_t v = 0; v < n; ++v) {
    signal(v, 0) = std::log(d.labels.scores[v]);
    signal(v, 1) = gauss(rng);
  }
  standardize_columns(signal);
  std::vector<double> w1(c.semantic_dim), w2(c.semantic_dim);
  for (auto& w : w1) w = gauss(rng);
  for (auto& w : w2) w = gauss(rng);
  d.features.x2 = Matrix<double>(n, c.semantic_dim);
  for (std::size_t v = 0; v < n; ++v) {
    for (std::size_t j = 0; j < c.semantic_dim; ++j) {
      d.features.x2(v, j) =
          signal(v, 0) * w1[j] + signal(v, 1) * w2[j] + c.semantic_noise * gauss(rng);
    }
  }
  return d;
}

}  // namespace hhkg

namespace hhkg {

Hypergraph random_hypergraph(std::size_t n_nodes, std::size_t n_edges, double density,
                             std::size_t n_types, std::uint64_t seed) {
  require(n_nodes >= 2 && n_edges >= 1 && n_types >= 1, "random_hypergraph: sizes too small");
  require(density >= 0.0 && density <= 1.0, "random_hypergraph: density must be in [0, 1]");
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution keep(density);
  std::uniform_int_distribution<std::size_t> pick_node(0, n_nodes - 1);
  std::uniform_int_distribution<std::size_t> pick_type(0, n_types - 1);
  Hypergraph hg;
  hg.n_nodes = n_nodes;
  hg.n_hyperedges = n_edges;
  hg.edge_offsets.push_back(0);
  std::vector<char> member(n_nodes);
  for (std::size_t e = 0; e < n_edges; ++e) {
    std::fill(member.begin(), member.end(), 0);
    std::size_t count = 0;
    for (std::size_t v = 0; v < n_nodes; ++v) {
      if (keep(rng)) {
        member[v] = 1;
        ++count;
      }
    }
    while (count < 2) {
      const std::size_t v = pick_node(rng);
      if (!member[v]) {
        member[v] = 1;
        ++count;
      }
    }
    for (std::size_t v = 0; v < n_nodes; ++v) {
      if (member[v]) hg.incidence.push_back({static_cast<NodeId>(v), static_cast<EdgeId>(e)});
    }
    hg.edge_offsets.push_back(hg.incidence.size());
  }
  hg.type_table.resize(n_types);
  for (std::size_t t = 0; t < n_types; ++t) hg.type_table[t] = {static_cast<RelationId>(t)};
  for (std::size_t e = 0; e < n_edges; ++e) {
    const auto t = static_cast<Index>(pick_type(rng));
    hg.type_ids.push_back(t);
    hg.type_tuples.push_back(hg.type_table[t]);
  }
  return hg;
}

}  // namespace hhkg
