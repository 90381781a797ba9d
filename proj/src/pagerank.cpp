#include "hhkg/pagerank.hpp"

#include <cmath>
#include <map>
#include <utility>

namespace hhkg {

std::vector<WeightedEdge> triple_edges(const KnowledgeGraph& kg) {
  std::map<std::pair<NodeId, NodeId>, double> weights;
  for (const Triple& t : kg.triples()) weights[{t.head, t.tail}] += 1.0;
  std::vector<WeightedEdge> edges;
  edges.reserve(weights.size());
  for (const auto& [key, w] : weights) edges.push_back({key.first, key.second, w});
  return edges;
}

std::vector<double> pagerank_weighted(std::size_t n, std::span<const WeightedEdge> edges,
                                      std::span<const double> teleport,
                                      const PageRankOptions& options) {
  if (n == 0) return {};
  require(options.damping >= 0.0 && options.damping <= 1.0, "pagerank: damping must be in [0, 1]");
  std::vector<double> tele(n, 1.0 / static_cast<double>(n));
  if (!teleport.empty()) {
    require(teleport.size() == n, "pagerank: teleport length mismatch");
    tele.assign(teleport.begin(), teleport.end());
  }
  std::vector<double> out_weight(n, 0.0);
  for (const auto& e : edges) {
    require(e.src < n && e.dst < n, "pagerank: edge endpoint out of range");
    require(e.weight > 0.0, "pagerank: edge weights must be positive");
    out_weight[e.src] += e.weight;
  }

  std::vector<double> rank = tele;
  std::vector<double> next(n);
  const double d = options.damping;
  for (std::size_t iter = 1; iter <= options.max_iter; ++iter) {
    double dangling = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (out_weight[i] == 0.0) dangling += rank[i];
    }
    for (std::size_t i = 0; i < n; ++i) next[i] = ((1.0 - d) + d * dangling) * tele[i];
    for (const auto& e : edges) next[e.dst] += d * rank[e.src] * e.weight / out_weight[e.src];
    double change = 0.0;
    for (std::size_t i = 0; i < n; ++i) change += std::abs(next[i] - rank[i]);
    rank.swap(next);
    if (change < options.tol) return rank;
  }
  throw NumericError("pagerank did not converge within " + std::to_string(options.max_iter) +
                     " iterations");
}

std::vector<double> pagerank(const KnowledgeGraph& kg, const PageRankOptions& options) {
  const auto edges = triple_edges(kg);
  return pagerank_weighted(kg.n_nodes(), edges, {}, options);
}

std::vector<double> ppr(const KnowledgeGraph& kg, std::span<const double> personalization,
                        const PageRankOptions& options) {
  require(personalization.size() == kg.n_nodes(), "ppr: personalization length must equal n_nodes");
  double total = 0.0;
  for (double p : personalization) {
    require(std::isfinite(p) && p >= 0.0, "ppr: personalization entries must be finite and >= 0");
    total += p;
  }
  require(std::abs(total - 1.0) <= 1e-9, "ppr: personalization must sum to 1");
  const auto edges = triple_edges(kg);
  return pagerank_weighted(kg.n_nodes(), edges, personalization, options);
}

}  // namespace hhkg
