#pragma once

#include <span>
#include <vector>

#include "hhkg/knowledge_graph.hpp"

namespace hhkg {

struct PageRankOptions {
  double damping = 0.85;
  double tol = 1e-10;  // L1 change between iterates
  std::size_t max_iter = 1000;
};

struct WeightedEdge {
  NodeId src = 0;
  NodeId dst = 0;
  double weight = 1.0;
};

// Power iteration on a weighted directed graph. Mass on nodes without
// out-edges is redistributed along the teleport distribution. An empty
// `teleport` means uniform. Throws NumericError on non-convergence.
std::vector<double> pagerank_weighted(std::size_t n, std::span<const WeightedEdge> edges,
                                      std::span<const double> teleport,
                                      const PageRankOptions& options = {});

// Directed head -> tail graph of the triples; parallel triples add weight.
std::vector<double> pagerank(const KnowledgeGraph& kg, const PageRankOptions& options = {});

// Personalized variant; `personalization` must be nonnegative, sized
// n_nodes and sum to 1 (DataError otherwise).
std::vector<double> ppr(const KnowledgeGraph& kg, std::span<const double> personalization,
                        const PageRankOptions& options = {});

std::vector<WeightedEdge> triple_edges(const KnowledgeGraph& kg);

}  // namespace hhkg
