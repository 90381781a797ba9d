#pragma once

#include <cstdint>
#include <vector>

#include "hhkg/hypergraph.hpp"
#include "hhkg/ingest.hpp"
#include "hhkg/knowledge_graph.hpp"

namespace hhkg {

struct SyntheticConfig {
  std::size_t n_users = 200;
  std::size_t n_items = 100;
  std::size_t n_relations = 5;
  double avg_degree = 5.0;   // mean triples per user (Poisson, at least 1)
  double zipf_exponent = 1.0;
  double label_noise = 0.1;  // sigma of the multiplicative log-normal noise
  std::size_t semantic_dim = 16;
  double semantic_noise = 1.0;
  Grouping grouping = Grouping::kRelationItem;
  std::uint64_t seed = 0;
};

struct SyntheticData {
  KnowledgeGraph kg;
  Hypergraph hg;
  FeatureBundle features;
  LabelSet labels;                  // every node labeled, no split yet
  std::vector<double> clean_scores;  // labels before noise
};

// Users `u<i>` (type 0) link to items `i<j>` (type 1) through relations
// `r<k>`; item popularity is Zipf. Scores are PageRank of the undirected
// user-item graph times N. X2 mixes the standardized log score with an
// independent latent factor through random loadings, plus Gaussian noise.
SyntheticData gen_synthetic(const SyntheticConfig& config);

}  // namespace hhkg

namespace hhkg {

// Random incidence: each (node, edge) pair present with probability
// `density`, topped up so every hyperedge has at least two members. Edge
// types are drawn uniformly from n_types.
Hypergraph random_hypergraph(std::size_t n_nodes, std::size_t n_edges, double density,
                             std::size_t n_types, std::uint64_t seed);

}  // namespace hhkg
