#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "hhkg/common.hpp"
#include "hhkg/knowledge_graph.hpp"

namespace hhkg {

enum class Grouping {
  kRelation,      // one hyperedge per relation: all heads and tails it links
  kRelationItem,  // one hyperedge per (relation, tail item): the item and its heads
};

std::string to_string(Grouping g);
Grouping parse_grouping(const std::string& s);

struct Incidence {
  NodeId node = 0;
  EdgeId edge = 0;

  friend bool operator==(const Incidence&, const Incidence&) = default;
};

// Higher-order view of a knowledge graph. Immutable once built.
struct Hypergraph {
  std::size_t n_nodes = 0;
  std::size_t n_hyperedges = 0;
  // Sorted by (edge, node), no duplicates.
  std::vector<Incidence> incidence;
  // incidence[edge_offsets[e] .. edge_offsets[e+1]) are the members of e.
  std::vector<std::size_t> edge_offsets;
  // Sorted, deduplicated relation ids observed between members of each edge.
  std::vector<std::vector<RelationId>> type_tuples;
  std::vector<Index> type_ids;
  // type id -> tuple, ids in first-seen order over edges.
  std::vector<std::vector<RelationId>> type_table;
  // Groups that collapsed to a single node (self-loops only).
  std::size_t dropped_singletons = 0;

  std::size_t nnz() const noexcept { return incidence.size(); }
  std::size_t n_types() const noexcept { return type_table.size(); }
  std::span<const Incidence> members(EdgeId e) const {
    return {incidence.data() + edge_offsets[e], edge_offsets[e + 1] - edge_offsets[e]};
  }
};

// Throws DataError("empty graph") when the knowledge graph has no triples.
Hypergraph build_hypergraph(const KnowledgeGraph& kg, Grouping grouping);

// Relation ids r of all triples (a, r, b) with a and b both in hyperedge e,
// sorted and deduplicated.
std::vector<RelationId> hyperedge_type_tuple(EdgeId e, const KnowledgeGraph& kg,
                                             const Hypergraph& hg);

struct HypergraphStats {
  std::size_t n_nodes = 0;
  std::size_t n_hyperedges = 0;
  std::size_t nnz = 0;
  std::size_t max_edge_size = 0;
  double density = 0.0;
};

HypergraphStats hypergraph_stats(const Hypergraph& hg);

// Binary container holding the source knowledge graph and the hypergraph.
//   magic "HHKG", u32 version, u64 echo length + echo bytes,
//   nodes (name, type), relations (name), triples (u32 x3), grouping,
//   u64 n_nodes, u64 n_hyperedges, u64 nnz, incidence (u32 node, u32 edge),
//   per-edge type id (u32) and tuple (u64 len + u32 relation ids).
// Integers are little-endian.
struct HypergraphArtifact {
  KnowledgeGraph kg;
  Hypergraph hg;
  Grouping grouping = Grouping::kRelationItem;
  std::string config_echo;
};

void save_artifact(const HypergraphArtifact& artifact, const std::filesystem::path& path);
HypergraphArtifact load_artifact(const std::filesystem::path& path);

}  // namespace hhkg
