#include "hhkg/hypergraph.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <tuple>

#include "hhkg/binary_io.hpp"

namespace hhkg {

std::string to_string(Grouping g) {
  return g == Grouping::kRelation ? "relation" : "relation-item";
}

Grouping parse_grouping(const std::string& s) {
  if (s == "relation") return Grouping::kRelation;
  if (s == "relation-item" || s == "relation-and-item") return Grouping::kRelationItem;
  throw UsageError("unknown grouping '" + s + "' (expected relation | relation-item)");
}

namespace {

// Out-adjacency (relation, tail) per head, sorted.
std::vector<std::vector<std::pair<RelationId, NodeId>>> out_adjacency(const KnowledgeGraph& kg) {
  std::vector<std::vector<std::pair<RelationId, NodeId>>> adj(kg.n_nodes());
  for (const Triple& t : kg.triples()) adj[t.head].emplace_back(t.relation, t.tail);
  for (auto& a : adj) std::sort(a.begin(), a.end());
  return adj;
}

std::vector<RelationId> type_tuple_for(
    std::span<const NodeId> sorted_members,
    const std::vector<std::vector<std::pair<RelationId, NodeId>>>& adj) {
  std::vector<RelationId> tuple;
  for (NodeId a : sorted_members) {
    for (auto [r, b] : adj[a]) {
      if (std::binary_search(sorted_members.begin(), sorted_members.end(), b)) {
        tuple.push_back(r);
      }
    }
  }
  std::sort(tuple.begin(), tuple.end());
  tuple.erase(std::unique(tuple.begin(), tuple.end()), tuple.end());
  return tuple;
}

}  // namespace

Hypergraph build_hypergraph(const KnowledgeGraph& kg, Grouping grouping) {
  if (kg.triples().empty()) throw DataError("empty graph");

  // Group key -> member list. std::map gives the deterministic sorted scan.
  std::map<std::pair<RelationId, NodeId>, std::vector<NodeId>> groups;
  for (const Triple& t : kg.triples()) {
    const NodeId item = grouping == Grouping::kRelation ? 0 : t.tail;
    auto& members = groups[{t.relation, item}];
    members.push_back(t.head);
    members.push_back(t.tail);
  }

  Hypergraph hg;
  hg.n_nodes = kg.n_nodes();
  hg.edge_offsets.push_back(0);
  const auto adj = out_adjacency(kg);
  std::map<std::vector<RelationId>, Index> tuple_ids;

  for (auto& [key, members] : groups) {
    std::sort(members.begin(), members.end());
    members.erase(std::unique(members.begin(), members.end()), members.end());
    if (members.size() < 2) {
      ++hg.dropped_singletons;
      continue;
    }
    const auto e = static_cast<EdgeId>(hg.n_hyperedges++);
    for (NodeId v : members) hg.incidence.push_back({v, e});
    hg.edge_offsets.push_back(hg.incidence.size());

    auto tuple = type_tuple_for(members, adj);
    auto [it, inserted] = tuple_ids.emplace(tuple, static_cast<Index>(hg.type_table.size()));
    if (inserted) hg.type_table.push_back(tuple);
    hg.type_ids.push_back(it->second);
    hg.type_tuples.push_back(std::move(tuple));
  }
  if (hg.n_hyperedges == 0) throw DataError("empty graph: every group collapsed to one node");
  return hg;
}

std::vector<RelationId> hyperedge_type_tuple(EdgeId e, const KnowledgeGraph& kg,
                                             const Hypergraph& hg) {
  if (e >= hg.n_hyperedges) throw DataError("hyperedge id out of range");
  std::vector<NodeId> members;
  for (const Incidence& inc : hg.members(e)) members.push_back(inc.node);
  return type_tuple_for(members, out_adjacency(kg));
}

HypergraphStats hypergraph_stats(const Hypergraph& hg) {
  HypergraphStats s;
  s.n_nodes = hg.n_nodes;
  s.n_hyperedges = hg.n_hyperedges;
  s.nnz = hg.nnz();
  for (EdgeId e = 0; e < hg.n_hyperedges; ++e) {
    s.max_edge_size = std::max(s.max_edge_size, hg.members(e).size());
  }
  const double cells = static_cast<double>(hg.n_nodes) * static_cast<double>(hg.n_hyperedges);
  s.density = cells > 0 ? static_cast<double>(s.nnz) / cells : 0.0;
  return s;
}

namespace {
constexpr std::uint32_t kArtifactVersion = 1;
}

void save_artifact(const HypergraphArtifact& a, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  using namespace binary;
  write_magic(out, "HHKG");
  write_u32(out, kArtifactVersion);
  write_string(out, a.config_echo);

  write_u64(out, a.kg.n_nodes());
  for (NodeId v = 0; v < a.kg.n_nodes(); ++v) {
    write_string(out, a.kg.node_name(v));
    write_u32(out, a.kg.node_type(v));
  }
  write_u64(out, a.kg.n_relations());
  for (RelationId r = 0; r < a.kg.n_relations(); ++r) write_string(out, a.kg.relation_name(r));
  write_u64(out, a.kg.triples().size());
  for (const Triple& t : a.kg.triples()) {
    write_u32(out, t.head);
    write_u32(out, t.relation);
    write_u32(out, t.tail);
  }

  write_u32(out, a.grouping == Grouping::kRelation ? 0u : 1u);
  const Hypergraph& hg = a.hg;
  write_u64(out, hg.n_nodes);
  write_u64(out, hg.n_hyperedges);
  write_u64(out, hg.nnz());
  for (const Incidence& inc : hg.incidence) {
    write_u32(out, inc.node);
    write_u32(out, inc.edge);
  }
  for (std::size_t e = 0; e < hg.n_hyperedges; ++e) {
    write_u32(out, hg.type_ids[e]);
    write_u64(out, hg.type_tuples[e].size());
    for (RelationId r : hg.type_tuples[e]) write_u32(out, r);
  }
  write_u64(out, hg.dropped_singletons);
  if (!out) throw DataError("write failed for " + path.string());
}

HypergraphArtifact load_artifact(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open hypergraph artifact " + path.string());
  using namespace binary;
  expect_magic(in, "HHKG", path.string());
  if (read_u32(in) != kArtifactVersion) throw DataError(path.string() + ": unsupported version");
  HypergraphArtifact a;
  a.config_echo = read_string(in);

  const auto n_nodes = read_u64(in, "node count");
  for (std::uint64_t v = 0; v < n_nodes; ++v) {
    auto name = read_string(in, "node name");
    const auto type = read_u32(in, "node type");
    a.kg.add_node(name, type);
  }
  if (a.kg.n_nodes() != n_nodes) throw DataError(path.string() + ": duplicate node names");
  const auto n_rel = read_u64(in, "relation count");
  for (std::uint64_t r = 0; r < n_rel; ++r) a.kg.add_relation(read_string(in, "relation name"));
  const auto n_triples = read_u64(in, "triple count");
  for (std::uint64_t i = 0; i < n_triples; ++i) {
    const auto h = read_u32(in), r = read_u32(in), t = read_u32(in);
    a.kg.add_triple(h, r, t);
  }
  a.kg.validate();

  a.grouping = read_u32(in) == 0 ? Grouping::kRelation : Grouping::kRelationItem;
  Hypergraph& hg = a.hg;
  hg.n_nodes = read_u64(in);
  hg.n_hyperedges = read_u64(in);
  const auto nnz = read_u64(in);
  if (hg.n_nodes != a.kg.n_nodes()) throw DataError(path.string() + ": node count mismatch");
  hg.incidence.reserve(nnz);
  hg.edge_offsets.assign(hg.n_hyperedges + 1, 0);
  for (std::uint64_t i = 0; i < nnz; ++i) {
    Incidence inc{read_u32(in), read_u32(in)};
    if (inc.node >= hg.n_nodes || inc.edge >= hg.n_hyperedges) {
      throw DataError(path.string() + ": incidence out of range");
    }
    if (!hg.incidence.empty()) {
      const auto& prev = hg.incidence.back();
      if (std::tie(prev.edge, prev.node) >= std::tie(inc.edge, inc.node)) {
        throw DataError(path.string() + ": incidence not sorted by (edge, node)");
      }
    }
    hg.incidence.push_back(inc);
    ++hg.edge_offsets[inc.edge + 1];
  }
  for (std::size_t e = 0; e < hg.n_hyperedges; ++e) hg.edge_offsets[e + 1] += hg.edge_offsets[e];

  std::map<std::vector<RelationId>, Index> seen;
  for (std::size_t e = 0; e < hg.n_hyperedges; ++e) {
    const auto id = read_u32(in);
    const auto len = read_u64(in);
    std::vector<RelationId> tuple(len);
    for (auto& r : tuple) r = read_u32(in);
    auto [it, inserted] = seen.emplace(tuple, static_cast<Index>(hg.type_table.size()));
    if (inserted) hg.type_table.push_back(tuple);
    if (it->second != id) throw DataError(path.string() + ": inconsistent type ids");
    hg.type_ids.push_back(id);
    hg.type_tuples.push_back(std::move(tuple));
  }
  hg.dropped_singletons = read_u64(in);
  return a;
}

}  // namespace hhkg
