#pragma once

#include <compare>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "hhkg/common.hpp"

namespace hhkg {

struct Triple {
  NodeId head = 0;
  RelationId relation = 0;
  NodeId tail = 0;

  friend auto operator<=>(const Triple&, const Triple&) = default;
};

// Typed nodes, a relation vocabulary and (head, relation, tail) triples.
// Node and relation ids are dense and assigned in first-seen order.
class KnowledgeGraph {
 public:
  // Returns the existing id when `name` is already present.
  NodeId add_node(const std::string& name, std::uint32_t type = 0);
  RelationId add_relation(const std::string& name);
  void add_triple(NodeId head, RelationId relation, NodeId tail);
  void add_triple(const std::string& head, const std::string& relation, const std::string& tail);

  // Sorts and deduplicates the triple list. Idempotent.
  void finalize();

  std::size_t n_nodes() const noexcept { return node_names_.size(); }
  std::size_t n_relations() const noexcept { return relation_names_.size(); }
  std::span<const Triple> triples() const noexcept { return triples_; }

  const std::string& node_name(NodeId id) const { return node_names_.at(id); }
  const std::string& relation_name(RelationId id) const { return relation_names_.at(id); }
  std::uint32_t node_type(NodeId id) const { return node_types_.at(id); }
  void set_node_type(NodeId id, std::uint32_t type) { node_types_.at(id) = type; }

  std::optional<NodeId> find_node(const std::string& name) const;
  std::optional<RelationId> find_relation(const std::string& name) const;

  // Throws DataError if any triple references an unknown id or duplicates remain.
  void validate() const;

 private:
  std::vector<std::string> node_names_;
  std::vector<std::uint32_t> node_types_;
  std::unordered_map<std::string, NodeId> node_index_;
  std::vector<std::string> relation_names_;
  std::unordered_map<std::string, RelationId> relation_index_;
  std::vector<Triple> triples_;
};

// `head<TAB>relation<TAB>tail` per line; blank and `#` lines are skipped.
// Node ids follow first appearance in the file.
KnowledgeGraph load_triples(const std::filesystem::path& path);
// Triples parsed into `kg`, which may already hold nodes.
KnowledgeGraph parse_triples(std::istream& in, const std::string& source, KnowledgeGraph kg = {});

// `node<TAB>type` per line. Nodes are registered in file order, so they
// keep these ids when triples are added afterwards, and nodes without any
// triple survive. Type strings get small integer tags in first-seen order.
// A repeated node name is a DataError.
KnowledgeGraph load_node_list(const std::filesystem::path& path);

// Node list first (when given), then the triples.
KnowledgeGraph load_graph_files(const std::filesystem::path& triples,
                                const std::filesystem::path& node_types);

void save_triples(const KnowledgeGraph& kg, const std::filesystem::path& path);
void save_node_types(const KnowledgeGraph& kg, const std::filesystem::path& path);

}  // namespace hhkg
