#include "hhkg/knowledge_graph.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace hhkg {

NodeId KnowledgeGraph::add_node(const std::string& name, std::uint32_t type) {
  auto it = node_index_.find(name);
  if (it != node_index_.end()) return it->second;
  const auto id = static_cast<NodeId>(node_names_.size());
  node_names_.push_back(name);
  node_types_.push_back(type);
  node_index_.emplace(name, id);
  return id;
}

RelationId KnowledgeGraph::add_relation(const std::string& name) {
  auto it = relation_index_.find(name);
  if (it != relation_index_.end()) return it->second;
  const auto id = static_cast<RelationId>(relation_names_.size());
  relation_names_.push_back(name);
  relation_index_.emplace(name, id);
  return id;
}

void KnowledgeGraph::add_triple(NodeId head, RelationId relation, NodeId tail) {
  if (head >= n_nodes() || tail >= n_nodes() || relation >= n_relations()) {
    throw DataError("triple references unknown node or relation id");
  }
  triples_.push_back({head, relation, tail});
}

void KnowledgeGraph::add_triple(const std::string& head, const std::string& relation,
                                const std::string& tail) {
  const NodeId h = add_node(head);
  const RelationId r = add_relation(relation);
  const NodeId t = add_node(tail);
  triples_.push_back({h, r, t});
}

void KnowledgeGraph::finalize() {
  std::sort(triples_.begin(), triples_.end());
  triples_.erase(std::unique(triples_.begin(), triples_.end()), triples_.end());
}

std::optional<NodeId> KnowledgeGraph::find_node(const std::string& name) const {
  auto it = node_index_.find(name);
  if (it == node_index_.end()) return std::nullopt;
  return it->second;
}

std::optional<RelationId> KnowledgeGraph::find_relation(const std::string& name) const {
  auto it = relation_index_.find(name);
  if (it == relation_index_.end()) return std::nullopt;
  return it->second;
}

void KnowledgeGraph::validate() const {
  for (const Triple& t : triples_) {
    if (t.head >= n_nodes() || t.tail >= n_nodes() || t.relation >= n_relations()) {
      throw DataError("triple references unknown node or relation id");
    }
  }
  std::vector<Triple> sorted(triples_);
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw DataError("duplicate triple");
  }
}

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find('\t', start);
    if (pos == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return fields;
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

bool skippable(const std::string& line) {
  return line.empty() || line.front() == '#';
}

}  // namespace

KnowledgeGraph parse_triples(std::istream& in, const std::string& source, KnowledgeGraph kg) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    strip_cr(line);
    if (skippable(line)) continue;
    const auto fields = split_tabs(line);
    if (fields.size() != 3) {
      throw DataError(source, lineno, "expected head<TAB>relation<TAB>tail");
    }
    for (const auto& f : fields) {
      if (f.empty()) throw DataError(source, lineno, "empty field");
    }
    kg.add_triple(fields[0], fields[1], fields[2]);
  }
  kg.finalize();
  return kg;
}

KnowledgeGraph load_triples(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open triple file " + path.string());
  return parse_triples(in, path.string());
}

KnowledgeGraph load_node_list(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open node type file " + path.string());
  KnowledgeGraph kg;
  std::unordered_map<std::string, std::uint32_t> tags;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    strip_cr(line);
    if (skippable(line)) continue;
    const auto fields = split_tabs(line);
    if (fields.size() != 2 || fields[0].empty()) {
      throw DataError(path.string(), lineno, "expected node<TAB>type");
    }
    if (kg.find_node(fields[0])) {
      throw DataError(path.string(), lineno, "repeated node '" + fields[0] + "'");
    }
    auto [it, inserted] = tags.emplace(fields[1], static_cast<std::uint32_t>(tags.size()));
    kg.add_node(fields[0], it->second);
  }
  return kg;
}

KnowledgeGraph load_graph_files(const std::filesystem::path& triples,
                                const std::filesystem::path& node_types) {
  if (node_types.empty()) return load_triples(triples);
  KnowledgeGraph kg = load_node_list(node_types);
  std::ifstream in(triples);
  if (!in) throw DataError("cannot open triple file " + triples.string());
  return parse_triples(in, triples.string(), std::move(kg));
}

void save_triples(const KnowledgeGraph& kg, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (const Triple& t : kg.triples()) {
    out << kg.node_name(t.head) << '\t' << kg.relation_name(t.relation) << '\t'
        << kg.node_name(t.tail) << '\n';
  }
}

void save_node_types(const KnowledgeGraph& kg, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (NodeId v = 0; v < kg.n_nodes(); ++v) {
    out << kg.node_name(v) << '\t' << kg.node_type(v) << '\n';
  }
}

}  // namespace hhkg
