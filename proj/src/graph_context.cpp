#include "hhkg/graph_context.hpp"

namespace hhkg {

GraphContext::GraphContext(const Hypergraph& hg, std::vector<Index> type_ids, std::size_t types)
    : n_nodes(hg.n_nodes), n_edges(hg.n_hyperedges), n_types(types),
      edge_type(std::move(type_ids)) {
  require(edge_type.size() == n_edges, "graph context: type id count mismatch");
  for (Index t : edge_type) require(t < n_types, "graph context: type id out of range");
  pairs = CooPairs::from_hypergraph(hg);
  pairs.validate();
  inc_node.assign(pairs.rows.begin(), pairs.rows.end());
  inc_edge.assign(pairs.cols.begin(), pairs.cols.end());
  node_to_edge = AttentionPlan::node_to_edge(pairs);
  edge_to_node = AttentionPlan::edge_to_node(pairs);
  isolated_d.assign(n_nodes, 1.0);
  for (Index v : inc_node) isolated_d[v] = 0.0;
  isolated_f.assign(isolated_d.begin(), isolated_d.end());
  for (double x : isolated_d) connected_d.push_back(1.0 - x);
  connected_f.assign(connected_d.begin(), connected_d.end());
}

Matrix<unsigned char> GraphContext::dense_mask(bool transposed) const {
  Matrix<unsigned char> m(transposed ? n_edges : n_nodes, transposed ? n_nodes : n_edges);
  for (std::size_t i = 0; i < nnz(); ++i) {
    if (transposed) {
      m(inc_edge[i], inc_node[i]) = 1;
    } else {
      m(inc_node[i], inc_edge[i]) = 1;
    }
  }
  return m;
}

}  // namespace hhkg
