#include "hhkg/segment_ops.hpp"

#include <numeric>
#include <tuple>

namespace hhkg {

CooPairs CooPairs::from_hypergraph(const Hypergraph& hg) {
  CooPairs p;
  p.n_rows = hg.n_nodes;
  p.n_cols = hg.n_hyperedges;
  p.rows.reserve(hg.nnz());
  p.cols.reserve(hg.nnz());
  for (const Incidence& inc : hg.incidence) {
    p.rows.push_back(inc.node);
    p.cols.push_back(inc.edge);
  }
  return p;
}

void CooPairs::validate() const {
  require(rows.size() == cols.size(), "CooPairs: rows/cols length mismatch");
  require(values.empty() || values.size() == rows.size(), "CooPairs: values length mismatch");
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i] < n_rows && cols[i] < n_cols, "CooPairs: index out of range");
    if (i > 0) {
      require(std::tie(cols[i - 1], rows[i - 1]) < std::tie(cols[i], rows[i]),
              "CooPairs: entries must be strictly sorted by (col, row)");
    }
  }
}

AttentionPlan AttentionPlan::node_to_edge(const CooPairs& pairs) {
  AttentionPlan plan;
  plan.n_segments = pairs.n_cols;
  plan.query.assign(pairs.rows.begin(), pairs.rows.end());
  plan.key.assign(pairs.cols.begin(), pairs.cols.end());
  plan.value.assign(pairs.rows.begin(), pairs.rows.end());
  plan.segment.assign(pairs.cols.begin(), pairs.cols.end());
  return plan;
}

AttentionPlan AttentionPlan::edge_to_node(const CooPairs& pairs) {
  std::vector<std::size_t> order(pairs.nnz());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::tie(pairs.rows[a], pairs.cols[a]) < std::tie(pairs.rows[b], pairs.cols[b]);
  });
  AttentionPlan plan;
  plan.n_segments = pairs.n_rows;
  for (std::size_t i : order) {
    plan.query.push_back(pairs.rows[i]);
    plan.key.push_back(pairs.cols[i]);
    plan.value.push_back(pairs.cols[i]);
    plan.segment.push_back(pairs.rows[i]);
  }
  return plan;
}

}  // namespace hhkg
