#pragma once

#include <random>
#include <type_traits>
#include <unordered_map>
#include <vector>

#include "hhkg/hypergraph.hpp"
#include "hhkg/segment_ops.hpp"
#include "hhkg/tape.hpp"

namespace hhkg {

// Index lists derived once per hypergraph. Tape ops keep spans into these,
// so a context must outlive every tape built against it.
struct GraphContext {
  std::size_t n_nodes = 0;
  std::size_t n_edges = 0;
  std::size_t n_types = 0;
  CooPairs pairs;
  std::vector<Index> inc_node;   // incidence order, sorted by (edge, node)
  std::vector<Index> inc_edge;
  std::vector<Index> edge_type;  // per hyperedge
  AttentionPlan node_to_edge;
  AttentionPlan edge_to_node;
  std::vector<float> isolated_f;  // 1 for nodes without hyperedges
  std::vector<double> isolated_d;
  std::vector<float> connected_f;  // 1 - isolated
  std::vector<double> connected_d;

  GraphContext() = default;
  GraphContext(const Hypergraph& hg, std::vector<Index> type_ids, std::size_t n_types);
  GraphContext(const GraphContext&) = delete;
  GraphContext& operator=(const GraphContext&) = delete;

  std::size_t nnz() const noexcept { return inc_node.size(); }

  template <typename T>
  std::span<const T> isolated() const {
    if constexpr (std::is_same_v<T, float>) return isolated_f;
    else return isolated_d;
  }
  template <typename T>
  std::span<const T> connected() const {
    if constexpr (std::is_same_v<T, float>) return connected_f;
    else return connected_d;
  }

  // N x E 0/1 incidence (transposed: E x N). Dense reference paths only.
  Matrix<unsigned char> dense_mask(bool transposed) const;
};

// Train/eval switch shared by both encoders. Dropout draws from rng.
struct RunMode {
  bool training = false;
  std::mt19937_64* rng = nullptr;
};

// Pushes each parameter onto the tape once and hands out its Var.
template <typename T>
class Binder {
 public:
  explicit Binder(Tape<T>& tape) : tape_(tape) {}
  Tape<T>& tape() noexcept { return tape_; }
  Var operator()(Parameter<T>* p) {
    auto it = cache_.find(p);
    if (it != cache_.end()) return it->second;
    Var v = tape_.parameter(*p);
    cache_.emplace(p, v);
    return v;
  }

 private:
  Tape<T>& tape_;
  std::unordered_map<const Parameter<T>*, Var> cache_;
};

}  // namespace hhkg
