#pragma once

#include <random>
#include <string>
#include <vector>

#include "hhkg/graph_context.hpp"
#include "hhkg/ops.hpp"

// Structural channel: hypergraph attention over node and hyperedge states.
namespace hhkg {

struct HgatConfig {
  std::size_t hidden = 20;     // per-head state width
  std::size_t heads = 4;
  std::size_t layers = 1;
  std::size_t type_dim = 20;   // width of the hyperedge-type embedding
  double attn_dropout = 0.3;
  // false: LayerNorm(attention + FFN(previous state)) as printed.
  // true:  LayerNorm(attention + FFN(attention)).
  bool ffn_on_attended = false;
};

template <typename T>
struct HgatLayerParams {
  Parameter<T>* type_emb = nullptr;  // n_types x type_dim
  Parameter<T>* phi_w = nullptr;     // type_dim x hidden
  Parameter<T>* phi_b = nullptr;
  std::vector<Parameter<T>*> attn;   // per head, 3*hidden x 1: [node | predicate | previous]
  Parameter<T>* ffn1_w = nullptr;    // hidden x 2*hidden
  Parameter<T>* ffn1_b = nullptr;
  Parameter<T>* ffn2_w = nullptr;    // 2*hidden x hidden
  Parameter<T>* ffn2_b = nullptr;
  Parameter<T>* ln_gamma = nullptr;
  Parameter<T>* ln_beta = nullptr;
};

template <typename T>
struct HgatParams {
  std::vector<Parameter<T>*> head_w;  // per head, d1 x hidden
  std::vector<Parameter<T>*> head_b;
  std::vector<HgatLayerParams<T>> layers;
  Parameter<T>* out_w = nullptr;  // hidden x 1
  Parameter<T>* out_b = nullptr;
};

// Registers every structural parameter under the "hgat." prefix.
template <typename T>
HgatParams<T> register_hgat(ParameterStore<T>& store, const HgatConfig& config, std::size_t d1,
                            std::size_t n_types, std::mt19937_64& rng);

// s_h^(0) = x W_h + b_h for every head.
template <typename T>
std::vector<Var> init_heads(Binder<T>& bind, Var x1, const HgatParams<T>& params);

template <typename T>
struct HgatAttention {
  Var out;    // aggregated states
  Var alpha;  // nnz x 1 attention weights in incidence order
};

// Edge states from member nodes. phi_inc: predicate features per incidence
// entry (nnz x hidden); edge_prev: previous edge states (E x hidden).
template <typename T>
HgatAttention<T> hgat_node_to_edge(Tape<T>& t, const GraphContext& ctx, Var node_states,
                                   Var phi_inc, Var edge_prev, Var attn, double dropout,
                                   const RunMode& mode);

// Node messages from incident hyperedges; isolated nodes get zero rows.
template <typename T>
HgatAttention<T> hgat_edge_to_node(Tape<T>& t, const GraphContext& ctx, Var edge_states,
                                   Var phi_inc, Var node_prev, Var attn, double dropout,
                                   const RunMode& mode);

template <typename T>
struct HgatLayerOutput {
  std::vector<Var> nodes;  // per head, N x hidden
  std::vector<Var> edges;  // per head, E x hidden
  std::vector<Var> alpha_node_to_edge;
  std::vector<Var> alpha_edge_to_node;
};

template <typename T>
HgatLayerOutput<T> hgat_layer(Binder<T>& bind, const GraphContext& ctx,
                              const std::vector<Var>& node_prev, const std::vector<Var>& edge_prev,
                              const HgatLayerParams<T>& layer, const HgatConfig& config,
                              const RunMode& mode);

template <typename T>
struct StructOutput {
  Var z;  // N x hidden, head average of the last layer
  Var s;  // N x 1
};

template <typename T>
StructOutput<T> struct_forward(Binder<T>& bind, const GraphContext& ctx, Var x1,
                               const HgatParams<T>& params, const HgatConfig& config,
                               const RunMode& mode);

}  // namespace hhkg
