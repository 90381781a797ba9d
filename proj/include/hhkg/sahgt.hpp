#pragma once

#include <random>
#include <vector>

#include "hhkg/graph_context.hpp"
#include "hhkg/ops.hpp"

// Semantic channel: two-stage (node -> hyperedge -> node) transformer whose
// attention is evaluated only on incidence entries.
namespace hhkg {

struct SahgtConfig {
  std::size_t hidden = 20;  // model width, split evenly across heads
  std::size_t heads = 4;
  std::size_t layers = 1;
  std::size_t chunk = 2000;  // incidence entries per streaming chunk
};

enum class AttentionPath { kSparse, kDense };

// Largest N * E the dense reference path will materialize.
inline constexpr std::size_t kDenseGuard = 1'000'000;

template <typename T>
struct SahgtLayerParams {
  Parameter<T>* wq = nullptr;  // hidden x hidden, heads are column blocks
  Parameter<T>* wk = nullptr;
  Parameter<T>* wv = nullptr;
  Parameter<T>* wo = nullptr;  // output projection after head concatenation
  Parameter<T>* bn1_gamma = nullptr;
  Parameter<T>* bn1_beta = nullptr;
  Parameter<T>* bn1_mean = nullptr;  // running statistics, not trained
  Parameter<T>* bn1_var = nullptr;
  Parameter<T>* bn2_gamma = nullptr;
  Parameter<T>* bn2_beta = nullptr;
  Parameter<T>* bn2_mean = nullptr;
  Parameter<T>* bn2_var = nullptr;
  Parameter<T>* ffn1_w = nullptr;  // hidden x 2*hidden, GELU
  Parameter<T>* ffn1_b = nullptr;
  Parameter<T>* ffn2_w = nullptr;
  Parameter<T>* ffn2_b = nullptr;
};

template <typename T>
struct SahgtParams {
  Parameter<T>* in_w = nullptr;      // d2 x hidden
  Parameter<T>* in_b = nullptr;
  Parameter<T>* type_emb = nullptr;  // n_types x hidden, initial hyperedge states
  std::vector<SahgtLayerParams<T>> layers;
  Parameter<T>* out_w = nullptr;
  Parameter<T>* out_b = nullptr;
};

// Registers every semantic parameter under the "sahgt." prefix.
template <typename T>
SahgtParams<T> register_sahgt(ParameterStore<T>& store, const SahgtConfig& config, std::size_t d2,
                              std::size_t n_types, std::mt19937_64& rng);

// h_e = W_O concat_h sum_{v in e} softmax_v(Q_v . K_e / sqrt(d)) V_v
template <typename T>
Var sparse_attention_edge_update(Binder<T>& bind, const GraphContext& ctx, Var nodes, Var edges,
                                 const SahgtLayerParams<T>& layer, const SahgtConfig& config,
                                 ops::AttentionTrace<T>* trace = nullptr);

// m_v = W_O concat_h sum_{e ni v} softmax_e(Q_v . K_e / sqrt(d)) V_e; zero for isolated v.
template <typename T>
Var sparse_attention_node_update(Binder<T>& bind, const GraphContext& ctx, Var nodes, Var edges,
                                 const SahgtLayerParams<T>& layer, const SahgtConfig& config,
                                 ops::AttentionTrace<T>* trace = nullptr);

// Same maps through dense score matrices and -inf masking.
template <typename T>
Var dense_attention_edge_update(Binder<T>& bind, const GraphContext& ctx, Var nodes, Var edges,
                                const SahgtLayerParams<T>& layer, const SahgtConfig& config);
template <typename T>
Var dense_attention_node_update(Binder<T>& bind, const GraphContext& ctx, Var nodes, Var edges,
                                const SahgtLayerParams<T>& layer, const SahgtConfig& config);

struct AttentionStages {
  Var edges;    // updated hyperedge states
  Var message;  // per-node message against the updated edges
};

// Both stages of one layer; the node queries are projected once and shared.
template <typename T>
AttentionStages sparse_attention_stages(Binder<T>& bind, const GraphContext& ctx, Var nodes,
                                        Var edges, const SahgtLayerParams<T>& layer,
                                        const SahgtConfig& config);
template <typename T>
AttentionStages dense_attention_stages(Binder<T>& bind, const GraphContext& ctx, Var nodes,
                                       Var edges, const SahgtLayerParams<T>& layer,
                                       const SahgtConfig& config);

template <typename T>
struct SahgtLayerOutput {
  Var nodes;
  Var edges;
  Var message;
};

// edges' = edge update; m = node update against edges';
// nodes' = BN2(h + FFN(BN1(h + m))).
template <typename T>
SahgtLayerOutput<T> sahgt_layer(Binder<T>& bind, const GraphContext& ctx, Var nodes, Var edges,
                                const SahgtLayerParams<T>& layer, const SahgtConfig& config,
                                const RunMode& mode, AttentionPath path = AttentionPath::kSparse);

template <typename T>
struct SemOutput {
  Var z;  // N x hidden
  Var s;  // N x 1
};

template <typename T>
SemOutput<T> sem_forward(Binder<T>& bind, const GraphContext& ctx, Var x2,
                         const SahgtParams<T>& params, const SahgtConfig& config,
                         const RunMode& mode, AttentionPath path = AttentionPath::kSparse);

// Reference path for tests and benchmarks. Throws DataError when
// N * E exceeds kDenseGuard.
template <typename T>
SemOutput<T> dense_attention_oracle(Binder<T>& bind, const GraphContext& ctx, Var x2,
                                    const SahgtParams<T>& params, const SahgtConfig& config,
                                    const RunMode& mode);

}  // namespace hhkg
