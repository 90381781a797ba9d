#include "hhkg/sahgt.hpp"

#include <cmath>

namespace hhkg {

namespace {

template <typename T>
Parameter<T>* weight(ParameterStore<T>& store, const std::string& name, std::size_t rows,
                     std::size_t cols, std::mt19937_64& rng) {
  return &store.add(name, xavier_uniform<T>(rows, cols, rng));
}

template <typename T>
Parameter<T>* row(ParameterStore<T>& store, const std::string& name, std::size_t cols, T value,
                  bool trainable = true) {
  return &store.add(name, Matrix<T>(1, cols, value), /*decay=*/false, trainable);
}

template <typename T>
Var project(Binder<T>& bind, Var x, Parameter<T>* w) {
  return ops::matmul(bind.tape(), x, bind(w));
}

// Per-head dense attention: rows of `queries` attend over rows of `keys`
// where mask(query, key) is set.
template <typename T>
Var dense_heads(Tape<T>& t, Var queries, Var keys, Var values, const Matrix<unsigned char>& mask,
                std::size_t heads) {
  const std::size_t width = t.value(queries).cols();
  const std::size_t dh = width / heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  std::vector<Var> parts;
  for (std::size_t h = 0; h < heads; ++h) {
    Var q = ops::slice_cols(t, queries, h * dh, dh);
    Var k = ops::slice_cols(t, keys, h * dh, dh);
    Var v = ops::slice_cols(t, values, h * dh, dh);
    Var scores = ops::scale(t, ops::matmul_nt(t, q, k), scale);
    parts.push_back(ops::matmul(t, ops::masked_softmax_rows(t, scores, mask), v));
  }
  return ops::concat_cols(t, parts);
}

void check_heads(const SahgtConfig& c) {
  require(c.heads >= 1 && c.hidden % c.heads == 0, "sahgt: hidden must be divisible by heads");
}

}  // namespace

template <typename T>
SahgtParams<T> register_sahgt(ParameterStore<T>& store, const SahgtConfig& c, std::size_t d2,
                              std::size_t n_types, std::mt19937_64& rng) {
  check_heads(c);
  require(c.layers >= 1 && c.chunk >= 1, "sahgt: layers and chunk must be >= 1");
  require(n_types >= 1, "sahgt: need at least one hyperedge type");
  const std::size_t h = c.hidden;
  SahgtParams<T> p;
  p.in_w = weight(store, "sahgt.in.w", d2, h, rng);
  p.in_b = row(store, "sahgt.in.b", h, T(0));
  p.type_emb = weight(store, "sahgt.type_emb", n_types, h, rng);
  for (std::size_t l = 0; l < c.layers; ++l) {
    const std::string pre = "sahgt.layer" + std::to_string(l);
    SahgtLayerParams<T> lp;
    lp.wq = weight(store, pre + ".wq", h, h, rng);
    lp.wk = weight(store, pre + ".wk", h, h, rng);
    lp.wv = weight(store, pre + ".wv", h, h, rng);
    lp.wo = weight(store, pre + ".wo", h, h, rng);
    lp.bn1_gamma = row(store, pre + ".bn1.gamma", h, T(1));
    lp.bn1_beta = row(store, pre + ".bn1.beta", h, T(0));
    lp.bn1_mean = row(store, pre + ".bn1.running_mean", h, T(0), false);
    lp.bn1_var = row(store, pre + ".bn1.running_var", h, T(1), false);
    lp.bn2_gamma = row(store, pre + ".bn2.gamma", h, T(1));
    lp.bn2_beta = row(store, pre + ".bn2.beta", h, T(0));
    lp.bn2_mean = row(store, pre + ".bn2.running_mean", h, T(0), false);
    lp.bn2_var = row(store, pre + ".bn2.running_var", h, T(1), false);
    lp.ffn1_w = weight(store, pre + ".ffn1.w", h, 2 * h, rng);
    lp.ffn1_b = row(store, pre + ".ffn1.b", 2 * h, T(0));
    lp.ffn2_w = weight(store, pre + ".ffn2.w", 2 * h, h, rng);
    lp.ffn2_b = row(store, pre + ".ffn2.b", h, T(0));
    p.layers.push_back(lp);
  }
  p.out_w = weight(store, "sahgt.out.w", h, 1, rng);
  p.out_b = row(store, "sahgt.out.b", 1, T(0));
  return p;
}

namespace {

// Stage bodies with the node queries supplied, so one layer projects them once.
template <typename T>
Var sparse_edge_stage(Binder<T>& bind, const GraphContext& ctx, Var node_queries, Var nodes,
                      Var edges, const SahgtLayerParams<T>& layer, const SahgtConfig& c,
                      ops::AttentionTrace<T>* trace) {
  Tape<T>& t = bind.tape();
  Var k = project(bind, edges, layer.wk);
  Var v = project(bind, nodes, layer.wv);
  Var msg = ops::sparse_attention(t, node_queries, k, v, ctx.node_to_edge, c.heads, c.chunk, trace);
  return project(bind, msg, layer.wo);
}

template <typename T>
Var sparse_node_stage(Binder<T>& bind, const GraphContext& ctx, Var node_queries, Var edges,
                      const SahgtLayerParams<T>& layer, const SahgtConfig& c,
                      ops::AttentionTrace<T>* trace) {
  Tape<T>& t = bind.tape();
  Var k = project(bind, edges, layer.wk);
  Var v = project(bind, edges, layer.wv);
  Var msg = ops::sparse_attention(t, node_queries, k, v, ctx.edge_to_node, c.heads, c.chunk, trace);
  return project(bind, msg, layer.wo);
}

}  // namespace

template <typename T>
Var sparse_attention_edge_update(Binder<T>& bind, const GraphContext& ctx, Var nodes, Var edges,
                                 const SahgtLayerParams<T>& layer, const SahgtConfig& c,
                                 ops::AttentionTrace<T>* trace) {
  check_heads(c);
  return sparse_edge_stage(bind, ctx, project(bind, nodes, layer.wq), nodes, edges, layer, c, trace);
}

template <typename T>
Var sparse_attention_node_update(Binder<T>& bind, const GraphContext& ctx, Var nodes, Var edges,
                                 const SahgtLayerParams<T>& layer, const SahgtConfig& c,
                                 ops::AttentionTrace<T>* trace) {
  check_heads(c);
  return sparse_node_stage(bind, ctx, project(bind, nodes, layer.wq), edges, layer, c, trace);
}

template <typename T>
AttentionStages sparse_attention_stages(Binder<T>& bind, const GraphContext& ctx, Var nodes,
                                        Var edges, const SahgtLayerParams<T>& layer,
                                        const SahgtConfig& c) {
  check_heads(c);
  Var q = project(bind, nodes, layer.wq);
  AttentionStages out;
  out.edges = sparse_edge_stage(bind, ctx, q, nodes, edges, layer, c, static_cast<ops::AttentionTrace<T>*>(nullptr));
  out.message = sparse_node_stage(bind, ctx, q, out.edges, layer, c, static_cast<ops::AttentionTrace<T>*>(nullptr));
  return out;
}

template <typename T>
Var dense_attention_edge_update(Binder<T>& bind, const GraphContext& ctx, Var nodes, Var edges,
                                const SahgtLayerParams<T>& layer, const SahgtConfig& c) {
  check_heads(c);
  require(ctx.n_nodes * ctx.n_edges <= kDenseGuard, "dense attention: N*E exceeds the size guard");
  const auto mask = ctx.dense_mask(/*transposed=*/true);
  Var q = project(bind, nodes, layer.wq);
  Var k = project(bind, edges, layer.wk);
  Var v = project(bind, nodes, layer.wv);
  // Edges are the softmax rows here, so they play the query role in the product.
  Var msg = dense_heads(bind.tape(), k, q, v, mask, c.heads);
  return project(bind, msg, layer.wo);
}

template <typename T>
Var dense_attention_node_update(Binder<T>& bind, const GraphContext& ctx, Var nodes, Var edges,
                                const SahgtLayerParams<T>& layer, const SahgtConfig& c) {
  check_heads(c);
  require(ctx.n_nodes * ctx.n_edges <= kDenseGuard, "dense attention: N*E exceeds the size guard");
  const auto mask = ctx.dense_mask(/*transposed=*/false);
  Var q = project(bind, nodes, layer.wq);
  Var k = project(bind, edges, layer.wk);
  Var v = project(bind, edges, layer.wv);
  Var msg = dense_heads(bind.tape(), q, k, v, mask, c.heads);
  return project(bind, msg, layer.wo);
}

template <typename T>
AttentionStages dense_attention_stages(Binder<T>& bind, const GraphContext& ctx, Var nodes,
                                       Var edges, const SahgtLayerParams<T>& layer,
                                       const SahgtConfig& c) {
  AttentionStages out;
  out.edges = dense_attention_edge_update(bind, ctx, nodes, edges, layer, c);
  out.message = dense_attention_node_update(bind, ctx, nodes, out.edges, layer, c);
  return out;
}

template <typename T>
SahgtLayerOutput<T> sahgt_layer(Binder<T>& bind, const GraphContext& ctx, Var nodes, Var edges,
                                const SahgtLayerParams<T>& lp, const SahgtConfig& c,
                                const RunMode& mode, AttentionPath path) {
  Tape<T>& t = bind.tape();
  SahgtLayerOutput<T> out;
  const auto stages = path == AttentionPath::kSparse
                          ? sparse_attention_stages(bind, ctx, nodes, edges, lp, c)
                          : dense_attention_stages(bind, ctx, nodes, edges, lp, c);
  out.edges = stages.edges;
  out.message = stages.message;
  const ops::BatchNormState<T> bn1{lp.bn1_mean, lp.bn1_var};
  const ops::BatchNormState<T> bn2{lp.bn2_mean, lp.bn2_var};
  Var a = ops::batch_norm(t, ops::add(t, nodes, out.message), bind(lp.bn1_gamma),
                          bind(lp.bn1_beta), bn1, mode.training);
  Var ffn = ops::gelu(t, ops::linear(t, a, bind(lp.ffn1_w), bind(lp.ffn1_b)));
  ffn = ops::linear(t, ffn, bind(lp.ffn2_w), bind(lp.ffn2_b));
  out.nodes = ops::batch_norm(t, ops::add(t, nodes, ffn), bind(lp.bn2_gamma), bind(lp.bn2_beta),
                              bn2, mode.training);
  return out;
}

template <typename T>
SemOutput<T> sem_forward(Binder<T>& bind, const GraphContext& ctx, Var x2,
                         const SahgtParams<T>& params, const SahgtConfig& config,
                         const RunMode& mode, AttentionPath path) {
  Tape<T>& t = bind.tape();
  Var h = ops::linear(t, x2, bind(params.in_w), bind(params.in_b));
  Var e = ops::gather_rows(t, bind(params.type_emb), std::span<const Index>(ctx.edge_type));
  for (const auto& layer : params.layers) {
    auto out = sahgt_layer(bind, ctx, h, e, layer, config, mode, path);
    h = out.nodes;
    e = out.edges;
  }
  return {h, ops::linear(t, h, bind(params.out_w), bind(params.out_b))};
}

template <typename T>
SemOutput<T> dense_attention_oracle(Binder<T>& bind, const GraphContext& ctx, Var x2,
                                    const SahgtParams<T>& params, const SahgtConfig& config,
                                    const RunMode& mode) {
  if (ctx.n_nodes * ctx.n_edges > kDenseGuard) {
    throw DataError("dense attention oracle: N*E = " + std::to_string(ctx.n_nodes * ctx.n_edges) +
                    " exceeds the guard of " + std::to_string(kDenseGuard));
  }
  return sem_forward(bind, ctx, x2, params, config, mode, AttentionPath::kDense);
}

#define HHKG_INSTANTIATE_SAHGT(T)                                                              \
  template SahgtParams<T> register_sahgt<T>(ParameterStore<T>&, const SahgtConfig&,            \
                                            std::size_t, std::size_t, std::mt19937_64&);       \
  template Var sparse_attention_edge_update<T>(Binder<T>&, const GraphContext&, Var, Var,      \
                                               const SahgtLayerParams<T>&, const SahgtConfig&, \
                                               ops::AttentionTrace<T>*);                       \
  template Var sparse_attention_node_update<T>(Binder<T>&, const GraphContext&, Var, Var,      \
                                               const SahgtLayerParams<T>&, const SahgtConfig&, \
                                               ops::AttentionTrace<T>*);                       \
  template Var dense_attention_edge_update<T>(Binder<T>&, const GraphContext&, Var, Var,       \
                                              const SahgtLayerParams<T>&, const SahgtConfig&); \
  template Var dense_attention_node_update<T>(Binder<T>&, const GraphContext&, Var, Var,       \
                                              const SahgtLayerParams<T>&, const SahgtConfig&); \
  template AttentionStages sparse_attention_stages<T>(Binder<T>&, const GraphContext&, Var, Var,  \
                                                      const SahgtLayerParams<T>&,                 \
                                                      const SahgtConfig&);                        \
  template AttentionStages dense_attention_stages<T>(Binder<T>&, const GraphContext&, Var, Var,   \
                                                     const SahgtLayerParams<T>&,                  \
                                                     const SahgtConfig&);                         \
  template SahgtLayerOutput<T> sahgt_layer<T>(Binder<T>&, const GraphContext&, Var, Var,       \
                                              const SahgtLayerParams<T>&, const SahgtConfig&,  \
                                              const RunMode&, AttentionPath);                  \
  template SemOutput<T> sem_forward<T>(Binder<T>&, const GraphContext&, Var,                   \
                                       const SahgtParams<T>&, const SahgtConfig&,              \
                                       const RunMode&, AttentionPath);                         \
  template SemOutput<T> dense_attention_oracle<T>(Binder<T>&, const GraphContext&, Var,        \
                                                  const SahgtParams<T>&, const SahgtConfig&,   \
                                                  const RunMode&);

HHKG_INSTANTIATE_SAHGT(float)
HHKG_INSTANTIATE_SAHGT(double)

}  // namespace hhkg
