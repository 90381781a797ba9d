#include "hhkg/hgat.hpp"

namespace hhkg {

namespace {

template <typename T>
Parameter<T>* weight(ParameterStore<T>& store, const std::string& name, std::size_t rows,
                     std::size_t cols, std::mt19937_64& rng) {
  return &store.add(name, xavier_uniform<T>(rows, cols, rng));
}

template <typename T>
Parameter<T>* constant_row(ParameterStore<T>& store, const std::string& name, std::size_t cols,
                           T value) {
  return &store.add(name, Matrix<T>(1, cols, value), /*decay=*/false);
}

template <typename T>
Var attention_logits(Tape<T>& t, Var gathered, Var phi_inc, Var prev, Var attn) {
  const std::size_t h = t.value(gathered).cols();
  Var logits = ops::matmul(t, gathered, ops::slice_rows(t, attn, 0, h));
  logits = ops::add(t, logits, ops::matmul(t, phi_inc, ops::slice_rows(t, attn, h, h)));
  logits = ops::add(t, logits, ops::matmul(t, prev, ops::slice_rows(t, attn, 2 * h, h)));
  return ops::leaky_relu(t, logits, T(0.2));
}

}  // namespace

template <typename T>
HgatParams<T> register_hgat(ParameterStore<T>& store, const HgatConfig& c, std::size_t d1,
                            std::size_t n_types, std::mt19937_64& rng) {
  require(c.heads >= 1 && c.layers >= 1 && c.hidden >= 1 && c.type_dim >= 1,
          "hgat: heads, layers, hidden and type_dim must be >= 1");
  require(n_types >= 1, "hgat: need at least one hyperedge type");
  HgatParams<T> p;
  const std::size_t h = c.hidden;
  for (std::size_t k = 0; k < c.heads; ++k) {
    const std::string pre = "hgat.head" + std::to_string(k);
    p.head_w.push_back(weight(store, pre + ".w", d1, h, rng));
    p.head_b.push_back(constant_row(store, pre + ".b", h, T(0)));
  }
  for (std::size_t l = 0; l < c.layers; ++l) {
    const std::string pre = "hgat.layer" + std::to_string(l);
    HgatLayerParams<T> lp;
    lp.type_emb = weight(store, pre + ".type_emb", n_types, c.type_dim, rng);
    lp.phi_w = weight(store, pre + ".phi.w", c.type_dim, h, rng);
    lp.phi_b = constant_row(store, pre + ".phi.b", h, T(0));
    for (std::size_t k = 0; k < c.heads; ++k) {
      lp.attn.push_back(weight(store, pre + ".attn" + std::to_string(k), 3 * h, 1, rng));
    }
    lp.ffn1_w = weight(store, pre + ".ffn1.w", h, 2 * h, rng);
    lp.ffn1_b = constant_row(store, pre + ".ffn1.b", 2 * h, T(0));
    lp.ffn2_w = weight(store, pre + ".ffn2.w", 2 * h, h, rng);
    lp.ffn2_b = constant_row(store, pre + ".ffn2.b", h, T(0));
    lp.ln_gamma = constant_row(store, pre + ".ln.gamma", h, T(1));
    lp.ln_beta = constant_row(store, pre + ".ln.beta", h, T(0));
    p.layers.push_back(lp);
  }
  p.out_w = weight(store, "hgat.out.w", h, 1, rng);
  p.out_b = constant_row(store, "hgat.out.b", 1, T(0));
  return p;
}

template <typename T>
std::vector<Var> init_heads(Binder<T>& bind, Var x1, const HgatParams<T>& params) {
  std::vector<Var> heads;
  for (std::size_t k = 0; k < params.head_w.size(); ++k) {
    heads.push_back(ops::linear(bind.tape(), x1, bind(params.head_w[k]), bind(params.head_b[k])));
  }
  return heads;
}

template <typename T>
HgatAttention<T> hgat_node_to_edge(Tape<T>& t, const GraphContext& ctx, Var node_states,
                                   Var phi_inc, Var edge_prev, Var attn, double dropout,
                                   const RunMode& mode) {
  Var members = ops::gather_rows(t, node_states, std::span<const Index>(ctx.inc_node));
  Var prev = ops::gather_rows(t, edge_prev, std::span<const Index>(ctx.inc_edge));
  Var logits = attention_logits(t, members, phi_inc, prev, attn);
  Var alpha = ops::segment_softmax(t, logits, std::span<const Index>(ctx.inc_edge), ctx.n_edges);
  Var kept = mode.rng ? ops::dropout(t, alpha, dropout, *mode.rng, mode.training) : alpha;
  Var out = ops::segment_weighted_sum(t, kept, members, std::span<const Index>(ctx.inc_edge),
                                      ctx.n_edges);
  return {out, alpha};
}

template <typename T>
HgatAttention<T> hgat_edge_to_node(Tape<T>& t, const GraphContext& ctx, Var edge_states,
                                   Var phi_inc, Var node_prev, Var attn, double dropout,
                                   const RunMode& mode) {
  Var edges = ops::gather_rows(t, edge_states, std::span<const Index>(ctx.inc_edge));
  Var prev = ops::gather_rows(t, node_prev, std::span<const Index>(ctx.inc_node));
  Var logits = attention_logits(t, edges, phi_inc, prev, attn);
  Var alpha = ops::segment_softmax(t, logits, std::span<const Index>(ctx.inc_node), ctx.n_nodes);
  Var kept = mode.rng ? ops::dropout(t, alpha, dropout, *mode.rng, mode.training) : alpha;
  Var out = ops::segment_weighted_sum(t, kept, edges, std::span<const Index>(ctx.inc_node),
                                      ctx.n_nodes);
  return {out, alpha};
}

template <typename T>
HgatLayerOutput<T> hgat_layer(Binder<T>& bind, const GraphContext& ctx,
                              const std::vector<Var>& node_prev, const std::vector<Var>& edge_prev,
                              const HgatLayerParams<T>& lp, const HgatConfig& c,
                              const RunMode& mode) {
  Tape<T>& t = bind.tape();
  require(node_prev.size() == lp.attn.size() && edge_prev.size() == lp.attn.size(),
          "hgat_layer: head count mismatch");
  Var types = ops::gather_rows(t, bind(lp.type_emb), std::span<const Index>(ctx.edge_type));
  Var phi = ops::linear(t, types, bind(lp.phi_w), bind(lp.phi_b));
  Var phi_inc = ops::gather_rows(t, phi, std::span<const Index>(ctx.inc_edge));

  HgatLayerOutput<T> out;
  for (std::size_t k = 0; k < lp.attn.size(); ++k) {
    Var attn = bind(lp.attn[k]);
    auto n2e = hgat_node_to_edge(t, ctx, node_prev[k], phi_inc, edge_prev[k], attn,
                                 c.attn_dropout, mode);
    auto e2n = hgat_edge_to_node(t, ctx, n2e.out, phi_inc, node_prev[k], attn, c.attn_dropout,
                                 mode);
    // Nodes without hyperedges keep their previous state as the attended value.
    Var attended = ops::add(t, e2n.out, ops::scale_rows(t, node_prev[k], ctx.isolated<T>()));
    Var ffn_in = c.ffn_on_attended ? attended : node_prev[k];
    Var ffn = ops::gelu(t, ops::linear(t, ffn_in, bind(lp.ffn1_w), bind(lp.ffn1_b)));
    ffn = ops::linear(t, ffn, bind(lp.ffn2_w), bind(lp.ffn2_b));
    out.nodes.push_back(
        ops::layer_norm(t, ops::add(t, attended, ffn), bind(lp.ln_gamma), bind(lp.ln_beta)));
    out.edges.push_back(n2e.out);
    out.alpha_node_to_edge.push_back(n2e.alpha);
    out.alpha_edge_to_node.push_back(e2n.alpha);
  }
  return out;
}

template <typename T>
StructOutput<T> struct_forward(Binder<T>& bind, const GraphContext& ctx, Var x1,
                               const HgatParams<T>& params, const HgatConfig& config,
                               const RunMode& mode) {
  Tape<T>& t = bind.tape();
  std::vector<Var> nodes = init_heads(bind, x1, params);
  std::vector<Var> edges;
  for (Var s : nodes) {
    Var members = ops::gather_rows(t, s, std::span<const Index>(ctx.inc_node));
    edges.push_back(ops::segment_mean(t, members, std::span<const Index>(ctx.inc_edge), ctx.n_edges));
  }
  for (const auto& layer : params.layers) {
    auto out = hgat_layer(bind, ctx, nodes, edges, layer, config, mode);
    nodes = std::move(out.nodes);
    edges = std::move(out.edges);
  }
  Var z = ops::mean_of(t, nodes);
  Var s = ops::linear(t, z, bind(params.out_w), bind(params.out_b));
  return {z, s};
}

#define HHKG_INSTANTIATE_HGAT(T)                                                               \
  template HgatParams<T> register_hgat<T>(ParameterStore<T>&, const HgatConfig&, std::size_t,  \
                                          std::size_t, std::mt19937_64&);                      \
  template std::vector<Var> init_heads<T>(Binder<T>&, Var, const HgatParams<T>&);              \
  template HgatAttention<T> hgat_node_to_edge<T>(Tape<T>&, const GraphContext&, Var, Var, Var, \
                                                 Var, double, const RunMode&);                 \
  template HgatAttention<T> hgat_edge_to_node<T>(Tape<T>&, const GraphContext&, Var, Var, Var, \
                                                 Var, double, const RunMode&);                 \
  template HgatLayerOutput<T> hgat_layer<T>(Binder<T>&, const GraphContext&,                   \
                                            const std::vector<Var>&, const std::vector<Var>&,  \
                                            const HgatLayerParams<T>&, const HgatConfig&,      \
                                            const RunMode&);                                   \
  template StructOutput<T> struct_forward<T>(Binder<T>&, const GraphContext&, Var,             \
                                             const HgatParams<T>&, const HgatConfig&,          \
                                             const RunMode&);

HHKG_INSTANTIATE_HGAT(float)
HHKG_INSTANTIATE_HGAT(double)

}  // namespace hhkg
