#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "helpers.hpp"
#include "hhkg/grad_check.hpp"
#include "hhkg/sahgt.hpp"

using namespace hhkg;
using namespace hhkg::test;

namespace {

Matrix<double> zeros_like(const Matrix<double>& m) { return Matrix<double>(m.rows(), m.cols()); }

Matrix<double> batch_norm_eval(const Matrix<double>& x, const Parameter<double>* g,
                               const Parameter<double>* b, const Parameter<double>* mean,
                               const Parameter<double>* var) {
  Matrix<double> y = zeros_like(x);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < x.cols(); ++j) {
      y(i, j) = (x(i, j) - mean->value(0, j)) / std::sqrt(var->value(0, j) + 1e-5) * g->value(0, j) +
                b->value(0, j);
    }
  }
  return y;
}

// Multi-head attention where query row i attends over the listed key rows.
Matrix<double> attend(const Matrix<double>& q, const Matrix<double>& k, const Matrix<double>& v,
                      const std::vector<std::vector<std::size_t>>& keys_of, std::size_t heads) {
  const std::size_t width = q.cols(), dh = width / heads;
  Matrix<double> out(keys_of.size(), width);
  for (std::size_t i = 0; i < keys_of.size(); ++i) {
    for (std::size_t hd = 0; hd < heads; ++hd) {
      std::vector<double> w;
      double mx = -INFINITY;
      for (std::size_t key : keys_of[i]) {
        double d = 0.0;
        for (std::size_t j = hd * dh; j < (hd + 1) * dh; ++j) d += q(i, j) * k(key, j);
        w.push_back(d / std::sqrt(static_cast<double>(dh)));
        mx = std::max(mx, w.back());
      }
      double z = 0.0;
      for (double& x : w) z += (x = std::exp(x - mx));
      for (std::size_t a = 0; a < w.size(); ++a) {
        for (std::size_t j = hd * dh; j < (hd + 1) * dh; ++j) out(i, j) += w[a] / z * v(keys_of[i][a], j);
      }
    }
  }
  return out;
}

struct Incidence2 {
  std::vector<std::vector<std::size_t>> members, edges_of;
};

Incidence2 lists(const Hypergraph& hg) {
  Incidence2 l;
  l.members.resize(hg.n_hyperedges);
  l.edges_of.resize(hg.n_nodes);
  for (const auto& inc : hg.incidence) {
    l.members[inc.edge].push_back(inc.node);
    l.edges_of[inc.node].push_back(inc.edge);
  }
  return l;
}

// Eval-mode semantic forward written with plain loops.
Matrix<double> sahgt_reference(const Hypergraph& hg, const Matrix<double>& x2,
                               const SahgtParams<double>& p, const SahgtConfig& c) {
  const auto l = lists(hg);
  Matrix<double> h = plus_row(mm(x2, p.in_w->value), p.in_b->value);
  Matrix<double> e(hg.n_hyperedges, c.hidden);
  for (std::size_t ei = 0; ei < hg.n_hyperedges; ++ei) {
    for (std::size_t j = 0; j < c.hidden; ++j) e(ei, j) = p.type_emb->value(hg.type_ids[ei], j);
  }
  for (const auto& lp : p.layers) {
    const Matrix<double> q = mm(h, lp.wq->value);
    e = mm(attend(mm(e, lp.wk->value), q, mm(h, lp.wv->value), l.members, c.heads), lp.wo->value);
    const Matrix<double> m =
        mm(attend(q, mm(e, lp.wk->value), mm(e, lp.wv->value), l.edges_of, c.heads), lp.wo->value);
    const Matrix<double> a =
        batch_norm_eval(plus(h, m), lp.bn1_gamma, lp.bn1_beta, lp.bn1_mean, lp.bn1_var);
    Matrix<double> ffn = gelu(plus_row(mm(a, lp.ffn1_w->value), lp.ffn1_b->value));
    ffn = plus_row(mm(ffn, lp.ffn2_w->value), lp.ffn2_b->value);
    h = batch_norm_eval(plus(h, ffn), lp.bn2_gamma, lp.bn2_beta, lp.bn2_mean, lp.bn2_var);
  }
  return plus_row(mm(h, p.out_w->value), p.out_b->value);
}

// Moves biases, affines and running statistics off their initial values.
void perturb(ParameterStore<double>& store, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 0.3);
  std::uniform_real_distribution<double> pos(0.5, 2.0);
  for (auto& p : store.all()) {
    if (p.value.rows() != 1) continue;
    const bool is_var = p.name.find("running_var") != std::string::npos;
    for (auto& v : p.value.flat()) v = is_var ? pos(rng) : v + g(rng);
  }
}

SahgtConfig small_config(std::size_t heads, std::size_t layers, std::size_t chunk = 2000) {
  SahgtConfig c;
  c.hidden = 4 * heads;
  c.heads = heads;
  c.layers = layers;
  c.chunk = chunk;
  return c;
}

Matrix<double> scores(const GraphContext& ctx, const Matrix<double>& x2,
                      const SahgtParams<double>& p, const SahgtConfig& c, bool training = false,
                      AttentionPath path = AttentionPath::kSparse) {
  Tape<double> t(false);
  Binder<double> bind(t);
  return t.value(sem_forward(bind, ctx, t.constant(x2), p, c, RunMode{training, nullptr}, path).s);
}

Matrix<double> row_of(const Matrix<double>& m, std::size_t i) {
  Matrix<double> r(1, m.cols());
  for (std::size_t j = 0; j < m.cols(); ++j) r(0, j) = m(i, j);
  return r;
}

}  // namespace

TEST_CASE("hyperedge with one member receives that member's value") {
  const auto hg = make_hypergraph(4, {{2}, {0, 1, 3}});
  GraphContext ctx(hg, hg.type_ids, 1);
  ParameterStore<double> store;
  std::mt19937_64 rng(1);
  const auto c = small_config(2, 1);
  auto p = register_sahgt(store, c, 3, 1, rng);
  const auto& lp = p.layers[0];
  const auto h = random_matrix(4, c.hidden, rng);
  Tape<double> t(false);
  Binder<double> bind(t);
  Var out = sparse_attention_edge_update(bind, ctx, t.constant(h),
                                         t.constant(random_matrix(2, c.hidden, rng)), lp, c);
  const auto expect = mm(mm(row_of(h, 2), lp.wv->value), lp.wo->value);
  CHECK(max_abs_diff(row_of(t.value(out), 0), expect) <= 1e-14);
}

TEST_CASE("equal attention scores average the member values") {
  const auto hg = make_hypergraph(5, {{0, 1, 2, 4}});
  GraphContext ctx(hg, hg.type_ids, 1);
  ParameterStore<double> store;
  std::mt19937_64 rng(2);
  const auto c = small_config(2, 1);
  auto p = register_sahgt(store, c, 3, 1, rng);
  const auto& lp = p.layers[0];
  lp.wq->value = Matrix<double>(c.hidden, c.hidden);
  const auto h = random_matrix(5, c.hidden, rng);
  Tape<double> t(false);
  Binder<double> bind(t);
  Var out = sparse_attention_edge_update(bind, ctx, t.constant(h),
                                         t.constant(random_matrix(1, c.hidden, rng)), lp, c);
  Matrix<double> mean(1, c.hidden);
  for (std::size_t v : {0, 1, 2, 4}) mean = plus(mean, row_of(h, v));
  for (auto& x : mean.flat()) x /= 4.0;
  CHECK(max_abs_diff(t.value(out), mm(mm(mean, lp.wv->value), lp.wo->value)) <= 1e-14);
}

TEST_CASE("node messages: zero when isolated, the single edge's value otherwise") {
  const auto hg = make_hypergraph(5, {{0, 1}, {1, 2, 3}});
  GraphContext ctx(hg, hg.type_ids, 1);
  ParameterStore<double> store;
  std::mt19937_64 rng(3);
  const auto c = small_config(2, 1);
  auto p = register_sahgt(store, c, 3, 1, rng);
  const auto& lp = p.layers[0];
  const auto e = random_matrix(2, c.hidden, rng);
  Tape<double> t(false);
  Binder<double> bind(t);
  Var m = sparse_attention_node_update(bind, ctx, t.constant(random_matrix(5, c.hidden, rng)),
                                       t.constant(e), lp, c);
  const auto& mv = t.value(m);
  for (std::size_t j = 0; j < c.hidden; ++j) CHECK(mv(4, j) == 0.0);
  const auto ve = mm(mm(e, lp.wv->value), lp.wo->value);
  CHECK(max_abs_diff(row_of(mv, 0), row_of(ve, 0)) <= 1e-14);
  CHECK(max_abs_diff(row_of(mv, 2), row_of(ve, 1)) <= 1e-14);
  CHECK(max_abs_diff(row_of(mv, 3), row_of(ve, 1)) <= 1e-14);
}

TEST_CASE("isolated node update depends only on its own state") {
  const auto hg = make_hypergraph(5, {{0, 1}, {1, 2, 3}});
  GraphContext ctx(hg, hg.type_ids, 1);
  ParameterStore<double> store;
  std::mt19937_64 rng(4);
  const auto c = small_config(2, 1);
  auto p = register_sahgt(store, c, 3, 1, rng);
  perturb(store, 5);
  const auto& lp = p.layers[0];
  const auto h = random_matrix(5, c.hidden, rng);
  Tape<double> t(false);
  Binder<double> bind(t);
  auto out = sahgt_layer(bind, ctx, t.constant(h), t.constant(random_matrix(2, c.hidden, rng)), lp,
                         c, RunMode{});
  const auto h4 = row_of(h, 4);
  const auto a = batch_norm_eval(h4, lp.bn1_gamma, lp.bn1_beta, lp.bn1_mean, lp.bn1_var);
  Matrix<double> ffn = gelu(plus_row(mm(a, lp.ffn1_w->value), lp.ffn1_b->value));
  ffn = plus_row(mm(ffn, lp.ffn2_w->value), lp.ffn2_b->value);
  const auto expect = batch_norm_eval(plus(h4, ffn), lp.bn2_gamma, lp.bn2_beta, lp.bn2_mean, lp.bn2_var);
  CHECK(max_abs_diff(row_of(t.value(out.nodes), 4), expect) <= 1e-12);
}

TEST_CASE("semantic forward matches a direct enumeration") {
  for (std::uint64_t seed = 0; seed < 12; ++seed) {
    CAPTURE(seed);
    RandomCase rc(6 + seed % 7, 2 + seed % 5, 0.4, 3, 2, 3, 300 + seed);
    const std::size_t heads = std::size_t{1} << (seed % 3);
    const auto c = small_config(heads, 1 + seed % 2, 1 + seed % 5);
    ParameterStore<double> store;
    std::mt19937_64 rng(seed);
    auto p = register_sahgt(store, c, 3, 3, rng);
    perturb(store, seed + 70);
    const auto ref = sahgt_reference(rc.hg, rc.features.x2, p, c);
    CHECK(max_abs_diff(scores(*rc.ctx, rc.features.x2, p, c), ref) <= 1e-10);
    CHECK(max_abs_diff(scores(*rc.ctx, rc.features.x2, p, c, false, AttentionPath::kDense), ref) <=
          1e-10);
  }
}

TEST_CASE("eval mode is deterministic and leaves running statistics alone") {
  RandomCase rc(12, 5, 0.4, 2, 2, 3, 17);
  ParameterStore<double> store;
  std::mt19937_64 rng(18);
  const auto c = small_config(2, 2);
  auto p = register_sahgt(store, c, 3, 2, rng);
  perturb(store, 19);
  const auto mean_before = p.layers[0].bn1_mean->value;
  CHECK(max_abs_diff(scores(*rc.ctx, rc.features.x2, p, c), scores(*rc.ctx, rc.features.x2, p, c)) ==
        0.0);
  CHECK(max_abs_diff(p.layers[0].bn1_mean->value, mean_before) == 0.0);
  scores(*rc.ctx, rc.features.x2, p, c, /*training=*/true);
  CHECK(max_abs_diff(p.layers[0].bn1_mean->value, mean_before) > 0.0);
}

TEST_CASE("chunk size does not change the semantic scores") {
  RandomCase rc(20, 8, 0.3, 2, 2, 3, 21);
  ParameterStore<double> store;
  std::mt19937_64 rng(22);
  auto c = small_config(2, 2, 1);
  auto p = register_sahgt(store, c, 3, 2, rng);
  const auto base = scores(*rc.ctx, rc.features.x2, p, c);
  for (std::size_t chunk : {std::size_t{7}, rc.hg.nnz()}) {
    c.chunk = chunk;
    CHECK(max_abs_diff(scores(*rc.ctx, rc.features.x2, p, c), base) <= 1e-12);
  }
}

TEST_CASE("semantic forward is equivariant under node relabelling") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    RandomCase rc(10, 4, 0.4, 2, 2, 3, 400 + seed);
    const std::size_t n = rc.hg.n_nodes;
    std::vector<NodeId> perm(n);
    std::iota(perm.begin(), perm.end(), NodeId{0});
    std::mt19937_64 prng(seed);
    std::shuffle(perm.begin(), perm.end(), prng);
    std::vector<std::vector<NodeId>> edges(rc.hg.n_hyperedges);
    for (const auto& inc : rc.hg.incidence) edges[inc.edge].push_back(perm[inc.node]);
    const auto hg2 = make_hypergraph(n, edges, rc.hg.type_ids);
    GraphContext ctx2(hg2, hg2.type_ids, 2);
    Matrix<double> x2(n, 3);
    for (std::size_t v = 0; v < n; ++v) {
      for (std::size_t j = 0; j < 3; ++j) x2(perm[v], j) = rc.features.x2(v, j);
    }
    ParameterStore<double> store;
    std::mt19937_64 rng(seed);
    const auto c = small_config(2, 2);
    auto p = register_sahgt(store, c, 3, 2, rng);
    perturb(store, seed);
    const auto a = scores(*rc.ctx, rc.features.x2, p, c);
    const auto b = scores(ctx2, x2, p, c);
    double d = 0.0;
    for (std::size_t v = 0; v < n; ++v) d = std::max(d, std::abs(a(v, 0) - b(perm[v], 0)));
    CHECK(d <= 1e-12);
  }
}

TEST_CASE("semantic channel gradients pass finite differences") {
  RandomCase rc(9, 4, 0.45, 2, 2, 3, 23);
  ParameterStore<double> store;
  std::mt19937_64 rng(24);
  const auto c = small_config(2, 2, 3);
  auto p = register_sahgt(store, c, 3, 2, rng);
  perturb(store, 25);
  std::mt19937_64 yr(26);
  const auto y = random_matrix(9, 1, yr);
  const auto snapshot = store.all();
  auto loss = [&](bool with_grad) {
    // Training-mode batch norm moves the running averages; restore them so
    // every evaluation sees the same state.
    for (std::size_t i = 0; i < snapshot.size(); ++i) {
      if (!snapshot[i].trainable) store.all()[i].value = snapshot[i].value;
    }
    Tape<double> t(with_grad);
    Binder<double> bind(t);
    auto out = sem_forward(bind, *rc.ctx, t.constant(rc.features.x2), p, c, RunMode{true, nullptr});
    Var d = ops::sub(t, out.s, t.constant(y));
    Var l = ops::scale(t, ops::sum(t, ops::hadamard(t, d, d)), 1.0 / 9.0);
    if (with_grad) t.backward(l);
    return t.value(l)(0, 0);
  };
  GradCheckOptions opts;
  opts.coords_per_tensor = 1000;
  const auto report = grad_check(loss, store, opts);
  for (const auto& tc : report.tensors) {
    CAPTURE(tc.name);
    CHECK((tc.max_rel_error <= 1e-6 || tc.max_abs_error <= 1e-9));
  }
}

TEST_CASE("dense reference refuses graphs past the size guard") {
  std::vector<std::vector<NodeId>> edges;
  for (NodeId i = 0; i < 500; ++i) edges.push_back({i, static_cast<NodeId>(i + 1)});
  const auto hg = make_hypergraph(2001, edges);
  REQUIRE(hg.n_nodes * hg.n_hyperedges > kDenseGuard);
  GraphContext ctx(hg, hg.type_ids, 1);
  ParameterStore<double> store;
  std::mt19937_64 rng(27);
  const auto c = small_config(1, 1);
  auto p = register_sahgt(store, c, 2, 1, rng);
  const auto x = random_matrix(2001, 2, rng);
  Tape<double> t(false);
  Binder<double> bind(t);
  CHECK_THROWS_AS(dense_attention_oracle(bind, ctx, t.constant(x), p, c, RunMode{}), DataError);
  CHECK(scores(ctx, x, p, c).rows() == 2001);
}

TEST_CASE("hidden width must split evenly across heads") {
  ParameterStore<double> store;
  std::mt19937_64 rng(28);
  SahgtConfig c;
  c.hidden = 10;
  c.heads = 4;
  CHECK_THROWS(register_sahgt(store, c, 3, 1, rng));
}
