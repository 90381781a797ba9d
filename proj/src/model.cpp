#include "hhkg/model.hpp"

#include <cmath>

namespace hhkg {

std::string to_string(ChannelMode m) {
  switch (m) {
    case ChannelMode::kFull: return "full";
    case ChannelMode::kStructural: return "structural";
    case ChannelMode::kSemantic: return "semantic";
    case ChannelMode::kConcat: return "concat";
  }
  return "full";
}

ChannelMode parse_channel_mode(const std::string& s) {
  if (s == "full") return ChannelMode::kFull;
  if (s == "structural" || s == "structural-only") return ChannelMode::kStructural;
  if (s == "semantic" || s == "semantic-only") return ChannelMode::kSemantic;
  if (s == "concat") return ChannelMode::kConcat;
  throw UsageError("unknown channel mode '" + s + "' (expected full | structural | semantic | concat)");
}

HgatConfig ModelConfig::hgat() const {
  HgatConfig c;
  c.hidden = hidden;
  c.heads = heads;
  c.layers = layers;
  c.type_dim = type_dim;
  c.attn_dropout = attn_dropout;
  c.ffn_on_attended = ffn_on_attended;
  return c;
}

SahgtConfig ModelConfig::sahgt() const {
  SahgtConfig c;
  c.hidden = hidden;
  c.heads = heads;
  c.layers = layers;
  c.chunk = chunk;
  return c;
}

template <typename T>
Var fuse(Tape<T>& t, Var s_struct, Var s_semantic, Var eta1) {
  Var one = t.constant(Matrix<T>(1, 1, T(1)));
  Var eta2 = ops::sub(t, one, eta1);
  return ops::add(t, ops::scale_by(t, s_struct, eta1), ops::scale_by(t, s_semantic, eta2));
}

template <typename T>
Var contrastive_loss(Tape<T>& t, Var z_struct, Var z_semantic, Var inv_tau,
                     std::span<const Index> batch, bool raw_dot) {
  if (batch.empty()) throw DataError("contrastive_loss: empty batch");
  require(t.value(z_struct).same_shape(t.value(z_semantic)),
          "contrastive_loss: embedding shapes differ");
  Var a = ops::gather_rows(t, z_struct, batch);
  Var b = ops::gather_rows(t, z_semantic, batch);
  if (!raw_dot) {
    a = ops::row_l2_normalize(t, a);
    b = ops::row_l2_normalize(t, b);
  }
  Var scores = ops::scale_by(t, ops::matmul_nt(t, a, b), inv_tau);
  Var rows = ops::diag_cross_entropy(t, scores, /*by_rows=*/true);
  Var cols = ops::diag_cross_entropy(t, scores, /*by_rows=*/false);
  return ops::scale(t, ops::add(t, rows, cols), T(0.5));
}

template <typename T>
RegressionLosses<T> regression_losses(Tape<T>& t, Var s_struct, Var s_semantic, Var s_fusion,
                                      std::span<const T> targets, std::span<const Index> rows) {
  return {ops::masked_mse(t, s_struct, targets, rows), ops::masked_mse(t, s_semantic, targets, rows),
          ops::masked_mse(t, s_fusion, targets, rows)};
}

template <typename T>
Var total_loss(Tape<T>& t, Var fusion, Var contrastive, Var structural, Var semantic,
               const LossWeights& w) {
  require(w.alpha >= 0.0 && w.beta >= 0.0, "loss weights must be nonnegative");
  Var total = fusion;
  if (contrastive.valid()) total = ops::add(t, total, ops::scale(t, contrastive, T(w.alpha)));
  if (structural.valid() && semantic.valid()) {
    total = ops::add(t, total, ops::scale(t, ops::add(t, structural, semantic), T(w.beta / 2.0)));
  }
  return total;
}

template <typename T>
DualModel<T>::DualModel(const ModelConfig& config, std::size_t d1, std::size_t d2,
                        std::size_t n_types, std::uint64_t seed)
    : config_(config) {
  require(config.eta1 > 0.0 && config.eta1 < 1.0, "eta1 must lie strictly between 0 and 1");
  require(config.tau > 0.0, "tau must be positive");
  std::mt19937_64 rng(seed);
  const bool use_struct = config.channels != ChannelMode::kSemantic;
  const bool use_sem = config.channels != ChannelMode::kStructural;
  if (use_struct) hgat_ = register_hgat(store_, config.hgat(), d1, n_types, rng);
  if (use_sem) sahgt_ = register_sahgt(store_, config.sahgt(), d2, n_types, rng);
  if (config.channels == ChannelMode::kFull) {
    const double logit = std::log(config.eta1 / (1.0 - config.eta1));
    eta_logit_ = &store_.add("fusion.eta_logit", Matrix<T>(1, 1, T(logit)), false,
                             config.eta_learnable);
  }
  if (config.channels == ChannelMode::kConcat) {
    concat_w_ = &store_.add("fusion.concat.w", xavier_uniform<T>(2 * config.hidden, 1, rng));
    concat_b_ = &store_.add("fusion.concat.b", Matrix<T>(1, 1), false);
  }
  if (use_struct && use_sem) {
    log_tau_ = &store_.add("fusion.log_tau", Matrix<T>(1, 1, T(std::log(config.tau))), false,
                           config.tau_learnable);
  }
}

template <typename T>
ForwardOutput<T> DualModel<T>::forward(Binder<T>& bind, const GraphContext& ctx, Var x1, Var x2,
                                       const RunMode& mode, AttentionPath path) const {
  Tape<T>& t = bind.tape();
  ForwardOutput<T> out;
  if (hgat_) {
    auto s = struct_forward(bind, ctx, x1, *hgat_, config_.hgat(), mode);
    out.z_struct = s.z;
    out.s_struct = s.s;
  }
  if (sahgt_) {
    auto m = sem_forward(bind, ctx, x2, *sahgt_, config_.sahgt(), mode, path);
    out.z_semantic = m.z;
    out.s_semantic = m.s;
  }
  switch (config_.channels) {
    case ChannelMode::kFull: {
      Var eta = ops::sigmoid(t, bind(eta_logit_));
      out.s_fusion = fuse(t, out.s_struct, out.s_semantic, eta);
      break;
    }
    case ChannelMode::kStructural: out.s_fusion = out.s_struct; break;
    case ChannelMode::kSemantic: out.s_fusion = out.s_semantic; break;
    case ChannelMode::kConcat: {
      Var z = ops::concat_cols(t, std::vector<Var>{out.z_struct, out.z_semantic});
      out.s_fusion = ops::linear(t, z, bind(concat_w_), bind(concat_b_));
      break;
    }
  }
  return out;
}

template <typename T>
LossParts<T> DualModel<T>::losses(Tape<T>& t, Binder<T>& bind, const ForwardOutput<T>& out,
                                  std::span<const T> targets, std::span<const Index> rows,
                                  std::span<const Index> batch, const LossWeights& weights) const {
  LossParts<T> parts;
  parts.fusion = ops::masked_mse(t, out.s_fusion, targets, rows);
  if (out.s_struct.valid() && out.s_semantic.valid()) {
    parts.structural = ops::masked_mse(t, out.s_struct, targets, rows);
    parts.semantic = ops::masked_mse(t, out.s_semantic, targets, rows);
    Var inv_tau = ops::exp(t, ops::scale(t, bind(log_tau_), T(-1)));
    parts.contrastive =
        contrastive_loss(t, out.z_struct, out.z_semantic, inv_tau, batch, config_.raw_dot);
  } else if (out.s_struct.valid()) {
    parts.structural = parts.fusion;
  } else {
    parts.semantic = parts.fusion;
  }
  const bool both = parts.structural.valid() && parts.semantic.valid();
  parts.total = total_loss(t, parts.fusion, parts.contrastive, both ? parts.structural : Var{},
                           both ? parts.semantic : Var{}, weights);
  return parts;
}

template <typename T>
double DualModel<T>::eta1() const {
  if (!eta_logit_) return config_.channels == ChannelMode::kSemantic ? 0.0 : 1.0;
  return 1.0 / (1.0 + std::exp(-static_cast<double>(eta_logit_->value(0, 0))));
}

template <typename T>
double DualModel<T>::tau() const {
  return log_tau_ ? std::exp(static_cast<double>(log_tau_->value(0, 0))) : config_.tau;
}

#define HHKG_INSTANTIATE_MODEL(T)                                                            \
  template Var fuse<T>(Tape<T>&, Var, Var, Var);                                             \
  template Var contrastive_loss<T>(Tape<T>&, Var, Var, Var, std::span<const Index>, bool);   \
  template RegressionLosses<T> regression_losses<T>(Tape<T>&, Var, Var, Var,                 \
                                                    std::span<const T>,                      \
                                                    std::span<const Index>);                 \
  template Var total_loss<T>(Tape<T>&, Var, Var, Var, Var, const LossWeights&);              \
  template class DualModel<T>;

HHKG_INSTANTIATE_MODEL(float)
HHKG_INSTANTIATE_MODEL(double)

}  // namespace hhkg
