#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>

#include "hhkg/hgat.hpp"
#include "hhkg/ingest.hpp"
#include "hhkg/sahgt.hpp"

namespace hhkg {

enum class ChannelMode { kFull, kStructural, kSemantic, kConcat };
std::string to_string(ChannelMode m);
ChannelMode parse_channel_mode(const std::string& s);

struct ModelConfig {
  std::size_t hidden = 20;
  std::size_t heads = 4;
  std::size_t layers = 1;
  std::size_t type_dim = 20;  // structural hyperedge-type embedding width
  double attn_dropout = 0.3;
  std::size_t chunk = 2000;
  bool ffn_on_attended = false;
  ChannelMode channels = ChannelMode::kFull;
  bool eta_learnable = true;
  double eta1 = 0.3;       // structural share, semantic gets 1 - eta1
  double tau = 0.5;        // initial contrastive temperature
  bool tau_learnable = true;
  bool raw_dot = false;    // skip row normalization before the similarity product

  HgatConfig hgat() const;
  SahgtConfig sahgt() const;
};

struct LossWeights {
  double alpha = 0.1;  // contrastive
  double beta = 0.2;   // mean of the two unimodal regressions
};

// s_fusion = eta1 * s_struct + (1 - eta1) * s_semantic, eta1 a 1x1 value.
template <typename T>
Var fuse(Tape<T>& t, Var s_struct, Var s_semantic, Var eta1);

// Symmetric in-batch cross-entropy with same-node positives:
//   S = norm(Zs[b]) norm(Zm[b])^T / tau
//   L = (CE over rows of S + CE over rows of S^T) / 2
// inv_tau is a 1x1 value holding 1 / tau.
template <typename T>
Var contrastive_loss(Tape<T>& t, Var z_struct, Var z_semantic, Var inv_tau,
                     std::span<const Index> batch, bool raw_dot = false);

template <typename T>
struct RegressionLosses {
  Var structural, semantic, fusion;
};

template <typename T>
RegressionLosses<T> regression_losses(Tape<T>& t, Var s_struct, Var s_semantic, Var s_fusion,
                                      std::span<const T> targets, std::span<const Index> rows);

// L_fusion + alpha * L_contrastive + beta * (L_struct + L_semantic) / 2
template <typename T>
Var total_loss(Tape<T>& t, Var fusion, Var contrastive, Var structural, Var semantic,
               const LossWeights& w);

template <typename T>
struct ForwardOutput {
  Var z_struct, s_struct;      // invalid in semantic-only mode
  Var z_semantic, s_semantic;  // invalid in structural-only mode
  Var s_fusion;
};

template <typename T>
struct LossParts {
  Var total, fusion, contrastive, structural, semantic;  // absent parts invalid
};

// Both encoders plus the fusion stage. Parameters of a disabled channel
// are never allocated.
template <typename T>
class DualModel {
 public:
  DualModel(const ModelConfig& config, std::size_t d1, std::size_t d2, std::size_t n_types,
            std::uint64_t seed);
  DualModel(const DualModel&) = delete;
  DualModel& operator=(const DualModel&) = delete;

  const ModelConfig& config() const noexcept { return config_; }
  ParameterStore<T>& store() noexcept { return store_; }
  const ParameterStore<T>& store() const noexcept { return store_; }

  ForwardOutput<T> forward(Binder<T>& bind, const GraphContext& ctx, Var x1, Var x2,
                           const RunMode& mode,
                           AttentionPath path = AttentionPath::kSparse) const;

  // Fusion, unimodal and contrastive losses on `rows`; the contrastive term
  // uses `batch`. Single-channel modes reduce to the fusion MSE.
  LossParts<T> losses(Tape<T>& t, Binder<T>& bind, const ForwardOutput<T>& out,
                      std::span<const T> targets, std::span<const Index> rows,
                      std::span<const Index> batch, const LossWeights& weights) const;

  double eta1() const;
  double tau() const;

 private:
  ModelConfig config_;
  ParameterStore<T> store_;
  std::optional<HgatParams<T>> hgat_;
  std::optional<SahgtParams<T>> sahgt_;
  Parameter<T>* eta_logit_ = nullptr;
  Parameter<T>* log_tau_ = nullptr;
  Parameter<T>* concat_w_ = nullptr;
  Parameter<T>* concat_b_ = nullptr;
};

}  // namespace hhkg
