#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "hhkg/graph_context.hpp"
#include "hhkg/ingest.hpp"
#include "hhkg/metrics.hpp"
#include "hhkg/model.hpp"
#include "hhkg/optim.hpp"

namespace hhkg {

struct TrainConfig {
  AdamConfig adam;
  std::size_t max_epochs = 10000;
  std::size_t patience = 2000;
  std::size_t contrastive_batch = 2000;
  LossWeights weights;
  std::uint64_t seed = 0;
};

// One row per epoch. Losses come from the training-mode forward pass that
// precedes that epoch's update; validation numbers from an eval-mode pass
// with the same parameters. Terms absent in the channel mode are NaN.
struct EpochRecord {
  std::size_t epoch = 0;
  double loss_fusion = 0.0;
  double loss_contrastive = 0.0;
  double loss_struct = 0.0;
  double loss_semantic = 0.0;
  double val_loss_fusion = 0.0;
  double val_spearman = 0.0;
  double val_ndcg100 = 0.0;
};

struct TrainingLog {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
  bool diverged = false;
  std::string stop_reason;
};

// log1p(score) standardized with the training rows' mean and deviation.
struct TargetTransform {
  double mean = 0.0;
  double scale = 1.0;

  static TargetTransform fit(const LabelSet& labels, std::span<const Index> train_rows);
  double apply(double score) const { return (std::log1p(score) - mean) / scale; }
};

// Per-node training targets (zero for unlabeled nodes) and the node ids of
// each partition.
struct PreparedLabels {
  TargetTransform transform;
  std::vector<float> targets_f;
  std::vector<double> targets_d;
  std::vector<Index> train_nodes, val_nodes, test_nodes;
};

PreparedLabels prepare_labels(const LabelSet& labels, const Partition& part, std::size_t n_nodes);

template <typename T>
struct TrainOutcome {
  std::unique_ptr<DualModel<T>> model;  // parameters of the best validation epoch
  TrainingLog log;
};

// Adam with decoupled weight decay on the total objective; early stopping
// on validation fusion MSE. Deterministic for a fixed seed.
template <typename T>
TrainOutcome<T> train_model(const GraphContext& ctx, const FeatureBundle& features,
                            const LabelSet& labels, const Partition& part,
                            const ModelConfig& model_config, const TrainConfig& config);

// Eval-mode fused scores for every node.
template <typename T>
std::vector<double> predict(const DualModel<T>& model, const GraphContext& ctx,
                            const FeatureBundle& features);

// Scores of `nodes` against raw label scores.
MetricReport evaluate_nodes(std::span<const double> predictions, const LabelSet& labels,
                            std::span<const Index> label_rows,
                            const std::vector<std::size_t>& ks = kDefaultKs);

struct FoldRun {
  std::size_t fold = 0;
  Partition partition;
  TrainOutcome<float> outcome;
  MetricReport test;
};

// k-fold cross-validation, folds trained on up to `jobs` threads. Each
// fold's result is independent of `jobs`.
std::vector<FoldRun> run_cross_validation(const GraphContext& ctx, const FeatureBundle& features,
                                          const LabelSet& labels, const SplitRatios& ratios,
                                          const ModelConfig& model_config,
                                          const TrainConfig& config, std::size_t jobs,
                                          const std::vector<std::size_t>& ks = kDefaultKs);

// Header `epoch loss_fusion loss_contrastive loss_struct loss_semantic
// val_spearman val_ndcg100`, tab-separated, after `#` comment lines.
std::string format_training_log(const TrainingLog& log, const std::string& config_echo);
void write_training_log(const TrainingLog& log, const std::filesystem::path& path,
                        const std::string& config_echo);

}  // namespace hhkg
