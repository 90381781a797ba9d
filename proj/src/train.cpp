#include "hhkg/train.hpp"

#include <atomic>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>
#include <thread>

namespace hhkg {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

template <typename T>
std::span<const T> targets_of(const PreparedLabels& p) {
  if constexpr (std::is_same_v<T, float>) return p.targets_f;
  else return p.targets_d;
}

template <typename T>
double scalar(const Tape<T>& t, Var v) {
  return v.valid() ? static_cast<double>(t.value(v)(0, 0)) : kNaN;
}

// First `k` entries of a seeded partial Fisher-Yates shuffle of [0, n).
std::vector<Index> sample_batch(std::size_t n, std::size_t k, std::mt19937_64& rng) {
  std::vector<Index> all(n);
  std::iota(all.begin(), all.end(), Index{0});
  k = std::min(k, n);
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(all[i], all[pick(rng)]);
  }
  all.resize(k);
  return all;
}

template <typename T>
std::vector<Matrix<T>> snapshot(const ParameterStore<T>& store) {
  std::vector<Matrix<T>> out;
  for (const auto& p : store.all()) out.push_back(p.value);
  return out;
}

template <typename T>
void restore(ParameterStore<T>& store, const std::vector<Matrix<T>>& values) {
  auto& params = store.all();
  for (std::size_t i = 0; i < params.size(); ++i) params[i].value = values[i];
}

}  // namespace

TargetTransform TargetTransform::fit(const LabelSet& labels, std::span<const Index> rows) {
  require(!rows.empty(), "target transform: empty training split");
  TargetTransform tt;
  for (Index r : rows) tt.mean += std::log1p(labels.scores[r]);
  tt.mean /= static_cast<double>(rows.size());
  double var = 0.0;
  for (Index r : rows) {
    const double d = std::log1p(labels.scores[r]) - tt.mean;
    var += d * d;
  }
  var /= static_cast<double>(rows.size());
  tt.scale = var > 1e-24 ? std::sqrt(var) : 1.0;
  return tt;
}

PreparedLabels prepare_labels(const LabelSet& labels, const Partition& part, std::size_t n_nodes) {
  labels.validate(n_nodes);
  PreparedLabels p;
  p.transform = TargetTransform::fit(labels, part.train);
  p.targets_d.assign(n_nodes, 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    p.targets_d[labels.nodes[i]] = p.transform.apply(labels.scores[i]);
  }
  p.targets_f.assign(p.targets_d.begin(), p.targets_d.end());
  for (Index r : part.train) p.train_nodes.push_back(labels.nodes[r]);
  for (Index r : part.val) p.val_nodes.push_back(labels.nodes[r]);
  for (Index r : part.test) p.test_nodes.push_back(labels.nodes[r]);
  return p;
}

template <typename T>
std::vector<double> predict(const DualModel<T>& model, const GraphContext& ctx,
                            const FeatureBundle& features) {
  Tape<T> tape(/*grad_enabled=*/false);
  Binder<T> bind(tape);
  Var x1 = tape.constant(features.x1.cast<T>());
  Var x2 = tape.constant(features.x2.cast<T>());
  auto out = model.forward(bind, ctx, x1, x2, RunMode{});
  const auto s = tape.value(out.s_fusion).flat();
  return {s.begin(), s.end()};
}

MetricReport evaluate_nodes(std::span<const double> predictions, const LabelSet& labels,
                            std::span<const Index> label_rows, const std::vector<std::size_t>& ks) {
  std::vector<double> pred, truth;
  for (Index r : label_rows) {
    pred.push_back(predictions[labels.nodes[r]]);
    truth.push_back(labels.scores[r]);
  }
  if (pred.size() < 2) {
    MetricReport r;
    r.spearman = kNaN;
    r.spearman_degenerate = true;
    for (std::size_t k : ks) r.ndcg[k] = pred.empty() ? kNaN : 1.0;
    return r;
  }
  return evaluate_ranking(pred, truth, ks);
}

template <typename T>
TrainOutcome<T> train_model(const GraphContext& ctx, const FeatureBundle& features,
                            const LabelSet& labels, const Partition& part,
                            const ModelConfig& model_config, const TrainConfig& config) {
  features.validate(ctx.n_nodes, ctx.n_edges);
  require(!part.train.empty(), "train: empty training split");
  require(!part.val.empty(), "train: empty validation split");
  require(config.max_epochs >= 1, "train: max_epochs must be >= 1");
  require(config.patience >= 1 && config.patience <= config.max_epochs,
          "train: patience must be in [1, max_epochs]");
  require(config.contrastive_batch >= 1, "train: contrastive batch must be >= 1");

  const PreparedLabels prep = prepare_labels(labels, part, ctx.n_nodes);
  const auto targets = targets_of<T>(prep);
  const Matrix<T> x1 = features.x1.cast<T>();
  const Matrix<T> x2 = features.x2.cast<T>();

  TrainOutcome<T> result;
  result.model = std::make_unique<DualModel<T>>(model_config, x1.cols(), x2.cols(),
                                                ctx.n_types, config.seed);
  DualModel<T>& model = *result.model;
  Adam<T> adam(config.adam);
  std::mt19937_64 dropout_rng(config.seed ^ 0x5bd1e995ull);
  std::mt19937_64 batch_rng(config.seed ^ 0x27d4eb2full);

  TrainingLog& log = result.log;
  log.best_val_loss = std::numeric_limits<double>::infinity();
  auto best = snapshot(model.store());
  std::vector<double> val_truth;
  for (Index r : part.val) val_truth.push_back(labels.scores[r]);

  for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;

    {  // validation with the current parameters
      Tape<T> tape(false);
      Binder<T> bind(tape);
      auto out = model.forward(bind, ctx, tape.constant(x1), tape.constant(x2), RunMode{});
      rec.val_loss_fusion = scalar(tape, ops::masked_mse(tape, out.s_fusion, targets,
                                                         std::span<const Index>(prep.val_nodes)));
      const auto s = tape.value(out.s_fusion);
      std::vector<double> pred;
      for (Index v : prep.val_nodes) pred.push_back(s(v, 0));
      if (pred.size() >= 2) {
        rec.val_spearman = spearman(pred, val_truth);
        rec.val_ndcg100 = ndcg_at_k(pred, val_truth, 100);
      } else {
        rec.val_spearman = kNaN;
        rec.val_ndcg100 = kNaN;
      }
    }

    model.store().zero_grad();
    Tape<T> tape(true);
    Binder<T> bind(tape);
    RunMode mode{true, &dropout_rng};
    auto out = model.forward(bind, ctx, tape.constant(x1), tape.constant(x2), mode);
    const auto batch = sample_batch(ctx.n_nodes, config.contrastive_batch, batch_rng);
    auto parts = model.losses(tape, bind, out, targets, std::span<const Index>(prep.train_nodes),
                              batch, config.weights);
    rec.loss_fusion = scalar(tape, parts.fusion);
    rec.loss_contrastive = scalar(tape, parts.contrastive);
    rec.loss_struct = scalar(tape, parts.structural);
    rec.loss_semantic = scalar(tape, parts.semantic);
    const double total = scalar(tape, parts.total);
    log.epochs.push_back(rec);

    if (!std::isfinite(total) || !std::isfinite(rec.val_loss_fusion)) {
      log.diverged = true;
      log.stop_reason = "non-finite loss at epoch " + std::to_string(epoch);
      break;
    }
    if (rec.val_loss_fusion < log.best_val_loss) {
      log.best_val_loss = rec.val_loss_fusion;
      log.best_epoch = epoch;
      best = snapshot(model.store());
    } else if (epoch - log.best_epoch >= config.patience) {
      log.stop_reason = "early stop at epoch " + std::to_string(epoch) + " (best " +
                        std::to_string(log.best_epoch) + ")";
      break;
    }
    tape.backward(parts.total);
    adam.step(model.store());
  }
  if (log.stop_reason.empty()) log.stop_reason = "max epochs reached";
  restore(model.store(), best);
  return result;
}

std::vector<FoldRun> run_cross_validation(const GraphContext& ctx, const FeatureBundle& features,
                                          const LabelSet& labels, const SplitRatios& ratios,
                                          const ModelConfig& model_config,
                                          const TrainConfig& config, std::size_t jobs,
                                          const std::vector<std::size_t>& ks) {
  require(labels.k_folds >= 1 && labels.fold.size() == labels.size(),
          "cross-validation needs fold assignments");
  std::vector<FoldRun> runs(labels.k_folds);
  std::vector<std::exception_ptr> errors(labels.k_folds);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t f = next++; f < runs.size(); f = next++) {
      try {
        FoldRun& run = runs[f];
        run.fold = f;
        run.partition = fold_partition(labels, f, ratios, config.seed);
        TrainConfig fold_config = config;
        fold_config.seed = config.seed + 1000003ull * f;
        run.outcome = train_model<float>(ctx, features, labels, run.partition, model_config,
                                         fold_config);
        const auto pred = predict(*run.outcome.model, ctx, features);
        run.test = evaluate_nodes(pred, labels, run.partition.test, ks);
      } catch (...) {
        errors[f] = std::current_exception();
      }
    }
  };
  jobs = std::max<std::size_t>(1, std::min(jobs, runs.size()));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return runs;
}

std::string format_training_log(const TrainingLog& log, const std::string& config_echo) {
  std::ostringstream os;
  os << std::setprecision(9);
  std::istringstream echo(config_echo);
  for (std::string line; std::getline(echo, line);) os << "# " << line << '\n';
  os << "# best_epoch " << log.best_epoch << "; " << log.stop_reason << '\n';
  os << "epoch\tloss_fusion\tloss_contrastive\tloss_struct\tloss_semantic\tval_spearman\tval_ndcg100\n";
  for (const auto& r : log.epochs) {
    os << r.epoch << '\t' << r.loss_fusion << '\t' << r.loss_contrastive << '\t' << r.loss_struct
       << '\t' << r.loss_semantic << '\t' << r.val_spearman << '\t' << r.val_ndcg100 << '\n';
  }
  return os.str();
}

void write_training_log(const TrainingLog& log, const std::filesystem::path& path,
                        const std::string& config_echo) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write training log " + path.string());
  out << format_training_log(log, config_echo);
}

template TrainOutcome<float> train_model<float>(const GraphContext&, const FeatureBundle&,
                                                const LabelSet&, const Partition&,
                                                const ModelConfig&, const TrainConfig&);
template TrainOutcome<double> train_model<double>(const GraphContext&, const FeatureBundle&,
                                                  const LabelSet&, const Partition&,
                                                  const ModelConfig&, const TrainConfig&);
template std::vector<double> predict<float>(const DualModel<float>&, const GraphContext&,
                                            const FeatureBundle&);
template std::vector<double> predict<double>(const DualModel<double>&, const GraphContext&,
                                             const FeatureBundle&);

}  // namespace hhkg
