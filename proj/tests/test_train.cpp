#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <sstream>

#include "helpers.hpp"
#include "hhkg/checkpoint.hpp"
#include "hhkg/train.hpp"

using namespace hhkg;
using namespace hhkg::test;

namespace {

struct Fixture {
  SyntheticData data = tiny_synthetic();
  GraphContext ctx{data.hg, data.features.e_type_ids, data.features.n_types};
  LabelSet labels = make_splits(data.labels, SplitRatios{}, 3, 7);
  Partition part = holdout_partition(labels);
};

TrainConfig short_run(std::size_t epochs) {
  TrainConfig c;
  c.max_epochs = epochs;
  c.patience = epochs;
  c.seed = 4;
  return c;
}

bool same_store(const ParameterStore<double>& a, const ParameterStore<double>& b) {
  if (a.all().size() != b.all().size()) return false;
  for (std::size_t i = 0; i < a.all().size(); ++i) {
    if (a.all()[i].name != b.all()[i].name) return false;
    if (max_abs_diff(a.all()[i].value, b.all()[i].value) != 0.0) return false;
  }
  return true;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("hhkg_test_" + name);
}

}  // namespace

TEST_CASE("training lowers the fusion loss on a small graph") {
  Fixture f;
  auto out = train_model<double>(f.ctx, f.data.features, f.labels, f.part, tiny_model_config(),
                                 short_run(100));
  REQUIRE(out.log.epochs.size() == 100);
  CHECK(out.log.epochs.back().loss_fusion < out.log.epochs.front().loss_fusion);
  CHECK_FALSE(out.log.diverged);
  CHECK(out.log.stop_reason == "max epochs reached");
  CHECK(std::isfinite(out.log.epochs.front().loss_contrastive));
}

TEST_CASE("early stopping fires once validation stalls for the patience window") {
  Fixture f;
  auto cfg = short_run(50);
  cfg.adam.lr = 0.0;
  cfg.patience = 5;
  auto out = train_model<double>(f.ctx, f.data.features, f.labels, f.part, tiny_model_config(), cfg);
  CHECK(out.log.best_epoch == 0);
  CHECK(out.log.epochs.size() == 6);
  CHECK(out.log.stop_reason.rfind("early stop", 0) == 0);
}

TEST_CASE("training configuration is validated") {
  Fixture f;
  auto cfg = short_run(10);
  cfg.patience = 11;
  CHECK_THROWS(train_model<double>(f.ctx, f.data.features, f.labels, f.part, tiny_model_config(), cfg));
  Partition empty_val = f.part;
  empty_val.val.clear();
  CHECK_THROWS(train_model<double>(f.ctx, f.data.features, f.labels, empty_val, tiny_model_config(),
                                   short_run(10)));
}

TEST_CASE("a run that overflows stops and reports divergence") {
  Fixture f;
  auto cfg = short_run(20);
  cfg.adam.lr = 1e30;
  auto out = train_model<float>(f.ctx, f.data.features, f.labels, f.part, tiny_model_config(), cfg);
  CHECK(out.log.diverged);
  CHECK(out.log.stop_reason.rfind("non-finite", 0) == 0);
  CHECK(out.log.epochs.size() < 20);
}

TEST_CASE("the same seed reproduces parameters and logs exactly") {
  Fixture f;
  auto a = train_model<double>(f.ctx, f.data.features, f.labels, f.part, tiny_model_config(),
                               short_run(15));
  auto b = train_model<double>(f.ctx, f.data.features, f.labels, f.part, tiny_model_config(),
                               short_run(15));
  CHECK(same_store(a.model->store(), b.model->store()));
  CHECK(format_training_log(a.log, "") == format_training_log(b.log, ""));
  auto cfg = short_run(15);
  cfg.seed = 5;
  auto c = train_model<double>(f.ctx, f.data.features, f.labels, f.part, tiny_model_config(), cfg);
  CHECK_FALSE(same_store(a.model->store(), c.model->store()));
}

TEST_CASE("targets are log1p scores standardized on the training rows") {
  Fixture f;
  const auto prep = prepare_labels(f.labels, f.part, f.ctx.n_nodes);
  double mean = 0.0, sq = 0.0;
  for (Index v : prep.train_nodes) mean += prep.targets_d[v];
  mean /= prep.train_nodes.size();
  for (Index v : prep.train_nodes) sq += (prep.targets_d[v] - mean) * (prep.targets_d[v] - mean);
  CHECK(std::abs(mean) <= 1e-12);
  CHECK(sq > 0.0);
  CHECK(prep.train_nodes.size() == f.part.train.size());
  CHECK(prep.val_nodes.size() == f.part.val.size());
  for (std::size_t i = 0; i < prep.train_nodes.size(); ++i) {
    const Index r = f.part.train[i];
    CHECK(prep.train_nodes[i] == f.labels.nodes[r]);
    CHECK(prep.targets_d[f.labels.nodes[r]] ==
          doctest::Approx(prep.transform.apply(f.labels.scores[r])).epsilon(1e-12));
  }
}

TEST_CASE("checkpoints round trip and reject mismatched tensors") {
  Fixture f;
  auto out = train_model<double>(f.ctx, f.data.features, f.labels, f.part, tiny_model_config(),
                                 short_run(5));
  const auto path = temp_path("roundtrip.ckpt");
  save_checkpoint(make_checkpoint(out.model->store(), "model.hidden = 8\n"), path);
  const auto ckpt = load_checkpoint(path);
  CHECK(ckpt.config_echo == "model.hidden = 8\n");

  const auto& d = f.data.features;
  DualModel<double> fresh(tiny_model_config(), d.x1.cols(), d.x2.cols(), d.n_types, 99);
  CHECK_FALSE(same_store(fresh.store(), out.model->store()));
  apply_checkpoint(ckpt, fresh.store());
  CHECK(same_store(fresh.store(), out.model->store()));
  CHECK(predict(fresh, f.ctx, d) == predict(*out.model, f.ctx, d));

  auto missing = ckpt;
  missing.tensors.pop_back();
  CHECK_THROWS_AS(apply_checkpoint(missing, fresh.store()), DataError);
  auto extra = ckpt;
  extra.tensors.emplace_back("bogus", Matrix<double>(1, 1));
  CHECK_THROWS_AS(apply_checkpoint(extra, fresh.store()), DataError);
  auto shape = ckpt;
  shape.tensors.front().second = Matrix<double>(1, 1);
  CHECK_THROWS_AS(apply_checkpoint(shape, fresh.store()), DataError);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_checkpoint(path), DataError);
}

TEST_CASE("cross-validation results do not depend on the job count") {
  Fixture f;
  auto cfg = short_run(12);
  auto one = run_cross_validation(f.ctx, f.data.features, f.labels, SplitRatios{},
                                  tiny_model_config(), cfg, 1);
  auto three = run_cross_validation(f.ctx, f.data.features, f.labels, SplitRatios{},
                                    tiny_model_config(), cfg, 3);
  REQUIRE(one.size() == 3);
  REQUIRE(three.size() == 3);
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(one[k].fold == k);
    CHECK(one[k].partition.test == three[k].partition.test);
    CHECK(format_training_log(one[k].outcome.log, "") ==
          format_training_log(three[k].outcome.log, ""));
    CHECK(predict(*one[k].outcome.model, f.ctx, f.data.features) ==
          predict(*three[k].outcome.model, f.ctx, f.data.features));
  }
}

TEST_CASE("training log layout") {
  TrainingLog log;
  log.best_epoch = 1;
  log.stop_reason = "max epochs reached";
  log.epochs.push_back({0, 1.5, 0.25, 2.0, 3.0, 0.9, 0.1, 0.2});
  log.epochs.push_back({1, 1.25, 0.5, 1.0, 2.5, 0.8, 0.3, 0.4});
  const std::string text = format_training_log(log, "a.b = 1\nc.d = x\n");
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  CHECK(line == "# a.b = 1");
  std::getline(in, line);
  CHECK(line == "# c.d = x");
  std::getline(in, line);
  CHECK(line == "# best_epoch 1; max epochs reached");
  std::getline(in, line);
  CHECK(line ==
        "epoch\tloss_fusion\tloss_contrastive\tloss_struct\tloss_semantic\tval_spearman\tval_ndcg100");
  std::getline(in, line);
  CHECK(line == "0\t1.5\t0.25\t2\t3\t0.1\t0.2");
  std::getline(in, line);
  CHECK(line == "1\t1.25\t0.5\t1\t2.5\t0.3\t0.4");
  CHECK_FALSE(std::getline(in, line));
}
