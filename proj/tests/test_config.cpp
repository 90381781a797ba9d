#include <doctest.h>

#include <sstream>

#include "hhkg/config.hpp"

using namespace hhkg;

TEST_CASE("defaults carry the reference hyperparameters") {
  RunConfig c;
  const auto m = c.model_config();
  CHECK(m.hidden == 20);
  CHECK(m.heads == 4);
  CHECK(m.layers == 1);
  CHECK(m.attn_dropout == 0.3);
  CHECK(m.chunk == 2000);
  CHECK(m.eta1 == 0.3);
  CHECK(m.tau == 0.5);
  CHECK(m.channels == ChannelMode::kFull);
  const auto t = c.train_config();
  CHECK(t.adam.lr == 0.005);
  CHECK(t.adam.weight_decay == 0.0005);
  CHECK(t.max_epochs == 10000);
  CHECK(t.patience == 2000);
  CHECK(t.weights.alpha == 0.1);
  CHECK(t.weights.beta == 0.2);
  CHECK(c.grouping() == Grouping::kRelationItem);
  CHECK(c.get_sizes("eval.ks") == std::vector<std::size_t>{20, 50, 100, 200});
}

TEST_CASE("unknown keys and malformed values are usage errors") {
  RunConfig c;
  CHECK_THROWS_AS(c.set("model.width", "3"), UsageError);
  CHECK_THROWS_AS(c.set("model.hidden", "-3"), UsageError);
  CHECK_THROWS_AS(c.set("model.hidden", "3.5"), UsageError);
  CHECK_THROWS_AS(c.set("train.lr", "fast"), UsageError);
  CHECK_THROWS_AS(c.set("train.lr", "nan"), UsageError);
  CHECK_THROWS_AS(c.set("model.raw_dot", "yes"), UsageError);
  CHECK_THROWS_AS(c.set("model.channels", "both"), UsageError);
  CHECK_THROWS_AS(c.set("eval.ks", "10,0"), UsageError);
  CHECK_THROWS_AS(c.set_assignment("model.hidden"), UsageError);
  CHECK_THROWS_AS(c.get("nope"), UsageError);
  c.set_assignment(" model.hidden = 12 ");
  CHECK(c.get_size("model.hidden") == 12);
}

TEST_CASE("cross-field checks") {
  RunConfig c;
  c.set("model.hidden", "10");
  CHECK_THROWS_AS(c.model_config(), UsageError);
  c.set("model.hidden", "12");
  c.set("model.eta1", "1");
  CHECK_THROWS_AS(c.model_config(), UsageError);
  c.set("model.eta1", "0.3");
  c.set("train.max_epochs", "50");
  CHECK_THROWS_AS(c.train_config(), UsageError);
  c.set("train.patience", "50");
  CHECK(c.train_config().patience == 50);
  c.set("train.ratio_val", "0");
  CHECK_THROWS_AS(c.split_ratios(), UsageError);
}

TEST_CASE("files accept section headers and dotted keys") {
  std::istringstream in(
      "# comment\n"
      "run.seed = 9\n"
      "\n"
      "[model]\n"
      "hidden = 16\n"
      "; another comment\n"
      "channels = semantic\n"
      "train.lr = 0.01\n"
      "[train]\n"
      "loss_ablation = no_contrastive\n");
  RunConfig c;
  c.parse(in, "inline");
  CHECK(c.seed() == 9);
  CHECK(c.model_config().hidden == 16);
  CHECK(c.model_config().channels == ChannelMode::kSemantic);
  CHECK(c.train_config().adam.lr == 0.01);
  CHECK(c.train_config().weights.alpha == 0.0);
}

TEST_CASE("parse errors name the source line") {
  auto error_of = [](const std::string& text) {
    std::istringstream in(text);
    RunConfig c;
    try {
      c.parse(in, "cfg.ini");
    } catch (const UsageError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(error_of("hidden = 3\n").find("cfg.ini:1") != std::string::npos);
  CHECK(error_of("[model]\nhidden = 3\nbogus = 1\n").find("cfg.ini:3") != std::string::npos);
  CHECK(error_of("[model\n").find("cfg.ini:1") != std::string::npos);
  CHECK(error_of("[model]\njunk\n").find("cfg.ini:2") != std::string::npos);
}

TEST_CASE("config echo round trips and leaves out run.out and run.jobs") {
  RunConfig c;
  c.set("model.hidden", "24");
  c.set("model.heads", "3");
  c.set("train.protocol", "holdout");
  c.set("eval.ks", "5,10");
  c.set("run.out", "/tmp/elsewhere");
  c.set("run.jobs", "8");
  const std::string echo = c.echo();
  CHECK(echo.find("run.out") == std::string::npos);
  CHECK(echo.find("run.jobs") == std::string::npos);
  CHECK(echo.find("model.hidden = 24\n") != std::string::npos);
  const auto back = RunConfig::from_echo(echo);
  CHECK(back.echo() == echo);
  CHECK(back.get_sizes("eval.ks") == std::vector<std::size_t>{5, 10});
  CHECK(back.get("run.out") == "out");
}

TEST_CASE("missing config file is a usage error") {
  CHECK_THROWS_AS(RunConfig::from_file("/nonexistent/hhkg.ini"), UsageError);
}
