// hhkg: build hypergraphs, train and evaluate the dual-channel importance
// model, benchmark the attention kernels, and generate synthetic data.
#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <random>

#include "hhkg/checkpoint.hpp"
#include "hhkg/config.hpp"
#include "hhkg/pagerank.hpp"

namespace fs = std::filesystem;
using namespace hhkg;

namespace {

struct LoadedData {
  KnowledgeGraph kg;
  Hypergraph hg;
  FeatureBundle features;
  LabelSet labels;
};

void require_file(const std::string& key, const std::string& path) {
  if (path.empty()) throw UsageError("missing required setting " + key);
  if (!fs::is_regular_file(path)) throw UsageError(key + ": no such file " + path);
}

void check_optional_file(const std::string& key, const std::string& path) {
  if (!path.empty()) require_file(key, path);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

fs::path output_dir(const RunConfig& config) {
  fs::path out = config.get("run.out");
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw UsageError("cannot create output directory " + out.string() + ": " + ec.message());
  return out;
}

void print_stats(const HypergraphStats& s, const KnowledgeGraph& kg, std::size_t dropped) {
  std::cout << "nodes\t" << s.n_nodes << "\nrelations\t" << kg.n_relations() << "\ntriples\t"
            << kg.triples().size() << "\nhyperedges\t" << s.n_hyperedges << "\nnnz\t" << s.nnz
            << "\nmax_edge_size\t" << s.max_edge_size << "\ndensity\t" << s.density
            << "\ndropped_singletons\t" << dropped << '\n';
}

// Knowledge graph and hypergraph from a built artifact or from triples.
void load_graph(const RunConfig& config, LoadedData& d) {
  const auto& artifact = config.get("data.hypergraph");
  if (!artifact.empty()) {
    auto a = load_artifact(artifact);
    d.kg = std::move(a.kg);
    d.hg = std::move(a.hg);
    return;
  }
  d.kg = load_graph_files(config.get("data.triples"), config.get("data.node_types"));
  d.hg = build_hypergraph(d.kg, config.grouping());
}

LoadedData load_training_data(const RunConfig& config) {
  if (config.get("data.hypergraph").empty()) {
    require_file("data.triples", config.get("data.triples"));
    check_optional_file("data.node_types", config.get("data.node_types"));
  } else {
    require_file("data.hypergraph", config.get("data.hypergraph"));
  }
  require_file("data.semantic", config.get("data.semantic"));
  require_file("data.labels", config.get("data.labels"));
  check_optional_file("data.structural", config.get("data.structural"));

  LoadedData d;
  load_graph(config, d);
  const std::size_t n = d.kg.n_nodes();
  d.features.x2 = load_features(config.get("data.semantic"), n);
  d.features.x1 = config.get("data.structural").empty()
                      ? structural_features(d.kg, d.hg)
                      : load_features(config.get("data.structural"), n);
  d.features.e_type_ids = d.hg.type_ids;
  d.features.n_types = d.hg.n_types();
  d.features.validate(n, d.hg.n_hyperedges);
  auto labels = load_labels(config.get("data.labels"), d.kg);
  const std::size_t folds = config.get("train.protocol") == "cv" ? config.get_size("train.folds") : 1;
  if (folds == 0) throw UsageError("train.folds must be >= 1");
  d.labels = make_splits(std::move(labels), config.split_ratios(), folds, config.seed());
  return d;
}

Partition partition_for(const RunConfig& config, const LabelSet& labels, std::size_t fold) {
  if (config.get("train.protocol") == "holdout") return holdout_partition(labels);
  return fold_partition(labels, fold, config.split_ratios(), config.seed());
}

int cmd_synth(const RunConfig& config) {
  const auto out = output_dir(config);
  auto data = gen_synthetic(config.synthetic_config());
  save_triples(data.kg, out / "triples.tsv");
  save_node_types(data.kg, out / "node_types.tsv");
  save_features_binary(data.features.x2, out / "semantic.hhkf");
  save_labels(data.labels, data.kg, out / "labels.tsv");
  RunConfig next = config;
  next.set("data.triples", (out / "triples.tsv").string());
  next.set("data.node_types", (out / "node_types.tsv").string());
  next.set("data.semantic", (out / "semantic.hhkf").string());
  next.set("data.labels", (out / "labels.tsv").string());
  write_text(out / "config.ini", "# generated by hhkg synth\n" + next.echo());
  std::cout << "wrote " << data.kg.n_nodes() << " nodes, " << data.kg.triples().size()
            << " triples, " << data.labels.size() << " labels to " << out.string() << '\n'
            << "train with: hhkg train --config " << (out / "config.ini").string() << '\n';
  return 0;
}

int cmd_build(const RunConfig& config) {
  require_file("data.triples", config.get("data.triples"));
  check_optional_file("data.node_types", config.get("data.node_types"));
  const auto out = output_dir(config);
  HypergraphArtifact a;
  a.kg = load_graph_files(config.get("data.triples"), config.get("data.node_types"));
  a.grouping = config.grouping();
  a.hg = build_hypergraph(a.kg, a.grouping);
  a.config_echo = config.echo();
  save_artifact(a, out / "hypergraph.hhkg");
  print_stats(hypergraph_stats(a.hg), a.kg, a.hg.dropped_singletons);
  std::cout << "wrote " << (out / "hypergraph.hhkg").string() << '\n';
  return 0;
}

FoldReport baseline_report(const LoadedData& d, const RunConfig& config, bool personalized,
                           const std::vector<std::size_t>& ks) {
  std::vector<MetricReport> folds;
  for (std::size_t f = 0; f < d.labels.k_folds; ++f) {
    const auto part = partition_for(config, d.labels, f);
    std::vector<double> scores;
    if (personalized) {
      std::vector<double> p(d.kg.n_nodes(), 0.0);
      double total = 0.0;
      for (Index r : part.train) total += d.labels.scores[r];
      for (Index r : part.train) {
        p[d.labels.nodes[r]] = total > 0.0 ? d.labels.scores[r] / total : 1.0 / part.train.size();
      }
      scores = ppr(d.kg, p);
    } else {
      scores = pagerank(d.kg);
    }
    folds.push_back(evaluate_nodes(scores, d.labels, part.test, ks));
  }
  return aggregate_folds(std::move(folds));
}

void print_summary(const std::string& title, const FoldReport& r) {
  std::cout << title << "\tspearman " << std::fixed << std::setprecision(4) << r.spearman.mean
            << " ± " << r.spearman.std;
  for (const auto& [k, s] : r.ndcg) std::cout << "\tndcg@" << k << ' ' << s.mean << " ± " << s.std;
  std::cout << '\n' << std::defaultfloat;
}

int cmd_train(const RunConfig& config, std::size_t jobs) {
  const auto model_config = config.model_config();
  const auto train_config = config.train_config();
  const auto ks = config.get_sizes("eval.ks");
  LoadedData d = load_training_data(config);
  const auto out = output_dir(config);
  GraphContext ctx(d.hg, d.features.e_type_ids, d.features.n_types);

  std::vector<FoldRun> runs;
  if (config.get("train.protocol") == "cv") {
    runs = run_cross_validation(ctx, d.features, d.labels, config.split_ratios(), model_config,
                                train_config, jobs, ks);
  } else {
    FoldRun run;
    run.partition = holdout_partition(d.labels);
    run.outcome = train_model<float>(ctx, d.features, d.labels, run.partition, model_config,
                                     train_config);
    run.test = evaluate_nodes(predict(*run.outcome.model, ctx, d.features), d.labels,
                              run.partition.test, ks);
    runs.push_back(std::move(run));
  }

  bool diverged = false;
  std::vector<MetricReport> tests;
  for (const auto& run : runs) {
    RunConfig fold_config = config;
    fold_config.set("run.fold", std::to_string(run.fold));
    const std::string echo = fold_config.echo();
    const std::string stem = "fold" + std::to_string(run.fold);
    save_checkpoint(make_checkpoint(run.outcome.model->store(), echo), out / (stem + ".ckpt"));
    write_training_log(run.outcome.log, out / (stem + ".log.tsv"), echo);
    tests.push_back(run.test);
    if (run.outcome.log.diverged) {
      diverged = true;
      std::cerr << "fold " << run.fold << ": " << run.outcome.log.stop_reason
                << "; kept the last good parameters\n";
    }
  }
  const auto report = aggregate_folds(std::move(tests));
  write_report(report, out / "report.tsv", config.echo());
  const auto pr = baseline_report(d, config, false, ks);
  const auto pp = baseline_report(d, config, true, ks);
  write_text(out / "baselines.tsv", "# baseline pagerank\n" + format_report(pr, config.echo()) +
                                        "# baseline ppr (teleport to training labels)\n" +
                                        format_report(pp, ""));
  print_summary("model", report);
  print_summary("pagerank", pr);
  print_summary("ppr", pp);
  std::cout << "wrote checkpoints, logs and report.tsv to " << out.string() << '\n';
  return diverged ? 4 : 0;
}

int cmd_eval(const RunConfig& cli_config, const std::string& checkpoint_path) {
  if (checkpoint_path.empty()) throw UsageError("eval needs --checkpoint");
  if (!fs::is_regular_file(checkpoint_path)) {
    throw UsageError("checkpoint not found: " + checkpoint_path);
  }
  const Checkpoint ckpt = load_checkpoint(checkpoint_path);
  RunConfig config = RunConfig::from_echo(ckpt.config_echo);
  const auto ks = cli_config.get_sizes("eval.ks");
  const std::string split = cli_config.get("eval.split");
  LoadedData d = load_training_data(config);
  const auto mc = config.model_config();
  DualModel<float> model(mc, d.features.x1.cols(), d.features.x2.cols(), d.features.n_types, 0);
  apply_checkpoint(ckpt, model.store());
  GraphContext ctx(d.hg, d.features.e_type_ids, d.features.n_types);
  const auto part = partition_for(config, d.labels, config.get_size("run.fold"));
  const auto& rows = split == "train" ? part.train : split == "val" ? part.val : part.test;
  const auto pred = predict(model, ctx, d.features);
  const auto report = aggregate_folds({evaluate_nodes(pred, d.labels, rows, ks)});
  const auto out = output_dir(cli_config);
  write_report(report, out / "eval.tsv", ckpt.config_echo + "eval.split = " + split + "\n");
  std::cout << "split " << split << " (" << rows.size() << " labeled nodes)\n";
  print_summary("model", report);
  return 0;
}

int cmd_bench(const RunConfig& config) {
  auto bench = config.bench_config();
  const auto out = output_dir(config);
  FeatureBundle features;
  Hypergraph hg;
  if (!config.get("data.triples").empty() || !config.get("data.hypergraph").empty()) {
    require_file("data.semantic", config.get("data.semantic"));
    LoadedData d;
    load_graph(config, d);
    hg = std::move(d.hg);
    features.x2 = load_features(config.get("data.semantic"), hg.n_nodes);
    features.n_types = hg.n_types();
    features.e_type_ids = hg.type_ids;
  } else {
    const std::size_t types = std::max<std::size_t>(1, config.get_size("bench.types"));
    hg = random_hypergraph(config.get_size("bench.nodes"), config.get_size("bench.edges"),
                           config.get_double("bench.density"), types, config.seed());
    std::mt19937_64 rng(config.seed() + 1);
    std::normal_distribution<double> gauss;
    features.x2 = Matrix<double>(hg.n_nodes, std::max<std::size_t>(1, config.get_size("bench.feature_dim")));
    for (auto& v : features.x2.flat()) v = gauss(rng);
    features.n_types = types;
    features.e_type_ids = hg.type_ids;
  }
  GraphContext ctx(hg, features.e_type_ids, features.n_types);
  const auto report = run_bench(ctx, features, bench);
  const std::string table = format_bench_table(report, config.echo());
  write_text(out / "bench.tsv", table);
  write_text(out / "bench_series.tsv", format_bench_series(report));
  std::cout << table;
  return 0;
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kUsage: return 2;
    case ErrorKind::kData: return 3;
    case ErrorKind::kNumeric: return 4;
  }
  return 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Node importance estimation on heterogeneous higher-order knowledge graphs"};
  app.require_subcommand(1);
  std::string config_path, out_dir, checkpoint;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  std::vector<std::string> overrides;
  app.add_option("--config", config_path, "configuration file (key = value with [sections])");
  auto* seed_opt = app.add_option("--seed", seed, "random seed (run.seed)");
  auto* jobs_opt = app.add_option("--jobs", jobs, "folds trained in parallel (run.jobs)");
  auto* out_opt = app.add_option("--out", out_dir, "output directory (run.out)");
  app.add_option("--set", overrides, "override a setting, e.g. --set train.max_epochs=200")
      ->take_all();
  app.fallthrough();

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset and a matching config");
  auto* build = app.add_subcommand("build", "build and save the hypergraph artifact");
  auto* train = app.add_subcommand("train", "train per-fold models and write checkpoints and reports");
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a split");
  eval->add_option("--checkpoint", checkpoint, "checkpoint written by train")->required();
  auto* bench = app.add_subcommand("bench", "dense vs sparse attention timing and allocation");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    RunConfig config = config_path.empty() ? RunConfig() : RunConfig::from_file(config_path);
    for (const auto& o : overrides) config.set_assignment(o);
    if (*seed_opt) config.set("run.seed", std::to_string(seed));
    if (*jobs_opt) config.set("run.jobs", std::to_string(jobs));
    if (*out_opt) config.set("run.out", out_dir);
    jobs = config.get_size("run.jobs");

    if (*synth) return cmd_synth(config);
    if (*build) return cmd_build(config);
    if (*train) return cmd_train(config, jobs);
    if (*eval) return cmd_eval(config, checkpoint);
    if (*bench) return cmd_bench(config);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 2;
}
