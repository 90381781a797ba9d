#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace hhkg {

// Items ranked by pred descending, ties by index ascending. Linear gain on
// the true score, log2(i + 1) discount. Returns 1 when the ideal DCG is 0.
// k larger than the item count is clamped.
double ndcg_at_k(std::span<const double> pred, std::span<const double> truth, std::size_t k);

// 1-based ranks, ties share their average rank.
std::vector<double> average_ranks(std::span<const double> values);

// Pearson correlation of average ranks. When either side is constant the
// result is 0 and *degenerate (if given) is set.
double spearman(std::span<const double> pred, std::span<const double> truth,
                bool* degenerate = nullptr);

inline const std::vector<std::size_t> kDefaultKs = {20, 50, 100, 200};

struct MetricReport {
  double spearman = 0.0;
  std::map<std::size_t, double> ndcg;  // k -> NDCG@k
  bool spearman_degenerate = false;
};

MetricReport evaluate_ranking(std::span<const double> pred, std::span<const double> truth,
                              const std::vector<std::size_t>& ks = kDefaultKs);

struct Summary {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation, 0 for a single value
};

Summary summarize(std::span<const double> values);

struct FoldReport {
  std::vector<MetricReport> folds;
  Summary spearman;
  std::map<std::size_t, Summary> ndcg;
};

FoldReport aggregate_folds(std::vector<MetricReport> folds);

// Tab-separated: `#` lines (conventions, config echo), a header row
// `fold spearman ndcg@20 ...`, one row per fold, then `mean` and `std` rows.
void write_report(const FoldReport& report, const std::filesystem::path& path,
                  const std::string& config_echo);
std::string format_report(const FoldReport& report, const std::string& config_echo);

}  // namespace hhkg
