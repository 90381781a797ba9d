#include "hhkg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "hhkg/common.hpp"

namespace hhkg {

namespace {

std::vector<std::size_t> order_desc(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return v[a] > v[b]; });
  return order;
}

double dcg(std::span<const double> truth, const std::vector<std::size_t>& order, std::size_t k) {
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) total += truth[order[i]] / std::log2(static_cast<double>(i) + 2.0);
  return total;
}

}  // namespace

double ndcg_at_k(std::span<const double> pred, std::span<const double> truth, std::size_t k) {
  require(pred.size() == truth.size(), "ndcg_at_k: length mismatch");
  require(k >= 1, "ndcg_at_k: k must be >= 1");
  k = std::min(k, pred.size());
  const double ideal = dcg(truth, order_desc(truth), k);
  if (ideal == 0.0) return 1.0;
  return dcg(truth, order_desc(pred), k) / ideal;
}

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t p = i; p <= j; ++p) ranks[order[p]] = avg;
    i = j + 1;
  }
  return ranks;
}

double spearman(std::span<const double> pred, std::span<const double> truth, bool* degenerate) {
  require(pred.size() == truth.size(), "spearman: length mismatch");
  require(pred.size() >= 2, "spearman: need at least two values");
  const auto a = average_ranks(pred);
  const auto b = average_ranks(truth);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    cov += (a[i] - ma) * (b[i] - mb);
    va += (a[i] - ma) * (a[i] - ma);
    vb += (b[i] - mb) * (b[i] - mb);
  }
  if (degenerate) *degenerate = false;
  if (va == 0.0 || vb == 0.0) {
    if (degenerate) *degenerate = true;
    return 0.0;
  }
  return cov / std::sqrt(va * vb);
}

MetricReport evaluate_ranking(std::span<const double> pred, std::span<const double> truth,
                              const std::vector<std::size_t>& ks) {
  MetricReport r;
  r.spearman = spearman(pred, truth, &r.spearman_degenerate);
  for (std::size_t k : ks) r.ndcg[k] = ndcg_at_k(pred, truth, k);
  return r;
}

Summary summarize(std::span<const double> values) {
  Summary s;
  if (values.empty()) return s;
  const double n = static_cast<double>(values.size());
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / (n - 1.0));
  }
  return s;
}

FoldReport aggregate_folds(std::vector<MetricReport> folds) {
  FoldReport out;
  out.folds = std::move(folds);
  std::vector<double> sp;
  std::map<std::size_t, std::vector<double>> nd;
  for (const auto& f : out.folds) {
    sp.push_back(f.spearman);
    for (const auto& [k, v] : f.ndcg) nd[k].push_back(v);
  }
  out.spearman = summarize(sp);
  for (const auto& [k, v] : nd) out.ndcg[k] = summarize(v);
  return out;
}

std::string format_report(const FoldReport& report, const std::string& config_echo) {
  std::ostringstream os;
  os << std::setprecision(10);
  os << "# ndcg gain=linear discount=log2(rank+1) ties=node-id-ascending idcg0=1\n";
  os << "# spearman=pearson-of-average-ranks\n";
  std::istringstream echo(config_echo);
  for (std::string line; std::getline(echo, line);) os << "# " << line << '\n';
  os << "fold\tspearman";
  for (const auto& [k, s] : report.ndcg) os << "\tndcg@" << k;
  os << '\n';
  for (std::size_t f = 0; f < report.folds.size(); ++f) {
    os << f << '\t' << report.folds[f].spearman;
    for (const auto& [k, v] : report.folds[f].ndcg) os << '\t' << v;
    os << '\n';
  }
  os << "mean\t" << report.spearman.mean;
  for (const auto& [k, s] : report.ndcg) os << '\t' << s.mean;
  os << "\nstd\t" << report.spearman.std;
  for (const auto& [k, s] : report.ndcg) os << '\t' << s.std;
  os << '\n';
  return os.str();
}

void write_report(const FoldReport& report, const std::filesystem::path& path,
                  const std::string& config_echo) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write report " + path.string());
  out << format_report(report, config_echo);
}

}  // namespace hhkg
