#include "hhkg/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>

#include "hhkg/binary_io.hpp"
#include "hhkg/pagerank.hpp"

namespace hhkg {

namespace {

bool parse_real(const std::string& token, double& out) {
  if (token.empty()) return false;
  char* end = nullptr;
  out = std::strtod(token.c_str(), &end);
  return end == token.c_str() + token.size() && std::isfinite(out);
}

bool skip_line(const std::string& line) {
  const auto first = line.find_first_not_of(" \t\r");
  return first == std::string::npos || line[first] == '#';
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

}  // namespace

Matrix<double> parse_features_text(std::istream& in, const std::string& source) {
  std::string line;
  std::size_t line_no = 0;
  std::size_t rows = 0, cols = 0;
  bool have_header = false;
  while (!have_header && std::getline(in, line)) {
    ++line_no;
    if (skip_line(line)) continue;
    std::istringstream hs(line);
    long long r = -1, c = -1;
    std::string extra;
    if (!(hs >> r >> c) || (hs >> extra) || r < 0 || c <= 0) {
      throw DataError(source, line_no, "expected header `N d`");
    }
    rows = static_cast<std::size_t>(r);
    cols = static_cast<std::size_t>(c);
    have_header = true;
  }
  if (!have_header) throw DataError(source, line_no, "missing header `N d`");

  Matrix<double> m(rows, cols);
  std::size_t r = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (skip_line(line)) continue;
    if (r >= rows) throw DataError(source, line_no, "more rows than the header declares");
    std::istringstream ls(line);
    std::string token;
    std::size_t c = 0;
    while (ls >> token) {
      if (c >= cols) throw DataError(source, line_no, "too many columns");
      double v = 0.0;
      if (!parse_real(token, v)) {
        throw DataError(source, line_no, "non-numeric or non-finite value '" + token + "'");
      }
      m(r, c++) = v;
    }
    if (c != cols) throw DataError(source, line_no, "expected " + std::to_string(cols) + " columns");
    ++r;
  }
  if (r != rows) {
    throw DataError(source, line_no, "header declares " + std::to_string(rows) + " rows, found " +
                                         std::to_string(r));
  }
  return m;
}

void write_matrix_binary(std::ostream& out, const Matrix<double>& m) {
  binary::write_magic(out, "HHKF");
  binary::write_u64(out, m.rows());
  binary::write_u64(out, m.cols());
  for (double v : m.flat()) binary::write_f64(out, v);
}

Matrix<double> read_matrix_binary(std::istream& in, const std::string& source) {
  binary::expect_magic(in, "HHKF", source);
  const auto rows = binary::read_u64(in, "row count");
  const auto cols = binary::read_u64(in, "column count");
  if (rows > (1ull << 32) || cols > (1ull << 32)) throw DataError(source + ": implausible shape");
  Matrix<double> m(rows, cols);
  for (auto& v : m.flat()) {
    v = binary::read_f64(in, "matrix entry");
    if (!std::isfinite(v)) throw DataError(source + ": non-finite matrix entry");
  }
  return m;
}

Matrix<double> load_features(const std::filesystem::path& path, std::size_t expected_rows) {
  auto in = open_in(path);
  char magic[4] = {};
  in.read(magic, 4);
  const bool is_binary = in.gcount() == 4 && std::string(magic, 4) == "HHKF";
  in.clear();
  in.seekg(0);
  Matrix<double> m = is_binary ? read_matrix_binary(in, path.string())
                               : parse_features_text(in, path.string());
  if (expected_rows != 0 && m.rows() != expected_rows) {
    throw DataError(path.string() + ": expected " + std::to_string(expected_rows) +
                    " rows, file has " + std::to_string(m.rows()));
  }
  return m;
}

void save_features_text(const Matrix<double>& m, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << m.rows() << ' ' << m.cols() << '\n' << std::setprecision(17);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) out << (c ? " " : "") << m(r, c);
    out << '\n';
  }
}

void save_features_binary(const Matrix<double>& m, const std::filesystem::path& path) {
  auto out = open_out(path);
  write_matrix_binary(out, m);
}

void FeatureBundle::validate(std::size_t n_nodes, std::size_t n_hyperedges) const {
  require(x1.rows() == n_nodes, "X1 has " + std::to_string(x1.rows()) + " rows, expected " +
                                    std::to_string(n_nodes));
  require(x2.rows() == n_nodes, "X2 has " + std::to_string(x2.rows()) + " rows, expected " +
                                    std::to_string(n_nodes));
  require(x1.cols() > 0 && x2.cols() > 0, "feature widths must be positive");
  require(e_type_ids.size() == n_hyperedges, "hyperedge type id count mismatch");
  for (double v : x1.flat()) require(std::isfinite(v), "X1 has a non-finite entry");
  for (double v : x2.flat()) require(std::isfinite(v), "X2 has a non-finite entry");
  for (Index t : e_type_ids) require(t < n_types, "hyperedge type id out of range");
}

void LabelSet::validate(std::size_t n_nodes) const {
  require(scores.size() == nodes.size(), "labels: score count mismatch");
  require(split.empty() || split.size() == nodes.size(), "labels: split count mismatch");
  require(fold.empty() || fold.size() == nodes.size(), "labels: fold count mismatch");
  std::vector<char> seen(n_nodes, 0);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    require(nodes[i] < n_nodes, "labels: node id out of range");
    require(!seen[nodes[i]], "labels: duplicate node id " + std::to_string(nodes[i]));
    seen[nodes[i]] = 1;
    require(std::isfinite(scores[i]) && scores[i] >= 0.0, "labels: scores must be finite and >= 0");
  }
}

LabelSet parse_labels(std::istream& in, const std::string& source, const KnowledgeGraph& kg) {
  LabelSet labels;
  std::vector<char> seen(kg.n_nodes(), 0);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (skip_line(line)) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) {
      throw DataError(source, line_no, "expected `node<TAB>score`");
    }
    const std::string name = line.substr(0, tab);
    const auto node = kg.find_node(name);
    if (!node) throw DataError(source, line_no, "unknown node '" + name + "'");
    double score = 0.0;
    if (!parse_real(line.substr(tab + 1), score) || score < 0.0) {
      throw DataError(source, line_no, "score must be a finite nonnegative number");
    }
    if (seen[*node]) throw DataError(source, line_no, "duplicate label for '" + name + "'");
    seen[*node] = 1;
    labels.nodes.push_back(*node);
    labels.scores.push_back(score);
  }
  return labels;
}

LabelSet load_labels(const std::filesystem::path& path, const KnowledgeGraph& kg) {
  auto in = open_in(path);
  return parse_labels(in, path.string(), kg);
}

void save_labels(const LabelSet& labels, const KnowledgeGraph& kg,
                 const std::filesystem::path& path) {
  auto out = open_out(path);
  out << std::setprecision(17);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out << kg.node_name(labels.nodes[i]) << '\t' << labels.scores[i] << '\n';
  }
}

LabelSet make_splits(LabelSet labels, const SplitRatios& ratios, std::size_t k_folds,
                     std::uint64_t seed) {
  const std::size_t n = labels.size();
  require(k_folds >= 1, "make_splits: k_folds must be >= 1");
  require(n >= k_folds, "make_splits: need at least k_folds labeled nodes (have " +
                            std::to_string(n) + ", k=" + std::to_string(k_folds) + ")");
  require(ratios.train > 0 && ratios.val >= 0 && ratios.test >= 0, "make_splits: bad ratios");
  const double total = ratios.train + ratios.val + ratios.test;
  const auto n_val = static_cast<std::size_t>(std::llround(n * ratios.val / total));
  const auto n_test = static_cast<std::size_t>(std::llround(n * ratios.test / total));
  require(n_val + n_test < n, "make_splits: too few labels for a nonempty training split");

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  labels.split.assign(n, Split::kTrain);
  for (std::size_t i = 0; i < n_val; ++i) labels.split[perm[i]] = Split::kVal;
  for (std::size_t i = n_val; i < n_val + n_test; ++i) labels.split[perm[i]] = Split::kTest;

  std::shuffle(perm.begin(), perm.end(), rng);
  labels.fold.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) labels.fold[perm[i]] = static_cast<std::uint32_t>(i % k_folds);
  labels.k_folds = k_folds;
  return labels;
}

Partition holdout_partition(const LabelSet& labels) {
  require(labels.split.size() == labels.size(), "labels have no split assignment");
  Partition p;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto idx = static_cast<Index>(i);
    switch (labels.split[i]) {
      case Split::kTrain: p.train.push_back(idx); break;
      case Split::kVal: p.val.push_back(idx); break;
      case Split::kTest: p.test.push_back(idx); break;
    }
  }
  return p;
}

Partition fold_partition(const LabelSet& labels, std::size_t fold, const SplitRatios& ratios,
                         std::uint64_t seed) {
  require(labels.fold.size() == labels.size(), "labels have no fold assignment");
  require(fold < labels.k_folds, "fold index out of range");
  Partition p;
  std::vector<Index> rest;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    (labels.fold[i] == fold ? p.test : rest).push_back(static_cast<Index>(i));
  }
  std::mt19937_64 rng(seed ^ (0x9e3779b97f4a7c15ull * (fold + 1)));
  std::shuffle(rest.begin(), rest.end(), rng);
  const double tv = ratios.train + ratios.val;
  auto n_val = static_cast<std::size_t>(std::llround(rest.size() * ratios.val / tv));
  if (n_val == 0 && ratios.val > 0 && rest.size() >= 2) n_val = 1;
  require(n_val < rest.size(), "fold_partition: too few labels outside the test fold");
  p.val.assign(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(n_val));
  p.train.assign(rest.begin() + static_cast<std::ptrdiff_t>(n_val), rest.end());
  std::sort(p.train.begin(), p.train.end());
  std::sort(p.val.begin(), p.val.end());
  return p;
}

Matrix<double> structural_features_raw(const KnowledgeGraph& kg, const Hypergraph& hg) {
  const std::size_t n = kg.n_nodes();
  std::vector<double> in_deg(n, 0.0), out_deg(n, 0.0), member(n, 0.0);
  for (const Triple& t : kg.triples()) {
    out_deg[t.head] += 1.0;
    in_deg[t.tail] += 1.0;
  }
  for (const Incidence& inc : hg.incidence) member[inc.node] += 1.0;
  const auto pr = pagerank(kg);
  Matrix<double> x(n, 5);
  for (std::size_t i = 0; i < n; ++i) {
    x(i, 0) = std::log1p(in_deg[i] + out_deg[i]);
    x(i, 1) = std::log1p(in_deg[i]);
    x(i, 2) = std::log1p(out_deg[i]);
    x(i, 3) = std::log1p(member[i]);
    x(i, 4) = pr[i];
  }
  return x;
}

void standardize_columns(Matrix<double>& m) {
  if (m.rows() == 0) return;
  const double n = static_cast<double>(m.rows());
  for (std::size_t c = 0; c < m.cols(); ++c) {
    double mean = 0.0;
    for (std::size_t r = 0; r < m.rows(); ++r) mean += m(r, c);
    mean /= n;
    double var = 0.0;
    for (std::size_t r = 0; r < m.rows(); ++r) var += (m(r, c) - mean) * (m(r, c) - mean);
    const double sd = std::sqrt(var / n);
    for (std::size_t r = 0; r < m.rows(); ++r) {
      m(r, c) = sd > 1e-12 * (1.0 + std::abs(mean)) ? (m(r, c) - mean) / sd : 0.0;
    }
  }
}

Matrix<double> structural_features(const KnowledgeGraph& kg, const Hypergraph& hg) {
  auto x = structural_features_raw(kg, hg);
  standardize_columns(x);
  return x;
}

}  // namespace hhkg
