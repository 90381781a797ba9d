#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "hhkg/hypergraph.hpp"
#include "hhkg/knowledge_graph.hpp"
#include "hhkg/matrix.hpp"

namespace hhkg {

// Text: first line `N d`, then N lines of d whitespace-separated reals.
// Binary: "HHKF", u64 N, u64 d, N*d little-endian f64, row-major.
// The format is chosen by the leading magic. expected_rows == 0 skips the
// row-count check. Non-finite or non-numeric entries are a DataError.
Matrix<double> load_features(const std::filesystem::path& path, std::size_t expected_rows = 0);
Matrix<double> parse_features_text(std::istream& in, const std::string& source);
void save_features_text(const Matrix<double>& m, const std::filesystem::path& path);
void save_features_binary(const Matrix<double>& m, const std::filesystem::path& path);

// HHKF block without file handling, reused by the checkpoint container.
void write_matrix_binary(std::ostream& out, const Matrix<double>& m);
Matrix<double> read_matrix_binary(std::istream& in, const std::string& source);

struct FeatureBundle {
  Matrix<double> x1;             // N x d1 structural
  Matrix<double> x2;             // N x d2 semantic
  std::vector<Index> e_type_ids;  // per hyperedge
  std::size_t n_types = 0;

  // Shapes, finiteness and type id range.
  void validate(std::size_t n_nodes, std::size_t n_hyperedges) const;
};

enum class Split : std::uint8_t { kTrain, kVal, kTest };

struct LabelSet {
  std::vector<NodeId> nodes;
  std::vector<double> scores;
  std::vector<Split> split;
  std::vector<std::uint32_t> fold;
  std::size_t k_folds = 0;

  std::size_t size() const noexcept { return nodes.size(); }
  // Scores >= 0 and finite, unique nodes below n_nodes, aligned vectors.
  void validate(std::size_t n_nodes) const;
};

// `node<TAB>score` per line, node names resolved through kg.
LabelSet load_labels(const std::filesystem::path& path, const KnowledgeGraph& kg);
LabelSet parse_labels(std::istream& in, const std::string& source, const KnowledgeGraph& kg);
void save_labels(const LabelSet& labels, const KnowledgeGraph& kg,
                 const std::filesystem::path& path);

struct SplitRatios {
  double train = 7.0;
  double val = 1.0;
  double test = 2.0;
};

// Fills split (hold-out by ratios) and fold (k-fold assignment) from
// independent seeded permutations. Pure in (labels, ratios, k, seed).
LabelSet make_splits(LabelSet labels, const SplitRatios& ratios, std::size_t k_folds,
                     std::uint64_t seed);

// Label positions (indices into LabelSet) of one experiment partition.
struct Partition {
  std::vector<Index> train, val, test;
};

Partition holdout_partition(const LabelSet& labels);
// Test = fold f; the remaining labels are divided train:val by the
// ratios' train:val proportion with a permutation seeded by (seed, f).
Partition fold_partition(const LabelSet& labels, std::size_t fold, const SplitRatios& ratios,
                         std::uint64_t seed);

// Per node: log1p(degree), log1p(in-degree), log1p(out-degree),
// log1p(hyperedge memberships), PageRank. Degrees count triples.
Matrix<double> structural_features_raw(const KnowledgeGraph& kg, const Hypergraph& hg);
// Raw columns standardized to zero mean, unit variance; constant columns
// become zeros.
Matrix<double> structural_features(const KnowledgeGraph& kg, const Hypergraph& hg);
void standardize_columns(Matrix<double>& m);

}  // namespace hhkg
