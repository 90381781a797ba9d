#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "hhkg/ingest.hpp"
#include "hhkg/pagerank.hpp"

using namespace hhkg;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

LabelSet numbered_labels(std::size_t n) {
  LabelSet l;
  for (std::size_t i = 0; i < n; ++i) {
    l.nodes.push_back(static_cast<NodeId>(i));
    l.scores.push_back(static_cast<double>(i));
  }
  return l;
}

}  // namespace

TEST_CASE("text features parse literally") {
  std::istringstream in("3 2\n0 0\n1 0\n0 1\n");
  const auto m = parse_features_text(in, "mem");
  REQUIRE(m.rows() == 3);
  REQUIRE(m.cols() == 2);
  CHECK(m == Matrix<double>{{0, 0}, {1, 0}, {0, 1}});
}

TEST_CASE("a NaN token is rejected at its line") {
  std::istringstream in("2 2\n1 2\nNaN 3\n");
  try {
    parse_features_text(in, "mem");
    FAIL("expected a DataError");
  } catch (const DataError& e) {
    CHECK(e.line() == 3);
  }
  std::istringstream short_rows("3 1\n1\n2\n");
  CHECK_THROWS_AS(parse_features_text(short_rows, "mem"), DataError);
  std::istringstream ragged("2 2\n1 2\n3\n");
  CHECK_THROWS_AS(parse_features_text(ragged, "mem"), DataError);
}

TEST_CASE("binary features round-trip byte for byte") {
  TempDir dir("hhkg_test_features");
  Matrix<double> m(4, 3);
  for (std::size_t i = 0; i < m.size(); ++i) m.flat()[i] = 0.1 * static_cast<double>(i) - 0.37;
  save_features_binary(m, dir.path / "a.hhkf");
  const auto back = load_features(dir.path / "a.hhkf", 4);
  CHECK(back == m);
  save_features_binary(back, dir.path / "b.hhkf");
  CHECK(slurp(dir.path / "a.hhkf") == slurp(dir.path / "b.hhkf"));
  CHECK_THROWS_AS(load_features(dir.path / "a.hhkf", 5), DataError);

  save_features_text(m, dir.path / "a.txt");
  const auto text = load_features(dir.path / "a.txt");
  for (std::size_t i = 0; i < m.size(); ++i) CHECK(text.flat()[i] == m.flat()[i]);
}

TEST_CASE("labels resolve node names and reject bad rows") {
  KnowledgeGraph kg;
  kg.add_triple("a", "r", "b");
  kg.finalize();
  std::istringstream good("a\t3.5\nb\t0\n");
  const auto l = parse_labels(good, "mem", kg);
  CHECK(l.size() == 2);
  CHECK(l.scores[0] == 3.5);
  std::istringstream unknown("zzz\t1\n");
  CHECK_THROWS_AS(parse_labels(unknown, "mem", kg), DataError);
  std::istringstream negative("a\t-1\n");
  CHECK_THROWS_AS(parse_labels(negative, "mem", kg), DataError);
  std::istringstream dup("a\t1\na\t2\n");
  CHECK_THROWS_AS(parse_labels(dup, "mem", kg), DataError);
}

TEST_CASE("ratio 7:1:2 on 10 labels gives 7/1/2") {
  const auto l = make_splits(numbered_labels(10), SplitRatios{}, 1, 5);
  const auto p = holdout_partition(l);
  CHECK(p.train.size() == 7);
  CHECK(p.val.size() == 1);
  CHECK(p.test.size() == 2);
}

TEST_CASE("splits are deterministic in the seed") {
  const auto a = make_splits(numbered_labels(50), SplitRatios{}, 3, 9);
  const auto b = make_splits(numbered_labels(50), SplitRatios{}, 3, 9);
  const auto c = make_splits(numbered_labels(50), SplitRatios{}, 3, 10);
  CHECK(a.split == b.split);
  CHECK(a.fold == b.fold);
  CHECK((a.split != c.split || a.fold != c.fold));
}

TEST_CASE("each label is in exactly one fold's test partition") {
  const auto l = make_splits(numbered_labels(1000), SplitRatios{}, 3, 1);
  std::vector<int> seen(1000, 0);
  for (std::size_t f = 0; f < 3; ++f) {
    const auto p = fold_partition(l, f, SplitRatios{}, 1);
    CHECK(p.train.size() + p.val.size() + p.test.size() == 1000);
    for (Index i : p.test) ++seen[i];
    std::vector<int> in_part(1000, 0);
    for (const auto* part : {&p.train, &p.val, &p.test}) {
      for (Index i : *part) ++in_part[i];
    }
    for (int v : in_part) CHECK(v == 1);
  }
  for (int v : seen) CHECK(v == 1);
}

TEST_CASE("structural features") {
  SUBCASE("isolated node has zero degree columns and baseline pagerank") {
    KnowledgeGraph kg;
    kg.add_triple("a", "r", "b");
    kg.add_node("alone");
    kg.finalize();
    const auto hg = build_hypergraph(kg, Grouping::kRelation);
    const auto x = structural_features_raw(kg, hg);
    const auto pr = pagerank(kg);
    const NodeId v = *kg.find_node("alone");
    for (std::size_t c = 0; c < 4; ++c) CHECK(x(v, c) == 0.0);
    CHECK(x(v, 4) == doctest::Approx(pr[v]));
  }
  SUBCASE("symmetric two-node graph gives identical rows") {
    KnowledgeGraph kg;
    kg.add_triple("a", "r", "b");
    kg.add_triple("b", "r", "a");
    kg.finalize();
    const auto x = structural_features_raw(kg, build_hypergraph(kg, Grouping::kRelation));
    for (std::size_t c = 0; c < 5; ++c) CHECK(x(0, c) == doctest::Approx(x(1, c)));
  }
  SUBCASE("degree column matches a triple count") {
    std::mt19937_64 rng(8);
    std::uniform_int_distribution<int> node(0, 19), rel(0, 2);
    KnowledgeGraph kg;
    for (int i = 0; i < 100; ++i) {
      kg.add_triple("n" + std::to_string(node(rng)), "r" + std::to_string(rel(rng)),
                    "n" + std::to_string(node(rng)));
    }
    kg.finalize();
    const auto x = structural_features_raw(kg, build_hypergraph(kg, Grouping::kRelationItem));
    for (NodeId v = 0; v < kg.n_nodes(); ++v) {
      double count = 0;
      for (const auto& t : kg.triples()) count += (t.head == v) + (t.tail == v);
      CHECK(x(v, 0) == doctest::Approx(std::log1p(count)));
    }
  }
  SUBCASE("standardized columns have zero mean, unit variance, zero for constants") {
    Matrix<double> m{{1, 5}, {2, 5}, {3, 5}};
    standardize_columns(m);
    CHECK(m(0, 0) + m(1, 0) + m(2, 0) == doctest::Approx(0.0));
    CHECK((m(0, 0) * m(0, 0) + m(1, 0) * m(1, 0) + m(2, 0) * m(2, 0)) / 3 == doctest::Approx(1.0));
    for (std::size_t r = 0; r < 3; ++r) CHECK(m(r, 1) == 0.0);
  }
}

TEST_CASE("feature bundle validation") {
  FeatureBundle f;
  f.x1 = Matrix<double>(3, 2);
  f.x2 = Matrix<double>(3, 4);
  f.e_type_ids = {0, 1};
  f.n_types = 2;
  f.validate(3, 2);
  CHECK_THROWS_AS(f.validate(4, 2), DataError);
  f.e_type_ids = {0, 2};
  CHECK_THROWS_AS(f.validate(3, 2), DataError);
}
