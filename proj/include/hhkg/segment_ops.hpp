#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "hhkg/common.hpp"
#include "hhkg/hypergraph.hpp"
#include "hhkg/matrix.hpp"

namespace hhkg {

// Coordinate list of a 0/1 incidence matrix: (row = node, col = hyperedge),
// sorted by (col, row) without duplicates.
struct CooPairs {
  std::size_t n_rows = 0;
  std::size_t n_cols = 0;
  std::vector<NodeId> rows;
  std::vector<EdgeId> cols;
  std::vector<double> values;  // optional, empty or aligned with rows

  std::size_t nnz() const noexcept { return rows.size(); }

  static CooPairs from_hypergraph(const Hypergraph& hg);
  // Throws DataError when the ordering or bounds invariants are broken.
  void validate() const;
};

// Gather/scatter index lists for one attention direction. Entries are
// grouped by `segment` in non-decreasing order, which fixes the per-segment
// reduction order independent of chunking.
struct AttentionPlan {
  std::vector<Index> query;    // row of the query matrix
  std::vector<Index> key;      // row of the key matrix
  std::vector<Index> value;    // row of the value matrix
  std::vector<Index> segment;  // output row
  std::size_t n_segments = 0;

  std::size_t size() const noexcept { return segment.size(); }

  // Hyperedge update: queries and values from nodes, keys from edges, grouped by edge.
  static AttentionPlan node_to_edge(const CooPairs& pairs);
  // Node update: queries from nodes, keys and values from edges, grouped by node.
  static AttentionPlan edge_to_node(const CooPairs& pairs);
};

// Softmax within each segment; entries of one segment need not be contiguous.
template <typename T>
std::vector<T> scatter_softmax(std::span<const T> values, std::span<const Index> segments,
                               std::size_t n_segments) {
  require(values.size() == segments.size(), "scatter_softmax: length mismatch");
  std::vector<T> seg_max(n_segments, -std::numeric_limits<T>::infinity());
  for (std::size_t i = 0; i < values.size(); ++i) {
    require(segments[i] < n_segments, "scatter_softmax: segment id out of range");
    seg_max[segments[i]] = std::max(seg_max[segments[i]], values[i]);
  }
  std::vector<T> out(values.size());
  std::vector<T> seg_sum(n_segments, T{0});
  for (std::size_t i = 0; i < values.size(); ++i) {
    out[i] = std::exp(values[i] - seg_max[segments[i]]);
    seg_sum[segments[i]] += out[i];
  }
  for (std::size_t i = 0; i < values.size(); ++i) out[i] /= seg_sum[segments[i]];
  return out;
}

struct ChunkStats {
  std::size_t chunks = 0;          // chunks per streaming pass
  std::size_t max_chunk_rows = 0;  // largest chunk length
};

// Calls fn(begin, end) over [0, n) in consecutive chunks of at most `chunk`.
template <typename Fn>
std::size_t for_each_chunk(std::size_t n, std::size_t chunk, Fn&& fn) {
  require(chunk >= 1, "chunk size must be >= 1");
  std::size_t count = 0;
  for (std::size_t begin = 0; begin < n; begin += chunk) {
    fn(begin, std::min(n, begin + chunk));
    ++count;
  }
  return count;
}

// Two-pass streaming softmax grouped by segment, with `lanes` independent
// softmaxes per entry (one per attention head).
//   pass 1: per-(segment, lane) running max over chunks
//   pass 2: exp(logit - max), written to `weights`, summed per segment
//   then:   weights /= sum
// `score(begin, end, out)` fills out with (end - begin) x lanes logits; it is
// called twice per chunk so logits are never held for all entries at once.
// The result does not depend on `chunk`.
template <typename T, typename ScoreFn>
ChunkStats chunked_segment_softmax(std::span<const Index> segment_of, std::size_t n_segments,
                                   std::size_t lanes, std::size_t chunk, ScoreFn&& score,
                                   Matrix<T>& weights) {
  const std::size_t n = segment_of.size();
  weights = Matrix<T>(n, lanes);
  ChunkStats stats;
  if (n == 0) return stats;
  Matrix<T> seg_max(n_segments, lanes, -std::numeric_limits<T>::infinity());
  Matrix<T> seg_sum(n_segments, lanes, T{0});
  Matrix<T> buffer(std::min(chunk, n), lanes);

  stats.chunks = for_each_chunk(n, chunk, [&](std::size_t begin, std::size_t end) {
    stats.max_chunk_rows = std::max(stats.max_chunk_rows, end - begin);
    score(begin, end, buffer);
    for (std::size_t i = begin; i < end; ++i) {
      auto m = seg_max.row(segment_of[i]);
      auto b = buffer.row(i - begin);
      for (std::size_t h = 0; h < lanes; ++h) m[h] = std::max(m[h], b[h]);
    }
  });
  for_each_chunk(n, chunk, [&](std::size_t begin, std::size_t end) {
    score(begin, end, buffer);
    for (std::size_t i = begin; i < end; ++i) {
      auto m = seg_max.row(segment_of[i]);
      auto s = seg_sum.row(segment_of[i]);
      auto b = buffer.row(i - begin);
      auto w = weights.row(i);
      for (std::size_t h = 0; h < lanes; ++h) {
        w[h] = std::exp(b[h] - m[h]);
        s[h] += w[h];
      }
    }
  });
  for (std::size_t i = 0; i < n; ++i) {
    auto s = seg_sum.row(segment_of[i]);
    auto w = weights.row(i);
    for (std::size_t h = 0; h < lanes; ++h) w[h] /= s[h];
  }
  return stats;
}

// Single-lane chunked scatter softmax over precomputed values.
template <typename T>
std::vector<T> chunked_scatter_softmax(std::span<const T> values, std::span<const Index> segments,
                                       std::size_t n_segments, std::size_t chunk,
                                       ChunkStats* stats = nullptr) {
  require(values.size() == segments.size(), "chunked_scatter_softmax: length mismatch");
  for (Index s : segments) require(s < n_segments, "chunked_scatter_softmax: segment out of range");
  Matrix<T> weights;
  auto st = chunked_segment_softmax<T>(
      segments, n_segments, 1, chunk,
      [&](std::size_t begin, std::size_t end, Matrix<T>& out) {
        for (std::size_t i = begin; i < end; ++i) out(i - begin, 0) = values[i];
      },
      weights);
  if (stats) *stats = st;
  return {weights.flat().begin(), weights.flat().end()};
}

}  // namespace hhkg
