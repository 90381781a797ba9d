#pragma once

#include <random>
#include <span>
#include <vector>

#include "hhkg/segment_ops.hpp"
#include "hhkg/tape.hpp"

// Differentiable operations recorded on a Tape. Shape mismatches throw
// DataError. Index spans passed to segment/gather ops must outlive the tape.
namespace hhkg::ops {

template <typename T> Var add(Tape<T>& t, Var a, Var b);
template <typename T> Var sub(Tape<T>& t, Var a, Var b);
// a (n x m) + row (1 x m), broadcast over rows.
template <typename T> Var add_row(Tape<T>& t, Var a, Var row);
template <typename T> Var hadamard(Tape<T>& t, Var a, Var b);
template <typename T> Var scale(Tape<T>& t, Var a, T c);
// a * s for a 1x1 s.
template <typename T> Var scale_by(Tape<T>& t, Var a, Var s);
template <typename T> Var matmul(Tape<T>& t, Var a, Var b);
// a * b^T
template <typename T> Var matmul_nt(Tape<T>& t, Var a, Var b);
template <typename T> Var transpose(Tape<T>& t, Var a);
template <typename T> Var linear(Tape<T>& t, Var x, Var weight, Var bias);
template <typename T> Var sum(Tape<T>& t, Var a);

template <typename T> Var leaky_relu(Tape<T>& t, Var a, T slope = T(0.2));
// Exact GELU, 0.5 x (1 + erf(x / sqrt 2)).
template <typename T> Var gelu(Tape<T>& t, Var a);
template <typename T> Var sigmoid(Tape<T>& t, Var a);
template <typename T> Var exp(Tape<T>& t, Var a);

// Row-wise normalization with affine gamma, beta (1 x m).
template <typename T> Var layer_norm(Tape<T>& t, Var x, Var gamma, Var beta, T eps = T(1e-5));

template <typename T>
struct BatchNormState {
  Parameter<T>* running_mean = nullptr;  // 1 x m
  Parameter<T>* running_var = nullptr;   // 1 x m, unbiased estimate
  T momentum = T(0.9);                   // weight kept on the old running value
  T eps = T(1e-5);
};

// Column-wise normalization over rows. Training mode uses batch statistics
// and updates the running averages; eval mode uses the running averages.
template <typename T>
Var batch_norm(Tape<T>& t, Var x, Var gamma, Var beta, const BatchNormState<T>& state,
               bool training);

// Inverted dropout. Identity when rate == 0 or not training.
template <typename T>
Var dropout(Tape<T>& t, Var x, double rate, std::mt19937_64& rng, bool training);

template <typename T> Var concat_cols(Tape<T>& t, const std::vector<Var>& parts);
template <typename T> Var slice_cols(Tape<T>& t, Var x, std::size_t begin, std::size_t width);
template <typename T> Var slice_rows(Tape<T>& t, Var x, std::size_t begin, std::size_t count);
template <typename T> Var mean_of(Tape<T>& t, const std::vector<Var>& parts);

template <typename T> Var gather_rows(Tape<T>& t, Var x, std::span<const Index> rows);
// Row i scaled by the constant factors[i].
template <typename T> Var scale_rows(Tape<T>& t, Var x, std::span<const T> factors);

// logits: n x 1, softmax within segment groups.
template <typename T>
Var segment_softmax(Tape<T>& t, Var logits, std::span<const Index> segments,
                    std::size_t n_segments);
// out[s] = sum_{p in s} weights[p] * values[p]; weights n x 1, values n x d.
template <typename T>
Var segment_weighted_sum(Tape<T>& t, Var weights, Var values, std::span<const Index> segments,
                         std::size_t n_segments);
// out[s] = mean_{p in s} values[p]; empty segments give zero rows.
template <typename T>
Var segment_mean(Tape<T>& t, Var values, std::span<const Index> segments, std::size_t n_segments);

template <typename T>
struct AttentionTrace {
  Matrix<T> weights;  // nnz x heads, plan order
  ChunkStats stats;
};

// Multi-head scaled dot-product attention restricted to the plan's entries:
//   logit[p,h] = <q[query_p], k[key_p]>_h / sqrt(d_h)
//   w = softmax of logits within each segment, per head
//   out[segment_p] += w[p,h] * v[value_p]_h
// Streams the entries in chunks of `chunk`; scratch is O(nnz x heads) and
// no n_queries x n_keys buffer is formed. Segments with no entries give
// zero rows.
template <typename T>
Var sparse_attention(Tape<T>& t, Var q, Var k, Var v, const AttentionPlan& plan,
                     std::size_t heads, std::size_t chunk, AttentionTrace<T>* trace = nullptr);

// Row softmax over entries with mask != 0; fully masked rows give zeros.
template <typename T>
Var masked_softmax_rows(Tape<T>& t, Var scores, const Matrix<unsigned char>& mask);

template <typename T> Var row_l2_normalize(Tape<T>& t, Var x, T eps = T(1e-12));

// Mean cross-entropy of a square score matrix against diagonal labels,
// softmax over each row (by_rows) or over each column.
template <typename T> Var diag_cross_entropy(Tape<T>& t, Var scores, bool by_rows);

// mean over i in rows of (pred[i] - target[i])^2; pred is n x 1.
template <typename T>
Var masked_mse(Tape<T>& t, Var pred, std::span<const T> target, std::span<const Index> rows);

}  // namespace hhkg::ops
