#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "hhkg/graph_context.hpp"
#include "hhkg/ingest.hpp"
#include "hhkg/sahgt.hpp"

namespace hhkg {

struct BenchConfig {
  SahgtConfig sahgt;
  std::vector<std::size_t> chunks = {10, 100, 1000};
  std::size_t repeats = 3;
  bool dense = true;
  std::uint64_t seed = 0;
};

struct BenchRow {
  std::string mode;           // "dense" or "sparse"
  std::size_t chunk = 0;      // 0 for dense
  double seconds = 0.0;       // fastest forward+backward over the repeats
  std::size_t peak_bytes = 0;  // host allocation high-water mark (device-memory proxy)
  double max_abs_delta = 0.0;  // vs the reference output
  std::string note;
};

struct BenchReport {
  std::size_t n_nodes = 0, n_edges = 0, nnz = 0;
  std::string reference;  // which output the deltas compare against
  std::vector<BenchRow> rows;
};

// Times the semantic channel (single precision, forward + backward of the
// summed logits) with dense attention and with sparse attention at each
// chunk size. Dense mode is skipped with a note when N * E exceeds
// kDenseGuard.
BenchReport run_bench(const GraphContext& ctx, const FeatureBundle& features,
                      const BenchConfig& config);

std::string format_bench_table(const BenchReport& report, const std::string& config_echo);
// `C<TAB>time_seconds<TAB>peak_bytes` for the sparse rows.
std::string format_bench_series(const BenchReport& report);

}  // namespace hhkg
