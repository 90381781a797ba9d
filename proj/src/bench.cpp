#include "hhkg/bench.hpp"

#include <chrono>
#include <cmath>
#include <iomanip>
#include <sstream>

namespace hhkg {

namespace {

struct Measurement {
  double seconds = 0.0;
  std::size_t peak_bytes = 0;
  std::vector<double> output;
};

Measurement measure(const GraphContext& ctx, const Matrix<float>& x2, ParameterStore<float>& store,
                    const SahgtParams<float>& params, const SahgtConfig& config,
                    AttentionPath path, std::size_t repeats) {
  Measurement m;
  m.seconds = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < std::max<std::size_t>(repeats, 1); ++r) {
    store.zero_grad();
    const auto start = std::chrono::steady_clock::now();
    AllocationScope scope;
    {
      Tape<float> tape(true);
      Binder<float> bind(tape);
      auto out = sem_forward(bind, ctx, tape.constant(x2), params, config, RunMode{}, path);
      tape.backward(ops::sum(tape, out.s));
      if (r == 0) {
        const auto s = tape.value(out.s).flat();
        m.output.assign(s.begin(), s.end());
      }
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    m.seconds = std::min(m.seconds, secs);
    m.peak_bytes = std::max(m.peak_bytes, scope.peak_bytes());
  }
  return m;
}

double max_delta(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

}  // namespace

BenchReport run_bench(const GraphContext& ctx, const FeatureBundle& features,
                      const BenchConfig& config) {
  require(!config.chunks.empty(), "bench: no chunk sizes");
  BenchReport report;
  report.n_nodes = ctx.n_nodes;
  report.n_edges = ctx.n_edges;
  report.nnz = ctx.nnz();
  ParameterStore<float> store;
  std::mt19937_64 rng(config.seed);
  const auto params = register_sahgt(store, config.sahgt, features.x2.cols(), ctx.n_types, rng);
  const Matrix<float> x2 = features.x2.cast<float>();

  std::vector<double> reference;
  const bool dense_ok = ctx.n_nodes * ctx.n_edges <= kDenseGuard;
  if (config.dense && dense_ok) {
    auto m = measure(ctx, x2, store, params, config.sahgt, AttentionPath::kDense, config.repeats);
    reference = m.output;
    report.reference = "dense";
    report.rows.push_back({"dense", 0, m.seconds, m.peak_bytes, 0.0, ""});
  } else if (config.dense) {
    report.rows.push_back({"dense", 0, 0.0, 0, 0.0,
                           "skipped: N*E=" + std::to_string(ctx.n_nodes * ctx.n_edges) +
                               " exceeds guard " + std::to_string(kDenseGuard)});
  }
  for (std::size_t chunk : config.chunks) {
    SahgtConfig c = config.sahgt;
    c.chunk = chunk;
    auto m = measure(ctx, x2, store, params, c, AttentionPath::kSparse, config.repeats);
    if (reference.empty()) {
      reference = m.output;
      report.reference = "sparse C=" + std::to_string(chunk);
    }
    report.rows.push_back({"sparse", chunk, m.seconds, m.peak_bytes, max_delta(m.output, reference), ""});
  }
  return report;
}

std::string format_bench_table(const BenchReport& report, const std::string& config_echo) {
  std::ostringstream os;
  std::istringstream echo(config_echo);
  for (std::string line; std::getline(echo, line);) os << "# " << line << '\n';
  os << "# nodes " << report.n_nodes << " hyperedges " << report.n_edges << " nnz " << report.nnz
     << "; peak_bytes = host allocation high-water mark (device-memory proxy); deltas vs "
     << report.reference << '\n';
  os << "mode\tchunk\ttime_seconds\tpeak_bytes\tmax_abs_delta\tnote\n";
  os << std::setprecision(6);
  for (const auto& r : report.rows) {
    os << r.mode << '\t' << r.chunk << '\t' << r.seconds << '\t' << r.peak_bytes << '\t'
       << r.max_abs_delta << '\t' << r.note << '\n';
  }
  return os.str();
}

std::string format_bench_series(const BenchReport& report) {
  std::ostringstream os;
  os << std::setprecision(6);
  for (const auto& r : report.rows) {
    if (r.mode == "sparse") os << r.chunk << '\t' << r.seconds << '\t' << r.peak_bytes << '\n';
  }
  return os.str();
}

}  // namespace hhkg
