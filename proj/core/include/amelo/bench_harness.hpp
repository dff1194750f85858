#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "amelo/retrieval_engine.hpp"

namespace amelo {

struct EnvironmentFingerprint {
  std::string os;
  unsigned cores = 0;
  std::string timestamp;  // UTC, ISO 8601

  static EnvironmentFingerprint capture();
};

struct BenchReport {
  std::string method;
  double total_time_s = 0.0;
  double vectorization_time_s = 0.0;
  double query_time_s = 0.0;
  double build_time_s = 0.0;
  std::optional<double> cpu_percent;
  std::optional<std::uint64_t> peak_memory_bytes;
  std::vector<double> latencies_s;  // per query, median over repetitions
  EnvironmentFingerprint environment;

  nlohmann::json to_json() const;
};

/// Methods understood by run_bench.
const std::vector<std::string>& bench_methods();

struct BenchQuery {
  std::string text;
  std::optional<DenseVector> vector;  // required by the dense methods
};

struct BenchOptions {
  std::size_t repetitions = 1;
  std::size_t k = 5;
  std::size_t probes = 1;
  /// Cluster count for "kmeans"; 0 picks round(sqrt(n)).
  std::size_t clusters = 0;
  std::size_t kmeans_iters = 25;
  std::uint64_t seed = 42;
  /// Monotonic seconds. Defaults to steady_clock.
  std::function<double()> clock;
  /// CPU and peak-memory sampling; off for reproducible reports.
  bool sample_resources = true;
  /// Overrides the fingerprint timestamp.
  std::function<std::string()> timestamp;
};

/// Runs every method over the same query sequence. Timings are medians over
/// repetitions and total = vectorization + build + query. Reports are sorted
/// by method name. Throws NoMethods, NoQueries, MissingQueryVector,
/// InvalidArgument (unknown method) or EmptyIndex.
std::vector<BenchReport> run_bench(const RetrievalState& state, const std::vector<std::string>& methods,
                                   const std::vector<BenchQuery>& queries, const BenchOptions& options = {});

/// param_count * 4 bytes in MiB, rounded to 0.1. Throws NonPositive.
double model_size_mb(std::int64_t param_count);

struct QualityEntry {
  std::string query;
  RetrievalMethod method = RetrievalMethod::Keyword;
  std::vector<std::pair<std::string, double>> hits;  // (pmcid, similarity)
  double mean = 0.0;
};

struct SimilarityQualityReport {
  std::vector<QualityEntry> queries;
  double average = 0.0;  // mean of per-query means; an empty list counts 0

  nlohmann::json to_json() const;
};

/// Throws EmptyQuerySet.
SimilarityQualityReport similarity_quality(const RetrievalState& state, const std::vector<Query>& queries,
                                           std::size_t k = 5);

struct ScalingPoint {
  std::size_t n = 0;
  double flat_query_s = 0.0;
  std::optional<double> clustered_query_s;
};

struct ScalingCurve {
  std::vector<ScalingPoint> points;
  std::vector<double> flat_ratios;       // t(n[i+1]) / t(n[i])
  std::vector<double> clustered_ratios;

  nlohmann::json to_json() const;
};

struct ScalingOptions {
  std::size_t queries = 20;
  std::size_t repetitions = 3;
  bool clustered = false;
  std::size_t probes = 1;
  std::uint64_t seed = 7;
};

/// Random unit-vector repositories of each size; median per-query latency.
/// Throws RangeInvalid unless sizes has >= 2 non-decreasing positive entries.
ScalingCurve scaling_probe(const std::vector<std::size_t>& sizes, std::size_t dim, std::size_t k,
                           const ScalingOptions& options = {});

/// One column per report; rows are Total Time, Vectorization, Query, Build, CPU and peak memory.
std::string render_table(const std::vector<BenchReport>& reports);
/// Header line plus one row per method.
std::string render_csv(const std::vector<BenchReport>& reports);
nlohmann::json reports_to_json(const std::vector<BenchReport>& reports);

/// The five scenario queries shipped with the library (scenario, text).
std::vector<std::pair<std::string, std::string>> scenario_queries();

}  // namespace amelo
