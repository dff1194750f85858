#include "amelo/bench_harness.hpp"

#include <sys/resource.h>
#include <sys/utsname.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <iomanip>
#include <random>
#include <sstream>
#include <thread>

#include "amelo/error.hpp"
#include "amelo/resources.hpp"
#include "amelo/text_util.hpp"

namespace amelo {
namespace {

double steady_seconds() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

double cpu_seconds() {
  rusage u{};
  getrusage(RUSAGE_SELF, &u);
  const auto tv = [](const timeval& t) { return static_cast<double>(t.tv_sec) + static_cast<double>(t.tv_usec) * 1e-6; };
  return tv(u.ru_utime) + tv(u.ru_stime);
}

std::uint64_t peak_rss_bytes() {
  rusage u{};
  getrusage(RUSAGE_SELF, &u);
  return static_cast<std::uint64_t>(u.ru_maxrss) * 1024;  // Linux reports KiB
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return out.str();
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t mid = v.size() / 2;
  return v.size() % 2 == 1 ? v[mid] : (v[mid - 1] + v[mid]) / 2.0;
}

std::optional<SparseVector> embed_or_none(const TfidfModel& model, const std::vector<std::string>& tokens) {
  auto v = model.embed(tokens);
  if (v.is_zero()) return std::nullopt;
  return v;
}

struct Sample {
  double vectorization = 0.0;
  double build = 0.0;
  double query = 0.0;
  std::vector<double> latencies;
};

// One repetition of one method. Results are discarded; only timings matter.
class MethodRun {
 public:
  MethodRun(const RetrievalState& state, const std::vector<BenchQuery>& queries, const BenchOptions& options,
            const std::function<double()>& clock)
      : state_(state), queries_(queries), options_(options), clock_(clock) {}

  Sample run(const std::string& method) {
    if (method == "flat" || method == "kmeans") return dense(method == "kmeans");
    if (method == "sparse") return sparse();
    return keyword();
  }

 private:
  template <typename F>
  double timed(F&& f) {
    const double start = clock_();
    f();
    return std::max(0.0, clock_() - start);
  }

  Sample dense(bool clustered) {
    Sample s;
    const FlatIndex* stored = state_.dense();
    std::vector<float> data;
    std::vector<DenseVector> query_vectors;
    s.vectorization = timed([&] {
      data.reserve(stored->data().size());
      for (std::size_t r = 0; r < stored->count(); ++r) {
        const auto row = l2_normalize(stored->row(r));
        data.insert(data.end(), row.begin(), row.end());
      }
      for (const auto& q : queries_) query_vectors.push_back(l2_normalize(*q.vector));
    });
    FlatIndex flat;
    ClusteredIndex clustered_index;
    s.build = timed([&] {
      flat = FlatIndex::from_parts(stored->dimension(), std::move(data), stored->ids());
      if (clustered) {
        std::size_t c = options_.clusters;
        if (c == 0) c = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(flat.count()))));
        c = std::clamp<std::size_t>(c, 1, flat.count());
        auto model = fit_kmeans(flat.data(), flat.dimension(), c, options_.kmeans_iters, options_.seed);
        clustered_index = ClusteredIndex(flat, std::move(model));
      }
    });
    for (const auto& qv : query_vectors) {
      s.latencies.push_back(timed([&] {
        if (clustered) {
          clustered_index.search(qv, options_.k, options_.probes);
        } else {
          flat.search(qv, options_.k);
        }
      }));
    }
    for (double l : s.latencies) s.query += l;
    return s;
  }

  Sample sparse() {
    Sample s;
    std::vector<std::vector<std::string>> corpus;
    TfidfModel model;
    std::vector<std::pair<std::string, SparseVector>> rows;
    s.vectorization = timed([&] {
      for (const auto& [id, ct] : state_.case_texts()) corpus.push_back(state_.preprocessor()(ct.text));
      model = TfidfModel::fit(corpus, state_.config().max_features);
      std::size_t i = 0;
      for (const auto& [id, ct] : state_.case_texts()) rows.emplace_back(id, model.embed(corpus[i++]));
    });
    SparseMatrix matrix;
    s.build = timed([&] { matrix = SparseMatrix::build(model.dimension(), std::move(rows)); });
    for (const auto& q : queries_) {
      s.latencies.push_back(timed([&] {
        if (auto v = embed_or_none(model, state_.preprocessor()(q.text))) knn_sparse(matrix, *v, options_.k);
      }));
    }
    for (double l : s.latencies) s.query += l;
    return s;
  }

  Sample keyword() {
    Sample s;
    s.vectorization = timed([&] {
      for (const auto& [id, ct] : state_.case_texts()) {
        const auto tokens = state_.preprocessor()(ct.text);
        terms_.emplace_back(tokens.begin(), tokens.end());
      }
    });
    for (const auto& q : queries_) {
      s.latencies.push_back(timed([&] {
        const auto tokens = state_.preprocessor()(q.text);
        const std::set<std::string> query_terms(tokens.begin(), tokens.end());
        std::vector<std::pair<std::size_t, std::size_t>> scored;  // (-overlap order, row)
        for (std::size_t r = 0; r < terms_.size(); ++r) {
          std::size_t overlap = 0;
          for (const auto& t : query_terms) overlap += terms_[r].contains(t) ? 1 : 0;
          if (overlap > 0) scored.emplace_back(query_terms.size() - overlap, r);
        }
        const auto n = std::min(options_.k, scored.size());
        std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(n), scored.end());
      }));
    }
    for (double l : s.latencies) s.query += l;
    return s;
  }

  const RetrievalState& state_;
  const std::vector<BenchQuery>& queries_;
  const BenchOptions& options_;
  const std::function<double()>& clock_;
  std::vector<std::set<std::string>> terms_;
};

}  // namespace

EnvironmentFingerprint EnvironmentFingerprint::capture() {
  EnvironmentFingerprint env;
  utsname u{};
  if (uname(&u) == 0) env.os = std::string(u.sysname) + " " + u.release + " " + u.machine;
  env.cores = std::thread::hardware_concurrency();
  env.timestamp = utc_timestamp();
  return env;
}

nlohmann::json BenchReport::to_json() const {
  return {
      {"method", method},
      {"total_time_s", total_time_s},
      {"vectorization_time_s", vectorization_time_s},
      {"query_time_s", query_time_s},
      {"build_time_s", build_time_s},
      {"cpu_percent", cpu_percent ? nlohmann::json(*cpu_percent) : nlohmann::json(nullptr)},
      {"peak_memory_bytes", peak_memory_bytes ? nlohmann::json(*peak_memory_bytes) : nlohmann::json(nullptr)},
      {"query_count", latencies_s.size()},
      {"latencies_s", latencies_s},
      {"environment", {{"os", environment.os}, {"cores", environment.cores}, {"timestamp", environment.timestamp}}},
  };
}

const std::vector<std::string>& bench_methods() {
  static const std::vector<std::string> methods = {"flat", "keyword", "kmeans", "sparse"};
  return methods;
}

std::vector<BenchReport> run_bench(const RetrievalState& state, const std::vector<std::string>& methods,
                                   const std::vector<BenchQuery>& queries, const BenchOptions& options) {
  if (methods.empty()) throw Error(ErrorCode::NoMethods, "no methods selected");
  if (queries.empty()) throw Error(ErrorCode::NoQueries, "no queries supplied");
  std::vector<std::string> sorted = methods;
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  for (const auto& m : sorted) {
    const auto& known = bench_methods();
    if (std::find(known.begin(), known.end(), m) == known.end()) {
      throw Error(ErrorCode::InvalidArgument, "unknown bench method: " + m, "methods");
    }
    if (m == "flat" || m == "kmeans") {
      if (!state.dense()) throw Error(ErrorCode::EmptyIndex, m + " needs ingested dense vectors");
      for (std::size_t i = 0; i < queries.size(); ++i) {
        if (!queries[i].vector) {
          throw Error(ErrorCode::MissingQueryVector, m + " needs a vector for every query",
                      "queries[" + std::to_string(i) + "]");
        }
        if (queries[i].vector->size() != state.dense()->dimension()) {
          throw Error(ErrorCode::DimensionMismatch, "query vector dimension differs from the index",
                      "queries[" + std::to_string(i) + "]");
        }
      }
    } else if (state.size() == 0) {
      throw Error(ErrorCode::EmptyRepository, "no cases indexed");
    }
  }

  const std::function<double()> clock = options.clock ? options.clock : steady_seconds;
  const std::size_t reps = std::max<std::size_t>(options.repetitions, 1);
  EnvironmentFingerprint env = EnvironmentFingerprint::capture();
  if (options.timestamp) env.timestamp = options.timestamp();
  if (!options.sample_resources) env.os.clear(), env.cores = 0;

  std::vector<BenchReport> reports;
  for (const auto& m : sorted) {
    const double wall0 = steady_seconds();
    const double cpu0 = cpu_seconds();
    std::vector<double> vec, build, query;
    std::vector<std::vector<double>> latencies(queries.size());
    for (std::size_t r = 0; r < reps; ++r) {
      MethodRun run(state, queries, options, clock);
      const Sample s = run.run(m);
      vec.push_back(s.vectorization);
      build.push_back(s.build);
      query.push_back(s.query);
      for (std::size_t q = 0; q < s.latencies.size(); ++q) latencies[q].push_back(s.latencies[q]);
    }
    BenchReport report;
    report.method = m;
    report.vectorization_time_s = median(vec);
    report.build_time_s = median(build);
    report.query_time_s = median(query);
    report.total_time_s = report.vectorization_time_s + report.build_time_s + report.query_time_s;
    for (auto& l : latencies) report.latencies_s.push_back(median(std::move(l)));
    report.environment = env;
    if (options.sample_resources) {
      const double wall = steady_seconds() - wall0;
      if (wall > 0.0) report.cpu_percent = 100.0 * (cpu_seconds() - cpu0) / wall;
      report.peak_memory_bytes = peak_rss_bytes();
    }
    reports.push_back(std::move(report));
  }
  return reports;
}

double model_size_mb(std::int64_t param_count) {
  if (param_count <= 0) throw Error(ErrorCode::NonPositive, "parameter count must be positive");
  const double mib = static_cast<double>(param_count) * 4.0 / (1024.0 * 1024.0);
  return std::round(mib * 10.0) / 10.0;
}

nlohmann::json SimilarityQualityReport::to_json() const {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& q : queries) {
    nlohmann::json hits = nlohmann::json::array();
    for (const auto& [id, sim] : q.hits) hits.push_back({{"pmcid", id}, {"similarity", sim}});
    list.push_back({{"query", q.query}, {"method", to_string(q.method)}, {"hits", hits}, {"mean", q.mean}});
  }
  return {{"queries", list}, {"average", average}};
}

SimilarityQualityReport similarity_quality(const RetrievalState& state, const std::vector<Query>& queries,
                                           std::size_t k) {
  if (queries.empty()) throw Error(ErrorCode::EmptyQuerySet, "no queries supplied");
  SimilarityQualityReport report;
  double sum = 0.0;
  for (Query q : queries) {
    q.k = k;
    const auto outcome = query(state, q);
    QualityEntry entry;
    entry.query = q.mode == QueryMode::FreeText ? q.text : build_case_text(*q.form).text;
    entry.method = outcome.method;
    double s = 0.0;
    for (const auto& r : outcome.results) {
      entry.hits.emplace_back(r.pmcid, r.similarity);
      s += r.similarity;
    }
    entry.mean = outcome.results.empty() ? 0.0 : s / static_cast<double>(outcome.results.size());
    sum += entry.mean;
    report.queries.push_back(std::move(entry));
  }
  report.average = sum / static_cast<double>(queries.size());
  return report;
}

nlohmann::json ScalingCurve::to_json() const {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : points) {
    pts.push_back({{"n", p.n},
                   {"flat_query_s", p.flat_query_s},
                   {"clustered_query_s", p.clustered_query_s ? nlohmann::json(*p.clustered_query_s) : nlohmann::json(nullptr)}});
  }
  return {{"points", pts}, {"flat_ratios", flat_ratios}, {"clustered_ratios", clustered_ratios}};
}

ScalingCurve scaling_probe(const std::vector<std::size_t>& sizes, std::size_t dim, std::size_t k,
                           const ScalingOptions& options) {
  if (sizes.size() < 2 || !std::is_sorted(sizes.begin(), sizes.end()) || sizes.front() == 0 || dim == 0) {
    throw Error(ErrorCode::RangeInvalid, "sizes must hold >= 2 ascending positive entries");
  }
  std::mt19937_64 rng(options.seed);
  std::normal_distribution<float> gauss(0.0f, 1.0f);
  const auto random_unit = [&] {
    DenseVector v(dim);
    for (auto& x : v) x = gauss(rng);
    return l2_normalize(v);
  };
  const std::size_t n_max = sizes.back();
  std::vector<float> pool;
  pool.reserve(n_max * dim);
  for (std::size_t i = 0; i < n_max; ++i) {
    const auto v = random_unit();
    pool.insert(pool.end(), v.begin(), v.end());
  }
  std::vector<DenseVector> queries;
  for (std::size_t i = 0; i < std::max<std::size_t>(options.queries, 1); ++i) queries.push_back(random_unit());

  const auto measure = [&](auto&& search) {
    std::vector<double> samples;
    for (std::size_t r = 0; r < std::max<std::size_t>(options.repetitions, 1); ++r) {
      for (const auto& q : queries) {
        const double t0 = steady_seconds();
        search(q);
        samples.push_back(steady_seconds() - t0);
      }
    }
    return median(std::move(samples));
  };

  ScalingCurve curve;
  for (std::size_t n : sizes) {
    std::vector<std::string> ids(n);
    for (std::size_t i = 0; i < n; ++i) ids[i] = "PMC" + std::to_string(1000000 + i);
    FlatIndex flat = FlatIndex::from_parts(
        dim, std::vector<float>(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n * dim)), std::move(ids));
    ScalingPoint p;
    p.n = n;
    p.flat_query_s = measure([&](const DenseVector& q) { flat.search(q, k); });
    if (options.clustered) {
      const std::size_t c =
          std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(n)))), 1, n);
      // Centroids come from a prefix sample; every row is then assigned once.
      const std::size_t sample = std::min(n, 40 * c);
      auto model = fit_kmeans(std::span<const float>(pool.data(), sample * dim), dim, c, 10, options.seed);
      model.assignment.assign(n, 0);
      for (std::size_t r = 0; r < n; ++r) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t ci = 0; ci < c; ++ci) {
          const double d = squared_l2(flat.row(r), std::span<const float>(model.centroids[ci]));
          if (d < best) {
            best = d;
            model.assignment[r] = static_cast<std::uint32_t>(ci);
          }
        }
      }
      const ClusteredIndex clustered(flat, std::move(model));
      p.clustered_query_s = measure([&](const DenseVector& q) { clustered.search(q, k, options.probes); });
    }
    curve.points.push_back(p);
  }
  for (std::size_t i = 1; i < curve.points.size(); ++i) {
    const auto& a = curve.points[i - 1];
    const auto& b = curve.points[i];
    curve.flat_ratios.push_back(a.flat_query_s > 0.0 ? b.flat_query_s / a.flat_query_s : 0.0);
    if (a.clustered_query_s && b.clustered_query_s) {
      curve.clustered_ratios.push_back(*a.clustered_query_s > 0.0 ? *b.clustered_query_s / *a.clustered_query_s
                                                                  : 0.0);
    }
  }
  return curve;
}

namespace {
std::string fixed(double v, int digits) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(digits) << v;
  return out.str();
}
}  // namespace

std::string render_table(const std::vector<BenchReport>& reports) {
  const std::vector<std::string> labels = {"Total Time (s)", "Vectorization (s)", "Query (s)",
                                           "Build (s)",      "CPU (%)",           "Peak memory (MiB)"};
  std::vector<std::vector<std::string>> cells(labels.size());
  for (const auto& r : reports) {
    cells[0].push_back(fixed(r.total_time_s, 6));
    cells[1].push_back(fixed(r.vectorization_time_s, 6));
    cells[2].push_back(fixed(r.query_time_s, 6));
    cells[3].push_back(fixed(r.build_time_s, 6));
    cells[4].push_back(r.cpu_percent ? fixed(*r.cpu_percent, 2) : "n/a");
    cells[5].push_back(r.peak_memory_bytes ? fixed(static_cast<double>(*r.peak_memory_bytes) / 1048576.0, 1)
                                           : "n/a");
  }
  std::size_t label_w = 0;
  for (const auto& l : labels) label_w = std::max(label_w, l.size());
  std::vector<std::size_t> col_w(reports.size());
  for (std::size_t c = 0; c < reports.size(); ++c) {
    col_w[c] = reports[c].method.size();
    for (const auto& row : cells) col_w[c] = std::max(col_w[c], row[c].size());
  }
  std::ostringstream out;
  out << std::left << std::setw(static_cast<int>(label_w)) << "";
  for (std::size_t c = 0; c < reports.size(); ++c) {
    out << "  " << std::right << std::setw(static_cast<int>(col_w[c])) << reports[c].method;
  }
  out << '\n';
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out << std::left << std::setw(static_cast<int>(label_w)) << labels[i];
    for (std::size_t c = 0; c < reports.size(); ++c) {
      out << "  " << std::right << std::setw(static_cast<int>(col_w[c])) << cells[i][c];
    }
    out << '\n';
  }
  return out.str();
}

std::string render_csv(const std::vector<BenchReport>& reports) {
  std::ostringstream out;
  out << "method,total_time_s,vectorization_time_s,query_time_s,build_time_s,cpu_percent,peak_memory_bytes,"
         "query_count\n";
  for (const auto& r : reports) {
    out << r.method << ',' << text::format_number(r.total_time_s) << ','
        << text::format_number(r.vectorization_time_s) << ',' << text::format_number(r.query_time_s) << ','
        << text::format_number(r.build_time_s) << ',' << (r.cpu_percent ? text::format_number(*r.cpu_percent) : "")
        << ',' << (r.peak_memory_bytes ? std::to_string(*r.peak_memory_bytes) : "") << ',' << r.latencies_s.size()
        << '\n';
  }
  return out.str();
}

nlohmann::json reports_to_json(const std::vector<BenchReport>& reports) {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& r : reports) list.push_back(r.to_json());
  return {{"schema", "amelo.bench/1"}, {"reports", list}};
}

std::vector<std::pair<std::string, std::string>> scenario_queries() {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& line : text::split(builtin_resource("scenario_queries.txt"), '\n')) {
    if (line.empty() || line.front() == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) continue;
    out.emplace_back(line.substr(0, tab), line.substr(tab + 1));
  }
  return out;
}

}  // namespace amelo
