#include "cli.hpp"

#include <pthread.h>
#include <signal.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "amelo/bench_harness.hpp"
#include "amelo/case_service.hpp"
#include "amelo/case_store.hpp"
#include "amelo/error.hpp"
#include "amelo/extraction_rules.hpp"
#include "amelo/index_io.hpp"
#include "amelo/llm_gateway.hpp"
#include "amelo/resources.hpp"
#include "amelo/retrieval_engine.hpp"
#include "amelo/text_util.hpp"

namespace amelo::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

void write_output(const Command& cmd, std::ostream& out, const std::string& text) {
  if (cmd.out.empty()) {
    out << text;
    return;
  }
  std::ofstream file(cmd.out, std::ios::binary | std::ios::trunc);
  if (!file) throw Error(ErrorCode::Io, "cannot write " + cmd.out);
  file << text;
}

json read_json_file(const std::string& path) {
  const auto raw = read_file(path);
  try {
    return json::parse(raw);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::MalformedJson, e.what(), path + ": byte " + std::to_string(e.byte));
  }
}

CaseStore open_existing_store(const std::string& dir) {
  if (dir.empty()) throw Error(ErrorCode::InvalidArgument, "--store is required");
  if (!fs::is_directory(dir)) throw Error(ErrorCode::Io, "no store at " + dir);
  return CaseStore::open(dir);
}

std::shared_ptr<const RetrievalState> load_state(const CaseStore& store) {
  std::vector<CaseRecord> cases;
  for (const auto& [id, c] : store.state().cases) cases.push_back(c);
  DenseStore dense;
  dense.ingest_jsonl(store.embeddings());
  return index_repository(cases, dense);
}

std::string pmcid_for(const Command& cmd, const std::string& path) {
  if (!cmd.pmcid.empty()) return cmd.pmcid;
  const auto stem = fs::path(path).stem().string();
  return is_valid_pmcid(stem) ? stem : std::string();
}

ExtractionResult from_llm(const CaseRecord& record) {
  ExtractionResult r;
  r.pmcid = record.pmcid;
  for (const auto& f : case_text_fields()) {
    const auto value = text_field_value(record, f);
    r.fields[f] = value.empty() ? FieldExtraction{} : FieldExtraction{value, ExtractionMethod::Llm, 1.0};
  }
  r.tumor_size_mm = record.tumor_size_mm;
  return r;
}

int run_extract(const Command& cmd, std::ostream& out) {
  const RulePack rules = cmd.rules.empty() ? RulePack::builtin() : RulePack::load(cmd.rules);
  std::optional<WordLexicon> lexicon;
  std::optional<CategoryCentroids> centroids;
  if (!cmd.lexicon.empty()) {
    lexicon = WordLexicon::load(cmd.lexicon);
    centroids = CategoryCentroids::from_rules(rules, *lexicon);
  }
  std::optional<LlmGateway> gateway;
  if (cmd.llm) {
    GatewayConfig config;
    config.endpoint = cmd.llm_endpoint;
    if (!cmd.llm_model.empty()) config.model = cmd.llm_model;
    if (config.endpoint.empty()) throw Error(ErrorCode::InvalidArgument, "--llm needs --llm-endpoint");
    gateway.emplace(config, std::shared_ptr<HttpTransport>(make_default_transport()));
  }

  std::vector<ExtractionResult> results;
  for (const auto& path : cmd.inputs) {
    const auto text = read_file(path);
    const auto pmcid = pmcid_for(cmd, path);
    try {
      if (gateway) {
        results.push_back(from_llm(gateway->extract(text, pmcid)));
      } else if (centroids) {
        results.push_back(extract_cascade(text, rules, *centroids, *lexicon, kCentroidThreshold, pmcid));
      } else {
        results.push_back(extract_fields(text, rules, pmcid));
      }
    } catch (const Error& e) {
      throw Error(e.code(), e.message(), e.path().empty() ? path : path + ": " + e.path());
    }
  }

  if (cmd.json) {
    json list = json::array();
    for (const auto& r : results) list.push_back(r.to_json());
    write_output(cmd, out, json{{"schema", "amelo.extract/1"}, {"results", list}}.dump(2) + "\n");
    return 0;
  }
  std::ostringstream s;
  for (const auto& r : results) {
    s << (r.pmcid.empty() ? "(no pmcid)" : r.pmcid) << '\n';
    for (const auto& [name, f] : r.fields) {
      if (f.method == ExtractionMethod::None) continue;
      s << "  " << std::left << std::setw(28) << name << std::setw(9) << to_string(f.method) << std::fixed
        << std::setprecision(2) << f.confidence << "  " << f.text << '\n';
    }
    if (!r.tumor_size_mm.empty()) s << "  " << std::setw(28) << "tumor_size_mm" << render_dimensions_mm(r.tumor_size_mm) << '\n';
  }
  write_output(cmd, out, s.str());
  return 0;
}

std::vector<CaseRecord> read_cases(const std::string& path) {
  const auto raw = read_file(path);
  std::vector<CaseRecord> cases;
  const auto trimmed = text::trim(raw);
  const auto parse_one = [&](const json& j, const std::string& where) {
    try {
      auto record = case_from_json(j);
      const auto report = validate_case(record);
      if (!report.ok()) {
        throw Error(ErrorCode::SchemaViolation, report.violations.front().message, report.violations.front().path);
      }
      cases.push_back(std::move(record));
    } catch (const Error& e) {
      throw Error(e.code(), e.message(), path + ": " + where + (e.path().empty() ? "" : ": " + e.path()));
    }
  };
  if (!trimmed.empty() && trimmed.front() == '[') {
    const auto j = read_json_file(path);
    for (std::size_t i = 0; i < j.size(); ++i) parse_one(j[i], "[" + std::to_string(i) + "]");
    return cases;
  }
  std::size_t line_no = 0;
  for (const auto& line : text::split(raw, '\n')) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::MalformedJson, e.what(), path + ": line " + std::to_string(line_no));
    }
    parse_one(j, "line " + std::to_string(line_no));
  }
  return cases;
}

int run_ingest(const Command& cmd, std::ostream& out) {
  if (cmd.store.empty()) throw Error(ErrorCode::InvalidArgument, "--store is required");
  if (cmd.cases_file.empty() && cmd.embeddings_file.empty()) {
    throw Error(ErrorCode::InvalidArgument, "nothing to ingest: pass --cases and/or --embeddings");
  }
  auto store = CaseStore::open(cmd.store);
  std::size_t n_cases = 0;
  if (!cmd.cases_file.empty()) {
    for (const auto& c : read_cases(cmd.cases_file)) {
      store.put_case(c);
      ++n_cases;
    }
  }
  std::size_t n_vectors = 0;
  if (!cmd.embeddings_file.empty()) {
    const auto jsonl = read_file(cmd.embeddings_file);
    DenseStore check;
    check.ingest_jsonl(store.embeddings());
    const auto& cases = store.state().cases;
    check.set_strict([&cases](std::string_view id) { return cases.find(id) != cases.end(); });
    try {
      n_vectors = check.ingest_jsonl(jsonl);
    } catch (const Error& e) {
      throw Error(e.code(), e.message(), cmd.embeddings_file + ": " + e.path());
    }
    store.append_embeddings(jsonl);
  }
  if (cmd.json) {
    out << json{{"cases", n_cases}, {"vectors", n_vectors}, {"total_cases", store.state().cases.size()}}.dump()
        << '\n';
  } else {
    out << "ingested " << n_cases << " cases and " << n_vectors << " vectors; store holds "
        << store.state().cases.size() << " cases\n";
  }
  return 0;
}

int run_build_index(const Command& cmd, std::ostream& out) {
  const auto store = open_existing_store(cmd.store);
  if (store.state().cases.empty()) throw Error(ErrorCode::EmptyInput, "store has no cases to index");
  const auto state = load_state(store);
  const fs::path dir = cmd.out.empty() ? fs::path(cmd.store) / "index" : fs::path(cmd.out);
  fs::create_directories(dir);

  {
    std::ofstream tfidf(dir / "tfidf.json", std::ios::trunc);
    if (!tfidf) throw Error(ErrorCode::Io, "cannot write " + (dir / "tfidf.json").string());
    tfidf << state->tfidf().to_json().dump() << '\n';
  }
  persist_index(state->sparse(), dir / "sparse.amci");
  json summary = {{"cases", state->size()}, {"features", state->tfidf().dimension()}, {"dir", dir.string()}};
  if (const auto* flat = state->dense()) {
    persist_index(*flat, dir / "flat.amci");
    summary["dense"] = flat->count();
    if (flat->count() >= 3) {
      const auto k_max = std::min<std::size_t>(8, flat->count() - 1);
      const auto elbow = elbow_select_k(flat->data(), flat->dimension(), 1, k_max);
      persist_index(fit_kmeans(flat->data(), flat->dimension(), elbow.k, 100, 42), dir / "kmeans.amci");
      summary["clusters"] = elbow.k;
    }
  }
  if (cmd.json) {
    out << summary.dump() << '\n';
  } else {
    out << "indexed " << state->size() << " cases (" << state->tfidf().dimension() << " TF-IDF features";
    if (summary.contains("dense")) out << ", " << summary["dense"].get<std::size_t>() << " dense vectors";
    if (summary.contains("clusters")) out << ", " << summary["clusters"].get<std::size_t>() << " clusters";
    out << ") into " << dir.string() << '\n';
  }
  return 0;
}

int run_query(const Command& cmd, std::ostream& out) {
  if (cmd.text.empty() == cmd.form_file.empty()) {
    throw Error(ErrorCode::InvalidArgument, "pass exactly one of --text or --form-file");
  }
  const auto store = open_existing_store(cmd.store);
  const auto state = load_state(store);
  json request = {{"k", cmd.k}};
  if (!cmd.text.empty()) {
    request["mode"] = "free_text";
    request["text"] = cmd.text;
  } else {
    request["mode"] = "structured_form";
    request["form"] = read_json_file(cmd.form_file);
  }
  if (!cmd.vector_file.empty()) request["vector"] = read_json_file(cmd.vector_file);
  const auto outcome = query(*state, Query::from_json(request));

  if (cmd.json) {
    out << outcome.to_json().dump() << '\n';
    return 0;
  }
  out << "method: " << to_string(outcome.method) << '\n';
  if (outcome.results.empty()) {
    out << "no matching cases\n";
    return 0;
  }
  out << std::left << std::setw(6) << "rank" << std::setw(12) << "similarity" << std::setw(14) << "pmcid"
      << std::setw(32) << "diagnosis" << "treatment\n";
  for (const auto& r : outcome.results) {
    std::ostringstream sim;
    sim << std::fixed << std::setprecision(4) << r.similarity;
    out << std::left << std::setw(6) << r.rank << std::setw(12) << sim.str() << std::setw(14) << r.pmcid
        << std::setw(32) << (r.summary.diagnosis.empty() ? "-" : r.summary.diagnosis)
        << (r.summary.treatment.empty() ? "-" : r.summary.treatment) << '\n';
  }
  return 0;
}

std::vector<std::string> read_query_lines(const std::string& path) {
  std::vector<std::string> queries;
  for (const auto& line : text::split(read_file(path), '\n')) {
    const auto t = text::trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto tab = t.find('\t');
    queries.emplace_back(tab == std::string_view::npos ? t : t.substr(tab + 1));
  }
  return queries;
}

int run_scaling(const Command& cmd, std::ostream& out) {
  ScalingOptions options;
  options.clustered = true;
  options.repetitions = std::max<std::size_t>(cmd.repetitions, 1);
  const auto curve = scaling_probe(cmd.sizes, kDefaultDenseDimension, cmd.k, options);
  if (cmd.json) {
    write_output(cmd, out, curve.to_json().dump(2) + "\n");
    return 0;
  }
  std::ostringstream s;
  s << std::left << std::setw(10) << "n" << std::setw(16) << "flat (s)" << "clustered (s)\n";
  for (const auto& p : curve.points) {
    s << std::left << std::setw(10) << p.n << std::setw(16) << text::format_number(p.flat_query_s)
      << (p.clustered_query_s ? text::format_number(*p.clustered_query_s) : "n/a") << '\n';
  }
  for (std::size_t i = 0; i < curve.flat_ratios.size(); ++i) {
    s << "ratio " << curve.points[i + 1].n << "/" << curve.points[i].n << ": flat "
      << text::format_number(curve.flat_ratios[i]);
    if (i < curve.clustered_ratios.size()) s << ", clustered " << text::format_number(curve.clustered_ratios[i]);
    s << '\n';
  }
  write_output(cmd, out, s.str());
  return 0;
}

int run_bench_cmd(const Command& cmd, std::ostream& out) {
  if (!cmd.sizes.empty()) return run_scaling(cmd, out);
  const auto store = open_existing_store(cmd.store);
  const auto state = load_state(store);

  std::vector<std::string> texts;
  if (cmd.queries_file.empty()) {
    for (const auto& [scenario, q] : scenario_queries()) texts.push_back(q);
  } else {
    texts = read_query_lines(cmd.queries_file);
  }
  std::vector<std::string> methods = cmd.methods;
  if (methods.empty()) {
    methods = {"keyword", "sparse"};
    if (state->dense()) methods.insert(methods.end(), {"flat", "kmeans"});
  }
  // Without an encoder, dense methods pair query i with stored vector i mod n.
  std::vector<BenchQuery> queries;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    BenchQuery q{texts[i], std::nullopt};
    if (const auto* flat = state->dense()) {
      const auto row = flat->row(i % flat->count());
      q.vector = DenseVector(row.begin(), row.end());
    }
    queries.push_back(std::move(q));
  }
  BenchOptions options;
  options.repetitions = std::max<std::size_t>(cmd.repetitions, 1);
  options.k = cmd.k;
  const auto reports = run_bench(*state, methods, queries, options);

  std::vector<Query> quality_queries;
  for (const auto& t : texts) {
    Query q;
    q.text = t;
    q.k = cmd.k;
    quality_queries.push_back(std::move(q));
  }
  json report = reports_to_json(reports);
  if (state->size() > 0 && !quality_queries.empty()) {
    report["similarity_quality"] = similarity_quality(*state, quality_queries, cmd.k).to_json();
  }
  const auto latest_dir = fs::path(cmd.store) / "bench";
  fs::create_directories(latest_dir);
  {
    std::ofstream latest(latest_dir / "latest.json", std::ios::trunc);
    latest << report.dump(2) << '\n';
  }

  if (cmd.json) {
    write_output(cmd, out, report.dump(2) + "\n");
  } else if (cmd.csv) {
    write_output(cmd, out, render_csv(reports));
  } else {
    write_output(cmd, out, render_table(reports));
  }
  return 0;
}

int run_serve(const Command& cmd, std::ostream& out) {
  auto config = ServiceConfig::from_env();
  if (!cmd.store.empty()) config.store_dir = cmd.store;
  if (cmd.port) config.port = *cmd.port;

  // Block termination signals here so every service thread inherits the mask
  // and a dedicated thread can receive them synchronously.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  CaseService service(config);
  const int port = service.bind();
  std::thread waiter([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    service.stop();
  });
  out << "amelo: serving " << config.store_dir.string() << " on http://" << config.host << ":" << port << std::endl;
  service.run();
  pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  return 0;
}

}  // namespace

ParseResult parse_args(const std::vector<std::string>& args) {
  CLI::App app{"Case-based retrieval over ameloblastoma case reports", "amelo"};
  app.require_subcommand(1);
  Command cmd;

  const auto add_store = [&](CLI::App* sub) { sub->add_option("--store", cmd.store, "Case store directory"); };
  const auto add_k = [&](CLI::App* sub) {
    sub->add_option("--k", cmd.k, "Number of results")->check(CLI::PositiveNumber);
  };
  const auto add_output = [&](CLI::App* sub) {
    sub->add_flag("--json", cmd.json, "Machine-readable JSON output");
    sub->add_option("--out", cmd.out, "Write output to a file");
  };

  auto* extract = app.add_subcommand("extract", "Extract structured fields from case-report text files");
  extract->add_option("inputs", cmd.inputs, "Text files")->required()->check(CLI::ExistingFile);
  extract->add_option("--rules", cmd.rules, "Rule pack JSON")->check(CLI::ExistingFile);
  extract->add_option("--lexicon", cmd.lexicon, "Word-vector lexicon for centroid categorization")
      ->check(CLI::ExistingFile);
  extract->add_flag("--llm", cmd.llm, "Route extraction through the LLM gateway");
  extract->add_option("--llm-endpoint", cmd.llm_endpoint, "Chat-completions URL");
  extract->add_option("--llm-model", cmd.llm_model, "Model name sent to the endpoint");
  extract->add_option("--pmcid", cmd.pmcid, "PMC id for a single input (default: file stem)");
  add_output(extract);

  auto* ingest = app.add_subcommand("ingest", "Append case records and embeddings to a store");
  add_store(ingest);
  ingest->add_option("--cases", cmd.cases_file, "Case records (JSON array or JSONL)")->check(CLI::ExistingFile);
  ingest->add_option("--embeddings", cmd.embeddings_file, "Embedding JSONL")->check(CLI::ExistingFile);
  ingest->add_flag("--json", cmd.json, "Machine-readable JSON output");

  auto* build = app.add_subcommand("build-index", "Build and persist index files for a store");
  add_store(build);
  add_output(build);

  auto* q = app.add_subcommand("query", "Retrieve similar cases");
  add_store(q);
  q->add_option("--text", cmd.text, "Free-text query");
  q->add_option("--form-file", cmd.form_file, "Structured query as a partial case record JSON")
      ->check(CLI::ExistingFile);
  q->add_option("--vector-file", cmd.vector_file, "Query embedding as a JSON array")->check(CLI::ExistingFile);
  add_k(q);
  q->add_flag("--json", cmd.json, "Machine-readable JSON output");

  auto* bench = app.add_subcommand("bench", "Benchmark retrieval methods or probe scaling");
  add_store(bench);
  bench->add_option("--methods", cmd.methods, "Comma-separated methods (flat, sparse, kmeans, keyword)")
      ->delimiter(',');
  bench->add_option("--sizes", cmd.sizes, "Comma-separated repository sizes for a scaling probe")->delimiter(',');
  bench->add_option("--queries", cmd.queries_file, "Query file, one per line")->check(CLI::ExistingFile);
  bench->add_option("--repetitions", cmd.repetitions, "Repetitions per method")->check(CLI::PositiveNumber);
  add_k(bench);
  add_output(bench);
  bench->add_flag("--csv", cmd.csv, "One CSV row per method");

  auto* serve = app.add_subcommand("serve", "Run the HTTP service");
  add_store(serve);
  serve->add_option("--port", cmd.port, "Listening port (default AMELO_PORT or 8080)")->check(CLI::Range(0, 65535));

  ParseResult result;
  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    result.message = (app.get_subcommands().empty() ? &app : app.get_subcommands().front())->help();
    return result;
  } catch (const CLI::CallForAllHelp&) {
    result.message = app.help("", CLI::AppFormatMode::All);
    return result;
  } catch (const CLI::ParseError& e) {
    result.exit_code = 2;
    result.message = std::string(e.what()) + "\nRun with --help for usage.\n";
    return result;
  }

  const auto* sub = app.get_subcommands().front();
  const std::string name = sub->get_name();
  if (name == "extract") cmd.subcommand = Subcommand::Extract;
  if (name == "ingest") cmd.subcommand = Subcommand::Ingest;
  if (name == "build-index") cmd.subcommand = Subcommand::BuildIndex;
  if (name == "query") cmd.subcommand = Subcommand::Query;
  if (name == "bench") cmd.subcommand = Subcommand::Bench;
  if (name == "serve") cmd.subcommand = Subcommand::Serve;
  if (cmd.json && cmd.csv) {
    result.exit_code = 2;
    result.message = "--json and --csv are mutually exclusive\n";
    return result;
  }
  result.command = std::move(cmd);
  return result;
}

int run(const Command& cmd, std::ostream& out, std::ostream& err) {
  try {
    switch (cmd.subcommand) {
      case Subcommand::Extract: return run_extract(cmd, out);
      case Subcommand::Ingest: return run_ingest(cmd, out);
      case Subcommand::BuildIndex: return run_build_index(cmd, out);
      case Subcommand::Query: return run_query(cmd, out);
      case Subcommand::Bench: return run_bench_cmd(cmd, out);
      case Subcommand::Serve: return run_serve(cmd, out);
    }
  } catch (const Error& e) {
    err << "amelo: " << e.what();
    if (!e.path().empty()) err << " (" << e.path() << ")";
    err << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "amelo: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

int main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  auto parsed = parse_args(args);
  if (!parsed.command) {
    (parsed.exit_code == 0 ? out : err) << parsed.message;
    return parsed.exit_code;
  }
  return run(*parsed.command, out, err);
}

}  // namespace amelo::cli
