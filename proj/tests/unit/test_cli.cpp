#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "amelo/index_io.hpp"
#include "cli.hpp"
#include "support.hpp"

namespace amelo {
namespace {

using cli::parse_args;

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::main(args, out, err);
  return {code, out.str(), err.str()};
}

TEST(ParseArgs, QueryWithK) {
  const auto r = parse_args({"query", "--text", "swelling", "--k", "5"});
  ASSERT_TRUE(r.command);
  EXPECT_EQ(r.command->subcommand, cli::Subcommand::Query);
  EXPECT_EQ(r.command->k, 5u);
  EXPECT_EQ(r.command->text, "swelling");
}

TEST(ParseArgs, DefaultKIsFive) {
  EXPECT_EQ(parse_args({"query", "--text", "swelling"}).command->k, 5u);
}

TEST(ParseArgs, MissingSubcommandIsUsageError) {
  const auto r = parse_args({"--k", "5"});
  EXPECT_FALSE(r.command);
  EXPECT_EQ(r.exit_code, 2);
}

TEST(ParseArgs, BenchMethodsSplitOnCommas) {
  const auto r = parse_args({"bench", "--methods", "flat,sparse"});
  ASSERT_TRUE(r.command);
  EXPECT_EQ(r.command->subcommand, cli::Subcommand::Bench);
  EXPECT_EQ(r.command->methods, (std::vector<std::string>{"flat", "sparse"}));
}

TEST(ParseArgs, HelpExitsZero) {
  const auto r = parse_args({"--help"});
  EXPECT_FALSE(r.command);
  EXPECT_EQ(r.exit_code, 0);
  EXPECT_NE(r.message.find("build-index"), std::string::npos);
}

TEST(ParseArgs, UnknownFlagAndConflicts) {
  EXPECT_EQ(parse_args({"query", "--text", "x", "--bogus"}).exit_code, 2);
  EXPECT_EQ(parse_args({"bench", "--json", "--csv"}).exit_code, 2);
  EXPECT_EQ(parse_args({"query", "--k", "0", "--text", "x"}).exit_code, 2);
  EXPECT_EQ(parse_args({"query", "extract"}).exit_code, 2);
}

TEST(Run, ExtractJson) {
  const auto r = run({"extract", "--json", "--pmcid", "PMC7234567", testing::fixture("clinical_use_case.txt").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j.at("schema"), "amelo.extract/1");
  const auto& fields = j.at("results").at(0).at("fields");
  EXPECT_NE(fields.at("tumor_location").at("text").get<std::string>().find("right mandible"), std::string::npos);
}

TEST(Run, BuildIndexOnEmptyStoreFails) {
  testing::TempDir dir;
  const auto r = run({"build-index", "--store", dir.path().string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("EmptyInput"), std::string::npos);
}

TEST(Run, IngestBuildQuery) {
  testing::TempDir dir;
  const auto store = dir.path().string();
  ASSERT_EQ(run({"ingest", "--store", store, "--cases", testing::fixture("cases.jsonl").string()}).code, 0);
  const auto built = run({"build-index", "--store", store});
  ASSERT_EQ(built.code, 0) << built.err;
  EXPECT_TRUE(std::filesystem::exists(dir.path() / "index" / "tfidf.json"));
  EXPECT_TRUE(std::holds_alternative<SparseMatrix>(load_index(dir.path() / "index" / "sparse.amci")));
  // No embeddings were ingested, so there is no dense index to persist.
  EXPECT_FALSE(std::filesystem::exists(dir.path() / "index" / "flat.amci"));

  const std::vector<std::string> args = {"query", "--store", store, "--json", "--text",
                                         testing::slurp(testing::fixture("clinical_use_case.txt"))};
  const auto a = run(args);
  ASSERT_EQ(a.code, 0) << a.err;
  const auto j = nlohmann::json::parse(a.out);
  EXPECT_EQ(j.at("schema"), "amelo.query/1");
  EXPECT_EQ(j.at("results").at(0).at("pmcid"), "PMC7234567");
  EXPECT_EQ(run(args).out, a.out);

  const auto table = run({"query", "--store", store, "--text", "mandible swelling"});
  EXPECT_EQ(table.code, 0);
  EXPECT_NE(table.out.find("PMC"), std::string::npos);
}

TEST(Run, IngestEmbeddingsEnablesDenseIndex) {
  testing::TempDir dir;
  const auto store = dir.path().string();
  ASSERT_EQ(run({"ingest", "--store", store, "--cases", testing::fixture("cases.jsonl").string()}).code, 0);
  const auto emb = dir.path() / "in.jsonl";
  {
    std::ofstream out(emb);
    std::mt19937_64 rng(1);
    for (const auto& c : testing::fixture_cases()) {
      out << nlohmann::json{{"pmcid", c.pmcid}, {"vector", testing::random_unit(rng, 4)}}.dump() << "\n";
    }
  }
  ASSERT_EQ(run({"ingest", "--store", store, "--embeddings", emb.string()}).code, 0);
  ASSERT_EQ(run({"build-index", "--store", store}).code, 0);
  EXPECT_EQ(std::get<FlatIndex>(load_index(dir.path() / "index" / "flat.amci")).count(), 4u);
  EXPECT_TRUE(std::filesystem::exists(dir.path() / "index" / "kmeans.amci"));

  const auto bench = run({"bench", "--store", store, "--json"});
  ASSERT_EQ(bench.code, 0) << bench.err;
  const auto j = nlohmann::json::parse(bench.out);
  EXPECT_EQ(j.at("reports").size(), 4u);
  EXPECT_TRUE(std::filesystem::exists(dir.path() / "bench" / "latest.json"));

  const auto bad = dir.path() / "bad.jsonl";
  std::ofstream(bad) << R"({"pmcid": "PMC7234567", "vector": [1, 2]})" << "\n";
  const auto r = run({"ingest", "--store", store, "--embeddings", bad.string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("DimensionMismatch"), std::string::npos);
}

}  // namespace
}  // namespace amelo
